"""Estimate checks and the composite suite."""
import json
import math

import jsonschema
import numpy as np
import pytest

from fraclap import kernels as K
from fraclap import verify as V
from fraclap.domain import Ball, Domain


def test_green_symmetry(p2, unit_disk):
    r = V.check_green_symmetry(p2, unit_disk, 1000)
    assert r.passed and r.constant < 1e-12
    assert V.check_green_symmetry(p2, unit_disk, 1000, exterior=True).passed
    rng = np.random.default_rng(2)
    X = rng.uniform(-0.6, 0.6, size=(120, 2))
    Y = rng.uniform(-0.6, 0.6, size=(120, 2))
    Y[0] = X[0]
    r = V.check_green_symmetry(p2, unit_disk, pairs=(X, Y))
    assert r.passed and r.samples == 119 and len(r.details["skipped_diagonal"]) == 1


def test_green_domination(p2, unit_disk):
    r = V.check_green_domination(p2, unit_disk, 1000)
    assert r.passed and 0.9 < r.constant <= 1.0
    assert r.details["sup_G_over_G_exterior"] <= 1.0 + 1e-12


@pytest.mark.parametrize("swap", [False, True])
def test_boundary_estimate(p2, disk_domain, swap):
    r = V.check_boundary_estimate(p2, disk_domain, 2000, swap=swap)
    assert r.passed and math.isfinite(r.constant)


def test_boundary_estimate_lens(p2, lens):
    r = V.check_boundary_estimate(p2, lens, 2000)
    assert r.passed and r.details["green"] == "barrier"


def test_poisson_normalization(p2, disk_domain, lens):
    r = V.check_poisson_normalization(p2, disk_domain)
    assert r.passed and r.samples == 10
    m = V.check_poisson_normalization(p2, lens, walkers=2000)
    assert m.passed and np.all(m.details["std_errors"] == 0)


def test_poisson_bounds(p2, unit_disk):
    r = V.check_poisson_bounds(p2, unit_disk, 2000)
    assert r.passed
    for regime in ("near_shell", "far"):
        assert math.isfinite(r.details["regimes"][regime]["sup_2N"])


def test_eta0(p2):
    r = V.check_eta0(p2)
    assert r.passed and 0 < r.constant < 1 and r.details["refinement_spread"] < 1e-8
    assert V.compute_eta0(p2) == pytest.approx(r.constant, abs=1e-8)


def test_nonunique_limit():
    assert V.nonunique_limit(K.make_params(2, 0.5)) == pytest.approx(2 * math.pi * math.sqrt(2))


def test_bump_and_surrogate():
    b = V.bump([0.0, 0.0], 0.5)
    assert b([0.0, 0.0]) == pytest.approx(1.0) and b([0.6, 0.0]) == 0.0
    sur = V.radial_surrogate(lambda x: np.cos(np.linalg.norm(x, axis=-1)), [0.0, 0.0], 1.0, 2)
    x = np.random.default_rng(0).uniform(-0.7, 0.7, size=(20, 2))
    assert np.allclose(sur(x), np.cos(np.linalg.norm(x, axis=1)), atol=1e-10)


def test_report_schema(p2, unit_disk):
    d = V.check_green_symmetry(p2, unit_disk, 100).to_json()
    V.validate_report(d)
    jsonschema.validate(d, V.REPORT_SCHEMA)
    bad = dict(d, samples="many")
    with pytest.raises(ValueError):
        V.validate_report(bad)


def test_suite_construction_error():
    reps = V.run_suite({"n": 1, "s": 0.5})
    assert len(reps) == 1 and reps[0].check == "construction" and not reps[0].passed
    with pytest.raises(ValueError):
        V.run_suite({"n": 2, "s": 0.5}, {"colour": 1})


def test_suite_fault_injection():
    reps = {r.check: r for r in V.run_suite({"n": 2, "s": 0.5, "perturb": 1e-2},
                                             {"samples": 1000, "pairs": 200, "walkers": 1000, "delta": False})}
    assert not reps["poisson_normalization"].passed
    assert not V.suite_json(list(reps.values()))["pass"]


@pytest.mark.parametrize("s", [0.25, 0.75])
def test_suite_sweep(s):
    reps = V.run_suite({"n": 2, "s": s})
    failed = [r.check for r in reps if not r.passed]
    assert not failed
    doc = json.loads(json.dumps(V.suite_json(reps, {"n": 2, "s": s}), allow_nan=False))
    for rep in doc["reports"]:
        jsonschema.validate(rep, V.REPORT_SCHEMA)
