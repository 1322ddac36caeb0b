"""Acceptance criteria, one test per criterion; a PASS/FAIL line for each is
printed in the terminal summary."""
import json
import math

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import beta

from fraclap import cli
from fraclap import fields as F
from fraclap import kernels as K
from fraclap import quadrature as Q
from fraclap import solver as S
from fraclap import verify as V
from fraclap.domain import Ball, Domain
from fraclap.rng import CounterStream

SWEEP = (0.25, 0.5, 0.75)
DISK = Ball([0.0, 0.0], 1.0)
PV_Q = Q.QuadConfig(rel_tol=1e-6, abs_tol=1e-7)


def interior_points(m, seed, radius=0.8):
    rng = np.random.default_rng(seed)
    r = radius * np.sqrt(rng.uniform(0, 1, m))
    th = rng.uniform(0, 2 * math.pi, m)
    return np.stack([r * np.cos(th), r * np.sin(th)], axis=1)


@pytest.mark.acceptance(1, "Poisson normalization: exterior mass of P(x, .) is 1 within 1e-6")
def test_poisson_normalization(measured):
    worst = {}
    for s in SWEEP:
        rep = V.check_poisson_normalization(K.make_params(2, s), Domain([DISK]), interior_points(10, 1, 0.95))
        assert rep.passed
        worst[s] = float(np.max(np.abs(rep.details["values"] - 1)))
    measured("max |mass - 1| by s: " + ", ".join(f"{s}: {v:.1e}" for s, v in worst.items()))


@pytest.mark.acceptance(2, "Constant consistency: kappa B(s, n/2-s) = a; c(2, 1/2) = 1/pi^2")
def test_constants(measured):
    worst = 0.0
    for n in (2, 3):
        for s in SWEEP:
            p = K.make_params(n, s)
            worst = max(worst, abs(p.kappa_ns * beta(s, n / 2 - s) / p.a_ns - 1))
    assert worst < 1e-12
    p = K.make_params(2, 0.5)
    radial, _ = integrate.quad(lambda r: 1 / (r * math.sqrt(r * r - 1)), 1, np.inf)
    assert radial == pytest.approx(math.pi / 2, rel=1e-10)
    # unit mass of P(0, .) = 2 pi c * radial forces c = 1/pi^2
    forced = 1 / (2 * math.pi * radial)
    assert abs(p.c_ns - 1 / math.pi ** 2) < 1e-10 and abs(p.c_ns - forced) < 1e-10
    measured(f"rel consistency {worst:.1e}; c - 1/pi^2 = {p.c_ns - 1 / math.pi ** 2:.1e}")


SOURCES = [
    F.ScalarField(lambda y: np.exp(-np.sum((y - [0.3, 0.1]) ** 2, axis=-1)), name="gaussian"),
    F.ScalarField(lambda y: 1 + y[..., 0] ** 2 - 0.5 * y[..., 1], name="polynomial"),
]


@pytest.mark.acceptance(3, "Solver round trip: (-Delta)^s (G*f) = f within 1e-3 at 20 points")
def test_round_trip(measured):
    X = interior_points(20, 7)
    worst = 0.0
    for s in SWEEP:
        p = K.make_params(2, s)
        for f in SOURCES:
            u = Q.green_field(p, DISK, f)
            err = np.max(np.abs(Q.frac_laplacian_pv(p, u, X, PV_Q) - f(X)))
            worst = max(worst, err)
            assert err < 1e-3, (s, f.name, err)
    measured(f"max residual over s sweep and 2 sources: {worst:.1e}")


EXTERIOR_DATA = [
    F.ScalarField(lambda y: 1 / (1 + np.sum(y * y, axis=-1)), decay=-2.0, name="rational"),
    F.ScalarField(lambda y: np.exp(-np.sum((y - [1.5, 0.5]) ** 2, axis=-1)), decay=-math.inf, name="gaussian"),
]


@pytest.mark.acceptance(4, "Harmonicity: (-Delta)^s (P*g) = 0 within 1e-3 at 20 points")
def test_harmonicity(measured):
    X = interior_points(20, 3)
    p = K.make_params(2, 0.5)
    worst = 0.0
    for g in EXTERIOR_DATA:
        u = Q.poisson_field(p, DISK, g)
        err = float(np.max(np.abs(Q.frac_laplacian_pv(p, u, X, PV_Q))))
        worst = max(worst, err)
        assert err < 1e-3, (g.name, err)
    measured(f"s=0.5, max |(-Delta)^s P*g|: {worst:.1e}")


@pytest.mark.acceptance(5, "Torsion benchmark: G*1 = (2/pi) sqrt(1-|x|^2) within 1e-5 on 50 radial points")
def test_torsion(measured):
    arccos_int, _ = integrate.quad(np.arccos, 0, 1)
    assert arccos_int == pytest.approx(1.0, abs=1e-12)
    p = K.make_params(2, 0.5)
    r = np.linspace(0, 0.98, 50)
    X = np.stack([r, np.zeros_like(r)], axis=1)
    got = Q.convolve_green(p, DISK, F.constant(1.0), X)
    ref = 2 / math.pi * np.sqrt(1 - r * r)
    assert got[0] == pytest.approx(2 / math.pi * arccos_int, abs=1e-5)
    err = float(np.max(np.abs(got - ref)))
    assert err < 1e-5
    measured(f"max error {err:.1e}")


@pytest.mark.acceptance(6, "Monte Carlo agreement with quadrature within 3 standard errors")
def test_monte_carlo_agreement(measured):
    p = K.make_params(2, 0.5)
    dom = Domain([DISK])
    f, g = F.constant(1.0), EXTERIOR_DATA[0]
    X = interior_points(10, 11, 0.9)
    ref = Q.convolve_green(p, DISK, f, X) + Q.convolve_poisson(p, DISK, g, X)
    cfg = S.WalkConfig(walkers=100_000, seed=2024)
    res = S.solve_field(p, dom, f, g, X, cfg)
    z = np.array([(e.mean - r) / e.std_error for (_, e), r in zip(res, ref)])
    assert all(e.censored_fraction < 1e-3 for _, e in res)
    assert np.all(np.abs(z) < 3), z
    x0 = X[0]
    hits = 0
    for rep in range(100):
        e = S.solve_point(p, dom, f, g, x0, S.WalkConfig(walkers=100_000, seed=rep))
        assert e.censored_fraction < 1e-3
        hits += abs(e.mean - ref[0]) < 3 * e.std_error
    assert hits >= 99
    measured(f"10-point max |z| = {np.max(np.abs(z)):.2f}; {hits}/100 repetitions within 3 se")


@pytest.mark.acceptance(7, "Exit law: KS distance < 0.002 at 1e6 samples; median radius sqrt 2 for s=1/2")
def test_exit_law(measured):
    out = []
    for s in SWEEP:
        p = K.make_params(2, s)
        z = S.exit_sample(p, DISK, CounterStream(77), size=1_000_000)
        R = np.linalg.norm(z, axis=1)
        ks = stats.kstest(R, lambda t: S.exit_cdf(s, t)).statistic
        assert ks < 0.002, (s, ks)
        out.append(f"s={s}: KS {ks:.1e}")
        if s == 0.5:
            med = float(np.median(R))
            assert abs(med - math.sqrt(2)) < 0.01
            out.append(f"median {med:.4f}")
    measured("; ".join(out))


@pytest.mark.acceptance(8, "Non-uniqueness example: PV 0, diagnostic bounded_nonzero at 2 pi sqrt 2; torsion vanishes")
def test_nonuniqueness(measured):
    p = K.make_params(2, 0.5)
    rep = V.check_nonuniqueness_example(p)
    assert rep.details["pv_ok"] and rep.constant < 1e-3
    verdict = rep.details["verdict"]
    assert verdict["classification"] == "bounded_nonzero"
    assert abs(verdict["fitted_limit"] - 2 * math.pi * math.sqrt(2)) < 1e-2
    solved = Q.green_field(p, DISK, F.constant(1.0))
    tv = S.uniqueness_diagnostic(p, Domain([DISK]), solved)
    assert tv.classification == "vanishes"
    measured(f"max |PV| {rep.constant:.1e}; limit {verdict['fitted_limit']:.6f}; torsion slope {tv.slope:.3f}")


@pytest.mark.acceptance(9, "Inequality suite: symmetry, 0 <= G <= Phi, barrier, boundary estimate, Poisson bounds")
def test_inequalities(measured):
    p = K.make_params(2, 0.5)
    dom = Domain([DISK])
    lens = Domain.lens(Ball([0, 0], 2), Ball([2.5, 0], 1))
    reps = [
        V.check_green_symmetry(p, DISK, 10_000),
        V.check_green_symmetry(p, DISK, 10_000, exterior=True),
        V.check_green_domination(p, DISK, 10_000),
        V.check_boundary_estimate(p, dom, 10_000),
        V.check_boundary_estimate(p, dom, 10_000, swap=True),
        V.check_boundary_estimate(p, lens, 10_000),
        V.check_poisson_bounds(p, DISK, 10_000),
    ]
    for r in reps:
        assert r.passed and r.constant is not None and math.isfinite(r.constant), r.check
    regimes = reps[-1].details["regimes"]
    assert all(regimes[k]["stable"] for k in ("near_shell", "near_shell_weighted", "far"))
    measured(", ".join(f"{r.check}={r.constant:.3g}" for r in reps))


@pytest.mark.acceptance(10, "Maximum principle: nonnegative data give nonnegative solutions; monotone in g")
def test_maximum_principle(measured):
    p = K.make_params(2, 0.5)
    rng = np.random.default_rng(10)
    ball = Domain([DISK])
    lens = Domain.lens(Ball([0, 0], 2), Ball([2.5, 0], 1))
    cfg = S.WalkConfig(walkers=2000, seed=9)
    low = 0.0
    for k in range(20):
        a, b, c = rng.uniform(0, 2, 3)
        center = rng.uniform(-1.5, 1.5, 2)
        f = F.ScalarField(lambda y, a=a, c=c: a * np.exp(-c * np.sum(y * y, axis=-1)), name="f")
        g = F.ScalarField(lambda y, b=b, center=center: b / (1 + np.sum((y - center) ** 2, axis=-1)),
                          decay=-2.0, name="g")
        g_big = F.ScalarField(lambda y, g=g: g(y) + 0.1 * (1 + np.tanh(y[..., 0])), name="g_big")
        dom = ball if k % 2 == 0 else lens
        pts = dom.sample_uniform(rng, 3)
        lo = S.solve_field(p, dom, f, g, pts, cfg)
        hi = S.solve_field(p, dom, f, g_big, pts, cfg)
        for (_, e1), (_, e2) in zip(lo, hi):
            assert e1.mean >= 0 and e1.mean <= e2.mean
            low = min(low, e1.mean)
        if dom is ball:
            q = Q.convolve_green(p, DISK, f, pts) + Q.convolve_poisson(p, DISK, g, pts)
            assert np.all(q >= 0)
    measured(f"20 pairs, min solution {low:.3g}, coupled-seed monotone")


@pytest.mark.acceptance(11, "eta0 in (0, 1), stable to 1e-8 across refinement")
def test_eta0(measured):
    rep = V.check_eta0(K.make_params(2, 0.5))
    assert rep.passed and 0 < rep.constant < 1 and rep.details["refinement_spread"] < 1e-8
    sweep = {s: V.compute_eta0(K.make_params(2, s)) for s in SWEEP}
    measured(f"eta0 = {rep.constant:.10f}, spread {rep.details['refinement_spread']:.1e}; "
             + ", ".join(f"s={s}: {v:.4f}" for s, v in sweep.items()))


@pytest.mark.acceptance(12, "Determinism: verify suite and a solve are byte-identical across 1, 4, 8 threads")
def test_determinism(tmp_path, measured):
    solve_cfg = tmp_path / "solve.json"
    solve_cfg.write_text(json.dumps({
        "domain": {"type": "lens", "outer": {"c": [0, 0], "r": 2}, "carve": {"c": [2.5, 0], "r": 1}},
        "problem": {"f": {"type": "constant", "value": 1}, "g": {"type": "half_space", "axis": 1}},
        "points": [[0, 0], [-1, 0.5], [0.5, -1]], "walk": {"walkers": 50_000}}))
    outputs = {}
    for threads in (1, 4, 8):
        v = tmp_path / f"verify{threads}.json"
        s = tmp_path / f"solve{threads}.csv"
        assert cli.main(["verify", "--seed", "42", "--threads", str(threads), "--out", str(v)]) == 0
        assert cli.main(["solve", "--config", str(solve_cfg), "--seed", "42", "--threads", str(threads),
                         "--out", str(s)]) == 0
        outputs[threads] = (v.read_bytes(), s.read_bytes(), (tmp_path / f"solve{threads}.summary.json").read_bytes())
    assert outputs[1] == outputs[4] == outputs[8]
    measured(f"verify {len(outputs[1][0])} bytes, solve {len(outputs[1][1])} bytes identical")
