"""Walk-on-balls solver, potential fixed point and the boundary-mass diagnostic."""
import math

import numpy as np
import pytest
from scipy import integrate

from fraclap import fields as F
from fraclap import kernels as K
from fraclap import quadrature as Q
from fraclap import solver as S
from fraclap.domain import Ball, Domain
from fraclap.errors import CensoringExcess, DomainError, NoContraction
from fraclap.rng import CounterStream

CFG = S.WalkConfig(walkers=20_000, seed=11)


def test_walk_config_json():
    cfg = S.WalkConfig.from_json({"walkers": 500, "seed": 3}, threads=4)
    assert cfg.walkers == 500 and cfg.threads == 4
    assert "threads" not in cfg.to_json()
    with pytest.raises(ValueError):
        S.WalkConfig.from_json({"walkers": 5, "speed": 1})
    with pytest.raises(DomainError):
        S.WalkConfig(ball_shrink=0.0)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_exit_cdf_inverts_radius(s):
    u = np.linspace(0.01, 0.99, 25)
    assert np.allclose(S.exit_cdf(s, S.exit_radius(s, u)), 1 - u, atol=1e-11) or \
        np.allclose(S.exit_cdf(s, S.exit_radius(s, u)), u, atol=1e-11)


def test_exit_median_half():
    # (2/pi) asin sqrt(1 - R^-2) = 1/2 at R = sqrt 2
    assert S.exit_cdf(0.5, math.sqrt(2)) == pytest.approx(0.5, abs=1e-14)


def test_exit_sample_shifted_ball(p2):
    ball = Ball([1.0, 2.0], 0.5)
    z = S.exit_sample(p2, ball, CounterStream(0), size=5000)
    assert np.all(np.linalg.norm(z - ball.c, axis=1) > ball.radius)
    assert S.exit_sample(p2, ball, np.random.default_rng(0)).shape == (2,)


def test_torsion_center(p2, disk_domain):
    # from the center the first ball is the disk itself, so every payoff is T1
    e = S.solve_point(p2, disk_domain, F.constant(1.0), F.zero(), [0.0, 0.0], CFG)
    assert e.mean == pytest.approx(2 / math.pi, rel=1e-14)
    x = np.array([0.3, -0.5])
    e = S.solve_point(p2, disk_domain, F.constant(1.0), F.zero(), x, CFG)
    assert abs(e.mean - 2 / math.pi * math.sqrt(1 - x @ x)) < 3 * e.std_error
    assert e.censored == 0 and e.valid


def test_constant_exterior_data_is_exact(p2, disk_domain, lens):
    for dom, x in ((disk_domain, [0.5, 0.3]), (lens, [-1.0, 0.5])):
        e = S.solve_point(p2, dom, F.zero(), F.constant(1.0), x, CFG)
        assert e.mean == 1.0 and e.std_error == 0.0


def test_half_space_symmetry(p2, disk_domain):
    e = S.solve_point(p2, disk_domain, F.zero(), F.half_space(0), [0.0, 0.0], CFG)
    assert abs(e.mean - 0.5) < 3 * e.std_error


@pytest.mark.parametrize("s", [0.25, 0.75])
def test_torsion_other_orders(s, disk_domain):
    p = K.make_params(2, s)
    x = np.array([0.6, 0.2])
    e = S.solve_point(p, disk_domain, F.constant(1.0), F.zero(), x, CFG)
    ref = p.torsion_center * (1 - x @ x) ** s
    assert abs(e.mean - ref) < 3.5 * e.std_error


def test_point_outside_raises(p2, disk_domain):
    with pytest.raises(DomainError):
        S.solve_point(p2, disk_domain, F.zero(), F.zero(), [1.0, 0.0], CFG)


def test_censoring_reported(disk_domain):
    p = K.make_params(2, 0.9)
    cfg = S.WalkConfig(walkers=2000, max_steps=1, seed=0)
    with pytest.raises(CensoringExcess):
        S.solve_point(p, disk_domain, F.constant(1.0), F.zero(), [0.9, 0.0], cfg)
    res = S.solve_field(p, disk_domain, F.constant(1.0), F.zero(), [[0.9, 0.0]], cfg, strict=False)
    assert res[0][1].censored > 0 and not res[0][1].valid


def test_empty_grid(p2, disk_domain):
    assert S.solve_field(p2, disk_domain, F.zero(), F.zero(), [], CFG) == []


def test_thread_count_does_not_change_results(p2, lens):
    pts = [[0.0, 0.0], [-1.2, 0.4]]
    f, g = F.constant(1.0), F.half_space(1)
    cfg = S.WalkConfig(walkers=40_000, seed=5)
    one = S.solve_field(p2, lens, f, g, pts, cfg)
    many = S.solve_field(p2, lens, f, g, pts, S.WalkConfig(walkers=40_000, seed=5, threads=4))
    assert [e for _, e in one] == [e for _, e in many]


def test_lens_torsion_below_outer_ball(p2, lens):
    # domain monotonicity: G_lens * 1 <= G_{B_2} * 1
    x = np.array([-0.5, 0.0])
    e = S.solve_point(p2, lens, F.constant(1.0), F.zero(), x, CFG)
    outer = p2.torsion_center * (4 - x @ x) ** 0.5
    assert e.mean < outer


def test_boundary_decay_ratio(p2, unit_disk):
    # u / dist^s stays bounded as x approaches the boundary
    d = np.geomspace(1e-1, 1e-6, 12)
    x = np.stack([1 - d, np.zeros_like(d)], axis=1)
    ratio = Q.convolve_green(p2, unit_disk, F.constant(1.0), x) / d ** p2.s
    coarse, fine = ratio[::2].max(), ratio.max()
    assert np.all(np.isfinite(ratio)) and fine <= 1.2 * coarse


def test_potential_zero_is_plain_solve(p2, disk_domain):
    pts = [[0.0, 0.0], [0.4, 0.1]]
    res = S.solve_with_potential(p2, disk_domain, F.constant(1.0), F.zero(), CFG, points=pts)
    plain = S.solve_field(p2, disk_domain, F.constant(1.0), F.zero(), pts, CFG)
    assert len(res.trace) == 1
    assert np.array_equal(res.values, [e.mean for _, e in plain])


def test_potential_between_bounds(p2, disk_domain, unit_disk):
    r = np.linspace(0, 0.9, 6)
    th = np.linspace(0, 2 * math.pi, 6, endpoint=False)
    pts = np.array([[0.0, 0.0]] + [[a * math.cos(b), a * math.sin(b)] for a in r[1:] for b in th])
    res = S.solve_with_potential(p2, disk_domain, F.constant(1.0), F.constant(0.5),
                                 S.WalkConfig(walkers=10_000, seed=3), points=pts)
    assert res.trace[-1]["residual"] <= 1e-3 * res.trace[-1]["norm"] * 1.5
    # 0 <= u <= G*1 and u >= G*1 - c G*(G*1)
    w = F.torsion(p2, unit_disk)
    up = w(pts)
    lo = up - 0.5 * Q.convolve_green(p2, unit_disk, w, pts)
    se = np.array([e.std_error for e in res.estimates])
    assert np.all(res.values <= up + 4 * se) and np.all(res.values >= lo - 4 * se)


def test_potential_no_contraction(p2, disk_domain):
    with pytest.raises(NoContraction):
        S.solve_with_potential(p2, disk_domain, F.constant(1.0), F.constant(1e3), points=[[0.0, 0.0]])


def test_diagnostic_nonuniqueness(p2, disk_domain):
    v = S.uniqueness_diagnostic(p2, disk_domain, F.nonuniqueness_example(p2, disk_domain.as_ball))
    assert v.classification == "bounded_nonzero"
    assert v.fitted_limit == pytest.approx(2 * math.pi * math.sqrt(2), abs=1e-3)
    # exact D(eps) = 2 pi sqrt(2 - eps)
    ref = [2 * math.pi * math.sqrt(2 - e) for e in v.eps_ladder]
    assert np.allclose(v.D_values, ref, rtol=1e-6)


def test_diagnostic_torsion(p2, disk_domain):
    v = S.uniqueness_diagnostic(p2, disk_domain, F.torsion(p2, disk_domain.as_ball))
    assert v.classification == "vanishes"
    for e, D in zip(v.eps_ladder, v.D_values):
        mass, _ = integrate.quad(lambda r: 2 * math.pi * r * 2 / math.pi * math.sqrt(1 - r * r), 1 - e, 1)
        assert D == pytest.approx(mass * e ** -0.5, rel=1e-6)
    assert v.D_values[-1] == pytest.approx(8 * math.sqrt(2) / 3 * v.eps_ladder[-1], rel=2e-3)


def test_diagnostic_diverges_and_zero(p2, disk_domain):
    # at s = 3/4 the profile d^(-1/2) gives D ~ eps^(-1/4)
    p = K.make_params(2, 0.75)
    u = F.ball_power(p, disk_domain.as_ball, -0.5)
    v = S.uniqueness_diagnostic(p, disk_domain, u)
    assert v.classification == "diverges" and v.slope == pytest.approx(-0.25, abs=0.02)
    z = S.uniqueness_diagnostic(p2, disk_domain, F.zero())
    assert z.classification == "vanishes" and all(d == 0 for d in z.D_values)
    with pytest.raises(DomainError):
        S.uniqueness_diagnostic(p2, disk_domain, F.zero(), [0.1, 0.2])


def test_diagnostic_lens_indicator(p2, lens):
    # |u| = 1 near the boundary: shell mass ~ perimeter * eps, D ~ eps^(1-s)
    v = S.uniqueness_diagnostic(p2, lens, F.constant(1.0))
    assert v.classification == "vanishes"
