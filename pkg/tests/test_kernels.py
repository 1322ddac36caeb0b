"""Normalization constants and closed-form ball kernels."""
import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import beta

from fraclap import kernels as K
from fraclap import fields as F
from fraclap.domain import Ball
from fraclap.errors import DomainError


@pytest.mark.parametrize("n,s", [(2, 0.25), (2, 0.5), (2, 0.75), (3, 0.5), (3, 0.9)])
def test_constant_consistency(n, s):
    p = K.make_params(n, s)
    assert p.kappa_ns * beta(s, n / 2 - s) == pytest.approx(p.a_ns, rel=1e-12)


def test_constants_n2_half():
    p = K.make_params(2, 0.5)
    assert p.a_ns == pytest.approx(1 / (2 * math.pi), rel=1e-14)
    assert p.c_ns == pytest.approx(1 / math.pi ** 2, abs=1e-12)
    # the exterior mass of P(0, .) is 2 pi c * int_1^inf dr / (r sqrt(r^2-1)) and must be 1
    radial, _ = integrate.quad(lambda r: 1 / (r * math.sqrt(r * r - 1)), 1, np.inf)
    assert radial == pytest.approx(math.pi / 2, rel=1e-10)
    assert 2 * math.pi * p.c_ns * radial == pytest.approx(1.0, rel=1e-10)


@pytest.mark.parametrize("n,s", [(1, 0.5), (1, 0.75), (2, 0.0), (2, 1.0)])
def test_invalid_params(n, s):
    with pytest.raises(DomainError):
        K.make_params(n, s)


def test_perturb_scales_constants():
    p, q = K.make_params(2, 0.5), K.make_params(2, 0.5, perturb=1e-2)
    for name in ("a_ns", "c_ns", "kappa_ns", "C_ns"):
        assert getattr(q, name) == pytest.approx(1.01 * getattr(p, name), rel=1e-14)


def test_phi(p2):
    assert K.phi(p2, [1.0, 0.0]) == pytest.approx(1 / (2 * math.pi))
    assert K.phi(p2, [0.0, 2.0]) == pytest.approx(1 / (4 * math.pi))
    kv = K.KernelValue.of(K.phi(p2, [0.0, 0.0]))
    assert not kv.finite and kv.to_json() == {"value": None, "finite": False}


def test_gamma_barrier(p2):
    assert K.gamma_barrier(p2, [0.0, 0.0]) == pytest.approx(3 / (4 * math.pi))
    assert K.gamma_barrier(p2, [3.0, 0.0]) == pytest.approx(1 / (6 * math.pi))
    r = np.array([[1 - 1e-9, 0.0], [1 + 1e-9, 0.0]])
    v = K.gamma_barrier(p2, r)
    assert abs(v[0] - v[1]) < 1e-8


def test_rho():
    assert K.rho([0.0, 0.0], [0.5, 0.0]) == pytest.approx(3.0)
    x, y = np.array([0.2, -0.4]), np.array([-0.1, 0.6])
    assert K.rho(x, y) == K.rho(y, x)


def test_green_ball_value(p2, unit_disk):
    g = K.green_ball(p2, unit_disk, [0.0, 0.0], [0.5, 0.0])
    assert g == pytest.approx(2 / (3 * math.pi), rel=1e-12)
    # independent oracle: direct t-integral
    t, _ = integrate.quad(lambda t: t ** -0.5 / (1 + t), 0, 3)
    assert g == pytest.approx(p2.kappa_ns * 2 * t, rel=1e-10)
    assert K.green_ball(p2, unit_disk, [0.0, 0.0], [1 - 1e-13, 0.0]) < 1e-5
    assert not math.isfinite(K.green_ball(p2, unit_disk, [0.1, 0.1], [0.1, 0.1]))


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_green_against_t_integral(s):
    p = K.make_params(2, s)
    ball = Ball([0.3, -0.2], 1.7)
    x, y = np.array([0.9, 0.1]), np.array([-0.6, -1.0])
    xl, yl = (x - ball.c) / ball.radius, (y - ball.c) / ball.radius
    r0 = (1 - xl @ xl) * (1 - yl @ yl) / ((xl - yl) @ (xl - yl))
    t, _ = integrate.quad(lambda t: t ** (s - 1) / (1 + t), 0, r0)
    ref = p.kappa_ns * np.linalg.norm(x - y) ** (2 * s - 2) * t
    assert K.green_ball(p, ball, x, y) == pytest.approx(ref, rel=1e-9)


def test_poisson_ball_value(p2, unit_disk):
    assert K.poisson_ball(p2, unit_disk, [0.0, 0.0], [math.sqrt(2), 0.0]) == pytest.approx(1 / (2 * math.pi ** 2))
    assert K.poisson_ball(p2, unit_disk, [1 - 1e-12, 0.0], [2.0, 0.0]) < 1e-5


def test_kelvin(p2, unit_disk):
    assert np.allclose(K.kelvin_point(unit_disk, [2.0, 0.0]), [0.5, 0.0])
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 2)) * 2
    assert np.allclose(K.kelvin_point(unit_disk, K.kelvin_point(unit_disk, x)), x, rtol=1e-13)
    on = np.array([0.6, 0.8])
    assert np.allclose(K.kelvin_point(unit_disk, on), on)
    u = F.ScalarField(lambda z: np.cos(z[..., 0]) + z[..., 1] ** 2, name="smooth")
    twice = K.kelvin_function(p2, unit_disk, K.kelvin_function(p2, unit_disk, u))
    assert np.allclose(twice(x), u(x), rtol=1e-12)
    one = K.kelvin_function(p2, unit_disk, F.constant(1.0))
    assert np.allclose(one(x), (1 / np.linalg.norm(x, axis=1)) ** (2 - 1))


def test_kelvin_of_fundamental_solution(p2):
    ball = Ball([0.2, 0.1], 0.8)
    y = np.array([1.5, -0.7])
    gy = F.ScalarField(lambda z: K.phi(p2, z - y), name="phi_y")
    kv = K.kelvin_function(p2, ball, gy)
    eta = ball.c + ball.radius ** 2 * (y - ball.c) / np.sum((y - ball.c) ** 2)
    x = np.random.default_rng(1).uniform(-2, 2, size=(20, 2))
    ref = p2.a_ns * (np.linalg.norm(eta - ball.c) / ball.radius) ** (2 - 1) * np.linalg.norm(x - eta, axis=1) ** -1
    assert np.allclose(kv(x), ref, rtol=1e-11)


def test_green_exterior(p2):
    ball = Ball([0.0, 0.0], 1.0)
    assert K.rho_exterior(ball, [2.0, 0.0], [-2.0, 0.0]) == pytest.approx(9 / 16)
    v = K.green_exterior_ball(p2, ball, [2.0, 0.0], [-2.0, 0.0])
    assert v == pytest.approx(math.atan(0.75) / (4 * math.pi ** 2), rel=1e-12)
    assert K.green_exterior_ball(p2, ball, [2.0, 0.0], [1 + 1e-13, 0.0]) < 1e-5
    assert K.poisson_exterior_ball(p2, ball, [2.0, 0.0], [0.0, 0.0]) == pytest.approx(
        math.sqrt(3) / (4 * math.pi ** 2), rel=1e-12)


def test_gamma_density_mass():
    p = K.make_params(2, 0.5)
    # radial mass: 2 pi int_0^inf r gamma(r) dr
    r = np.concatenate([np.linspace(0, 1.2, 200, endpoint=False), np.geomspace(1.2, 400, 400)])
    vals = np.array([K.gamma_density(p, [t, 0.0]) for t in r])
    mass = np.trapezoid(2 * math.pi * r * vals, r)
    # gamma ~ A r^-3 at large r, so the tail beyond R is 2 pi A / R
    tail = 2 * math.pi * vals[-1] * r[-1] ** 3 / r[-1]
    assert mass + tail == pytest.approx(1.0, abs=1e-3)
    far = K.gamma_density(p, [10.0, 0.0])
    assert 0 < far <= 10 * 10.0 ** -(2 + 1)
