"""Closed-form kernels of the fractional Laplacian on balls and their exteriors.

All kernel functions are vectorized over leading axes of their point
arguments (shape (..., n)) and return ``inf`` on the kernel's singular set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import special
from .domain import Ball
from .errors import DiagonalError, DomainError, SingularPoint, ToleranceNotMet
from .fields import ScalarField


@dataclass(frozen=True)
class FracParams:
    n: int
    s: float
    a_ns: float
    c_ns: float
    kappa_ns: float
    C_ns: float

    @property
    def beta_b(self) -> float:
        """Second Beta parameter n/2 - s of the Green kernel integral."""
        return self.n / 2 - self.s

    @property
    def sphere_area(self) -> float:
        return 2 * math.pi ** (self.n / 2) / math.gamma(self.n / 2)

    @property
    def torsion_center(self) -> float:
        """Value at the center of the unit-ball torsion function."""
        n, s = self.n, self.s
        return math.gamma(n / 2) / (4.0 ** s * math.gamma(n / 2 + s) * math.gamma(1 + s))

    def to_json(self) -> dict:
        return {"n": self.n, "s": self.s}


def make_params(n: int, s: float, perturb: float = 0.0) -> FracParams:
    """Build the normalization constants for dimension ``n`` and order ``s``.

    ``perturb`` scales every constant by (1 + perturb); it exists only to
    inject faults into the verification suite.
    """
    if int(n) != n or n < 1:
        raise DomainError(f"dimension must be a positive integer, got {n}")
    n = int(n)
    s = float(s)
    if not 0.0 < s < 1.0:
        raise DomainError(f"s must lie in (0, 1), got {s}")
    if not n > 2 * s:
        raise DomainError(f"n={n} <= 2s={2 * s}: the fundamental solution is logarithmic there")
    g = math.gamma
    h = n / 2
    C = 4.0 ** s * s * g(h + s) / (math.pi ** h * g(1 - s))
    a = g(h - s) / (4.0 ** s * math.pi ** h * g(s))
    c = g(h) * math.sin(math.pi * s) / math.pi ** (h + 1)
    kappa = g(h) / (4.0 ** s * math.pi ** h * g(s) ** 2)
    k = 1.0 + perturb
    return FracParams(n, s, a * k, c * k, kappa * k, C * k)


@dataclass(frozen=True)
class KernelValue:
    value: float
    finite: bool

    @classmethod
    def of(cls, v: float) -> "KernelValue":
        v = float(v)
        return cls(v, math.isfinite(v))

    def to_json(self) -> dict:
        return {"value": self.value if self.finite else None, "finite": self.finite}


def _pts(x):
    return np.asarray(x, dtype=float)


def _sq(v):
    return np.sum(np.square(v), axis=-1)


def _ret(v):
    return float(v) if np.ndim(v) == 0 else v


def phi(p: FracParams, x):
    """Fundamental solution a(n,s) |x|^(2s-n)."""
    r = np.sqrt(_sq(_pts(x)))
    with np.errstate(divide="ignore"):
        out = np.where(r > 0, p.a_ns * r ** (2 * p.s - p.n), np.inf)
    return _ret(out)


def gamma_barrier(p: FracParams, x):
    """C^{1,1} modification of phi: phi outside B_1, a quadratic cap inside."""
    r2 = _sq(_pts(x))
    n, s, a = p.n, p.s, p.a_ns
    cap = 0.5 * (n - 2 * s + 2) * a - 0.5 * (n - 2 * s) * a * r2
    with np.errstate(divide="ignore"):
        far = a * np.where(r2 > 0, r2, 1.0) ** (s - n / 2)
    return _ret(np.where(r2 < 1.0, cap, far))


def rho(x, y):
    """(1 - |x|^2)(1 - |y|^2) / |x - y|^2 for points of the open unit ball."""
    x, y = _pts(x), _pts(y)
    d2 = _sq(x - y)
    if np.any(d2 == 0.0):
        raise DiagonalError("rho is undefined on the diagonal x = y")
    if np.any(_sq(x) >= 1.0) or np.any(_sq(y) >= 1.0):
        raise DomainError("rho needs both points in the open unit ball")
    return _ret((1.0 - _sq(x)) * (1.0 - _sq(y)) / d2)


def _beta_integral(p: FracParams, numer, denom):
    """integral_0^rho t^(s-1) (1+t)^(-n/2) dt with rho = numer / denom.

    Equals the incomplete Beta B_X(s, n/2 - s) at X = rho / (1 + rho);
    X and 1 - X are formed from numer and denom without cancellation.
    """
    tot = numer + denom
    return special.betainc_lower(p.s, p.beta_b, numer / tot, denom / tot)


def _local(ball: Ball, x):
    return (_pts(x) - ball.c) / ball.radius


def green_ball(p: FracParams, ball: Ball, x, y):
    """Green's function of the ball, kappa |x-y|^(2s-n) int_0^rho t^(s-1)(1+t)^(-n/2) dt."""
    xl, yl = _local(ball, x), _local(ball, y)
    ax, ay = _sq(xl), _sq(yl)
    if np.any(ax >= 1.0) or np.any(ay >= 1.0):
        raise DomainError("green_ball needs both points inside the open ball")
    d2 = _sq(xl - yl)
    numer = (1.0 - ax) * (1.0 - ay)
    xl_b, d2_b, numer_b = np.broadcast_arrays(ax, d2, numer)
    out = np.full(d2_b.shape, np.inf)
    off = d2_b > 0
    if np.any(off):
        bint = _beta_integral(p, numer_b[off], d2_b[off])
        out[off] = p.kappa_ns * d2_b[off] ** (p.s - p.n / 2) * bint * ball.radius ** (2 * p.s - p.n)
    return _ret(out)


def poisson_ball(p: FracParams, ball: Ball, x, y):
    """Poisson kernel c(n,s) ((r^2-|x-c|^2)/(|y-c|^2-r^2))^s |x-y|^(-n)."""
    xl, yl = _local(ball, x), _local(ball, y)
    ax, ay = _sq(xl), _sq(yl)
    if np.any(ax >= 1.0):
        raise DomainError("poisson_ball needs x inside the open ball")
    if np.any(ay < 1.0):
        raise DomainError("poisson_ball needs y outside the ball")
    d2 = _sq(xl - yl)
    with np.errstate(divide="ignore"):
        out = np.where(ay > 1.0,
                       p.c_ns * ((1.0 - ax) / np.where(ay > 1.0, ay - 1.0, 1.0)) ** p.s
                       * d2 ** (-p.n / 2) * ball.radius ** (-p.n),
                       np.inf)
    return _ret(out)


def kelvin_point(ball: Ball, x):
    """Inversion through the sphere: c + r^2 (x - c) / |x - c|^2."""
    x = _pts(x)
    v = x - ball.c
    q = _sq(v)
    if np.any(q == 0.0):
        raise SingularPoint("Kelvin inversion is undefined at the center")
    return ball.c + ball.radius ** 2 * v / q[..., None]


def kelvin_function(p: FracParams, ball: Ball, u: ScalarField) -> ScalarField:
    """Kelvin transform x -> (r/|x-c|)^(n-2s) u(kelvin_point(x))."""
    c, r, e = ball.c, ball.radius, p.n - 2 * p.s

    def ev(x):
        q = np.sqrt(_sq(x - c))
        with np.errstate(divide="ignore", invalid="ignore"):
            xs = c + r * r * (x - c) / (q * q)[..., None]
            return (r / q) ** e * u(xs)

    return ScalarField(ev, smoothness=u.smoothness, name=f"kelvin({u.name})")


def green_exterior_ball(p: FracParams, ball: Ball, x, y):
    """Green's function of the exterior of a closed ball."""
    x, y = _pts(x), _pts(y)
    r2 = ball.radius ** 2
    qx, qy = _sq(x - ball.c) - r2, _sq(y - ball.c) - r2
    if np.any(qx <= 0.0) or np.any(qy <= 0.0):
        raise DomainError("green_exterior_ball needs both points outside the closed ball")
    d2 = _sq(x - y)
    if np.any(d2 == 0.0):
        raise DiagonalError("green_exterior_ball is singular on the diagonal")
    bint = _beta_integral(p, qx * qy, r2 * d2)
    return _ret(p.kappa_ns * d2 ** (p.s - p.n / 2) * bint)


def rho_exterior(ball: Ball, x, y):
    x, y = _pts(x), _pts(y)
    r2 = ball.radius ** 2
    return _ret((_sq(x - ball.c) - r2) * (_sq(y - ball.c) - r2) / (r2 * _sq(x - y)))


def poisson_exterior_ball(p: FracParams, ball: Ball, x, y):
    """Poisson kernel of the exterior of a closed ball: x outside, y inside."""
    x, y = _pts(x), _pts(y)
    r2 = ball.radius ** 2
    qx, qy = _sq(x - ball.c) - r2, r2 - _sq(y - ball.c)
    if np.any(qx <= 0.0):
        raise DomainError("poisson_exterior_ball needs x outside the closed ball")
    if np.any(qy <= 0.0):
        raise DomainError("poisson_exterior_ball needs y inside the open ball")
    return _ret(p.c_ns * (qx / qy) ** p.s * _sq(x - y) ** (-p.n / 2))


def gamma_field(p: FracParams) -> ScalarField:
    """gamma_barrier as a field, smooth except across the unit sphere."""
    return ScalarField(lambda x: gamma_barrier(p, x), smoothness="C0", decay=2 * p.s - p.n,
                       singular_spheres=((np.zeros(p.n), 1.0),), name="Gamma")


def _gamma_far_level(p: FracParams, X, level: int):
    from .quadrature import _angular_nodes, _frame
    from .rules import graded, level_shape

    n, s = p.n, p.s
    layers, m = level_shape(level)
    t, _, wt = graded(layers, m, "both")
    nx = np.linalg.norm(X, axis=-1)
    ex, perp = _frame(X)
    y_r = t[None, :] * np.ones((len(X), 1))
    a = y_r / nx[:, None]                                          # (M, Q) in (0, 1)
    cos_t, sin_v, wa = _angular_nodes(n, level, a)
    theta = cos_t[..., None] * ex[:, None, None, :]
    if n > 1:
        theta = theta + np.einsum("mqpk,mkn->mqpn", sin_v, perp)
    y = t[None, :, None, None] * theta
    diff = phi(p, y) - gamma_barrier(p, y)
    d2 = nx[:, None, None] ** 2 + t[None, :, None] ** 2 - 2 * nx[:, None, None] * t[None, :, None] * cos_t
    vals = diff * d2 ** (-(n + 2 * s) / 2) * wa
    return p.C_ns * np.einsum("mqp,q->m", vals, wt * t ** (n - 1))


FAR_SWITCH = 1.2


def gamma_density_far(p: FracParams, x, quad=None):
    """gamma(x) for |x| > 1 as C int_{B_1} (Phi - Gamma)(y) |x - y|^(-n-2s) dy.

    Outside B_1 the difference Phi - Gamma vanishes and (-Delta)^s Phi = 0
    away from the origin, which leaves this regular integral.
    """
    from .quadrature import DEFAULT, _adaptive

    q = quad or DEFAULT
    X = np.asarray(x, dtype=float).reshape(-1, p.n)
    if np.any(np.linalg.norm(X, axis=-1) <= 1.0):
        raise DomainError("the far representation needs |x| > 1")
    return _adaptive(lambda lvl: _gamma_far_level(p, X, lvl), q, p.n, "gamma_density")


def gamma_density(p: FracParams, x, quad=None):
    """gamma = (-Delta)^s Gamma: the PV evaluator for |x| <= 1.2, the regular
    far representation beyond."""
    from .quadrature import DEFAULT, frac_laplacian_pv

    q = quad or DEFAULT
    X = np.asarray(x, dtype=float)
    flat = X.reshape(-1, p.n)
    r = np.linalg.norm(flat, axis=-1)
    out = np.empty(len(flat))
    near = r <= FAR_SWITCH
    try:
        if np.any(near):
            out[near] = np.atleast_1d(frac_laplacian_pv(p, gamma_field(p), flat[near], q))
        todo = []
    except ToleranceNotMet:
        todo = np.flatnonzero(near)
    for i in todo:
        try:
            out[i] = float(frac_laplacian_pv(p, gamma_field(p), flat[i], q))
        except ToleranceNotMet:
            # just outside the gluing sphere the kink slows the PV rule; the
            # regular representation is valid there
            if r[i] <= 1.0:
                raise
            out[i] = float(gamma_density_far(p, flat[i:i + 1], q)[0])
    if np.any(~near):
        out[~near] = gamma_density_far(p, flat[~near], q)
    return _ret(out.reshape(X.shape[:-1]))
