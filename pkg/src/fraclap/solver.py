"""Monte Carlo ball-walk solver, potential-term fixed point and the boundary-mass diagnostic.

Each step of the walk sits at the center of the largest ball inside the
domain, adds an unbiased one-sample estimate of the ball's Green potential
of f, and jumps according to the ball's centered Poisson kernel.  The walk
stops with payoff g at the first landing point outside the domain.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import List, Optional, Sequence

import numpy as np
from scipy import special as sps

from . import special
from .domain import Ball, Domain
from .errors import CensoringExcess, DomainError, NoContraction, NonConvergence
from .fields import ScalarField
from .kernels import FracParams
from .quadrature import DEFAULT, QuadConfig, integrate_adaptive
from .rng import CounterStream

log = logging.getLogger(__name__)

CENSOR_LIMIT = 1e-3
WALKER_CHUNK = 1 << 14
SOURCE_SLOTS = 1 << 16  # rejection attempts reserved per source sample


@dataclass(frozen=True)
class WalkConfig:
    walkers: int = 100_000
    max_steps: int = 10_000
    seed: int = 0
    source_samples_per_step: int = 1
    ball_shrink: float = 1.0
    threads: int = 1

    def __post_init__(self):
        if int(self.walkers) < 1 or int(self.max_steps) < 1 or int(self.source_samples_per_step) < 1:
            raise DomainError("walkers, max_steps and source_samples_per_step must be positive")
        if not 0.0 < self.ball_shrink <= 1.0:
            raise DomainError("ball_shrink must lie in (0, 1]")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if int(self.threads) < 1:
            raise DomainError("threads must be positive")

    @classmethod
    def from_json(cls, d: dict, **over) -> "WalkConfig":
        known = {"walkers", "max_steps", "seed", "source_samples_per_step", "ball_shrink"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown walk keys: {sorted(extra)}")
        args = dict(d)
        args.update({k: v for k, v in over.items() if v is not None})
        for k in ("walkers", "max_steps", "seed", "source_samples_per_step", "threads"):
            if k in args:
                args[k] = int(args[k])
        return cls(**args)

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("threads")
        return d


@dataclass(frozen=True)
class WalkEstimate:
    mean: float
    std_error: float
    walkers_used: int
    censored: int
    mean_steps: float
    seed: int = 0
    point_index: int = 0

    @property
    def censored_fraction(self) -> float:
        total = self.walkers_used + self.censored
        return self.censored / total if total else 0.0

    @property
    def valid(self) -> bool:
        return self.censored_fraction < CENSOR_LIMIT

    def to_json(self) -> dict:
        d = asdict(self)
        d["valid"] = self.valid
        return d


# -- sampling ---------------------------------------------------------------------
def _directions(n, u):
    """Uniform unit vectors from uniforms of shape (m, k), k >= directions_needed(n)."""
    if n == 1:
        return np.where(u[:, :1] < 0.5, -1.0, 1.0)
    if n == 2:
        th = 2 * math.pi * u[:, 0]
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if n == 3:
        z = 2.0 * u[:, 0] - 1.0
        ph = 2 * math.pi * u[:, 1]
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        return np.stack([r * np.cos(ph), r * np.sin(ph), z], axis=1)
    k = n + (n % 2)
    rad = np.sqrt(-2.0 * np.log(u[:, 0:k:2]))
    ang = 2 * math.pi * u[:, 1:k:2]
    g = np.concatenate([rad * np.cos(ang), rad * np.sin(ang)], axis=1)[:, :n]
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def directions_needed(n: int) -> int:
    return {1: 1, 2: 1, 3: 2}.get(n, n + (n % 2))


def exit_radius(s: float, u):
    """Radius R > 1 of the centered unit-ball exit law: I_{1-R^-2}(1-s, s) = 1 - u.

    Writing w = R^-2, w is Beta(s, 1-s) distributed.  The inverse keeps
    relative precision in w near 0, so large radii are exact; near w = 1 the
    radius is within one ulp of 1 anyway.
    """
    u = np.asarray(u, dtype=float)
    if s == 0.5:
        w = np.sin(0.5 * math.pi * u) ** 2
    else:
        w = special.betaincinv_reg(s, 1.0 - s, u)
    with np.errstate(divide="ignore"):
        return 1.0 / np.sqrt(w)


def exit_cdf(s: float, R):
    """Centered unit-ball exit radius CDF F(R) = I_{1-R^-2}(1-s, s)."""
    R = np.asarray(R, dtype=float)
    x = np.where(R > 1.0, 1.0 - R ** -2.0, 0.0)
    return special.betainc_reg(1.0 - s, s, x, np.where(R > 1.0, R ** -2.0, 1.0))


def exit_sample(p: FracParams, ball: Ball, stream, size: Optional[int] = None, point: int = 0, step: int = 0):
    """Draw from P_ball(center, .): points outside the closed ball.

    ``stream`` is a CounterStream, or a numpy Generator for ad-hoc use.
    """
    m = 1 if size is None else int(size)
    k = 1 + directions_needed(p.n)
    if isinstance(stream, CounterStream):
        u = stream.uniforms(point, np.arange(m), step, k)
    else:
        u = stream.uniform(size=(m, k))
    pts = ball.c + ball.radius * exit_radius(p.s, u[:, 0])[:, None] * _directions(p.n, u[:, 1:])
    return pts[0] if size is None else pts


def _source_offsets(p: FracParams, stream: CounterStream, point: int, walkers, step: int, sample: int):
    """Unit-ball points drawn from G_B1(0, y) / torsion_center by rejection.

    Proposal radius t with density 2s t^(2s-1), accepted with probability
    I_{1-t^2}(s, n/2 - s), which is the exact shape of the radial Green density.
    """
    n, s = p.n, p.s
    k = 2 + directions_needed(n)
    out = np.empty((len(walkers), n))
    pending = np.arange(len(walkers))
    attempt = 0
    while pending.size:
        slot = 1 + sample * SOURCE_SLOTS + attempt
        u = stream.uniforms(point, walkers[pending], step, k, slot=slot)
        t = u[:, 0] ** (0.5 / s)
        acc = u[:, 1] < sps.betainc(s, p.beta_b, 1.0 - t * t)
        idx = pending[acc]
        out[idx] = t[acc, None] * _directions(n, u[acc, 2:])
        pending = pending[~acc]
        attempt += 1
        if attempt >= SOURCE_SLOTS:
            raise ArithmeticError("source rejection sampler failed to accept")
    return out


def _walk_chunk(p, dom, f, g, x, cfg, stream, point, walkers):
    """Run a block of walkers; returns (payoff, steps, censored mask)."""
    m = len(walkers)
    z = np.repeat(np.asarray(x, dtype=float)[None, :], m, axis=0)
    payoff = np.zeros(m)
    steps = np.zeros(m, dtype=np.int64)
    active = np.arange(m)
    T1 = p.torsion_center
    kdir = directions_needed(p.n)
    use_f = not f.is_zero
    for step in range(cfg.max_steps):
        if active.size == 0:
            break
        za = z[active]
        wa = walkers[active]
        rad = cfg.ball_shrink * dom._inside_dist(za)
        if use_f:
            acc = np.zeros(active.size)
            for j in range(cfg.source_samples_per_step):
                off = _source_offsets(p, stream, point, wa, step, j)
                acc += f(za + rad[:, None] * off)
            payoff[active] += T1 * rad ** (2 * p.s) * acc / cfg.source_samples_per_step
        u = stream.uniforms(point, wa, step, 1 + kdir)
        jump = exit_radius(p.s, u[:, 0])[:, None] * _directions(p.n, u[:, 1:])
        znew = za + rad[:, None] * jump
        z[active] = znew
        steps[active] += 1
        out = ~dom.contains(znew)
        if out.any():
            payoff[active[out]] += g(znew[out])
        active = active[~out]
    censored = np.zeros(m, dtype=bool)
    censored[active] = True
    return payoff, steps, censored


def _estimate(p, dom, f, g, x, cfg, point, pool):
    stream = CounterStream(cfg.seed)
    N = int(cfg.walkers)
    starts = range(0, N, WALKER_CHUNK)
    jobs = [np.arange(a, min(N, a + WALKER_CHUNK), dtype=np.int64) for a in starts]
    run = lambda w: _walk_chunk(p, dom, f, g, x, cfg, stream, point, w)
    parts = list(pool.map(run, jobs)) if pool is not None else [run(w) for w in jobs]
    payoff = np.concatenate([q[0] for q in parts])
    steps = np.concatenate([q[1] for q in parts])
    cens = np.concatenate([q[2] for q in parts])
    keep = ~cens
    used = int(keep.sum())
    vals = payoff[keep]
    if used:
        mean = float(np.sum(vals) / used)
        var = float(np.sum((vals - mean) ** 2) / max(used - 1, 1))
        se = math.sqrt(var / used)
        ms = float(np.sum(steps[keep]) / used)
    else:
        mean, se, ms = math.nan, math.nan, math.nan
    return WalkEstimate(mean, se, used, int(cens.sum()), ms, int(cfg.seed), int(point))


def _check_censoring(est: WalkEstimate):
    if not est.valid:
        raise CensoringExcess(f"{est.censored} of {est.walkers_used + est.censored} walks hit max_steps",
                              estimate=est)


def _pool(cfg: WalkConfig):
    return ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None


def solve_point(p: FracParams, dom: Domain, f: ScalarField, g: ScalarField, x,
                cfg: WalkConfig = WalkConfig(), q: QuadConfig = DEFAULT, point_index: int = 0) -> WalkEstimate:
    """Unbiased estimate of u(x) = (G_dom * f)(x) + (P_dom * g)(x)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != dom.dim or not bool(dom.contains(x)):
        raise DomainError(f"point {x.tolist()} is not inside the domain")
    pool = _pool(cfg)
    try:
        est = _estimate(p, dom, f, g, x, cfg, point_index, pool)
    finally:
        if pool is not None:
            pool.shutdown()
    _check_censoring(est)
    return est


def solve_field(p: FracParams, dom: Domain, f: ScalarField, g: ScalarField, points,
                cfg: WalkConfig = WalkConfig(), q: QuadConfig = DEFAULT, strict: bool = True):
    """Per-point estimates; walker streams are keyed by (seed, point index, walker index)."""
    pts = np.asarray(points, dtype=float).reshape(-1, dom.dim) if len(points) else np.zeros((0, dom.dim))
    if len(pts) and not np.all(dom.contains(pts)):
        bad = int(np.flatnonzero(~dom.contains(pts))[0])
        raise DomainError(f"grid point {bad} is not inside the domain")
    pool = _pool(cfg)
    out = []
    try:
        for i, x in enumerate(pts):
            est = _estimate(p, dom, f, g, x, cfg, i, pool)
            log.debug("point %d: %s", i, est)
            out.append((x, est))
    finally:
        if pool is not None:
            pool.shutdown()
    if strict:
        for _, est in out:
            _check_censoring(est)
    return out


# -- potential term ------------------------------------------------------------------
@dataclass
class PotentialResult:
    points: np.ndarray
    estimates: List[WalkEstimate]
    trace: List[dict]
    field: ScalarField

    @property
    def values(self) -> np.ndarray:
        return np.array([e.mean for e in self.estimates])


def _grid_interpolant(dom: Domain, pts, vals, g: ScalarField, name="u"):
    """Piecewise-linear interpolant of grid values, pinned to g on boundary samples."""
    n = dom.dim
    rng = np.random.default_rng(0)
    if n == 1:
        order = np.argsort(pts[:, 0])
        xs, ys = pts[order, 0], vals[order]

        def ev(y):
            return np.where(dom.contains(y), np.interp(y[..., 0], xs, ys), g(y))

        return ScalarField(ev, name=name, smoothness="C0")
    from scipy.interpolate import LinearNDInterpolator, NearestNDInterpolator

    bpts = dom.boundary_points(rng, 64 * 2 ** (n - 1))
    P = np.concatenate([pts, bpts])
    V = np.concatenate([vals, np.asarray(g(bpts), dtype=float).reshape(-1)])
    lin = LinearNDInterpolator(P, V)
    near = NearestNDInterpolator(P, V)

    def ev(y):
        flat = y.reshape(-1, n)
        out = lin(flat)
        miss = ~np.isfinite(out)
        if miss.any():
            out[miss] = near(flat[miss])
        out = np.where(dom.contains(flat), out, g(flat))
        return out.reshape(y.shape[:-1])

    return ScalarField(ev, name=name, smoothness="C0")


def potential_bound(p: FracParams, dom: Domain, c: ScalarField, samples: int = 4096, seed: int = 0):
    """Estimated ||c||_inf times a certified bound on sup_x (G_dom * 1)(x).

    Domain monotonicity bounds G_dom * 1 by the torsion of the bounding ball.
    """
    rng = np.random.default_rng(seed)
    pts = dom.sample_uniform(rng, samples)
    cmax = float(np.max(np.abs(c(pts)))) if not c.is_zero else 0.0
    if not c.is_zero and float(np.min(c(pts))) < 0.0:
        raise DomainError("potential c must be nonnegative")
    R = dom.bounding_ball.radius
    return cmax * p.torsion_center * R ** (2 * p.s)


def solve_with_potential(p: FracParams, dom: Domain, f: ScalarField, c: ScalarField,
                         cfg: WalkConfig = WalkConfig(), q: QuadConfig = DEFAULT, points=None,
                         g: ScalarField = None, max_iter: int = 50, rel_tol: float = 1e-3) -> PotentialResult:
    """Fixed point u_{k+1} = SOLVE(f - c u_k, g) on a grid, with common random numbers."""
    from .fields import zero

    g = zero() if g is None else g
    if points is None:
        raise DomainError("solve_with_potential needs grid points")
    pts = np.asarray(points, dtype=float).reshape(-1, dom.dim)
    factor = potential_bound(p, dom, c)
    if factor >= 1.0:
        raise NoContraction(f"||c|| * sup G*1 is estimated at {factor:.3g} >= 1")
    trace = []
    prev = np.zeros(len(pts))
    field_k = ScalarField(lambda y: np.zeros(y.shape[:-1]), is_zero=True, name="u0")
    ests = []
    for k in range(1, max_iter + 1):
        uk = field_k
        src = f if c.is_zero else ScalarField(lambda y, uk=uk: f(y) - c(y) * uk(y), name=f"src{k}")
        res = solve_field(p, dom, src, g, pts, cfg, q)
        ests = [e for _, e in res]
        vals = np.array([e.mean for e in ests])
        resid = float(np.max(np.abs(vals - prev))) if len(vals) else 0.0
        scale = float(np.max(np.abs(prev))) if len(prev) else 0.0
        trace.append({"iteration": k, "residual": resid, "norm": float(np.max(np.abs(vals))) if len(vals) else 0.0})
        log.info("potential iteration %d residual %.3g", k, resid)
        field_k = _grid_interpolant(dom, pts, vals, g, name=f"u{k}")
        if c.is_zero or resid <= rel_tol * scale or not len(vals):
            return PotentialResult(pts, ests, trace, field_k)
        prev = vals
    raise NonConvergence(f"no convergence after {max_iter} iterations", trace=trace)


# -- boundary mass diagnostic ---------------------------------------------------------------
@dataclass(frozen=True)
class UniquenessVerdict:
    eps_ladder: tuple
    D_values: tuple
    classification: str
    fitted_limit: Optional[float]
    slope: float
    D_lower: tuple = ()
    D_upper: tuple = ()

    def to_json(self) -> dict:
        return {"eps_ladder": list(self.eps_ladder), "D_values": list(self.D_values),
                "classification": self.classification, "fitted_limit": self.fitted_limit,
                "slope": self.slope if math.isfinite(self.slope) else None, "D_exponent_minus": list(self.D_lower),
                "D_exponent_plus": list(self.D_upper)}


def default_ladder(dom: Domain) -> list:
    return [dom.inradius * 2.0 ** -k for k in range(3, 11)]


SLOPE_BAND = 0.1
SHELL_REL_TOL = 1e-6


def shell_mass(dom: Domain, u: ScalarField, eps: float, q: QuadConfig = DEFAULT) -> float:
    """Integral of |u| over {x in dom : dist(x, boundary) <= eps}."""
    if u.is_zero:
        return 0.0
    inner = dom.shift_inner(eps)

    def region(y):
        return dom.contains(y) & ~inner.contains(y)

    def integrand(y):
        return np.abs(u(y))

    extra = list(inner.spheres()) + list(u.spheres())
    # a field blowing up like d^(s-1) keeps about sqrt(ulp) of its mass within
    # rounding distance of the boundary, so tighter relative targets are unreachable
    qs = replace(q, rel_tol=max(q.rel_tol, SHELL_REL_TOL))
    return integrate_adaptive(dom, integrand, qs, "shell_mass", extra_spheres=extra, region=region)


def uniqueness_diagnostic(p: FracParams, dom: Domain, u: ScalarField, ladder: Sequence[float] = None,
                          q: QuadConfig = DEFAULT) -> UniquenessVerdict:
    """Classify D(eps) = eps^-s * int_{dom minus dom_eps} |u| as eps -> 0."""
    ladder = default_ladder(dom) if ladder is None else [float(e) for e in ladder]
    if len(ladder) < 2 or any(b >= a for a, b in zip(ladder, ladder[1:])) or ladder[-1] <= 0:
        raise DomainError("ladder must be strictly decreasing, positive, with at least two entries")
    mass = np.array([shell_mass(dom, u, e, q) for e in ladder])
    eps = np.array(ladder)
    D = mass * eps ** -p.s
    lower = tuple(float(v) for v in mass * eps ** -(p.s - 0.05))
    upper = tuple(float(v) for v in mass * eps ** -(p.s + 0.05))
    if np.all(mass == 0.0):
        return UniquenessVerdict(tuple(ladder), tuple(float(v) for v in D), "vanishes", 0.0, math.nan,
                                 lower, upper)
    half = max(2, (len(eps) + 1) // 2)
    le, lD = np.log(eps[-half:]), np.log(np.maximum(D[-half:], 1e-300))
    slope = float(np.polyfit(le, lD, 1)[0])
    limit = None
    if slope > SLOPE_BAND:
        cls = "vanishes"
        limit = 0.0
    elif slope < -SLOPE_BAND:
        cls = "diverges"
    else:
        cls = "bounded_nonzero"
        e1, e0 = eps[-1], eps[-2]
        limit = float(D[-1] + (D[-1] - D[-2]) * e1 / (e0 - e1))
    return UniquenessVerdict(tuple(ladder), tuple(float(v) for v in D), cls, limit, slope, lower, upper)
