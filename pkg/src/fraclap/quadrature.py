"""Singular integrals: the PV form of (-Delta)^s, ball convolutions, mollifiers, norms.

Every integrator works in polar coordinates along rays with composite
Gauss panels graded geometrically toward the points where the integrand
loses smoothness (sphere crossings, the pole, the truncation radius).  A
level ladder refines directions and panels together; a result is accepted
when two consecutive levels agree to the requested tolerance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np

from . import special
from .domain import Ball, DilatedDomain, Domain, ray_sphere_hits
from .errors import DomainError, IntegrabilityError, ToleranceNotMet
from .fields import ScalarField
from .rules import gauss01, graded, level_shape, panel_count, sphere_rule

CHUNK = 500_000  # integrand evaluations per vectorized block


@dataclass(frozen=True)
class QuadConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_subdivisions: int = 10_000
    tail_split_radius: float = 10.0
    taylor_ring_radius: float = 1e-3
    min_level: int = 1
    max_level: int | None = None

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.taylor_ring_radius < self.tail_split_radius:
            raise ValueError("need 0 < taylor_ring_radius < tail_split_radius")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be positive")

    @classmethod
    def from_json(cls, d: dict | None) -> "QuadConfig":
        d = dict(d or {})
        known = {"rel_tol", "abs_tol", "max_subdivisions", "tail_split_radius", "taylor_ring_radius",
                 "min_level", "max_level"}
        bad = set(d) - known
        if bad:
            raise ValueError(f"unknown quadrature keys: {sorted(bad)}")
        return cls(**d)

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in ("rel_tol", "abs_tol", "max_subdivisions",
                                               "tail_split_radius", "taylor_ring_radius")}

    def fixed(self, level: int) -> "QuadConfig":
        """Config pinned to a single level (no refinement, no error check)."""
        return replace(self, min_level=level, max_level=level)

    def top_level(self, n: int) -> int:
        top = 0
        while panel_count(n, top + 1) <= self.max_subdivisions and top < 8:
            top += 1
        if self.max_level is not None:
            top = min(top, self.max_level)
        return max(top, self.min_level)


DEFAULT = QuadConfig()


def _adaptive(fn: Callable[[int], np.ndarray], q: QuadConfig, n: int, what: str):
    """Evaluate fn at increasing levels until two consecutive results agree."""
    top = q.top_level(n)
    lvl = min(q.min_level, top)
    cur = np.asarray(fn(lvl), dtype=float)
    if q.max_level is not None and q.min_level >= q.max_level:
        return cur
    while lvl < top:
        lvl += 1
        prev, cur = cur, np.asarray(fn(lvl), dtype=float)
        err = np.abs(cur - prev)
        if np.all(err <= np.maximum(q.abs_tol, q.rel_tol * np.abs(cur))):
            return cur
    worst = float(np.max(err)) if top > min(q.min_level, top) else float("nan")
    raise ToleranceNotMet(f"{what}: level budget exhausted (last change {worst:.3g})")


def _as_points(x, n):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise DomainError(f"points must have {n} coordinates")
    return x.reshape(-1, n), x.shape[:-1]


def _shaped(vals, shape):
    vals = np.asarray(vals).reshape(shape)
    return float(vals) if vals.ndim == 0 else vals


def _chunks(m, per_point):
    step = max(1, CHUNK // max(1, per_point))
    for i in range(0, m, step):
        yield slice(i, min(m, i + step))


# -- principal value ----------------------------------------------------------------

def _tail_ok(p, u: ScalarField, q: QuadConfig):
    """Decide how the far field is integrated; raise if u is not in L_2s."""
    if u.bounded_support or (u.decay is not None and u.decay == -math.inf):
        return "compact"
    if u.decay is not None:
        if u.decay >= 2 * p.s:
            raise IntegrabilityError(f"decay exponent {u.decay} is not below 2s = {2 * p.s}")
        return "numeric"
    res = u._cache.get(("l2s", p.n, p.s))
    if res is None:
        res = l2s_membership(p, u, q)
        u._cache[("l2s", p.n, p.s)] = res
    if res.divergent:
        raise IntegrabilityError(f"{u.name} is not in L_2s")
    return "numeric"


def _support_radius(u: ScalarField, X):
    if u.support is None:
        return 0.0
    bb = u.support.bounding_ball
    extra = u.support.eps if isinstance(u.support, DilatedDomain) else 0.0
    return float(np.max(np.linalg.norm(X - bb.c, axis=-1))) + bb.radius + extra


def ray_plane_hits(x, dirs, planes):
    """Crossing distances of rays x + t*dirs with hyperplanes, NaN where absent."""
    out = []
    for v, off in planes:
        num = off - x @ v
        den = dirs @ v
        with np.errstate(divide="ignore", invalid="ignore"):
            t = num[:, None] / den
        out.append(np.where(t > 0, t, np.nan))
    return np.stack(out, axis=-1)


def _ring_radius(x, spheres, delta, planes=()):
    """Taylor ring radius per point, kept inside the region where u is smooth."""
    out = np.full(len(x), float(delta))
    for v, off in planes:
        gap = np.abs(x @ v - off)
        out = np.minimum(out, np.maximum(0.5 * gap, 1e-3 * delta))
    for c, r in spheres:
        gap = np.abs(np.linalg.norm(x - c, axis=-1) - r)
        out = np.minimum(out, np.maximum(0.5 * gap, 1e-3 * delta))
    return out


NEAR_SPHERE = 0.25   # relative gap below which rays inside a sphere get graded angles


def _critical_angles(x, spheres, planes=()):
    """Ray directions (2-D angles) where hit distances lose smoothness for point x."""
    out = []
    for v, _ in planes:
        base = math.atan2(v[1], v[0])
        out += [base - 0.5 * math.pi, base + 0.5 * math.pi]
    for c, r in spheres:
        v = c - x
        D = float(np.hypot(v[0], v[1]))
        if D > r:
            base, half = math.atan2(v[1], v[0]), math.asin(r / D)
            out += [base - half, base + half]
        elif D > 0 and r - D < NEAR_SPHERE * r:
            base = math.atan2(-v[1], -v[0])
            out += [base - 0.5 * math.pi, base + 0.5 * math.pi]
    # corners where two circles cross: the nearest boundary switches there
    for i, (c1, r1) in enumerate(spheres):
        for c2, r2 in spheres[i + 1:]:
            d = np.asarray(c2, dtype=float)[:2] - np.asarray(c1, dtype=float)[:2]
            D = float(np.hypot(d[0], d[1]))
            if D == 0.0 or D >= r1 + r2 or D <= abs(r1 - r2):
                continue
            a = (D * D + r1 * r1 - r2 * r2) / (2 * D)
            h = math.sqrt(max(r1 * r1 - a * a, 0.0))
            e = d / D
            for sgn in (1.0, -1.0):
                w = np.asarray(c1, dtype=float)[:2] + a * e + sgn * h * np.array([-e[1], e[0]]) - x[:2]
                if np.hypot(w[0], w[1]) > 0:
                    out.append(math.atan2(w[1], w[0]))
    return np.unique(np.round(np.mod(out, 2 * math.pi), 14))


def _ray_rules(X, spheres, level, planes=()):
    """Per-point ray directions: (index array, dirs (M, N, n), weights (M, N)) groups."""
    n = X.shape[-1]
    dirs, wd = sphere_rule(n, level)
    if n != 2 or not (spheres or planes):
        return [(np.arange(len(X)), np.broadcast_to(dirs, (len(X),) + dirs.shape),
                 np.broadcast_to(wd, (len(X), len(wd))))]
    groups = {}
    for i, x in enumerate(X):
        crit = _critical_angles(x, spheres, planes)
        groups.setdefault(len(crit), []).append((i, crit))
    out = []
    la, ma = 5 + 2 * level, 6 + 2 * level
    t, _, w = graded(la, ma, "both")
    for k, members in groups.items():
        idx = np.array([i for i, _ in members])
        if k == 0:
            out.append((idx, np.broadcast_to(dirs, (len(idx),) + dirs.shape),
                        np.broadcast_to(wd, (len(idx), len(wd)))))
            continue
        crit = np.stack([c for _, c in members])                   # (M, k)
        ends = np.concatenate([crit, crit[:, :1] + 2 * math.pi], axis=1)
        width = np.diff(ends, axis=1)                               # (M, k)
        ang = (ends[:, :-1, None] + width[..., None] * t).reshape(len(idx), -1)
        ww = (width[..., None] * w).reshape(len(idx), -1)
        d = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        out.append((idx, d, ww))
    return out


def _pv_level(p, u: ScalarField, X, level, q, tail_mode, spheres):
    n, s = p.n, p.s
    rdirs, rw = sphere_rule(n, level)
    layers, m = level_shape(level)
    tau, _, wt = graded(layers, m, "both")
    tl, _, wtl = graded(layers, m, "left")
    T = max(q.tail_split_radius, 2.0 * _support_radius(u, X))
    planes = u.plane_list(n)
    K = 2 * len(spheres) + len(planes)
    out = np.empty(len(X))
    for idx, dirs_all, wd_all in _ray_rules(X, spheres, level, planes):
        per = dirs_all.shape[1] * ((K + 1) * len(tau) + len(tl) + 1)
        for sl in _chunks(len(idx), per):
            x = X[idx[sl]]
            dirs, wd = dirs_all[sl], wd_all[sl]
            ux = np.asarray(u(x), dtype=float).reshape(-1)
            # ring: antipodally symmetric rule so first-order terms cancel
            delta = _ring_radius(x, spheres, q.taylor_ring_radius, planes)
            ring_pts = x[:, None, :] + delta[:, None, None] * rdirs[None, :, :]
            Md = (ux[:, None] - u(ring_pts)) @ rw
            total = Md * delta ** (-2 * s) / (2 - 2 * s)
            hits = ray_sphere_hits(x, dirs, spheres) if spheres else np.empty(dirs.shape[:2] + (0,))
            if planes:
                hits = np.concatenate([hits, ray_plane_hits(x, dirs, planes)], axis=-1)
            far = np.where(hits >= T, hits, np.inf)
            hits = np.where((hits > delta[:, None, None]) & (hits < T), hits, T)
            bp = np.sort(np.concatenate([np.broadcast_to(delta[:, None, None], hits.shape[:-1] + (1,)), hits,
                                         np.full(hits.shape[:-1] + (1,), T)], axis=-1), axis=-1)
            a, L = bp[..., :-1], np.diff(bp, axis=-1)
            r = a[..., None] + L[..., None] * tau
            y = x[:, None, None, None, :] + r[..., None] * dirs[:, :, None, None, :]
            vals = (ux[:, None, None, None] - u(y)) * r ** (-1 - 2 * s)
            radial = np.einsum("mdkq,q,mdk->md", vals, wt, L)
            if tail_mode == "compact":
                tail = np.broadcast_to(ux[:, None] * T ** (-2 * s) / (2 * s), radial.shape)
            else:
                # r = T t^(-1/(2s)) maps [T, inf) to t in (0, 1]; split at far crossings
                tb = np.sort(np.concatenate([np.zeros(far.shape[:-1] + (1,)), (far / T) ** (-2 * s),
                                             np.ones(far.shape[:-1] + (1,))], axis=-1), axis=-1)
                ta, tL = tb[..., :-1], np.diff(tb, axis=-1)
                tt = ta[..., None] + tL[..., None] * tau
                with np.errstate(divide="ignore"):
                    rt = T * tt ** (-1.0 / (2 * s))
                rt = np.where(tL[..., None] > 0, rt, T)
                yt = x[:, None, None, None, :] + rt[..., None] * dirs[:, :, None, None, :]
                tv = ux[:, None, None, None] - u(yt)
                tail = np.einsum("mdkq,q,mdk->md", tv, wt, tL) * T ** (-2 * s) / (2 * s)
            total = total + np.einsum("md,md->m", radial + tail, wd)
            out[idx[sl]] = p.C_ns * total
    return out


def frac_laplacian_pv(p, u: ScalarField, x, q: QuadConfig = DEFAULT):
    """C_{n,s} PV int (u(x) - u(y)) |x - y|^(-n-2s) dy at one point or a batch (..., n)."""
    X, shape = _as_points(x, p.n)
    if u.is_zero:
        return _shaped(np.zeros(len(X)), shape)
    tail_mode = _tail_ok(p, u, q)
    spheres = u.spheres()
    vals = _adaptive(lambda lvl: _pv_level(p, u, X, lvl, q, tail_mode, spheres), q, p.n,
                     "frac_laplacian_pv")
    return _shaped(vals, shape)


# -- Green convolution --------------------------------------------------------------

def _unit_points(ball: Ball, x, n):
    X, shape = _as_points(x, n)
    xl = (X - ball.c) / ball.radius
    if np.any(np.sum(xl * xl, axis=-1) >= 1.0):
        raise DomainError("convolution point must lie inside the open ball")
    return X, xl, shape


def _green_level(p, ball, f, xl, level):
    n, s = p.n, p.s
    layers, m = level_shape(level)
    tau, ctau, wt = graded(layers, m, "both")
    inner = []
    for c, r in f.spheres():
        cl, rl = (c - ball.c) / ball.radius, r / ball.radius
        if not (np.linalg.norm(cl) < 1e-12 and abs(rl - 1.0) < 1e-12):
            inner.append((cl, rl))
    out = np.empty(len(xl))
    for idx, dirs_all, wd_all in _ray_rules(xl, [(np.zeros(n), 1.0)] + inner, level):
        per = dirs_all.shape[1] * (2 * len(inner) + 1) * len(tau)
        for sl in _chunks(len(idx), per):
            x = xl[idx[sl]]
            dirs, wd = dirs_all[sl], wd_all[sl]
            bq = np.einsum("mn,mdn->md", x, dirs)
            c0 = 1.0 - np.sum(x * x, axis=-1)                    # 1 - |x|^2
            disc = np.sqrt(bq * bq + c0[:, None])
            rb = c0[:, None] / (bq + disc)                       # positive root, stable form
            rm = -bq - disc                                      # negative root
            # segments [0, rb] split where the ray crosses spheres of f
            hits = ray_sphere_hits(x, dirs, inner) if inner else np.empty(rb.shape + (0,))
            hits = np.where((hits > 0) & (hits < rb[..., None]), hits, rb[..., None])
            bp = np.sort(np.concatenate([np.zeros(rb.shape + (1,)), hits, rb[..., None]], axis=-1), axis=-1)
            a, L = bp[..., :-1], np.diff(bp, axis=-1)
            r = a[..., None] + L[..., None] * tau
            to_rb = (rb[..., None] - bp[..., 1:])[..., None] + L[..., None] * ctau
            # 1 - |x + r theta|^2 = (rb - r)(r - rm)
            one_y = to_rb * (r - rm[..., None, None])
            numer = c0[:, None, None, None] * one_y
            tot = numer + r * r
            with np.errstate(invalid="ignore", divide="ignore"):
                B = special.betainc_lower(s, p.beta_b, numer / tot, (r * r) / tot)
            y = x[:, None, None, None, :] + r[..., None] * dirs[:, :, None, None, :]
            fy = f(ball.c + ball.radius * y)
            vals = np.where(L[..., None] > 0, r ** (2 * s - 1) * B * fy, 0.0)
            out[idx[sl]] = np.einsum("mdkq,q,mdk,md->m", vals, wt, L, wd)
    return p.kappa_ns * ball.radius ** (2 * s) * out


def convolve_green(p, ball: Ball, f: ScalarField, x, q: QuadConfig = DEFAULT):
    """int_ball G_ball(x, y) f(y) dy at one point or a batch of points."""
    X, xl, shape = _unit_points(ball, x, p.n)
    if f.is_zero:
        return _shaped(np.zeros(len(X)), shape)
    vals = _adaptive(lambda lvl: _green_level(p, ball, f, xl, lvl), q, p.n, "convolve_green")
    return _shaped(vals, shape)


# -- Poisson convolution ------------------------------------------------------------

def _frame(x):
    """Unit vector along x (e1 when x = 0) and an orthonormal complement."""
    n = x.shape[-1]
    nx = np.linalg.norm(x, axis=-1)
    e = np.zeros_like(x)
    e[:, 0] = 1.0
    u = np.where(nx[:, None] > 0, x / np.where(nx > 0, nx, 1.0)[:, None], e)
    if n == 2:
        return u, np.stack([-u[:, 1], u[:, 0]], axis=-1)[:, None, :]
    if n == 3:
        a = np.where(np.abs(u[:, :1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
        v = a - np.sum(a * u, axis=-1, keepdims=True) * u
        v /= np.linalg.norm(v, axis=-1, keepdims=True)
        w = np.cross(u, v)
        return u, np.stack([v, w], axis=1)
    return u, np.zeros((len(x), 0, n))


def _angular_nodes(n, level, a):
    """Directions graded geometrically toward the point x/|x|.

    The Poisson kernel in angle peaks with width ~ 1 - a (a = |x|/R); graded
    panels resolve the peak and the variation of g away from it alike.
    Local coordinates are (cos t, sin t * e) with t the angle from x/|x|.
    Returns cos (..., P), sin-vectors (..., P, n-1) and weights (..., P).
    """
    la, ma = 5 + 2 * level, 6 + 2 * level
    t, _, w = graded(la, ma, "left", outer=2 ** level)
    if n == 1:
        cos_t, sin_v, wt = np.array([1.0, -1.0]), np.zeros((2, 0)), np.ones(2)
    elif n == 2:
        ang = math.pi * t
        cos_t = np.concatenate([np.cos(ang), np.cos(ang)])
        sin_v = np.concatenate([np.sin(ang), -np.sin(ang)])[:, None]
        wt = np.concatenate([math.pi * w, math.pi * w])
    elif n == 3:
        ang = math.pi * t
        na = 8 * 2 ** level
        al = 2 * math.pi * (np.arange(na) + 0.5) / na
        cos_t = np.repeat(np.cos(ang), na)
        st = np.repeat(np.sin(ang), na)
        sin_v = np.stack([st * np.tile(np.cos(al), len(t)), st * np.tile(np.sin(al), len(t))], axis=-1)
        wt = np.repeat(math.pi * w * np.sin(ang), na) * (2 * math.pi / na)
    else:
        raise NotImplementedError("field quadrature supports n <= 3")
    shape = np.shape(a)
    return (np.broadcast_to(cos_t, shape + cos_t.shape), np.broadcast_to(sin_v, shape + sin_v.shape),
            np.broadcast_to(wt, shape + wt.shape))


def _angular_nodes_planes(level, ex, R, planes):
    """2-D angular panels with breakpoints at the peak direction and at plane crossings.

    ``ex`` (M, 2) is the peak direction per point, ``R`` (NR,) the radii in
    unit-ball coordinates and ``planes`` [(normal, offset)] in the same
    coordinates.  Returns cos (M, NR, P), sin-vectors (M, NR, P, 1), weights.
    """
    la, ma = 5 + 2 * level, 6 + 2 * level
    t, _, w = graded(la, ma, "both")
    phx = np.arctan2(ex[:, 1], ex[:, 0])[:, None]                 # (M, 1)
    brk = [np.zeros((len(ex), len(R))), np.full((len(ex), len(R)), math.pi)]
    for v, off in planes:
        phv = math.atan2(v[1], v[0])
        ratio = off / R
        half = np.where(np.abs(ratio) < 1.0, np.arccos(np.clip(ratio, -1.0, 1.0)), 0.5 * math.pi)
        for sign in (1.0, -1.0):
            brk.append(np.mod(phv + sign * half[None, :] - phx + math.pi, 2 * math.pi) - math.pi)
    b = np.sort(np.mod(np.stack(brk, axis=-1), 2 * math.pi), axis=-1)  # in [0, 2 pi)
    ends = np.concatenate([b, b[..., :1] + 2 * math.pi], axis=-1)
    width = np.diff(ends, axis=-1)
    ang = (ends[..., :-1, None] + width[..., None] * t).reshape(b.shape[:-1] + (-1,))
    ww = (width[..., None] * w).reshape(b.shape[:-1] + (-1,))
    return np.cos(ang), np.sin(ang)[..., None], ww


def _radial_breaks(g: ScalarField, ball: Ball, T):
    pts = {1.0, 2.0, T}
    for c, r in g.spheres():
        if np.linalg.norm(c - ball.c) < 1e-12 and 1.0 < r / ball.radius < T:
            pts.add(r / ball.radius)
    return sorted(pts)


def _poisson_level(p, ball, g, xl, level, q):
    n, s = p.n, p.s
    layers, m = level_shape(level)
    tau, ctau, wt = graded(layers, m, "both")
    tl, _, wtl = graded(layers, m, "left")
    T = max(q.tail_split_radius, 2.0 * _support_radius(g, ball.c[None, :]) / ball.radius)
    breaks = _radial_breaks(g, ball, T)
    # radial nodes R and weights (including the R^(n-1) (R^2-1)^(-s) factor)
    Rs, Ws, Ms = [], [], []
    for a0, b0 in zip(breaks[:-1], breaks[1:]):
        if a0 == 1.0:
            # R - 1 = w^(1/(1-s)) absorbs the (R-1)^(-s) singularity of the shell
            top = (b0 - 1.0) ** (1.0 - s)
            Rm1 = (top * tau) ** (1.0 / (1.0 - s))
            R = 1.0 + Rm1
            Rs.append(R)
            Ms.append(Rm1)
            Ws.append(top * wt / (1.0 - s) * R ** (n - 1) * (R + 1.0) ** (-s))
            continue
        R = a0 + (b0 - a0) * tau
        Rm1 = (a0 - 1.0) + (b0 - a0) * tau
        Rs.append(R)
        Ms.append(Rm1)
        Ws.append((b0 - a0) * wt * R ** (n - 1) * (Rm1 * (R + 1.0)) ** (-s))
    Rt = T * tl ** (-1.0 / (2 * s))
    Rs.append(Rt)
    Ms.append(Rt - 1.0)
    Ws.append(T / (2 * s) * tl ** (-1.0 / (2 * s) - 1.0) * wtl * Rt ** (n - 1) * (Rt * Rt - 1.0) ** (-s))
    R = np.concatenate(Rs)
    RM1 = np.concatenate(Ms)
    WR = np.concatenate(Ws)
    ex, perp = _frame(xl)
    nx = np.linalg.norm(xl, axis=-1)
    c0 = 1.0 - nx * nx
    out = np.empty(len(xl))
    nang = _angular_nodes(n, level, np.zeros(()))[2].shape[-1]
    planes = [(v, (off - float(ball.c @ v)) / ball.radius) for v, off in g.plane_list(n)]
    if planes and n == 2:
        nang = (2 + 2 * len(planes)) * len(graded(5 + 2 * level, 6 + 2 * level, "both")[0])
    for sl in _chunks(len(xl), len(R) * nang):
        a = nx[sl, None] / R[None, :]                       # (M, NR)
        if planes and n == 2:
            cos_t, sin_v, wa = _angular_nodes_planes(level, ex[sl], R, planes)
        else:
            cos_t, sin_v, wa = _angular_nodes(n, level, a)   # (M, NR, P), (M, NR, P, n-1)
        theta = cos_t[..., None] * ex[sl, None, None, :]
        if n > 1:
            theta = theta + np.einsum("mrpk,mkn->mrpn", sin_v, perp[sl])
        y = R[None, :, None, None] * theta
        # |x - R theta|^2 = (R - |x|)^2 + 2 R |x| (1 - cos t), free of cancellation
        sin2 = np.sum(sin_v * sin_v, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            omc = np.where(cos_t > 0, sin2 / (1.0 + cos_t), 1.0 - cos_t)
        gap = RM1[None, :] + (c0[sl] / (1.0 + nx[sl]))[:, None]          # R - |x|
        d2 = gap[..., None] ** 2 + 2 * R[None, :, None] * nx[sl, None, None] * omc
        gy = g(ball.c + ball.radius * y)
        # subtract g at the kernel peak and add back the closed-form angular mass
        g0 = g(ball.c + ball.radius * R[None, :, None] * ex[sl, None, :])
        vals = np.einsum("mrp,mrp->mr", d2 ** (-n / 2), (gy - g0[..., None]) * wa)
        vals = vals + g0 * _angular_mass(n, R[None, :], nx[sl, None], gap)
        out[sl] = vals @ WR
    return p.c_ns * c0 ** s * out


def _angular_mass(n, R, rho, gap):
    """int over the unit sphere of |x - R theta|^(-n) for |x| = rho < R."""
    diff = gap * (R + rho)                                              # R^2 - rho^2
    if n == 1:
        return 2 * R / diff
    if n == 2:
        return 2 * math.pi / diff
    if n == 3:
        return 4 * math.pi / (R * diff)
    raise NotImplementedError("field quadrature supports n <= 3")


def convolve_poisson(p, ball: Ball, g: ScalarField, x, q: QuadConfig = DEFAULT):
    """int_{R^n minus ball} P_ball(x, y) g(y) dy at one point or a batch."""
    X, xl, shape = _unit_points(ball, x, p.n)
    if g.is_zero:
        return _shaped(np.zeros(len(X)), shape)
    if not (g.bounded_support or g.decay is not None):
        _tail_ok(p, g, q)
    elif g.decay is not None and g.decay >= 2 * p.s:
        raise IntegrabilityError(f"decay exponent {g.decay} is not below 2s")
    vals = _adaptive(lambda lvl: _poisson_level(p, ball, g, xl, lvl, q), q, p.n, "convolve_poisson")
    return _shaped(vals, shape)


# -- ball fields represented by interpolation ---------------------------------------

def _cheb_nodes(k):
    return np.cos(math.pi * (np.arange(k) + 0.5) / k)


def _bary_weights(k):
    j = np.arange(k)
    return (-1.0) ** j * np.sin(math.pi * (j + 0.5) / k)


def _bary_eval(nodes, bw, vals, t):
    """Barycentric interpolation; vals (..., k), t (...)."""
    diff = t[..., None] - nodes
    exact = diff == 0.0
    diff = np.where(exact, 1.0, diff)
    c = bw / diff
    out = np.sum(c * vals, axis=-1) / np.sum(c, axis=-1)
    hit = exact.any(axis=-1)
    if np.any(hit):
        idx = np.argmax(exact, axis=-1)
        out = np.where(hit, np.take_along_axis(vals, idx[..., None], axis=-1)[..., 0], out)
    return out


def ball_interpolant(p, ball: Ball, values: Callable, weight_power: float, nr: int = 32,
                     ntheta: int = 64, name="interpolant") -> ScalarField:
    """Spectral surrogate of a field on a disk: u = (1-|x|^2)^power * v, v smooth.

    ``values`` is sampled once on a polar grid with r at Chebyshev points of
    [-1, 1] and theta equispaced on [0, 2 pi); (-r, theta) and (r, theta+pi)
    coincide, so only the r > 0 half is evaluated.  ``v`` is interpolated by
    barycentric Chebyshev in r and trigonometric interpolation in theta.  The
    field is zero outside the ball.
    """
    if p.n != 2:
        raise NotImplementedError("ball_interpolant is implemented for n = 2")
    if nr % 2 or ntheta % 2:
        raise ValueError("nr and ntheta must be even")
    rn = _cheb_nodes(nr)                       # descending, symmetric
    th = 2 * math.pi * np.arange(ntheta) / ntheta
    pos = rn[: nr // 2]
    R, TH = np.meshgrid(pos, th, indexing="ij")
    pts = np.stack([R * np.cos(TH), R * np.sin(TH)], axis=-1)
    half = np.asarray(values(ball.c + ball.radius * pts.reshape(-1, 2)), dtype=float)
    half = half.reshape(nr // 2, ntheta) / (1.0 - R * R) ** weight_power
    # row for -r at theta equals row for r at theta + pi
    neg = np.roll(half, -ntheta // 2, axis=1)[::-1]
    v = np.concatenate([half, neg], axis=0)
    coef = np.fft.rfft(v, axis=1) / ntheta
    k = np.arange(coef.shape[1])
    fac = np.where((k == 0) | (k == ntheta // 2), 1.0, 2.0)
    bw = _bary_weights(nr)

    def ev(x):
        xl = (np.asarray(x, dtype=float) - ball.c) / ball.radius
        flat = xl.reshape(-1, 2)
        rr = np.linalg.norm(flat, axis=-1)
        out = np.zeros(len(flat))
        where = np.flatnonzero(rr < 1.0)
        step = max(1, 200_000 // (nr * len(k)))
        for i in range(0, len(where), step):
            w = where[i:i + step]
            ri = rr[w]
            ang = np.arctan2(flat[w, 1], flat[w, 0])
            ck = _bary_eval(rn, bw, coef.T[:, None, :], ri[None, :])      # (modes, M)
            ph = np.exp(1j * k[:, None] * ang[None, :])
            vv = np.real(np.sum(fac[:, None] * ck * ph, axis=0))
            out[w] = vv * (1.0 - ri * ri) ** weight_power
        return out.reshape(xl.shape[:-1])

    return ScalarField(ev, support=Domain([ball]), smoothness="C0", decay=-math.inf, name=name)


SURROGATE_Q = QuadConfig(rel_tol=1e-6, abs_tol=1e-7, max_subdivisions=20_000)


def green_field(p, ball: Ball, f: ScalarField, q: QuadConfig = SURROGATE_Q, nr: int = 24,
                ntheta: int = 32) -> ScalarField:
    """The field x -> G*f(x) (zero outside the ball) as a spectral surrogate.

    Uses G*f = (1-|x|^2)^s * smooth for smooth f; for n != 2 it falls back
    to pointwise convolution.
    """
    if p.n != 2:
        return ScalarField(lambda y: _inside_or_zero(ball, y, lambda z: convolve_green(p, ball, f, z, q)),
                           support=Domain([ball]), smoothness="C0", decay=-math.inf, name="G*f")
    return ball_interpolant(p, ball, lambda y: convolve_green(p, ball, f, y, q), p.s, nr, ntheta, "G*f")


def poisson_field(p, ball: Ball, g: ScalarField, q: QuadConfig = SURROGATE_Q, nr: int = 24,
                  ntheta: int = 32) -> ScalarField:
    """The field equal to P*g in the ball and g outside.

    For g smooth across the sphere, P*g - g = (1-|x|^2)^s * smooth, which is
    what the surrogate interpolates.
    """
    if p.n != 2:
        def ev(y):
            y = np.asarray(y, dtype=float)
            return np.where(np.linalg.norm(y - ball.c, axis=-1) < ball.radius,
                            _inside_or_zero(ball, y, lambda z: convolve_poisson(p, ball, g, z, q)), g(y))
        return ScalarField(ev, smoothness="C0", decay=g.decay, singular_spheres=((ball.c, ball.radius),),
                           name="P*g")
    rem = ball_interpolant(p, ball, lambda y: convolve_poisson(p, ball, g, y, q) - g(y), p.s, nr, ntheta)
    return ScalarField(lambda y: g(y) + rem(y), smoothness="C0", decay=g.decay,
                       singular_spheres=((ball.c, ball.radius),) + tuple(g.singular_spheres),
                       name="P*g", support=g.support)


def _inside_or_zero(ball, y, fn):
    y = np.asarray(y, dtype=float)
    flat = y.reshape(-1, y.shape[-1])
    out = np.zeros(len(flat))
    inside = np.linalg.norm(flat - ball.c, axis=-1) < ball.radius
    if np.any(inside):
        out[inside] = fn(flat[inside])
    return out.reshape(y.shape[:-1])


# -- mollification ------------------------------------------------------------------

def _bump(t):
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(t < 1.0, np.exp(-1.0 / np.where(t < 1.0, 1.0 - t * t, 1.0)), 0.0)


def mollify(u: ScalarField, eps: float, m: int = 24, level: int = 2) -> ScalarField:
    """J_eps[u] = j_eps * u with the standard radial bump; discrete mass is exactly 1."""
    if not eps > 0:
        raise DomainError("eps must be positive")

    def ev(x):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        dirs, wd = sphere_rule(n, level)
        tau, wt = gauss01(m)
        w = (wt * _bump(tau) * tau ** (n - 1))[:, None] * wd[None, :]
        w = w / w.sum()
        offs = eps * tau[:, None, None] * dirs[None, :, :]
        vals = u(x[..., None, None, :] - offs)
        return np.einsum("...rd,rd->...", vals, w)

    supp = DilatedDomain(u.support, eps) if u.support is not None else None
    return ScalarField(ev, support=supp, smoothness="C2", decay=u.decay, is_zero=u.is_zero,
                       name=f"J_{eps}[{u.name}]")


# -- L_2s membership ----------------------------------------------------------------

class L2sResult(NamedTuple):
    value: float
    divergent: bool
    annuli: int

    def __float__(self):
        return math.inf if self.divergent else self.value


def _l2s_pass(p, u, level, T, max_annuli, q):
    n, s = p.n, p.s
    dirs, wd = sphere_rule(n, level)
    layers, m = level_shape(level)
    tau, _, wt = graded(layers, m, "both")
    origin = np.zeros((1, n))
    hits = ray_sphere_hits(origin, dirs, u.spheres())[0] if u.spheres() else np.empty((len(wd), 0))
    hits = np.where(hits < T, hits, T)
    dyadic = 2.0 ** np.arange(0, math.ceil(math.log2(T)))
    bp = np.sort(np.concatenate([np.zeros((len(wd), 1)), hits, np.broadcast_to(dyadic, (len(wd), len(dyadic))),
                                 np.full((len(wd), 1), T)], axis=1), axis=1)
    a, L = bp[:, :-1], np.diff(bp, axis=1)
    r = a[..., None] + L[..., None] * tau
    y = r[..., None] * dirs[:, None, None, :]
    f = np.abs(u(y)) * r ** (n - 1) / (1 + r ** (n + 2 * s))
    core = float(np.einsum("dkq,q,dk,d->", f, wt, L, wd))
    g, gw = gauss01(m)
    total, prev_I, prev_est, pieces, streak = core, None, None, [], 0
    for k in range(max_annuli):
        lo, hi = T * 2.0 ** k, T * 2.0 ** (k + 1)
        r = lo + (hi - lo) * g
        y = r[None, :, None] * dirs[:, None, :]
        I = float(np.einsum("dq,q,d->", np.abs(u(y)) * r ** (n - 1) / (1 + r ** (n + 2 * s)),
                            gw * (hi - lo), wd))
        total += I
        pieces.append(I)
        if I == 0.0 and k >= 2:
            return total, False, k + 1
        if prev_I:
            ratio = I / prev_I
            if k >= 6 and all(pieces[j] / pieces[j - 1] > 0.97 for j in range(k - 2, k + 1)):
                return total, True, k + 1
            if ratio < 1.0:
                est = total + I * ratio / (1.0 - ratio)
                close = prev_est is not None and abs(est - prev_est) <= max(q.abs_tol, 0.1 * q.rel_tol * abs(est))
                streak = streak + 1 if close else 0
                if streak >= 2 and k >= 4:
                    return est, False, k + 1
                prev_est = est
        prev_I = I
    raise IntegrabilityError("L_2s tail neither converged nor diverged within the annulus budget")


def l2s_membership(p, u: ScalarField, q: QuadConfig = DEFAULT) -> L2sResult:
    """int |u(y)| / (1 + |y|^(n+2s)) dy, with divergence detection over doubling annuli."""
    if u.is_zero:
        return L2sResult(0.0, False, 0)
    T = max(q.tail_split_radius, 2.0 * _support_radius(u, np.zeros((1, p.n))))
    lv = max(1, min(q.min_level, 2))
    v1, d1, k1 = _l2s_pass(p, u, lv, T, 200, q)
    if d1:
        return L2sResult(v1, True, k1)
    v2, d2, k2 = _l2s_pass(p, u, lv + 1, T, 200, q)
    if d2:
        return L2sResult(v2, True, k2)
    if abs(v2 - v1) > max(1e3 * q.abs_tol, 1e3 * q.rel_tol * abs(v2)):
        raise ToleranceNotMet(f"l2s_membership: levels disagree ({v1} vs {v2})")
    return L2sResult(v2, False, k2)


# -- integration over regions -------------------------------------------------------

def deep_point(dom: Domain):
    """A point of maximal (or near maximal) boundary distance."""
    if dom.is_ball:
        return dom.as_ball.c
    if len(dom.balls) == 1 and len(dom.carves) == 1:
        b, k = dom.balls[0], dom.carves[0]
        v = b.c - k.c
        nv = np.linalg.norm(v)
        e = v / nv if nv > 0 else np.eye(dom.dim)[0]
        t = 0.5 * (b.radius + nv - k.radius)       # distance from carve surface
        if t >= b.radius:
            return b.c
        return k.c + e * (k.radius + t)
    from scipy.optimize import minimize

    bb = dom.bounding_ball
    rng = np.random.default_rng(7)
    pts = dom.sample_uniform(rng, 2000)
    start = pts[np.argmax(dom.dist(pts))]
    res = minimize(lambda z: -float(dom.dist(z)), start, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-12})
    return res.x if dom.contains(res.x) else start


def integrate_region(dom: Domain, func: Callable, level: int, extra_spheres=(), region=None,
                     origin=None, reduce="sum"):
    """Integrate func over {region} (default: dom) along rays from an interior origin.

    Segments between consecutive sphere crossings are kept when their
    midpoint lies in the region.  ``reduce="max"`` returns the max of |func|
    over the nodes instead.
    """
    n = dom.dim
    o = deep_point(dom) if origin is None else np.asarray(origin, dtype=float)
    region = region or dom.contains
    spheres = list(dom.spheres()) + list(extra_spheres)
    _, dirs, wd = _ray_rules(o[None, :], spheres, level)[0]
    dirs, wd = dirs[0], wd[0]
    layers, m = level_shape(level)
    tau, _, wt = graded(layers, m, "both")
    bb = dom.bounding_ball
    Rmax = float(np.linalg.norm(o - bb.c)) + bb.radius
    hits = ray_sphere_hits(o[None, :], dirs, spheres)[0]
    hits = np.where(hits < Rmax, hits, Rmax)
    bp = np.sort(np.concatenate([np.zeros((len(wd), 1)), hits, np.full((len(wd), 1), Rmax)], axis=1), axis=1)
    a, L = bp[:, :-1], np.diff(bp, axis=1)
    mid = o + (a + 0.5 * L)[..., None] * dirs[:, None, :]
    keep = region(mid) & (L > 0)
    r = a[..., None] + L[..., None] * tau
    y = o + r[..., None] * dirs[:, None, None, :]
    vals = np.where(keep[..., None], func(y), 0.0)
    if reduce == "max":
        return float(np.max(np.abs(vals)))
    return float(np.einsum("dkq,q,dk,d,dkq->", vals, wt, L, wd, r ** (n - 1)))


def integrate_adaptive(dom: Domain, func: Callable, q: QuadConfig = DEFAULT, what="integral", **kw):
    return float(_adaptive(lambda lvl: integrate_region(dom, func, lvl, **kw), q, dom.dim, what))


@dataclass(frozen=True)
class WeightedNorm:
    p: float
    sigma: float
    value: float

    def to_json(self):
        return {"p": self.p, "sigma": self.sigma, "value": self.value}


def weighted_norm(params, dom: Domain, f: ScalarField, p: float, sigma: float,
                  q: QuadConfig = DEFAULT) -> WeightedNorm:
    """|| dist(., boundary)^sigma f ||_{L^p(dom)} with the exact distance oracle."""
    if abs(sigma) > params.s + 1e-15:
        raise DomainError(f"|sigma| = {abs(sigma)} exceeds s = {params.s}")
    if not (p >= 1):
        raise DomainError("p must lie in [1, inf]")
    if f.is_zero:
        return WeightedNorm(p, sigma, 0.0)

    def weighted(y):
        d = np.maximum(dom.dist(y), 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(d > 0, d ** sigma * np.abs(f(y)), 0.0)

    if math.isinf(p):
        vals = [integrate_region(dom, weighted, lvl, reduce="max") for lvl in (q.min_level, q.min_level + 1)]
        return WeightedNorm(p, sigma, max(vals))
    val = integrate_adaptive(dom, lambda y: weighted(y) ** p, q, "weighted_norm")
    if not math.isfinite(val):
        raise IntegrabilityError("weighted norm is not finite")
    return WeightedNorm(p, sigma, val ** (1.0 / p))
