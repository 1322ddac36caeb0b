"""Executable checks of the kernel inequalities and identities, with measured constants."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from . import fields as F
from . import kernels as K
from . import quadrature as Q
from . import solver as S
from .domain import Ball, Domain
from .errors import FracLapError
from .rules import graded

log = logging.getLogger(__name__)

STABILITY_FACTOR = 2.0
WORST_KEEP = 5


@dataclass
class DiagnosticReport:
    check: str
    anchor: str
    samples: int
    constant: Optional[float]
    passed: bool
    tolerance: float
    worst: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        c = self.constant
        return {"check": self.check, "anchor": self.anchor, "pass": bool(self.passed),
                "constant": None if c is None or not math.isfinite(c) else float(c),
                "samples": int(self.samples), "tolerance": float(self.tolerance),
                "worst": [_jsonable(w) for w in self.worst], "details": _jsonable(self.details)}


REPORT_SCHEMA = {
    "type": "object",
    "required": ["check", "anchor", "pass", "constant", "samples", "worst"],
    "properties": {
        "check": {"type": "string"}, "anchor": {"type": "string"}, "pass": {"type": "boolean"},
        "constant": {"type": ["number", "null"]}, "samples": {"type": "integer"},
        "tolerance": {"type": "number"}, "worst": {"type": "array"}, "details": {"type": "object"},
    },
}


def validate_report(d: dict) -> None:
    """Minimal structural validation against REPORT_SCHEMA."""
    kinds = {"string": str, "boolean": bool, "integer": int, "number": (int, float),
             "array": list, "object": dict, "null": type(None)}
    for key in REPORT_SCHEMA["required"]:
        if key not in d:
            raise ValueError(f"report lacks {key!r}")
    for key, spec in REPORT_SCHEMA["properties"].items():
        if key not in d:
            continue
        types = spec["type"] if isinstance(spec["type"], list) else [spec["type"]]
        ok = any(isinstance(d[key], kinds[t]) and not (t in ("integer", "number") and isinstance(d[key], bool))
                 for t in types)
        if not ok:
            raise ValueError(f"report field {key!r} has type {type(d[key]).__name__}")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _worst(ratio, *cols, k=WORST_KEEP):
    order = np.argsort(-np.nan_to_num(ratio, nan=np.inf))[:k]
    return [{"ratio": float(ratio[i]), **{f"p{j}": np.asarray(c[i]).tolist() for j, c in enumerate(cols)}}
            for i in order]


def _uniform_ball(rng, m, n, radius=1.0, center=None):
    g = rng.standard_normal((m, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.uniform(size=m) ** (1.0 / n)
    out = g * r[:, None]
    return out if center is None else out + center


def _sphere(rng, m, n):
    g = rng.standard_normal((m, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _stable_sup(fn: Callable[[np.random.Generator, int], tuple], seed, samples):
    """sup of a ratio over N samples and over 2N samples (a superset)."""
    r1, cols1 = fn(np.random.default_rng([seed, 1]), samples)
    r2, cols2 = fn(np.random.default_rng([seed, 2]), samples)
    s1 = float(np.max(r1))
    s2 = max(s1, float(np.max(r2)))
    ratio = np.concatenate([r1, r2])
    cols = [np.concatenate([a, b]) for a, b in zip(cols1, cols2)]
    stable = math.isfinite(s2) and s1 > 0 and s2 < STABILITY_FACTOR * s1
    return s1, s2, stable, ratio, cols


# -- Green function ---------------------------------------------------------------------
def check_green_symmetry(p, ball: Ball, samples: int = 1000, seed: int = 0, exterior: bool = False,
                         pairs=None) -> DiagnosticReport:
    """|G(x,y) - G(y,x)| / G(x,y) < 1e-12 on sampled pairs; diagonal pairs are skipped."""
    n = p.n
    rng = np.random.default_rng(seed)
    if pairs is None:
        if exterior:
            def draw(m):
                d = _sphere(rng, m, n)
                return ball.c + ball.radius * (1.0 + rng.exponential(1.0, m))[:, None] * d
        else:
            def draw(m):
                return _uniform_ball(rng, m, n, 0.999 * ball.radius, ball.c)
        X, Y = draw(samples), draw(samples)
    else:
        X, Y = (np.asarray(a, dtype=float) for a in pairs)
    diag = np.all(X == Y, axis=1)
    Xk, Yk = X[~diag], Y[~diag]
    kern = K.green_exterior_ball if exterior else K.green_ball
    a = np.asarray(kern(p, ball, Xk, Yk), dtype=float).reshape(-1)
    b = np.asarray(kern(p, ball, Yk, Xk), dtype=float).reshape(-1)
    rel = np.abs(a - b) / np.maximum(np.abs(a), 1e-300)
    tol = 1e-12
    worst = float(np.max(rel)) if rel.size else 0.0
    return DiagnosticReport("green_symmetry" + ("_exterior" if exterior else ""),
                            "G(x,y) = G(y,x)", len(Xk), worst, bool(worst < tol and len(Xk) >= 100), tol,
                            _worst(rel, Xk, Yk),
                            {"skipped_diagonal": X[diag].tolist()})


def check_green_domination(p, ball: Ball, samples: int = 1000, seed: int = 0) -> DiagnosticReport:
    """0 <= G <= Phi on pairs in the ball, and G_ball <= G_exterior near a boundary point."""
    n = p.n
    rng = np.random.default_rng(seed)
    X = _uniform_ball(rng, samples, n, 0.999 * ball.radius, ball.c)
    Y = _uniform_ball(rng, samples, n, 0.999 * ball.radius, ball.c)
    G = np.asarray(K.green_ball(p, ball, X, Y), dtype=float)
    Phi = np.asarray(K.phi(p, X - Y), dtype=float)
    ratio = G / Phi
    # pairs clustered near the center, where G/Phi saturates
    Xc = _uniform_ball(rng, samples // 10 + 1, n, 0.01 * ball.radius, ball.c)
    Yc = _uniform_ball(rng, samples // 10 + 1, n, 0.01 * ball.radius, ball.c)
    rc = np.asarray(K.green_ball(p, ball, Xc, Yc), dtype=float) / np.asarray(K.phi(p, Xc - Yc), dtype=float)
    # barrier: exterior ball tangent at X0 = c + r e1
    e1 = np.eye(n)[0]
    X0 = ball.c + ball.radius * e1
    rext = ball.radius
    E = Ball(X0 + rext * e1, rext)
    near = lambda m: X0 - 0.3 * ball.radius * np.abs(rng.uniform(size=(m, 1))) * e1 + \
        0.3 * ball.radius * _uniform_ball(rng, m, n)
    Xb, Yb = near(4 * samples), near(4 * samples)
    inside = (np.linalg.norm(Xb - ball.c, axis=1) < 0.999 * ball.radius) & \
        (np.linalg.norm(Yb - ball.c, axis=1) < 0.999 * ball.radius) & np.any(Xb != Yb, axis=1)
    Xb, Yb = Xb[inside][:samples], Yb[inside][:samples]
    Gb = np.asarray(K.green_ball(p, ball, Xb, Yb), dtype=float)
    Ge = np.asarray(K.green_exterior_ball(p, E, Xb, Yb), dtype=float)
    rb = Gb / Ge
    ok = bool(np.all(G >= 0) and np.all(ratio <= 1.0) and np.all(rc <= 1.0) and np.all(rb <= 1.0 + 1e-12))
    return DiagnosticReport("green_domination", "0 <= G_ball <= Phi and G_ball <= G_exterior(tangent ball)",
                            samples + len(Xc) + len(Xb), float(max(ratio.max(), rc.max())), ok, 0.0,
                            _worst(ratio, X, Y),
                            {"sup_G_over_Phi_center": float(rc.max()),
                             "sup_G_over_G_exterior": float(rb.max()),
                             "barrier_pairs": int(len(Xb)), "barrier_worst": _worst(rb, Xb, Yb, k=3)})


def _green_upper(p, dom: Domain, X, Y):
    """G_dom for a ball; for other domains the barrier bound min(G_outer, G_exterior at nearest point)."""
    if dom.is_ball:
        return np.asarray(K.green_ball(p, dom.as_ball, X, Y), dtype=float), "exact"
    outer = dom.bounding_ball
    up = np.asarray(K.green_ball(p, outer, X, Y), dtype=float)
    for k in dom.carves:
        # carved ball is an exterior ball at every point of its sphere
        bar = np.asarray(K.green_exterior_ball(p, k, X, Y), dtype=float)
        up = np.minimum(up, bar)
    return up, "barrier"


def _near_boundary_points(dom: Domain, rng, m):
    """Interior points at log-uniform distances 1e-6..0.5*inradius from the boundary."""
    X = dom.boundary_points(rng, m)
    inward = []
    for x in X:
        b = dom.exterior_ball_at(x)
        v = x - b.c
        inward.append(v / np.linalg.norm(v))
    inward = np.array(inward)
    d = dom.inradius * 0.5 * 10.0 ** rng.uniform(-6, 0, size=m)
    pts = X + d[:, None] * inward
    ok = dom.contains(pts)
    return pts[ok]


def check_boundary_estimate(p, dom: Domain, samples: int = 10_000, seed: int = 0,
                            swap: bool = False) -> DiagnosticReport:
    """sup G |x-y|^(n-s) / dist(x)^s is finite and stable under doubling the samples."""
    n, s = p.n, p.s

    def sample(rng, m):
        X = _near_boundary_points(dom, rng, m)
        Y = dom.sample_uniform(rng, len(X))
        keep = np.any(X != Y, axis=1)
        X, Y = X[keep], Y[keep]
        G, mode = _green_upper(p, dom, X, Y)
        A, B = (Y, X) if swap else (X, Y)
        d = dom.dist(A)
        r = G * np.linalg.norm(A - B, axis=1) ** (n - s) / d ** s
        return r, (A, B)

    s1, s2, stable, ratio, cols = _stable_sup(sample, seed, samples)
    mode = "exact" if dom.is_ball else "barrier"
    return DiagnosticReport("boundary_estimate" + ("_swapped" if swap else ""),
                            "G(x,y) <= C dist^s / |x-y|^(n-s)", 2 * samples, s2, bool(stable), STABILITY_FACTOR,
                            _worst(ratio, *cols), {"sup_N": s1, "sup_2N": s2, "green": mode})


# -- Poisson kernel -------------------------------------------------------------------------
def check_poisson_normalization(p, dom: Domain, x_samples=None, q: Q.QuadConfig = Q.DEFAULT, seed: int = 0,
                                walkers: int = 10_000, threads: int = 1, tol: float = None) -> DiagnosticReport:
    """Exterior mass of P(x, .) is 1: quadrature for a ball, exit mass for other domains."""
    rng = np.random.default_rng(seed)
    if x_samples is None:
        x_samples = dom.sample_uniform(rng, 10)
    X = np.asarray(x_samples, dtype=float).reshape(-1, dom.dim)
    if dom.is_ball:
        tol = 1e-6 if tol is None else tol
        vals = np.asarray(Q.convolve_poisson(p, dom.as_ball, F.constant(1.0), X, q), dtype=float).reshape(-1)
        err = np.abs(vals - 1.0)
        return DiagnosticReport("poisson_normalization", "integral of P(x,y) over the exterior = 1",
                                len(X), float(np.max(vals)) if len(vals) else None,
                                bool(np.all(err <= tol)), tol, _worst(err, X), {"values": vals})
    tol = 0.0 if tol is None else tol
    cfg = S.WalkConfig(walkers=walkers, seed=seed, threads=threads)
    res = S.solve_field(p, dom, F.zero(), F.constant(1.0), X, cfg)
    means = np.array([e.mean for _, e in res])
    ses = np.array([e.std_error for _, e in res])
    err = np.abs(means - 1.0)
    ok = bool(np.all(err <= tol) and np.all(ses == 0.0))
    return DiagnosticReport("poisson_normalization_mc", "exit mass of the walk = 1", len(X),
                            float(np.max(means)) if len(means) else None, ok, tol, _worst(err, X),
                            {"means": means, "std_errors": ses})


def check_poisson_bounds(p, ball: Ball, samples: int = 10_000, seed: int = 0) -> DiagnosticReport:
    """Three regimes of the ball's Poisson kernel against their distance bounds."""
    n, s = p.n, p.s
    dom = Domain([ball])
    r = dom.exterior_radius

    def xs(rng, m):
        d = ball.radius * 10.0 ** rng.uniform(-6, 0, size=m)
        return ball.c + (ball.radius - d)[:, None] * _sphere(rng, m, n) * (1 - 1e-15)

    def shell(rng, m):
        dy = r * 10.0 ** rng.uniform(-8, 0, size=m)
        return ball.c + (ball.radius + dy)[:, None] * _sphere(rng, m, n)

    def far(rng, m):
        R = (ball.radius + r) * 10.0 ** rng.uniform(0, 3, size=m)
        return ball.c + R[:, None] * _sphere(rng, m, n)

    def dists(X, Y):
        dx = ball.radius - np.linalg.norm(X - ball.c, axis=1)
        dy = np.linalg.norm(Y - ball.c, axis=1) - ball.radius
        return dx, dy, np.linalg.norm(X - Y, axis=1)

    def P1(rng, m):
        X, Y = xs(rng, m), shell(rng, m)
        dx, dy, dxy = dists(X, Y)
        return np.asarray(K.poisson_ball(p, ball, X, Y)) * dy ** s * dxy ** (n - s), (X, Y)

    def P2(rng, m):
        X, Y = xs(rng, m), shell(rng, m)
        dx, dy, dxy = dists(X, Y)
        return np.asarray(K.poisson_ball(p, ball, X, Y)) * dy ** (2 * s) * dxy ** (n - s) / dx ** s, (X, Y)

    def P3(rng, m):
        X, Y = xs(rng, m), far(rng, m)
        dx, dy, dxy = dists(X, Y)
        return np.asarray(K.poisson_ball(p, ball, X, Y)) * dxy ** (n + 2 * s) / dx ** s, (X, Y)

    regimes = {}
    ok = True
    worst = []
    for name, fn in (("near_shell", P1), ("near_shell_weighted", P2), ("far", P3)):
        s1, s2, stable, ratio, cols = _stable_sup(fn, seed, samples)
        regimes[name] = {"sup_N": s1, "sup_2N": s2, "stable": stable}
        ok &= stable
        worst += [dict(w, regime=name) for w in _worst(ratio, *cols, k=2)]
    # points on the shell boundary dist(y) = r satisfy both near and far bounds
    rng = np.random.default_rng([seed, 3])
    X = xs(rng, samples)
    Y = ball.c + (ball.radius + r) * _sphere(rng, samples, n)
    dx, dy, dxy = dists(X, Y)
    Pb = np.asarray(K.poisson_ball(p, ball, X, Y))
    b1 = float(np.max(Pb * dy ** s * dxy ** (n - s)))
    b3 = float(np.max(Pb * dxy ** (n + 2 * s) / dx ** s))
    regimes["interface"] = {"near_bound": b1, "far_bound": b3}
    ok &= b1 <= regimes["near_shell"]["sup_2N"] * STABILITY_FACTOR and b3 <= regimes["far"]["sup_2N"] * STABILITY_FACTOR
    const = max(v["sup_2N"] for k, v in regimes.items() if "sup_2N" in v)
    return DiagnosticReport("poisson_bounds", "P(x,y) against dist(x)^s, dist(y)^s and |x-y| in three regimes",
                            7 * samples, const, bool(ok), STABILITY_FACTOR, worst, {"regimes": regimes, "r": r})


def _cap_measure(n, alpha):
    """Area of a geodesic cap of angular radius alpha on the unit sphere S^(n-1)."""
    if n == 1:
        return np.where(alpha > 0, 1.0, 0.0)
    if n == 2:
        return 2.0 * alpha
    if n == 3:
        return 2.0 * math.pi * (1.0 - np.cos(alpha))
    from scipy import integrate

    area = 2 * math.pi ** ((n - 1) / 2) / math.gamma((n - 1) / 2)
    return np.array([area * integrate.quad(lambda t: math.sin(t) ** (n - 2), 0, a)[0] for a in np.ravel(alpha)])


def _eta0_level(p, level):
    n, s = p.n, p.s
    layers, m = 8 + 4 * level, 8 + 2 * level
    tau, ctau, w = graded(layers, m, "both")
    R = 1.0 + 2.0 * tau
    # cos(alpha) = (R^2 + |c|^2 - 1) / (2 R |c|), |c| = 2; 1 - cos(alpha) = (R-1)(3-R)/(4R)
    one_minus = (2.0 * tau) * (2.0 * ctau) / (4.0 * R)
    alpha = 2.0 * np.arcsin(np.sqrt(np.clip(0.5 * one_minus, 0.0, 1.0)))
    dens = p.c_ns * ((2.0 * tau) * (R + 1.0)) ** (-s) * R ** (-1.0)
    return float(np.sum(2.0 * w * dens * _cap_measure(n, alpha)))


def compute_eta0(p, q: Q.QuadConfig = Q.DEFAULT) -> float:
    """eta_0 = 1 - int_{B_1(c)} P_{B_1}(0, y) dy with |c| = 2, by radial quadrature of the cap measure."""
    mass = float(Q._adaptive(lambda L: np.array([_eta0_level(p, L)]), q, 1, "eta0")[0])
    return 1.0 - mass


def check_eta0(p, q: Q.QuadConfig = Q.DEFAULT) -> DiagnosticReport:
    vals = [1.0 - _eta0_level(p, L) for L in range(1, 5)]
    spread = float(abs(vals[-1] - vals[-2]))
    eta = vals[-1]
    ok = 0.0 < eta < 1.0 and spread < 1e-8
    return DiagnosticReport("eta0", "eta_0 = 1 - mass of P(0, .) on B_1(c), |c| = 2", len(vals), eta, bool(ok),
                            1e-8, [], {"levels": vals, "refinement_spread": spread})


# -- non-uniqueness and delta identity -------------------------------------------------------
NONUNIQUE_Q = Q.QuadConfig(rel_tol=1e-6, abs_tol=1e-6)


def nonunique_limit(p) -> float:
    """lim eps^-s int_{B_1 minus (B_1)_eps} (1-|x|^2)^(s-1) dx = |S^(n-1)| 2^(s-1) / s."""
    return p.sphere_area * 2.0 ** (p.s - 1.0) / p.s


def check_nonuniqueness_example(p, q: Q.QuadConfig = NONUNIQUE_Q, seed: int = 0,
                                points: int = 10) -> DiagnosticReport:
    """(1-|x|^2)_+^(s-1) is s-harmonic in B_1, has bounded boundary mass, and is integrable."""
    n = p.n
    ball = Ball(np.zeros(n), 1.0)
    dom = Domain([ball])
    u = F.nonuniqueness_example(p, ball)
    rng = np.random.default_rng(seed)
    X = _uniform_ball(rng, points, n, 0.8)
    # u ~ d^(s-1) puts about ulp^s of mass within rounding distance of the
    # sphere, where 1 - |y|^2 is noise; no refinement resolves less than that
    floor = np.finfo(float).eps ** p.s
    q = replace(q, abs_tol=max(q.abs_tol, floor))
    pv = np.asarray(Q.frac_laplacian_pv(p, u, X, q), dtype=float).reshape(-1)
    qf = replace(Q.DEFAULT, rel_tol=max(Q.DEFAULT.rel_tol, floor))
    verdict = S.uniqueness_diagnostic(p, dom, u, q=qf)
    target = nonunique_limit(p)
    wn = Q.weighted_norm(p, dom, u, 1.0, p.s, qf)
    l2s = Q.l2s_membership(p, u, qf)
    ok_pv = bool(np.all(np.abs(pv) <= 1e-3))
    ok_diag = verdict.classification == "bounded_nonzero" and abs(verdict.fitted_limit - target) <= 1e-2
    ok_int = math.isfinite(wn.value) and not l2s.divergent
    return DiagnosticReport("nonuniqueness_example", "(1-|x|^2)_+^(s-1) is a nontrivial s-harmonic function",
                            points, float(np.max(np.abs(pv))), bool(ok_pv and ok_diag and ok_int), 1e-3,
                            _worst(np.abs(pv), X),
                            {"pv": pv, "verdict": verdict.to_json(), "target_limit": target,
                             "weighted_L1_s": wn.value, "l2s": l2s.value,
                             "pv_ok": ok_pv, "diagnostic_ok": ok_diag, "integrable": ok_int})


def bump(center, radius: float) -> F.ScalarField:
    """C-infinity bump exp(1 - 1/(1 - |x-c|^2/r^2)) supported in B_r(c), equal to 1 at c."""
    c = np.asarray(center, dtype=float)

    def ev(x):
        t = np.sum((x - c) ** 2, axis=-1) / radius ** 2
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return np.where(t < 1.0, np.exp(1.0 - 1.0 / np.where(t < 1.0, 1.0 - t, 1.0)), 0.0)

    return F.ScalarField(ev, support=Domain.ball(c, radius), name="bump")


def radial_surrogate(values: Callable, center, radius: float, n: int, panels: int = 24, m: int = 10,
                     name: str = "radial") -> F.ScalarField:
    """Composite Chebyshev interpolant in |x - c| of a radial field on the ball B_radius(c).

    ``values`` is evaluated once at panels * m points along one ray.
    """
    c = np.asarray(center, dtype=float)
    edges = np.linspace(0.0, radius, panels + 1)
    k = np.cos(math.pi * (np.arange(m) + 0.5) / m)
    nodes = 0.5 * (edges[:-1, None] + edges[1:, None]) + 0.5 * np.diff(edges)[:, None] * k[None, :]
    e = np.zeros(n)
    e[0] = 1.0
    vals = np.asarray(values(c + nodes.reshape(-1, 1) * e), dtype=float).reshape(panels, m)
    cheb = np.polynomial.chebyshev
    coef = np.array([cheb.chebfit(k, v, m - 1) for v in vals])

    def ev(x):
        r = np.linalg.norm(x - c, axis=-1)
        flat = r.reshape(-1)
        idx = np.clip(np.searchsorted(edges, flat, side="right") - 1, 0, panels - 1)
        mid = 0.5 * (edges[idx] + edges[idx + 1])
        half = 0.5 * (edges[idx + 1] - edges[idx])
        t = (flat - mid) / half
        out = np.zeros(flat.shape)
        for j in range(panels):
            sel = idx == j
            if sel.any():
                out[sel] = cheb.chebval(t[sel], coef[j])
        return np.where(flat < radius, out, 0.0).reshape(r.shape)

    return F.ScalarField(ev, support=Domain.ball(c, radius), smoothness="C0", name=name)


DELTA_Q = Q.QuadConfig(rel_tol=1e-5, abs_tol=1e-5)


def check_delta_identity(p, ball: Ball, radii=(0.5, 0.8), ys=None, seed: int = 0,
                         q: Q.QuadConfig = DELTA_Q, tol: float = 1e-3) -> DiagnosticReport:
    """Weak form int G(x,y) (-Delta)^s phi(x) dx = phi(y), in both argument orders.

    Test functions are C-infinity bumps centered in the ball (radii relative to
    the ball radius); (-Delta)^s phi is computed by the PV evaluator and
    represented by a composite radial interpolant.
    """
    n = p.n
    rng = np.random.default_rng(seed)
    if ys is None:
        ys = np.concatenate([ball.c[None, :], _uniform_ball(rng, 4, n, 0.8 * ball.radius, ball.c)])
    ys = np.asarray(ys, dtype=float).reshape(-1, n)
    dom = Domain([ball])
    rows, errs = [], []
    for rho in radii:
        phi = bump(ball.c, rho * ball.radius)
        lap = radial_surrogate(lambda x: Q.frac_laplacian_pv(p, phi, x, q), ball.c, ball.radius, n,
                               name="lap_phi")
        lap = F.ScalarField(lap.evaluator, support=lap.support, smoothness="C0", name="lap_phi",
                            singular_spheres=((ball.c, rho * ball.radius),))
        first = np.asarray(Q.convolve_green(p, ball, lap, ys, q), dtype=float).reshape(-1)
        second = []
        for y in ys:
            def integrand(x, y=y):
                flat = x.reshape(-1, n)
                out = np.zeros(len(flat))
                ok = np.any(flat != y, axis=1) & (np.linalg.norm(flat - ball.c, axis=1) < ball.radius)
                out[ok] = np.asarray(K.green_ball(p, ball, y, flat[ok])).reshape(-1) * lap(flat[ok])
                return out.reshape(x.shape[:-1])
            second.append(Q.integrate_adaptive(dom, integrand, q, "delta_second", origin=y,
                                               extra_spheres=((ball.c, rho * ball.radius),)))
        second = np.array(second)
        target = np.asarray(phi(ys), dtype=float).reshape(-1)
        errs.append(np.maximum(np.abs(first - target), np.abs(second - target)))
        rows.append({"radius": rho, "y": ys, "phi_y": target, "first": first, "second": second})
    err = np.concatenate(errs)
    ok = all(np.all(np.abs(r["first"] - r["phi_y"]) <= tol) and np.all(np.abs(r["second"] - r["first"]) <= 2 * tol)
             for r in rows)
    return DiagnosticReport("delta_identity", "int G(x,y) (-Delta)^s phi(x) dx = phi(y)",
                            len(err), float(np.max(err)), bool(ok), tol,
                            _worst(err, np.concatenate([ys] * len(radii))), {"rows": rows})


# -- suite ------------------------------------------------------------------------------------
SUITE_DEFAULTS = {"seed": 0, "samples": 10_000, "pairs": 1000, "walkers": 10_000, "delta": True,
                  "lens": {"outer": {"c": [0, 0], "r": 2}, "carve": {"c": [2.5, 0], "r": 1}}}


def run_suite(params, config: dict = None, threads: int = 1, q: Q.QuadConfig = Q.DEFAULT) -> List[DiagnosticReport]:
    """All checks with a shared seed.  ``params`` is a FracParams or {"n", "s", "perturb"}."""
    cfg = dict(SUITE_DEFAULTS)
    cfg.update(config or {})
    unknown = set(cfg) - set(SUITE_DEFAULTS)
    if unknown:
        raise ValueError(f"unknown verify keys: {sorted(unknown)}")
    try:
        p = params if isinstance(params, K.FracParams) else K.make_params(
            params["n"], params["s"], params.get("perturb", 0.0))
    except FracLapError as exc:
        return [DiagnosticReport("construction", "valid (n, s)", 0, None, False, 0.0, [], {"error": str(exc)})]
    n = p.n
    seed = int(cfg["seed"])
    ball = Ball(np.zeros(n), 1.0)
    dom = Domain([ball])
    from .domain import domain_from_json

    lens_spec = dict(cfg["lens"], type="lens")
    if n != 2:
        lens_spec = {"type": "lens", "outer": {"c": [0.0] * n, "r": 2},
                     "carve": {"c": [2.5] + [0.0] * (n - 1), "r": 1}}
    lens = domain_from_json(lens_spec)
    jobs = [
        ("green_symmetry", lambda: check_green_symmetry(p, ball, cfg["pairs"], seed)),
        ("green_symmetry_exterior", lambda: check_green_symmetry(p, ball, cfg["pairs"], seed, exterior=True)),
        ("green_domination", lambda: check_green_domination(p, ball, cfg["pairs"], seed)),
        ("boundary_estimate", lambda: check_boundary_estimate(p, dom, cfg["samples"], seed)),
        ("boundary_estimate_swapped", lambda: check_boundary_estimate(p, dom, cfg["samples"], seed, swap=True)),
        ("boundary_estimate_lens", lambda: check_boundary_estimate(p, lens, cfg["samples"], seed)),
        ("poisson_normalization", lambda: check_poisson_normalization(p, dom, None, q, seed)),
        ("poisson_normalization_mc", lambda: check_poisson_normalization(p, lens, None, q, seed, cfg["walkers"],
                                                                         threads)),
        ("poisson_bounds", lambda: check_poisson_bounds(p, ball, cfg["samples"], seed)),
        ("eta0", lambda: check_eta0(p, q)),
        ("nonuniqueness_example", lambda: check_nonuniqueness_example(p, NONUNIQUE_Q, seed)),
    ]
    if cfg["delta"]:
        jobs.append(("delta_identity", lambda: check_delta_identity(p, ball, seed=seed)))
    out = []
    for name, job in jobs:
        try:
            rep = job()
        except FracLapError as exc:
            rep = DiagnosticReport(name, "", 0, None, False, 0.0, [], {"error": f"{type(exc).__name__}: {exc}"})
        if name == "boundary_estimate_lens":
            rep.check = name
        log.info("%s: %s", rep.check, "pass" if rep.passed else "FAIL")
        out.append(rep)
    return out


def suite_json(reports: List[DiagnosticReport], params=None) -> dict:
    return {"params": params, "pass": all(r.passed for r in reports), "reports": [r.to_json() for r in reports]}
