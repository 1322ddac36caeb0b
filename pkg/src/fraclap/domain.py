"""Bounded domains built from balls: balls, lenses and finite intersections.

A domain is ``{x : |x - c_i| < r_i for every kept ball} minus the closed
carved balls``.  Every boundary piece is a sphere, which keeps distance
queries exact and gives quadrature rules their breakpoints.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EmptyDomain, NotOnBoundary


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(np.asarray(self.center, dtype=float)))
        object.__setattr__(self, "center", c)
        r = float(self.radius)
        if not (r > 0.0 and math.isfinite(r)):
            raise DomainError(f"ball radius must be positive, got {r}")
        object.__setattr__(self, "radius", r)

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center)

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.c, axis=-1) < self.radius

    def to_json(self) -> dict:
        return {"c": list(self.center), "r": self.radius}


@dataclass(frozen=True)
class InscribedBall:
    ball: Ball
    gap: float = 0.0


def _norm(v):
    return np.sqrt(np.sum(np.square(v), axis=-1))


class Domain:
    """Intersection of open balls with the complements of closed balls."""

    def __init__(self, balls, carves=(), exterior_radius=None, name=None):
        self.balls = tuple(balls)
        self.carves = tuple(carves)
        if not self.balls:
            raise DomainError("a domain needs at least one enclosing ball")
        dims = {b.dim for b in self.balls + self.carves}
        if len(dims) != 1:
            raise DomainError("all balls must share one dimension")
        self.dim = dims.pop()
        self.name = name or ("ball" if not self.carves and len(self.balls) == 1 else "intersection")
        self.diameter = 2.0 * min(b.radius for b in self.balls)
        self.tol = 1e-9 * self.diameter
        inr = self.inradius
        if not inr > self.tol:
            raise EmptyDomain("domain is empty")
        if exterior_radius is None:
            exterior_radius = min([self.diameter] + [b.radius for b in self.carves])
        self.exterior_radius = float(exterior_radius)

    # -- construction helpers -------------------------------------------------
    @classmethod
    def ball(cls, center, radius):
        return cls([Ball(center, radius)], name="ball")

    @classmethod
    def lens(cls, outer: Ball, carve: Ball):
        return cls([outer], [carve], name="lens")

    @classmethod
    def intersection(cls, *members: "Domain"):
        balls = tuple(itertools.chain.from_iterable(m.balls for m in members))
        carves = tuple(itertools.chain.from_iterable(m.carves for m in members))
        return cls(balls, carves, name="intersection")

    @property
    def is_ball(self) -> bool:
        return len(self.balls) == 1 and not self.carves

    @property
    def as_ball(self) -> Ball:
        if not self.is_ball:
            raise DomainError("domain is not a single ball")
        return self.balls[0]

    def spheres(self):
        """Boundary-carrying spheres as (center, radius) pairs."""
        return [(b.c, b.radius) for b in self.balls + self.carves]

    @property
    def bounding_ball(self) -> Ball:
        return min(self.balls, key=lambda b: b.radius)

    # -- distances --------------------------------------------------------------
    def _inside_dist(self, x):
        d = np.full(x.shape[:-1], np.inf)
        for b in self.balls:
            d = np.minimum(d, b.radius - _norm(x - b.c))
        for b in self.carves:
            d = np.minimum(d, _norm(x - b.c) - b.radius)
        return d

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._inside_dist(x) > 0.0

    def dist(self, x):
        """Signed distance to the boundary: positive inside, negative outside."""
        x = np.asarray(x, dtype=float)
        d = self._inside_dist(x)
        if self.is_ball:
            return d if d.ndim else float(d)
        out = np.array(d, dtype=float).reshape(-1)
        xs = x.reshape(-1, self.dim)
        neg = np.flatnonzero(out < 0.0)
        if neg.size:
            out[neg] = -self._outside_dist(xs[neg])
        return out.reshape(d.shape) if d.ndim else float(out[0])

    def _closure_mask(self, y):
        return self._inside_dist(y) >= -1e-12 * self.diameter

    def _outside_dist(self, x):
        """Exact distance from exterior points to the closed domain.

        The nearest point lies on a sphere (radial projection or its
        antipode), on the circle where two spheres meet, or at a point where
        three spheres meet; every candidate in the closure is tested.
        """
        sph = self.spheres()
        best = np.full(x.shape[0], np.inf)

        def consider(cand):
            ok = self._closure_mask(cand)
            dd = np.where(ok, _norm(cand - x), np.inf)
            np.minimum(best, dd, out=best)

        for c, r in sph:
            v = x - c
            nv = _norm(v)[:, None]
            u = np.where(nv > 0, v / np.where(nv > 0, nv, 1.0), _unit(self.dim))
            consider(c + r * u)
            consider(c - r * u)
        for (c1, r1), (c2, r2) in itertools.combinations(sph, 2):
            ring = _sphere_pair_circle(c1, r1, c2, r2)
            if ring is None:
                continue
            m, axis, h = ring
            w = x - m
            ax = (w @ axis)[:, None]
            perp = w - ax * axis
            npp = _norm(perp)[:, None]
            if self.dim == 1:
                consider(np.broadcast_to(m, x.shape).copy())
                continue
            pu = np.where(npp > 0, perp / np.where(npp > 0, npp, 1.0), _orthogonal(axis))
            consider(m + h * pu)
            consider(m - h * pu)
        if self.dim >= 3:
            for trio in itertools.combinations(sph, 3):
                for pt in _sphere_triple_points(*trio):
                    consider(np.broadcast_to(pt, x.shape).copy())
        return best

    # -- derived domains --------------------------------------------------------
    @property
    def inradius(self) -> float:
        if not hasattr(self, "_inradius"):
            self._inradius = self._compute_inradius()
        return self._inradius

    def _compute_inradius(self) -> float:
        if self.is_ball:
            return self.balls[0].radius
        if len(self.balls) == 1 and len(self.carves) == 1:
            b, k = self.balls[0], self.carves[0]
            gap = float(np.linalg.norm(k.c - b.c))
            return min(b.radius, 0.5 * (b.radius + gap - k.radius))
        return self._numeric_inradius()

    def _numeric_inradius(self) -> float:
        from scipy.optimize import minimize

        rng = np.random.default_rng(12345)
        bb = self.bounding_ball
        pts = bb.c + bb.radius * _uniform_ball(rng, 4000, self.dim)
        vals = self._inside_dist(pts)
        best = float(vals.max())
        for start in pts[np.argsort(-vals)[:8]]:
            res = minimize(lambda z: -float(self._inside_dist(z[None, :])[0]), start,
                           method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
            best = max(best, -float(res.fun))
        return best

    def shift_inner(self, eps: float) -> "Domain":
        """Omega_eps = {x in Omega : dist(x, boundary) > eps}."""
        if not eps > 0:
            raise DomainError("eps must be positive")
        if eps >= self.inradius:
            raise EmptyDomain(f"eps={eps} is not below the inradius {self.inradius}")
        balls = [Ball(b.center, b.radius - eps) for b in self.balls]
        carves = [Ball(b.center, b.radius + eps) for b in self.carves]
        return Domain(balls, carves, exterior_radius=self.exterior_radius + eps, name=self.name)

    def shift_outer(self, eps: float) -> "Domain":
        """Omega^eps = {x : dist(x, Omega) < eps}."""
        if not eps > 0:
            raise DomainError("eps must be positive")
        if eps >= self.exterior_radius:
            raise DomainError(f"eps={eps} is not below the exterior radius {self.exterior_radius}")
        if self.is_ball:
            b = self.balls[0]
            return Domain([Ball(b.center, b.radius + eps)], exterior_radius=self.exterior_radius - eps, name="ball")
        return DilatedDomain(self, eps)

    def max_inscribed_ball(self, x) -> InscribedBall:
        x = np.asarray(x, dtype=float)
        d = float(self.dist(x))
        if d <= self.tol:
            raise DomainError(f"point {x.tolist()} is not inside the domain")
        return InscribedBall(Ball(x, d), 0.0)

    def exterior_ball_at(self, X) -> Ball:
        X = np.asarray(X, dtype=float)
        d = float(self.dist(X))
        if abs(d) > max(self.tol, 1e-9):
            raise NotOnBoundary(f"point {X.tolist()} is {d:g} away from the boundary")
        r = self.exterior_radius
        band = max(self.tol, 1e-9) * 10
        for k in self.carves:
            v = X - k.c
            if abs(float(np.linalg.norm(v)) - k.radius) <= band:
                inward = -v / np.linalg.norm(v)
                return Ball(X + r * inward, r)
        for b in self.balls:
            v = X - b.c
            if abs(float(np.linalg.norm(v)) - b.radius) <= band:
                return Ball(X + r * v / np.linalg.norm(v), r)
        raise NotOnBoundary("no boundary sphere passes through the point")

    def sample_uniform(self, rng: np.random.Generator, size: int | None = None, budget: int = 10**6):
        """Uniform points in the domain by rejection from the bounding ball."""
        want = 1 if size is None else int(size)
        bb = self.bounding_ball
        out = []
        have = 0
        tries = 0
        while have < want:
            batch = max(64, 2 * (want - have))
            pts = bb.c + bb.radius * _uniform_ball(rng, batch, self.dim)
            keep = pts[self.contains(pts)]
            out.append(keep)
            have += len(keep)
            tries += batch
            if tries > budget * max(1, want):
                raise DomainError("rejection sampling budget exhausted")
        pts = np.concatenate(out)[:want]
        return pts[0] if size is None else pts

    def boundary_points(self, rng: np.random.Generator, size: int):
        """Points on the boundary (projected from random directions per sphere)."""
        pts = []
        sph = self.spheres()
        while sum(len(p) for p in pts) < size:
            for c, r in sph:
                dirs = _uniform_sphere(rng, 4 * size, self.dim)
                cand = c + r * dirs
                ok = np.abs(self.dist(cand)) <= self.tol
                pts.append(cand[ok])
        return np.concatenate(pts)[:size]

    def ray_hits(self, x, dirs):
        """Distances t > 0 at which rays x + t*dir cross boundary spheres (NaN if none)."""
        return ray_sphere_hits(x, dirs, self.spheres())

    def to_json(self) -> dict:
        if self.is_ball:
            b = self.balls[0]
            return {"type": "ball", "c": list(b.center), "r": b.radius}
        if self.name == "lens" and len(self.balls) == 1 and len(self.carves) == 1:
            return {"type": "lens", "outer": self.balls[0].to_json(), "carve": self.carves[0].to_json()}
        return {"type": "intersection",
                "balls": [b.to_json() for b in self.balls],
                "carves": [b.to_json() for b in self.carves]}

    def __repr__(self):
        return f"Domain({self.to_json()})"


class DilatedDomain(Domain):
    """Outer parallel set {dist(x, base) < eps} of a non-ball domain.

    Membership and exterior distances are exact; interior distances are the
    lower bound eps + dist(x, boundary of base).
    """

    def __init__(self, base: Domain, eps: float):
        self.base = base
        self.eps = float(eps)
        self.balls = tuple(Ball(b.center, b.radius + eps) for b in base.balls)
        self.carves = tuple(Ball(b.center, b.radius - eps) for b in base.carves)
        self.dim = base.dim
        self.name = "dilated"
        self.diameter = base.diameter + 2 * eps
        self.tol = 1e-9 * self.diameter
        self.exterior_radius = base.exterior_radius - eps
        self._inradius = base.inradius + eps

    def dist(self, x):
        x = np.asarray(x, dtype=float)
        d = np.asarray(self.base.dist(x), dtype=float)
        out = np.where(d >= 0, d + self.eps, self.eps + d)
        return out if out.ndim else float(out)

    def contains(self, x):
        return np.asarray(self.dist(x)) > 0.0

    def _inside_dist(self, x):
        return np.asarray(self.dist(x))

    def shift_inner(self, eps):
        raise DomainError("erosion of a dilated domain is not supported")

    def to_json(self):
        return {"type": "dilated", "base": self.base.to_json(), "eps": self.eps}


def domain_from_json(spec: dict) -> Domain:
    kind = spec.get("type")
    if kind == "ball":
        return Domain.ball(spec["c"], spec["r"])
    if kind == "lens":
        return Domain.lens(Ball(spec["outer"]["c"], spec["outer"]["r"]),
                           Ball(spec["carve"]["c"], spec["carve"]["r"]))
    if kind == "intersection":
        if "members" in spec:
            return Domain.intersection(*(domain_from_json(m) for m in spec["members"]))
        return Domain([Ball(b["c"], b["r"]) for b in spec["balls"]],
                      [Ball(b["c"], b["r"]) for b in spec.get("carves", [])], name="intersection")
    raise DomainError(f"unknown domain type {kind!r}")


# -- geometric helpers -----------------------------------------------------------

def _unit(n):
    e = np.zeros(n)
    e[0] = 1.0
    return e


def _orthogonal(axis):
    n = axis.size
    e = np.zeros(n)
    e[int(np.argmin(np.abs(axis)))] = 1.0
    v = e - (e @ axis) * axis
    return v / np.linalg.norm(v)


def _sphere_pair_circle(c1, r1, c2, r2):
    dvec = c2 - c1
    dist = float(np.linalg.norm(dvec))
    if dist == 0.0 or dist > r1 + r2 or dist < abs(r1 - r2):
        return None
    axis = dvec / dist
    a = (dist * dist + r1 * r1 - r2 * r2) / (2 * dist)
    h = math.sqrt(max(r1 * r1 - a * a, 0.0))
    return c1 + a * axis, axis, h


def _sphere_triple_points(s1, s2, s3):
    (c1, r1), (c2, r2), (c3, r3) = s1, s2, s3
    # |y-ci|^2 = ri^2 differences give two planes
    A = np.array([2 * (c2 - c1), 2 * (c3 - c1)])
    b = np.array([r1 * r1 - r2 * r2 + c2 @ c2 - c1 @ c1,
                  r1 * r1 - r3 * r3 + c3 @ c3 - c1 @ c1])
    if np.linalg.matrix_rank(A) < 2:
        return []
    p0, *_ = np.linalg.lstsq(A, b, rcond=None)
    direction = np.cross(A[0], A[1]) if A.shape[1] == 3 else None
    if direction is None:
        return []
    direction = direction / np.linalg.norm(direction)
    w = p0 - c1
    bq = 2 * (w @ direction)
    cq = w @ w - r1 * r1
    disc = bq * bq - 4 * cq
    if disc < 0:
        return []
    sq = math.sqrt(disc)
    return [p0 + 0.5 * (-bq - sq) * direction, p0 + 0.5 * (-bq + sq) * direction]


def _uniform_sphere(rng, size, n):
    g = rng.standard_normal((size, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _uniform_ball(rng, size, n):
    return _uniform_sphere(rng, size, n) * rng.random(size)[:, None] ** (1.0 / n)


def ray_sphere_hits(x, dirs, spheres):
    """Crossing distances of rays x + t*dirs with each sphere.

    ``x`` has shape (..., n) and ``dirs`` (..., N, n) or (N, n); returns an
    array (..., N, 2*len(spheres)) of positive distances, NaN where absent.
    """
    x = np.asarray(x, dtype=float)
    dirs = np.asarray(dirs, dtype=float)
    xb = x[..., None, :]
    out = []
    for c, r in spheres:
        w = xb - c
        bq = np.sum(w * dirs, axis=-1)
        cq = np.sum(w * w, axis=-1) - r * r
        disc = bq * bq - cq
        sq = np.sqrt(np.where(disc > 0, disc, np.nan))
        for t in (-bq - sq, -bq + sq):
            out.append(np.where(t > 0, t, np.nan))
    if not out:
        return np.full(np.broadcast_shapes(xb.shape, dirs.shape)[:-1] + (0,), np.nan)
    return np.stack(out, axis=-1)
