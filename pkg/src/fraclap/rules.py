"""Fixed quadrature rules: Gauss-Legendre, geometrically graded panels, sphere rules."""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

SIGMA = 0.15


def _frozen(*arrays):
    for a in arrays:
        a.setflags(write=False)
    return arrays


@lru_cache(maxsize=None)
def gauss01(m: int):
    """m-point Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(m)
    return _frozen(0.5 * (x + 1.0), 0.5 * w)


@lru_cache(maxsize=None)
def graded(layers: int, m: int, ends: str = "both", sigma: float = SIGMA, outer: int = 1):
    """Composite Gauss rule on [0, 1] with panels shrinking geometrically toward the ends.

    Returns ``(nodes, complements, weights)`` where ``complements`` is 1 - nodes
    computed without cancellation.  ``ends`` is "both", "left" or "right";
    ``outer`` splits the widest panel(s) into that many equal panels.
    """
    g, gw = gauss01(m)
    if ends == "both":
        half = [0.0] + [0.5 * sigma ** k for k in range(layers, 0, -1)]
        half += list(np.linspace(0.5 * sigma, 0.5, outer + 1))
        left_nodes, left_w = _panels(half, g, gw)
        nodes = np.concatenate([left_nodes, 1.0 - left_nodes[::-1]])
        comps = np.concatenate([1.0 - left_nodes, left_nodes[::-1]])
        weights = np.concatenate([left_w, left_w[::-1]])
    else:
        pts = [0.0] + [sigma ** k for k in range(layers, 0, -1)]
        pts += list(np.linspace(sigma, 1.0, outer + 1))
        nodes, weights = _panels(pts, g, gw)
        comps = 1.0 - nodes
        if ends == "right":
            nodes, comps = comps[::-1].copy(), nodes[::-1].copy()
            weights = weights[::-1].copy()
    return _frozen(nodes, comps, weights)


def _panels(pts, g, gw):
    nodes, weights = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        nodes.append(a + (b - a) * g)
        weights.append((b - a) * gw)
    return np.concatenate(nodes), np.concatenate(weights)


@lru_cache(maxsize=None)
def sphere_rule(n: int, level: int):
    """Antipodally symmetric rule on the unit sphere S^(n-1); weights sum to its area."""
    if n == 1:
        d = np.array([[1.0], [-1.0]])
        return _frozen(d, np.ones(2))
    if n == 2:
        N = 16 * 2 ** level
        th = 2 * math.pi * (np.arange(N) + 0.5) / N
        d = np.stack([np.cos(th), np.sin(th)], axis=1)
        return _frozen(d, np.full(N, 2 * math.pi / N))
    if n == 3:
        m = 6 * 2 ** level
        z, wz = np.polynomial.legendre.leggauss(m)
        na = 2 * m
        al = 2 * math.pi * (np.arange(na) + 0.5) / na
        Z, A = np.meshgrid(z, al, indexing="ij")
        rr = np.sqrt(1 - Z ** 2)
        d = np.stack([rr * np.cos(A), rr * np.sin(A), Z], axis=-1).reshape(-1, 3)
        w = np.repeat(wz, na) * (2 * math.pi / na)
        return _frozen(d, w)
    raise NotImplementedError("field quadrature supports n <= 3")


def level_shape(level: int):
    """(layers, points per panel) used by the radial rules at a refinement level."""
    return 8 + 4 * level, 8 + 2 * level


def panel_count(n: int, level: int) -> int:
    """Radial panels per great circle of directions, the budgeted quantity."""
    layers, _ = level_shape(level)
    circle = {1: 2, 2: 16, 3: 12}.get(n, 12) * 2 ** level
    return circle * (2 * layers + 2)
