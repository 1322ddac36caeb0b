"""Scalar fields over R^n with the hints the quadrature needs.

An evaluator maps an array of points (..., n) to values (...).  Hints tell
the integrators where the field may be non-smooth (boundary spheres of its
support) and how it behaves at infinity.
"""
from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .domain import Ball, Domain
from .errors import DomainError

SMOOTHNESS = ("C2", "C0", "measurable")


@dataclass(frozen=True, eq=False)
class ScalarField:
    evaluator: Callable[[np.ndarray], np.ndarray]
    support: Optional[Domain] = None
    smoothness: str = "C2"
    decay: Optional[float] = None
    singular_spheres: tuple = ()
    is_zero: bool = False
    name: str = "field"
    planes: tuple = ()
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.smoothness not in SMOOTHNESS:
            raise ValueError(f"smoothness must be one of {SMOOTHNESS}")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.is_zero:
            out = np.zeros(x.shape[:-1])
        else:
            out = np.asarray(self.evaluator(x), dtype=float)
            out = np.broadcast_to(out, x.shape[:-1])
        return out if out.ndim else float(out)

    def plane_list(self, n):
        """Hyperplanes {y . normal = offset} across which the field may jump."""
        out = []
        for normal, off in self.planes:
            v = np.zeros(n)
            v[:len(normal)] = normal
            out.append((v / np.linalg.norm(v), float(off)))
        return out

    def spheres(self):
        """Spheres (center, radius) across which the field may lose smoothness."""
        out = list(self.singular_spheres)
        if self.support is not None:
            out.extend(self.support.spheres())
        return [(np.asarray(c, dtype=float), float(r)) for c, r in out]

    @property
    def bounded_support(self) -> bool:
        return self.support is not None or self.is_zero

    @classmethod
    def from_pointwise(cls, fn, **hints):
        """Wrap a scalar callable ``fn(point) -> float``."""

        def ev(x):
            flat = x.reshape(-1, x.shape[-1])
            vals = np.fromiter((fn(p) for p in flat), dtype=float, count=len(flat))
            return vals.reshape(x.shape[:-1])

        return cls(ev, **hints)

    def scaled(self, k: float) -> "ScalarField":
        return ScalarField(lambda x: k * self(x), self.support, self.smoothness, self.decay,
                           self.singular_spheres, self.is_zero or k == 0.0, f"{k}*{self.name}",
                           planes=self.planes)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        supp = self.support if self.support is not None and other.support is not None else None
        decay = None
        if self.decay is not None and other.decay is not None:
            decay = max(self.decay, other.decay)
        sm = SMOOTHNESS[max(SMOOTHNESS.index(self.smoothness), SMOOTHNESS.index(other.smoothness))]
        extra = tuple(self.spheres()) + tuple(other.spheres())
        return ScalarField(lambda x: self(x) + other(x), supp, sm, decay, extra,
                           name=f"({self.name}+{other.name})", planes=self.planes + other.planes)

    def __mul__(self, other: "ScalarField") -> "ScalarField":
        if self.is_zero or other.is_zero:
            return zero()
        supp = self.support if self.support is not None else other.support
        extra = tuple(self.spheres()) + tuple(other.spheres())
        sm = SMOOTHNESS[max(SMOOTHNESS.index(self.smoothness), SMOOTHNESS.index(other.smoothness))]
        return ScalarField(lambda x: self(x) * other(x), supp, sm, None, extra,
                           name=f"{self.name}*{other.name}", planes=self.planes + other.planes)


def zero() -> ScalarField:
    return ScalarField(lambda x: np.zeros(x.shape[:-1]), decay=-math.inf, is_zero=True, name="zero")


def constant(value: float) -> ScalarField:
    if value == 0.0:
        return zero()
    return ScalarField(lambda x: np.full(x.shape[:-1], float(value)), decay=0.0, name=f"constant({value})")


def indicator(dom: Domain) -> ScalarField:
    return ScalarField(lambda x: dom.contains(x).astype(float), support=dom,
                       smoothness="measurable", decay=-math.inf, name="indicator")


def half_space(axis: int = 0, offset: float = 0.0) -> ScalarField:
    """Indicator of {y : y[axis] > offset}."""
    def ev(x):
        return (x[..., axis] > offset).astype(float)

    normal = tuple(1.0 if k == axis else 0.0 for k in range(axis + 1))
    return ScalarField(ev, smoothness="measurable", decay=0.0, name=f"half_space({axis})",
                       planes=((normal, float(offset)),))


def restricted(u: ScalarField, dom: Domain) -> ScalarField:
    """u inside dom, zero outside."""
    return ScalarField(lambda x: np.where(dom.contains(x), u(x), 0.0), support=dom,
                       smoothness=u.smoothness, decay=-math.inf, is_zero=u.is_zero,
                       singular_spheres=u.singular_spheres, planes=u.planes,
                       name=f"{u.name}|dom")


def _ball_profile(ball: Ball, profile, name, smoothness="C0") -> ScalarField:
    c, r = ball.c, ball.radius

    def ev(x):
        q = np.sum(np.square((x - c) / r), axis=-1)
        inside = q < 1.0
        out = np.zeros(q.shape)
        out[inside] = profile(1.0 - q[inside])
        return out

    return ScalarField(ev, support=Domain([ball]), smoothness=smoothness, decay=-math.inf, name=name)


def torsion(params, ball: Ball = None) -> ScalarField:
    """Closed-form solution of (-Delta)^s u = 1 in a ball with zero exterior data."""
    n, s = params.n, params.s
    ball = ball or Ball(np.zeros(n), 1.0)
    k = math.gamma(n / 2) / (4.0 ** s * math.gamma(n / 2 + s) * math.gamma(1 + s)) * ball.radius ** (2 * s)
    return _ball_profile(ball, lambda w: k * w ** s, "torsion")


def nonuniqueness_example(params, ball: Ball = None) -> ScalarField:
    """(1 - |x|^2)^(s-1) in the ball, zero outside: s-harmonic with zero data."""
    s = params.s
    ball = ball or Ball(np.zeros(params.n), 1.0)
    return _ball_profile(ball, lambda w: w ** (s - 1.0), "nonuniqueness_example", smoothness="measurable")


def ball_power(params, ball: Ball, power: float, name="ball_power") -> ScalarField:
    return _ball_profile(ball, lambda w: w ** power, name)


# -- radial expressions -----------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_FUNCS = {"pow": np.power, "abs": np.abs}


def _compile_radial(expr: str):
    tree = ast.parse(expr, mode="eval")

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            f, a, b = _BINOPS[type(node.op)], walk(node.left), walk(node.right)
            return lambda r: f(a(r), b(r))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            a = walk(node.operand)
            return (lambda r: -a(r)) if isinstance(node.op, ast.USub) else a
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            v = float(node.value)
            return lambda r: v
        if isinstance(node, ast.Name) and node.id == "r":
            return lambda r: r
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
            fn = _FUNCS[node.func.id]
            args = [walk(a) for a in node.args]
            return lambda r: fn(*(a(r) for a in args))
        raise DomainError(f"unsupported token in radial expression: {ast.dump(node)}")

    return walk(tree)


def radial_expression(expr: str, support: Domain = None, decay: float = None) -> ScalarField:
    """Field u(x) = expr(r) with r = |x|, using +, -, *, /, ** , pow and abs."""
    fn = _compile_radial(expr)

    def ev(x):
        r = np.linalg.norm(x, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.broadcast_to(np.asarray(fn(r), dtype=float), r.shape)
        if support is not None:
            val = np.where(support.contains(x), val, 0.0)
        return val

    return ScalarField(ev, support=support, smoothness="C0", decay=decay, name=f"radial({expr})")
