"""Special functions used on the kernel hot path.

The regularized incomplete Beta function is evaluated with the modified
Lentz continued fraction, vectorized over the argument.  Gamma values come
from :mod:`math` (``lgamma``/``gamma`` carry ~15 significant digits).
"""
from __future__ import annotations

import math

import numpy as np

_FPMIN = 1e-300
CF_RTOL = 1e-12
CF_MAXITER = 600


def lbeta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def beta(a: float, b: float) -> float:
    return math.exp(lbeta(a, b))


def _betacf(a, b, x):
    """Continued fraction for I_x(a, b); converges fast for x < (a+1)/(a+b+2)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    idx = np.arange(x.size)
    xs = x.ravel().copy()
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = np.ones_like(xs)
    d = 1.0 - qab * xs / qap
    d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
    d = 1.0 / d
    h = d.copy()
    res = out.ravel()
    for m in range(1, CF_MAXITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * xs / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        h = h * d * c
        aa = -(a + m) * (qab + m) * xs / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        delta = d * c
        h = h * delta
        done = np.abs(delta - 1.0) <= CF_RTOL * 0.1
        if done.any():
            res[idx[done]] = h[done]
            keep = ~done
            if not keep.any():
                return out
            idx, xs, c, d, h = idx[keep], xs[keep], c[keep], d[keep], h[keep]
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b})")


def betainc_reg(a: float, b: float, x, xc=None):
    """Regularized incomplete Beta I_x(a, b), vectorized over ``x``.

    ``xc`` optionally supplies 1 - x computed without cancellation.
    """
    x = np.asarray(x, dtype=float)
    xc = 1.0 - x if xc is None else np.asarray(xc, dtype=float)
    x, xc = np.broadcast_arrays(x, xc)
    out = np.zeros(x.shape)
    out[xc <= 0.0] = 1.0
    inner = (x > 0.0) & (xc > 0.0)
    if not inner.any():
        return out if out.ndim else float(out)
    xi, xci = x[inner], xc[inner]
    lb = lbeta(a, b)
    front = np.exp(a * np.log(xi) + b * np.log(xci) - lb)
    lower = xi < (a + 1.0) / (a + b + 2.0)
    vals = np.empty(xi.shape)
    if lower.any():
        vals[lower] = front[lower] * _betacf(a, b, xi[lower]) / a
    upper = ~lower
    if upper.any():
        vals[upper] = 1.0 - front[upper] * _betacf(b, a, xci[upper]) / b
    out[inner] = vals
    return out if out.ndim else float(out)


def betainc_lower(a: float, b: float, x, xc=None):
    """Unregularized incomplete Beta B_x(a, b) = integral_0^x t^(a-1) (1-t)^(b-1) dt."""
    return betainc_reg(a, b, x, xc) * beta(a, b)


def beta_pdf(a: float, b: float, w):
    w = np.asarray(w, dtype=float)
    return np.exp((a - 1.0) * np.log(w) + (b - 1.0) * np.log1p(-w) - lbeta(a, b))


def _inv_lower(a: float, b: float, p, tol: float, maxiter: int):
    """Newton solve of I_w(a, b) = p for the lower tail, where w is the small side."""
    lb = lbeta(a, b)
    guess = np.exp((np.log(p) + math.log(a) + lb) / a)
    cur = np.clip(guess, 1e-300, 0.5)
    lo = np.zeros_like(p)
    hi = np.ones_like(p)
    active = np.arange(p.size)
    for _ in range(maxiter):
        ww = cur[active]
        f = betainc_reg(a, b, ww) - p[active]
        neg = f < 0.0
        lo[active] = np.where(neg, np.maximum(lo[active], ww), lo[active])
        hi[active] = np.where(~neg, np.minimum(hi[active], ww), hi[active])
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            new = ww - f / beta_pdf(a, b, ww)
        lo_a, hi_a = lo[active], hi[active]
        bad = ~np.isfinite(new) | (new <= lo_a) | (new >= hi_a)
        # bisect in log space while the bracket spans decades
        wide = (lo_a > 0.0) & (hi_a > 4.0 * lo_a)
        mid = np.where(wide, np.sqrt(lo_a * hi_a), 0.5 * (lo_a + hi_a))
        mid = np.where(lo_a == 0.0, 1e-3 * hi_a, mid)
        new = np.where(bad, mid, new)
        new = np.where(f == 0.0, ww, new)
        cur[active] = new
        conv = (np.abs(new - ww) <= tol * new) | (hi_a - lo_a <= tol * new) | (f == 0.0)
        active = active[~conv]
        if active.size == 0:
            return cur
    raise ArithmeticError("inverse incomplete beta did not converge")


def betaincinv_reg(a: float, b: float, p, tol: float = 1e-12, maxiter: int = 200):
    """Solve I_w(a, b) = p for w by bracketed Newton iteration.

    Whichever of w and 1 - w is smaller is solved for directly, to ``tol``
    relative precision, so both tails keep their resolution.
    """
    p = np.asarray(p, dtype=float)
    scalar = p.ndim == 0
    p = np.atleast_1d(p).astype(float).ravel()
    if np.any((p < 0.0) | (p > 1.0)):
        raise ValueError("probabilities must lie in [0, 1]")
    w = np.where(p >= 1.0, 1.0, 0.0)
    split = betainc_reg(a, b, a / (a + b))
    low = np.flatnonzero((p > 0.0) & (p <= split))
    high = np.flatnonzero((p > split) & (p < 1.0))
    if low.size:
        w[low] = _inv_lower(a, b, p[low], tol, maxiter)
    if high.size:
        w[high] = 1.0 - _inv_lower(b, a, 1.0 - p[high], tol, maxiter)
    return float(w[0]) if scalar else w


def betaincinv_reg_upper(a: float, b: float, q, tol: float = 1e-12, maxiter: int = 200):
    """Return 1 - w where I_w(a, b) = 1 - q, without forming 1 - w by subtraction."""
    return betaincinv_reg(b, a, q, tol, maxiter)
