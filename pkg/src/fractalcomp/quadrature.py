"""Fixed quadrature rules and the outer integral over the Laplace variable."""
from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, special


class QuadratureError(ArithmeticError):
    """A numerical integral missed its tolerance; ``error`` is the achieved error estimate."""

    def __init__(self, message: str, value: float = math.nan, error: float = math.nan):
        super().__init__(f"{message} (value={value:.6g}, error estimate={error:.3g})")
        self.value = value
        self.error = error


class Rule(NamedTuple):
    nodes: np.ndarray
    weights: np.ndarray


@lru_cache(maxsize=32)
def _legendre(n: int) -> Rule:
    x, w = np.polynomial.legendre.leggauss(n)
    return Rule(x, w)


def alpha_rule(law, n: int, alpha_max: float) -> tuple[Rule, float]:
    """Gauss-Legendre rule on ``(alpha_min, alpha_max)`` with the truncated exponent density folded in.

    Returns the rule and the probability mass the law puts above ``alpha_max``.
    """
    lo, hi = law.alpha_min, alpha_max
    if not hi > lo:
        raise ValueError("alpha_max must exceed alpha_min")
    x, w = _legendre(n)
    a = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    dist = law.frozen()
    norm = dist.sf(lo)
    wt = 0.5 * (hi - lo) * w * dist.pdf(a) / norm
    tail = float(dist.sf(hi) / norm)
    return Rule(a, wt), tail


@lru_cache(maxsize=16)
def _tanh_sinh_unit(level: int):
    """Tanh-sinh rule on (0, 1): nodes ``y``, ``-log(1 - y)`` computed without cancellation, weights."""
    step = 1.0 / 2**level
    t = np.arange(-6.0, 6.0 + step / 2, step)
    u = 0.5 * math.pi * np.sinh(t)
    y = special.expit(2.0 * u)
    neg_log_1my = np.logaddexp(0.0, 2.0 * u)
    w = step * 0.25 * math.pi * np.cosh(t) / np.cosh(u) ** 2
    keep = w > 1e-18 * w.max()
    return y[keep], neg_log_1my[keep], w[keep]


def fading_rule(level: int, h_split=None) -> Rule:
    """Tanh-sinh rule for ``E[f(h)]`` with ``h ~ Exp(1)``.

    Integrates over ``v = 1 - exp(-h)`` on (0, 1), which absorbs the
    exponential weight; the double-exponential map handles the ``h**(2/alpha)``
    behavior at the origin. ``level`` sets the step ``1 / 2**level``.

    With ``h_split`` (scalar or array) the range is cut at that fading value
    so a kink there costs no accuracy; nodes and weights then gain a trailing
    axis matching ``h_split``.
    """
    y, hy, w = _tanh_sinh_unit(level)
    if h_split is None:
        return Rule(hy, w)
    hs = np.atleast_1d(np.asarray(h_split, dtype=float))[None, :]
    v_split = -np.expm1(-hs)
    y_, hy_, w_ = y[:, None], hy[:, None], w[:, None]
    # lower piece: v = v_split * y, so 1 - v = exp(-hs) + v_split * (1 - y)
    h_lo = np.maximum(-np.logaddexp(-hs, np.log(v_split) - hy_), 0.0)
    w_lo = v_split * w_
    # upper piece: 1 - v = exp(-hs) * (1 - y)
    h_hi = hs + hy_
    w_hi = np.exp(-hs) * w_
    return Rule(np.concatenate((h_lo, h_hi)), np.concatenate((w_lo, w_hi)))


# exp(-700) is still a normal double
_U_MIN = -700.0


class OuterResult(NamedTuple):
    value: float
    error: float
    u_lo: float
    u_hi: float
    evaluations: int


def integrate_log_s(
    f: Callable[[float], float],
    sigma2: float,
    s_ref: float,
    abs_tol: float,
    rel_tol: float,
    s_max: float = math.inf,
) -> OuterResult:
    """Integrate ``F(s) = exp(-sigma2 s) f(s)`` against ``ds / s`` over ``(0, inf)``.

    Substitutes ``s = exp(u)``; ``f`` must lie in [0, 1] and vanish as s -> 0.
    The peak is located starting from ``s_ref``, the range is bracketed by
    scanning outward from it, and both cut-off
    tails are estimated from the local exponential decay in ``u``.
    """
    count = 0

    def g(u):
        nonlocal count
        count += 1
        s = math.exp(u)
        damp = math.exp(-sigma2 * s) if sigma2 > 0 else 1.0
        return damp * f(s) if damp > 0 else 0.0

    u_max = math.log(s_max) if math.isfinite(s_max) else math.inf
    step = 2.0
    # locate the peak: leave any underflowed plateau downward, then hill-climb
    u_peak = min(math.log(s_ref), u_max)
    g_peak = g(u_peak)
    while g_peak == 0.0 and u_peak - step > _U_MIN:
        u_peak -= step
        g_peak = g(u_peak)
    for direction in (-1.0, 1.0):
        while _U_MIN < u_peak + direction * step < u_max:
            val = g(u_peak + direction * step)
            if val <= g_peak:
                break
            u_peak, g_peak = u_peak + direction * step, val
    floor = 1e-3 * max(abs_tol, rel_tol * g_peak)

    def scan(direction, limit_u):
        u = u_peak
        prev = g_peak
        for _ in range(1000):
            nxt = u + direction * step
            if (nxt - limit_u) * direction >= 0:
                return limit_u, g(limit_u), prev
            val = g(nxt)
            if val < floor and val <= prev:
                return nxt, val, prev
            u, prev = nxt, val
        raise QuadratureError("could not bracket the Laplace-variable integral", math.nan, math.nan)

    u_lo, g_lo, g_lo_in = scan(-1.0, _U_MIN)
    u_hi, g_hi, g_hi_in = scan(+1.0, u_max)

    def tail(g_end, g_inner):
        if g_end <= 0:
            return 0.0
        if g_inner > g_end:
            beta = (math.log(g_inner) - math.log(g_end)) / step
            return g_end / beta
        return g_end * 50.0

    tails = tail(g_lo, g_lo_in) + tail(g_hi, g_hi_in)
    value, err = integrate.quad(g, u_lo, u_hi, points=[u_peak] if u_lo < u_peak < u_hi else None, limit=1000, epsabs=abs_tol * 0.1, epsrel=rel_tol * 0.1)
    return OuterResult(value, err + tails, u_lo, u_hi, count)


def upper_gamma(a, x):
    """Non-regularized upper incomplete gamma ``Gamma(a, x)`` for ``a > 0``."""
    return special.gamma(a) * special.gammaincc(a, x)
