"""Quadrature evaluation of the closed-form rate, count and efficiency expressions.

All radial integrals stop at ``QuadSpec.r_max`` so that the analytic model
describes the same finite window the simulator samples. With exponents
allowed arbitrarily close to 2 the interference of an unbounded plane is
infinite, so the window is part of the model rather than a numerical
convenience.

Expectations over fading use the unit-mean exponential density ``exp(-h)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy import interpolate, special

from .model import Estimate, Method, NetworkConfig, PathLossLaw, validate
from .quadrature import QuadratureError, alpha_rule, fading_rule, integrate_log_s, upper_gamma

FORMS = ("exact", "pgfl")


@dataclass(frozen=True)
class QuadSpec:
    """Tolerances and truncation limits for the quadrature engine.

    ``s_max`` caps the Laplace variable (``inf`` lets the integrator bracket
    it); ``radial_step`` is the trapezoid step in log normalized radius used
    by the distance rule; ``n_alpha`` and ``fading_level`` size the exponent
    and fading rules. Each result is checked against a coarser rule and
    refined up to ``max_refinements`` times.
    """

    rel_tol: float = 1e-6
    abs_tol: float = 1e-10
    s_max: float = math.inf
    r_max: float = 2000.0
    alpha_max: float = 20.0
    n_alpha: int = 48
    fading_level: int = 3
    radial_step: float = 0.2
    max_refinements: int = 2

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "s_max", "r_max", "alpha_max", "radial_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_alpha < 4 or self.fading_level < 1:
            raise ValueError("quadrature rules are too coarse")

    def refined(self) -> "QuadSpec":
        return replace(
            self,
            n_alpha=2 * self.n_alpha,
            fading_level=self.fading_level + 1,
            radial_step=self.radial_step / 2,
        )

    def tolerance(self, value: float) -> float:
        return max(self.abs_tol, self.rel_tol * abs(value))


def _with_error(spec: QuadSpec, compute: Callable[[QuadSpec], tuple[float, float]], what: str) -> tuple[float, float, QuadSpec]:
    """Evaluate ``compute`` and estimate its discretization error by comparison with a coarser rule.

    ``compute`` returns ``(value, intrinsic_error)``. Refines until the total
    error meets the tolerance, else raises :class:`QuadratureError`.
    """
    coarse = replace(spec, n_alpha=max(4, spec.n_alpha // 2), fading_level=max(1, spec.fading_level - 1),
                     radial_step=2 * spec.radial_step)
    v_coarse, _ = compute(coarse)
    current = spec
    for attempt in range(spec.max_refinements + 1):
        value, err = compute(current)
        total = err + abs(value - v_coarse)
        if total <= current.tolerance(value):
            return value, total, current
        if attempt == spec.max_refinements:
            raise QuadratureError(f"{what} missed its tolerance", value, total)
        v_coarse = value
        current = current.refined()
    raise AssertionError("unreachable")


# --- distance rule -----------------------------------------------------------

def _alpha_columns(law: PathLossLaw, spec: QuadSpec):
    # renormalized so that expectations of probabilities tend to exactly 1
    # as s -> 0; the mass above alpha_max is carried as an error term instead
    rule, tail = alpha_rule(law, spec.n_alpha, spec.alpha_max)
    return rule.nodes, rule.weights / rule.weights.sum(), tail


def _mean_miss(s: float, r: np.ndarray, p_s: float, a: np.ndarray, wa: np.ndarray) -> np.ndarray:
    """``E_alpha[1 / (1 + s p_s r^-alpha)]``: Laplace transform of one link's power at distance ``r``."""
    with np.errstate(divide="ignore"):
        log_x = math.log(s * p_s) - a[None, :] * np.log(r)[:, None]
    return special.expit(-log_x) @ wa


def _radial_parts(s: float, r: np.ndarray, p_s: float, a: np.ndarray, wa: np.ndarray, r_max: float):
    """Inner and outer radial integrals of ``1 - 1/(1 + s p_s x^-alpha)`` weighted by ``x``.

    Returns ``(disk, annulus)`` where ``disk = int_0^r`` and
    ``annulus = int_r^{r_max}``, both averaged over the exponent law.
    Uses ``int_0^x x' dx' / (1 + x'^alpha / c) = c^(2/alpha) / alpha * B(z; 2/alpha, 1-2/alpha)``
    with ``c = s p_s`` and ``z = x^alpha / (c + x^alpha)``.
    """
    d = 2.0 / a[None, :]
    log_c = math.log(s * p_s)
    with np.errstate(divide="ignore"):
        log_r = np.log(r)[:, None]
    # z = c / (c + x^alpha) falls from 1 to 0 as x grows
    z = special.expit(log_c - a[None, :] * log_r)
    scale = np.exp(d * log_c - np.log(a[None, :])) * (math.pi / np.sin(math.pi * d))
    # one incomplete-beta call per cell: evaluate whichever tail is small and
    # get the other by complement, so neither branch loses digits
    big = z > 0.5
    small = special.betainc(np.where(big, d, 1.0 - d), np.where(big, 1.0 - d, d), np.where(big, 1.0 - z, z))
    upper = np.where(big, small, 1.0 - small)
    lower = np.where(big, 1.0 - small, small)
    disk = scale * upper
    if math.isfinite(r_max):
        z_max = special.expit(log_c - a * math.log(r_max))
        lower_max = special.betainc(1.0 - d[0], d[0], z_max)[None, :]
        upper_max = special.betainc(d[0], 1.0 - d[0], 1.0 - z_max)[None, :]
    else:
        upper_max = np.ones_like(d)
        lower_max = np.zeros_like(d)
    annulus = scale * np.where(big, upper_max - upper, lower - lower_max)
    annulus = np.where(r[:, None] >= r_max, 0.0, np.maximum(annulus, 0.0))
    return disk @ wa, annulus @ wa


def _check_form(form: str) -> None:
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}, got {form!r}")


def _pd_from_parts(disk, miss, r, k, lam, form):
    if form == "pgfl":
        return np.exp(-2.0 * math.pi * lam * disk)
    with np.errstate(invalid="ignore", divide="ignore"):
        inner = np.where(r > 0, 1.0 - 2.0 * disk / np.where(r > 0, r * r, 1.0), 0.0)
    return miss * np.clip(inner, 0.0, 1.0) ** (k - 1)


def _log_id_from_parts(annulus, miss, lam, form):
    out = -2.0 * math.pi * lam * annulus
    if form == "exact":
        out = out + np.log(miss)
    return out


def _laplace_pd_vec(s, r, k, config, a, wa, r_max, form):
    if s == 0:
        return np.ones_like(r)
    disk, _ = _radial_parts(s, r, config.p_s, a, wa, r_max)
    miss = _mean_miss(s, r, config.p_s, a, wa)
    return _pd_from_parts(disk, miss, r, k, config.lambda_b, form)


def _log_laplace_id_vec(s, r, config, a, wa, r_max, form):
    if s == 0:
        return np.zeros_like(r)
    _, ann = _radial_parts(s, r, config.p_s, a, wa, r_max)
    miss = _mean_miss(s, r, config.p_s, a, wa)
    return _log_id_from_parts(ann, miss, config.lambda_b, form)


def laplace_pd(s: float, r_k: float, k: int, config: NetworkConfig, law: PathLossLaw,
               spec: QuadSpec | None = None, form: str = "exact") -> float:
    """Laplace transform of the cooperative power given the k-th nearest distance ``r_k``.

    ``form="exact"`` conditions on the k-th station sitting at ``r_k`` with the
    other ``k - 1`` uniform in the disk of radius ``r_k``. ``form="pgfl"`` is the
    Poisson-in-disk approximation ``exp(-2 pi lam int_0^r_k (1 - E[...]) r dr)``,
    which equals 1 at ``r_k = 0``.
    """
    _check_form(form)
    spec = spec or QuadSpec()
    if s < 0 or r_k < 0:
        raise ValueError("s and r_k must be nonnegative")
    if form == "pgfl" and r_k == 0:
        return 1.0

    def once(sp):
        a, wa, tail = _alpha_columns(law, sp)
        value = float(_laplace_pd_vec(s, np.array([float(r_k)]), k, config, a, wa, sp.r_max, form)[0])
        return value, tail * value

    return _with_error(spec, once, "laplace_pd")[0]


def laplace_id(s: float, r_k1: float, config: NetworkConfig, law: PathLossLaw,
               spec: QuadSpec | None = None, form: str = "exact") -> float:
    """Laplace transform of the interference given the (k+1)-th nearest distance ``r_k1``.

    Interferers beyond ``r_k1`` form a Poisson process out to ``r_max``;
    ``form="exact"`` also counts the (k+1)-th station itself.
    """
    _check_form(form)
    spec = spec or QuadSpec()
    if s < 0 or r_k1 < 0:
        raise ValueError("s and r_k1 must be nonnegative")
    if math.isinf(r_k1):
        return 1.0

    def once(sp):
        a, wa, tail = _alpha_columns(law, sp)
        log_l = _log_laplace_id_vec(s, np.array([float(r_k1)]), config, a, wa, sp.r_max, form)[0]
        return float(np.exp(log_l)), tail * float(np.exp(log_l))

    return _with_error(spec, once, "laplace_id")[0]


def _rate_distance_once(k, config, law, spec, form):
    a, wa, alpha_tail = _alpha_columns(law, spec)
    lam = config.lambda_b
    step = spec.radial_step
    # normalized squared radius t = pi lam r^2: t_k ~ Gamma(k), t_k1 - t_k ~ Exp(1), independent
    z_lo = math.log(1e-10)
    z_hi = math.log(max(40.0, 12.0 * k))
    z = np.arange(z_lo, z_hi + step / 2, step)
    t = np.exp(z)
    w_u = step * np.exp(k * z - t - math.lgamma(k))
    w_v = step * np.exp(z - t)
    z_ext = np.concatenate((z, z[-1] + step * np.arange(1, int(math.log(2.0) / step) + 3)))
    r_ext = np.sqrt(np.exp(z_ext) / (math.pi * lam))
    r_in = r_ext[: len(z)]
    pair_z = np.logaddexp(z[:, None], z[None, :])

    n_in = len(z)

    def integrand(s):
        disk, ann = _radial_parts(s, r_ext, config.p_s, a, wa, spec.r_max)
        miss = _mean_miss(s, r_ext, config.p_s, a, wa)
        lp = _pd_from_parts(disk[:n_in], miss[:n_in], r_in, k, lam, form)
        log_li = _log_id_from_parts(ann, miss, lam, form)
        li = np.exp(interpolate.CubicSpline(z_ext, log_li)(pair_z))
        return float((w_u * (1.0 - lp)) @ li @ w_v)

    s_ref = 1.0 / config.sigma2 if config.sigma2 > 0 else 1.0 / (config.p_s * (math.pi * lam) ** 2)
    out = integrate_log_s(integrand, config.sigma2, s_ref, spec.abs_tol, spec.rel_tol, spec.s_max)
    mass_lost = math.exp(k * z_lo) / math.gamma(k + 1) + math.exp(z_lo) + math.exp(-math.exp(z_hi))
    err = out.error + (alpha_tail + mass_lost) * abs(out.value)
    return config.w * out.value, config.w * err


def rate_distance(k: int, config: NetworkConfig, law: PathLossLaw, spec: QuadSpec | None = None,
                  form: str = "exact") -> Estimate:
    """Average rate when the ``k`` nearest stations cooperate.

    The joint law of the k-th and (k+1)-th nearest distances is integrated in
    normalized squared radius, where it factors into independent Gamma(k)
    and Exp(1) variables.
    """
    _check_form(form)
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    validate(config, law)
    spec = spec or QuadSpec()
    value, err, used = _with_error(spec, lambda sp: _rate_distance_once(int(k), config, law, sp, form),
                                   f"rate_distance(k={k})")
    return Estimate(value, err, 0, Method.QUADRATURE, {"form": form, "radial_step": used.radial_step})


# --- power-threshold rule ----------------------------------------------------

def _edge(x, d):
    """``(1 - e^-x) x^-d``, zero at ``x = 0``."""
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, np.exp(np.log(-np.expm1(-safe)) - d * np.log(safe)), 0.0)


def _kappa_pair(s, h, alpha, t, p_s, r_max):
    """Both radial kernels, broadcasting over ``h`` and ``alpha``.

    With ``c = s p_s h``, the substitution ``x = c r^-alpha`` turns each
    kernel into ``c^(2/alpha) / alpha * int (1 - e^-x) x^(-2/alpha - 1) dx``
    between the images of its radial limits, and
    ``int_lo^hi (1 - e^-x) x^(-d-1) dx = [edge(lo) - edge(hi) + Gamma(1-d, lo) - Gamma(1-d, hi)] / d``.
    """
    h = np.asarray(h, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    d = 2.0 / alpha
    a = 1.0 - d
    c = s * p_s * h
    shape = np.broadcast(c, alpha).shape
    x_thr = s * t
    gamma_a = special.gamma(a)
    g_thr = gamma_a * special.gammaincc(a, x_thr)
    e_thr = _edge(x_thr, d)
    if math.isfinite(r_max):
        x_rim = np.broadcast_to(c * np.exp(-alpha * math.log(r_max)), shape)
        g_rim = gamma_a * special.gammaincc(a, x_rim)
        e_rim = _edge(x_rim, d)
    else:
        x_rim = np.zeros(shape)
        g_rim = np.broadcast_to(gamma_a, shape)
        e_rim = np.zeros(shape)
    inside = x_rim < x_thr
    with np.errstate(divide="ignore"):
        pref = np.where(c > 0, np.exp(d * np.log(np.where(c > 0, c, 1.0))) / (alpha * d), 0.0)
    k1 = pref * np.where(inside, e_thr + g_thr, e_rim + g_rim)
    k2 = pref * np.where(inside, e_rim - e_thr + g_rim - g_thr, 0.0)
    return k1, np.maximum(k2, 0.0)


def _kappa_checked(s, h, alpha, t, config, r_max):
    if s < 0 or h < 0:
        raise ValueError("s and h must be nonnegative")
    if not alpha > 2:
        raise ValueError("the radial kernels need alpha > 2")
    if not t > 0:
        raise ValueError("threshold must be positive")
    if s == 0 or h == 0:
        return 0.0, 0.0
    k1, k2 = _kappa_pair(s, h, alpha, t, config.p_s, r_max)
    return float(k1), float(k2)


def kappa1(s: float, h: float, alpha: float, t: float, config: NetworkConfig, r_max: float = math.inf) -> float:
    """``int (1 - exp(-s p_s h r^-alpha)) r dr`` over the cooperative disk ``r <= (p_s h / t)^(1/alpha)``."""
    return _kappa_checked(s, h, alpha, t, config, r_max)[0]


def kappa2(s: float, h: float, alpha: float, t: float, config: NetworkConfig, r_max: float = math.inf) -> float:
    """The same integrand from the cooperative radius out to ``r_max``."""
    return _kappa_checked(s, h, alpha, t, config, r_max)[1]


def _clip_fading(t, config, a, r_max):
    """Fading at which the cooperative radius reaches ``r_max``, per exponent."""
    if not math.isfinite(r_max):
        return None
    return np.exp(np.minimum(math.log(t / config.p_s) + a * math.log(r_max), 700.0))


def _mean_kappas(s, t, config, law, spec):
    if s == 0:
        return 0.0, 0.0, 0.0
    a, wa, alpha_tail = _alpha_columns(law, spec)
    fr = fading_rule(spec.fading_level, _clip_fading(t, config, a, spec.r_max))
    k1, k2 = _kappa_pair(s, fr.nodes, a[None, :], t, config.p_s, spec.r_max)
    w = fr.weights * wa[None, :]
    return float((w * k1).sum()), float((w * k2).sum()), alpha_tail


def _threshold(t):
    if not t > 0:
        raise ValueError("threshold must be positive")
    return float(t)


def laplace_pp(s: float, t: float, config: NetworkConfig, law: PathLossLaw, spec: QuadSpec | None = None) -> float:
    """Laplace transform of the power from stations received at or above ``t``."""
    spec = spec or QuadSpec()
    if s < 0:
        raise ValueError("s must be nonnegative")
    t = _threshold(t)

    def once(sp):
        m1, _, tail = _mean_kappas(s, t, config, law, sp)
        value = math.exp(-2.0 * math.pi * config.lambda_b * m1)
        return value, tail * value

    return _with_error(spec, once, "laplace_pp")[0]


def laplace_ip(s: float, t: float, config: NetworkConfig, law: PathLossLaw, spec: QuadSpec | None = None) -> float:
    """Laplace transform of the power from stations received below ``t``, out to ``r_max``."""
    spec = spec or QuadSpec()
    if s < 0:
        raise ValueError("s must be nonnegative")
    t = _threshold(t)

    def once(sp):
        _, m2, tail = _mean_kappas(s, t, config, law, sp)
        value = math.exp(-2.0 * math.pi * config.lambda_b * m2)
        return value, tail * value

    return _with_error(spec, once, "laplace_ip")[0]


def _rate_power_once(t, config, law, spec):
    two_pi_lam = 2.0 * math.pi * config.lambda_b

    def integrand(s):
        m1, m2, _ = _mean_kappas(s, t, config, law, spec)
        return math.exp(-two_pi_lam * m2) * -math.expm1(-two_pi_lam * m1)

    _, tail = alpha_rule(law, spec.n_alpha, spec.alpha_max)
    s_ref = 1.0 / config.sigma2 if config.sigma2 > 0 else 1.0 / t
    out = integrate_log_s(integrand, config.sigma2, s_ref, spec.abs_tol, spec.rel_tol, spec.s_max)
    return config.w * out.value, config.w * (out.error + tail * abs(out.value))


def rate_power(t: float, config: NetworkConfig, law: PathLossLaw, spec: QuadSpec | None = None) -> Estimate:
    """Average rate when every station received at or above ``t`` watts cooperates."""
    t = _threshold(t)
    validate(config, law)
    spec = spec or QuadSpec()
    value, err, _ = _with_error(spec, lambda sp: _rate_power_once(t, config, law, sp), f"rate_power(t={t:.4g})")
    return Estimate(value, err, 0, Method.QUADRATURE)


def _served_area(t, config, law, spec):
    """``E[pi min((p_s h / t)^(2/alpha), r_max^2)]`` and its discretization error."""

    def once(sp):
        a, wa, tail = _alpha_columns(law, sp)
        d = 2.0 / a
        base = np.exp(d * math.log(config.p_s / t)) * special.gamma(1.0 + d)
        if math.isfinite(sp.r_max):
            # fading above h_clip puts the cooperative radius beyond the window
            h_clip = _clip_fading(t, config, a, sp.r_max)
            vals = base * special.gammainc(1.0 + d, h_clip) + sp.r_max**2 * np.exp(-h_clip)
        else:
            vals = base
        value = math.pi * float(vals @ wa)
        return value, tail * value

    return _with_error(spec, once, "served area")[:2]


def mean_coop_count(t: float, config: NetworkConfig, law: PathLossLaw, spec: QuadSpec | None = None) -> Estimate:
    """Mean number of cooperating stations under threshold ``t``."""
    t = _threshold(t)
    validate(config, law)
    area, err = _served_area(t, config, law, spec or QuadSpec())
    return Estimate(config.lambda_b * area, config.lambda_b * err, 0, Method.QUADRATURE)


def mean_ue_per_sbs(t: float, config: NetworkConfig, law: PathLossLaw, spec: QuadSpec | None = None) -> Estimate:
    """Mean number of users one station serves under threshold ``t``."""
    t = _threshold(t)
    validate(config, law)
    area, err = _served_area(t, config, law, spec or QuadSpec())
    return Estimate(config.lambda_u * area, config.lambda_u * err, 0, Method.QUADRATURE)


def energy_efficiency_from(tau_p: Estimate, n_ue: Estimate, config: NetworkConfig) -> Estimate:
    """Combine a rate and a users-per-station value into network energy efficiency.

    The area of interest cancels between the sum rate and the total power.
    """
    c = config
    power = c.p0 + n_ue.value * c.p_s * c.delta_p
    value = c.lambda_u * tau_p.value / (c.lambda_b * power)
    err = c.lambda_u / (c.lambda_b * power) * tau_p.half_width
    if power > 0:
        err += abs(value) * c.p_s * c.delta_p / power * n_ue.half_width
    return Estimate(value, err, 0, Method.QUADRATURE)


def energy_efficiency(t: float, config: NetworkConfig, law: PathLossLaw, spec: QuadSpec | None = None) -> Estimate:
    """Network energy efficiency (nats per joule per unit bandwidth) under threshold ``t``."""
    spec = spec or QuadSpec()
    return energy_efficiency_from(rate_power(t, config, law, spec), mean_ue_per_sbs(t, config, law, spec), config)
