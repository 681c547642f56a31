"""Monte Carlo trial engine.

Each trial samples a deployment in a disk around the origin, draws the
channel, and evaluates every requested cooperation rule on that same
realization. Trial ``i`` uses the stream ``substream(seed, i)``, and results
are reduced in trial order, so estimates do not depend on the worker count.
Confidence intervals use batch means because per-trial rates are heavy-tailed.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .channel import make_links, sample_alpha
from .cooperation import rate_distance_rule, rate_power_rule
from .model import (
    DistanceK,
    Estimate,
    Method,
    NetworkConfig,
    PathLossLaw,
    PowerThreshold,
    Strategy,
    validate,
)
from .pointprocess import sample_ppp
from .streams import substream

log = logging.getLogger(__name__)

THREADS_ENV = "FRACTALCOMP_THREADS"
UE_DRAWS_PER_TRIAL = 8
Z95 = 1.96


@dataclass(frozen=True)
class McPlan:
    n_trials: int = 100_000
    seed: int = 0
    window_radius: float = 2000.0
    batch_size: int | None = None
    workers: int | None = None

    def __post_init__(self):
        if int(self.n_trials) != self.n_trials or self.n_trials < 100:
            raise ValueError("n_trials must be an integer >= 100")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if not self.window_radius > 0:
            raise ValueError("window_radius must be positive")
        if self.batch_size is not None:
            if self.batch_size < 1 or self.n_trials % self.batch_size:
                raise ValueError("batch_size must divide n_trials")
            if self.n_trials // self.batch_size < 2:
                raise ValueError("need at least two batches")
        elif self.n_trials % 100:
            raise ValueError("n_trials must be a multiple of 100 when batch_size is not given")

    @property
    def effective_batch_size(self) -> int:
        return self.batch_size if self.batch_size is not None else self.n_trials // 100

    @property
    def n_batches(self) -> int:
        return self.n_trials // self.effective_batch_size

    def replace(self, **changes) -> "McPlan":
        values = dict(
            n_trials=self.n_trials,
            seed=self.seed,
            window_radius=self.window_radius,
            batch_size=self.batch_size,
            workers=self.workers,
        )
        values.update(changes)
        return McPlan(**values)


def resolve_workers(plan: McPlan) -> int:
    if plan.workers is not None:
        return max(1, int(plan.workers))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, env)
    return 1


def batch_means(samples: np.ndarray, n_batches: int) -> np.ndarray:
    """Means of ``n_batches`` contiguous batches along the first axis."""
    n = samples.shape[0]
    return samples.reshape(n_batches, n // n_batches, *samples.shape[1:]).mean(axis=1)


def mc_estimate(samples: np.ndarray, n_batches: int, **extra) -> Estimate:
    """Mean with a 95% batch-means confidence half-width."""
    samples = np.asarray(samples, dtype=float)
    means = batch_means(samples, n_batches)
    se = means.std(ddof=1) / math.sqrt(n_batches)
    return Estimate(float(samples.mean()), Z95 * float(se), len(samples), Method.MONTE_CARLO, dict(extra))


@dataclass
class TrialTable:
    """Per-trial outputs of one simulation pass.

    Column ``j`` of ``rate_k`` belongs to ``ks[j]``; columns of ``rate_t``,
    ``count_t`` and ``ue_area_t`` belong to ``ts[j]``. ``ue_area_t`` is the
    area (m^2) inside which a user would be served; multiplying by the user
    intensity gives the number of users per station.
    """

    config: NetworkConfig
    law: PathLossLaw
    plan: McPlan
    ks: tuple
    ts: tuple
    rate_k: np.ndarray
    rate_t: np.ndarray
    count_t: np.ndarray
    ue_area_t: np.ndarray
    n_links: np.ndarray
    exhausted: int = 0
    notes: dict = field(default_factory=dict)

    def _col(self, keys, key, what):
        try:
            return list(keys).index(key)
        except ValueError:
            raise KeyError(f"{what} {key!r} was not simulated") from None

    def rate(self, strategy: Strategy) -> Estimate:
        if isinstance(strategy, DistanceK):
            j = self._col(self.ks, strategy.k, "k")
            return mc_estimate(self.rate_k[:, j], self.plan.n_batches, exhausted=self.exhausted)
        j = self._col(self.ts, strategy.t, "threshold")
        return mc_estimate(self.rate_t[:, j], self.plan.n_batches)

    def coop_count(self, t: float) -> Estimate:
        j = self._col(self.ts, float(t), "threshold")
        return mc_estimate(self.count_t[:, j], self.plan.n_batches)

    def ue_per_sbs(self, t: float, lambda_u: float | None = None) -> Estimate:
        lam_u = self.config.lambda_u if lambda_u is None else lambda_u
        j = self._col(self.ts, float(t), "threshold")
        return mc_estimate(lam_u * self.ue_area_t[:, j], self.plan.n_batches)

    def energy_efficiency(self, t: float) -> Estimate:
        j = self._col(self.ts, float(t), "threshold")
        c = self.config
        nb = self.plan.n_batches
        tau = batch_means(self.rate_t[:, j], nb)
        n_ue = batch_means(c.lambda_u * self.ue_area_t[:, j], nb)
        tau_bar, n_bar = float(tau.mean()), float(n_ue.mean())
        power = c.p0 + n_bar * c.p_s * c.delta_p
        value = c.lambda_u * tau_bar / (c.lambda_b * power)
        # first-order propagation through the ratio, with batch covariance
        d_tau = c.lambda_u / (c.lambda_b * power)
        d_n = -value * c.p_s * c.delta_p / power
        cov = np.cov(np.vstack((tau, n_ue)), ddof=1) / nb
        var = d_tau**2 * cov[0, 0] + d_n**2 * cov[1, 1] + 2 * d_tau * d_n * cov[0, 1]
        return Estimate(value, Z95 * math.sqrt(max(var, 0.0)), self.plan.n_trials, Method.MONTE_CARLO)


def _run_chunk(lo, hi, config, law, plan, ks, ts, out):
    rate_k, rate_t, count_t, ue_area, n_links = out
    lam = config.lambda_b
    radius = plan.window_radius
    ts_arr = np.asarray(ts, dtype=float)
    for i in range(lo, hi):
        g = substream(plan.seed, i)
        dep = sample_ppp(lam, radius, g)
        links = make_links(dep, config, law, g)
        n_links[i] = len(links)
        if ks:
            rate_k[i] = rate_distance_rule(links.rx_power, ks, config.sigma2, config.w)
        if ts:
            rate_t[i], count_t[i] = rate_power_rule(links.rx_power, ts_arr, config.sigma2, config.w)
            # by exchange symmetry: users served by one station at the origin
            h = g.standard_exponential(UE_DRAWS_PER_TRIAL)
            a = sample_alpha(law, g, UE_DRAWS_PER_TRIAL)
            rho2 = (config.p_s * h[None, :] / ts_arr[:, None]) ** (2.0 / a[None, :])
            ue_area[i] = math.pi * np.minimum(rho2, radius * radius).mean(axis=1)


def simulate(
    config: NetworkConfig,
    law: PathLossLaw,
    plan: McPlan,
    ks: Sequence[int] = (),
    ts: Sequence[float] = (),
) -> TrialTable:
    """Run ``plan.n_trials`` trials evaluating every distance rule in ``ks`` and threshold in ``ts``."""
    validate(config, law)
    ks = tuple(int(k) for k in ks)
    ts = tuple(float(t) for t in ts)
    for k in ks:
        DistanceK(k)
    for t in ts:
        PowerThreshold(t)
    n = plan.n_trials
    out = (
        np.zeros((n, len(ks))),
        np.zeros((n, len(ts))),
        np.zeros((n, len(ts)), dtype=np.int64),
        np.zeros((n, len(ts))),
        np.zeros(n, dtype=np.int64),
    )
    workers = resolve_workers(plan)
    n_chunks = max(1, min(n // 100, 4 * workers))
    bounds = np.linspace(0, n, n_chunks + 1).astype(int)
    args = [(int(lo), int(hi), config, law, plan, ks, ts, out) for lo, hi in zip(bounds[:-1], bounds[1:])]
    if workers == 1:
        for a in args:
            _run_chunk(*a)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda a: _run_chunk(*a), args))
    exhausted = int(np.sum(out[4] < max(ks))) if ks else 0
    if exhausted:
        log.warning(
            "%d of %d trials had fewer than k=%d stations in the %.0f m window",
            exhausted, n, max(ks), plan.window_radius,
        )
    return TrialTable(config, law, plan, ks, ts, *out, exhausted=exhausted)


def estimate_rate(strategy: Strategy, config: NetworkConfig, law: PathLossLaw, plan: McPlan) -> Estimate:
    """Average achievable rate (nats) of one cooperation rule."""
    if isinstance(strategy, DistanceK):
        return simulate(config, law, plan, ks=(strategy.k,)).rate(strategy)
    if isinstance(strategy, PowerThreshold):
        return simulate(config, law, plan, ts=(strategy.t,)).rate(strategy)
    raise TypeError(f"unknown strategy {strategy!r}")


def estimate_coop_count(t: float, config: NetworkConfig, law: PathLossLaw, plan: McPlan) -> Estimate:
    """Mean number of stations received at or above ``t`` watts."""
    return simulate(config, law, plan, ts=(t,)).coop_count(t)


def estimate_ue_per_sbs(t: float, config: NetworkConfig, law: PathLossLaw, plan: McPlan) -> Estimate:
    """Mean number of users a station serves under threshold ``t``.

    Sampled from ``(fading, exponent)`` pairs; no user process is drawn.
    """
    return simulate(config, law, plan, ts=(t,)).ue_per_sbs(t)


def estimate_energy_efficiency(t: float, config: NetworkConfig, law: PathLossLaw, plan: McPlan) -> Estimate:
    """Network energy efficiency (nats per joule per unit bandwidth) under threshold ``t``."""
    return simulate(config, law, plan, ts=(t,)).energy_efficiency(t)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


class RateGain(NamedTuple):
    k_matched: int
    tau_d: Estimate
    tau_p: Estimate
    g: float


def rate_gain(tau_d: float, tau_p: float) -> float:
    """Relative improvement of the threshold rule over the distance rule."""
    return (float(tau_p) - float(tau_d)) / float(tau_d)


def estimate_rate_gain(
    t: float, config: NetworkConfig, law: PathLossLaw, plan: McPlan, rounding: str = "half_up"
) -> RateGain:
    """Compare the threshold rule with the distance rule at the matched cooperative-set size."""
    first = simulate(config, law, plan, ts=(t,))
    mean_count = first.coop_count(t).value
    if rounding == "half_up":
        k = round_half_up(mean_count)
    elif rounding == "floor":
        k = int(math.floor(mean_count))
    elif rounding == "ceil":
        k = int(math.ceil(mean_count))
    else:
        raise ValueError(f"unknown rounding {rounding!r}")
    if k < 1:
        raise ValueError(
            f"mean cooperative count {mean_count:.3g} rounds to {k}; no matched distance rule exists"
        )
    tau_p = first.rate(PowerThreshold(t))
    tau_d = simulate(config, law, plan, ks=(k,)).rate(DistanceK(k))
    return RateGain(k, tau_d, tau_p, rate_gain(tau_d.value, tau_p.value))


class TruncationCheck(NamedTuple):
    passed: bool
    base: Estimate
    doubled: Estimate
    change: float


def truncation_check(strategy: Strategy, config: NetworkConfig, law: PathLossLaw, plan: McPlan) -> TruncationCheck:
    """Re-estimate the rate with twice the window radius.

    Passes when the change is below the base estimate's confidence half-width.
    """
    base = estimate_rate(strategy, config, law, plan)
    doubled = estimate_rate(strategy, config, law, plan.replace(window_radius=2 * plan.window_radius))
    change = abs(doubled.value - base.value)
    passed = change < base.half_width
    if not passed:
        log.warning(
            "window truncation check failed for %s: rate moved by %.4g (half-width %.4g) when the "
            "window grew from %.0f m to %.0f m",
            getattr(strategy, "label", strategy), change, base.half_width,
            plan.window_radius, 2 * plan.window_radius,
        )
    return TruncationCheck(passed, base, doubled, change)
