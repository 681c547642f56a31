"""Cooperative-set selection and the per-realization SINR and rate.

Cooperating stations add their received powers (no joint precoding gain).
Under the distance rule a far station can still deliver more power than a
near one, because every link draws its own path-loss exponent.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .channel import Links
from .model import DistanceK, NetworkConfig, PowerThreshold, Strategy

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Partition:
    """Disjoint split of all links into cooperating and interfering stations."""

    coop: Links
    interf: Links

    @property
    def signal_power(self) -> float:
        return self.coop.total_power

    @property
    def interference_power(self) -> float:
        return self.interf.total_power


def select_distance(links: Links, k: int) -> Partition:
    """The ``k`` nearest links cooperate; ``links`` must already be sorted by distance."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > len(links):
        log.warning("only %d stations in the window, fewer than k=%d", len(links), k)
    return Partition(links.subset(slice(0, k)), links.subset(slice(k, None)))


def select_power(links: Links, t: float) -> Partition:
    """Links whose instantaneous received power is at least ``t`` watts cooperate."""
    if not t > 0:
        raise ValueError("threshold must be positive")
    member = links.rx_power >= t
    return Partition(links.subset(member), links.subset(~member))


def select(links: Links, strategy: Strategy) -> Partition:
    if isinstance(strategy, DistanceK):
        return select_distance(links, strategy.k)
    if isinstance(strategy, PowerThreshold):
        return select_power(links, strategy.t)
    raise TypeError(f"unknown strategy {strategy!r}")


def sinr(p: Partition, sigma2: float) -> float:
    """Signal over interference-plus-noise; ``inf`` when both denominators vanish."""
    if sigma2 < 0:
        raise ValueError("noise power must be nonnegative")
    signal = p.signal_power
    if signal == 0:
        return 0.0
    denom = p.interference_power + sigma2
    if denom == 0:
        return math.inf
    return signal / denom


def inst_rate(p: Partition, config: NetworkConfig) -> float:
    """``w * ln(1 + SINR)`` in nats; zero for an empty cooperative set."""
    return config.w * math.log1p(sinr(p, config.sigma2))


def coop_count(p: Partition) -> int:
    return len(p.coop)


def rate_distance_rule(rx_power: np.ndarray, ks, sigma2: float, w: float = 1.0) -> np.ndarray:
    """Rates for several distance rules on one realization.

    ``rx_power`` must be in distance order. Equivalent to
    ``inst_rate(select_distance(links, k))`` for each ``k``.
    """
    ks = np.asarray(ks, dtype=int)
    n = len(rx_power)
    csum = np.concatenate(([0.0], np.cumsum(rx_power)))
    tail = np.concatenate((np.cumsum(rx_power[::-1])[::-1], [0.0]))
    take = np.minimum(ks, n)
    signal = csum[take]
    interf = tail[take]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(signal > 0, signal / (interf + sigma2), 0.0)
    return w * np.log1p(ratio)


def rate_power_rule(rx_power: np.ndarray, ts, sigma2: float, w: float = 1.0):
    """Rates and cooperative-set sizes for several power thresholds on one realization."""
    ts = np.asarray(ts, dtype=float)
    member = rx_power[None, :] >= ts[:, None]
    signal = np.where(member, rx_power[None, :], 0.0).sum(axis=1)
    interf = np.where(member, 0.0, rx_power[None, :]).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(signal > 0, signal / (interf + sigma2), 0.0)
    return w * np.log1p(ratio), member.sum(axis=1)
