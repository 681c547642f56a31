"""Per-link channel state: random path-loss exponents, Rayleigh fading, received power."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .model import NetworkConfig, PathLossLaw
from .pointprocess import Deployment, distances
from .streams import as_generator

log = logging.getLogger(__name__)


class Link(NamedTuple):
    distance: float
    fading: float
    alpha: float
    rx_power: float


@dataclass(frozen=True, eq=False)
class Links:
    """Links to every base station of a deployment, sorted by distance.

    Stored column-wise; indexing or iterating yields :class:`Link` records.
    ``rx_power`` is always ``p_s * fading * distance ** -alpha``.
    """

    distance: np.ndarray
    fading: np.ndarray
    alpha: np.ndarray
    rx_power: np.ndarray

    @classmethod
    def build(cls, distance, fading, alpha, p_s: float, sort: bool = True) -> "Links":
        r = np.atleast_1d(np.asarray(distance, dtype=float))
        h = np.broadcast_to(np.asarray(fading, dtype=float), r.shape).copy()
        a = np.broadcast_to(np.asarray(alpha, dtype=float), r.shape).copy()
        if np.any(r <= 0):
            raise ValueError("link distances must be positive")
        if np.any(h < 0):
            raise ValueError("fading gains must be nonnegative")
        if sort:
            order = np.argsort(r, kind="stable")
            r, h, a = r[order], h[order], a[order]
        return cls(r, h, a, p_s * h * r ** (-a))

    @classmethod
    def empty(cls) -> "Links":
        z = np.empty(0)
        return cls(z, z, z, z)

    def subset(self, mask_or_index) -> "Links":
        return Links(
            self.distance[mask_or_index],
            self.fading[mask_or_index],
            self.alpha[mask_or_index],
            self.rx_power[mask_or_index],
        )

    def __len__(self) -> int:
        return len(self.distance)

    def __getitem__(self, i: int) -> Link:
        return Link(
            float(self.distance[i]), float(self.fading[i]), float(self.alpha[i]), float(self.rx_power[i])
        )

    def __iter__(self) -> Iterator[Link]:
        for i in range(len(self)):
            yield self[i]

    @property
    def total_power(self) -> float:
        return float(self.rx_power.sum())


def gamma_pdf(alpha, law: PathLossLaw):
    """Density of the exponent law, renormalized on ``alpha > alpha_min``."""
    a = np.asarray(alpha, dtype=float)
    dist = law.frozen()
    out = np.where(a > law.alpha_min, dist.pdf(a) / dist.sf(law.alpha_min), 0.0)
    return float(out) if out.ndim == 0 else out


def gamma_cdf(alpha, law: PathLossLaw):
    """CDF of the truncated exponent law."""
    a = np.asarray(alpha, dtype=float)
    dist = law.frozen()
    lo = dist.cdf(law.alpha_min)
    out = np.clip((dist.cdf(a) - lo) / (1.0 - lo), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def sample_alpha(law: PathLossLaw, rng=None, size=None):
    """Draw exponents from the truncated law by rejection against the plain Gamma sampler."""
    g = as_generator(rng)
    n = 1 if size is None else int(np.prod(size))
    a = g.gamma(law.shape, law.scale, n)
    bad = a <= law.alpha_min
    while bad.any():
        a[bad] = g.gamma(law.shape, law.scale, int(bad.sum()))
        bad = a <= law.alpha_min
    return float(a[0]) if size is None else a.reshape(size)


def sample_fading(rng=None, size=None):
    """Unit-mean exponential power gain (Rayleigh fading)."""
    g = as_generator(rng)
    return g.standard_exponential(size) if size is not None else float(g.standard_exponential())


def make_links(d: Deployment, config: NetworkConfig, law: PathLossLaw, rng=None) -> Links:
    """Draw fading and exponent for every point of ``d`` and return links sorted by distance.

    Draws are made in the deployment's sampling order, fading first.
    """
    g = as_generator(rng)
    n = len(d)
    if n == 0:
        return Links.empty()
    h = g.standard_exponential(n)
    a = sample_alpha(law, g, n)
    return Links.build(distances(d), h, a, config.p_s)
