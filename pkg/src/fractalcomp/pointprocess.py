"""Homogeneous Poisson deployments around a typical user at the origin."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .streams import as_generator


class Point(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True, eq=False)
class Deployment:
    """One realization of base-station locations inside a disk.

    ``xy`` is an ``(n, 2)`` float array; rows are in sampling order.
    """

    xy: np.ndarray
    window_radius: float

    def __post_init__(self):
        xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        if not self.window_radius > 0:
            raise ValueError("window_radius must be positive")
        if not np.all(np.isfinite(xy)):
            raise ValueError("point coordinates must be finite")
        if xy.size and np.max(np.hypot(xy[:, 0], xy[:, 1])) > self.window_radius * (1 + 1e-12):
            raise ValueError("all points must lie inside the window")
        xy.setflags(write=False)
        object.__setattr__(self, "xy", xy)

    @classmethod
    def from_points(cls, points, window_radius: float) -> "Deployment":
        return cls(np.array([tuple(p) for p in points], dtype=float).reshape(-1, 2), window_radius)

    @property
    def sbs_points(self) -> list[Point]:
        return [Point(float(x), float(y)) for x, y in self.xy]

    def __len__(self) -> int:
        return len(self.xy)


def sample_ppp(lam: float, radius: float, rng=None) -> Deployment:
    """Sample a homogeneous PPP of intensity ``lam`` (per m^2) in a disk of ``radius`` m."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius!r}")
    if not lam >= 0:
        raise ValueError(f"intensity must be nonnegative, got {lam!r}")
    g = as_generator(rng)
    n = g.poisson(lam * math.pi * radius * radius)
    r = radius * np.sqrt(g.random(n))
    theta = 2.0 * math.pi * g.random(n)
    xy = np.column_stack((r * np.cos(theta), r * np.sin(theta)))
    return Deployment(xy, radius)


def distances(d: Deployment) -> np.ndarray:
    """Distances from the origin in sampling order."""
    return np.hypot(d.xy[:, 0], d.xy[:, 1])


def distance_order(d: Deployment) -> np.ndarray:
    """Indices sorting points by distance; ties keep sampling order."""
    return np.argsort(distances(d), kind="stable")


def ordered_distances(d: Deployment) -> np.ndarray:
    """Nondecreasing distances from the origin."""
    r = distances(d)
    return r[np.argsort(r, kind="stable")]


def joint_pdf_kth(r_k, r_k1, lam: float, k: int):
    """Joint density of the k-th and (k+1)-th nearest distances of a PPP.

    ``4 (pi lam)^(k+1) / (k-1)! * r_k^(2k-1) * r_k1 * exp(-pi lam r_k1^2)`` on
    ``0 <= r_k <= r_k1``, zero elsewhere. Accepts scalars or arrays.
    """
    if not lam > 0:
        raise ValueError("intensity must be positive")
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    r1 = np.asarray(r_k, dtype=float)
    r2 = np.asarray(r_k1, dtype=float)
    a = math.pi * lam
    support = (r1 >= 0) & (r2 >= r1)
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        log_f = (
            math.log(4.0)
            + (k + 1) * math.log(a)
            - math.lgamma(k)
            + (2 * k - 1) * np.log(np.where(support, r1, 1.0))
            + np.log(np.where(support, r2, 1.0))
            - a * np.where(support, r2, 0.0) ** 2
        )
        out = np.where(support & (r1 > 0), np.exp(log_f), 0.0)
    return float(out) if out.ndim == 0 else out
