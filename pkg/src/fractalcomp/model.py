"""Domain types, unit conversions and configuration validation.

Distances are in meters, powers in watts, and path loss is ``r ** -alpha``
with an implicit 1 m reference distance. Rates are in nats per unit bandwidth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Union


class ConfigError(ValueError):
    """Raised when a configuration violates one or more invariants.

    ``violations`` maps each offending field name to a short message.
    """

    def __init__(self, violations: dict[str, str]):
        self.violations = dict(violations)
        detail = "; ".join(f"{k}: {v}" for k, v in self.violations.items())
        super().__init__(f"invalid configuration ({detail})")

    @property
    def fields(self) -> list[str]:
        return list(self.violations)


def dbm_to_watt(x_dbm: float) -> float:
    """Convert a power level in dBm to watts."""
    x = float(x_dbm)
    if not math.isfinite(x):
        raise ValueError(f"power level must be finite, got {x_dbm!r}")
    return 10.0 ** ((x - 30.0) / 10.0)


def watt_to_dbm(x_watt: float) -> float:
    if not x_watt > 0:
        raise ValueError(f"power must be positive, got {x_watt!r}")
    return 10.0 * math.log10(x_watt) + 30.0


def intensity_from_c(c: float) -> float:
    """Intensity ``1 / (c**2 * pi)``: one point per disk of radius ``c`` meters."""
    if not c > 0:
        raise ValueError(f"c must be positive, got {c!r}")
    return 1.0 / (c * c * math.pi)


@dataclass(frozen=True)
class NetworkConfig:
    """Scenario parameters shared by the simulator and the quadrature engine.

    ``area_s`` is carried for completeness only; it cancels in the energy
    efficiency ratio and is never multiplied in.
    """

    lambda_b: float = intensity_from_c(50.0)
    lambda_u: float = 1.0 / (300.0 * math.pi)
    p_s: float = 0.13
    w: float = 1.0
    sigma2: float = dbm_to_watt(-95.0)
    p0: float = 2.5
    delta_p: float = 4.0
    area_s: float = 1.0

    def replace(self, **changes) -> "NetworkConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return NetworkConfig(**values)

    def scaled_power(self, factor: float) -> "NetworkConfig":
        """Same scenario with transmit and noise power multiplied by ``factor``."""
        return self.replace(p_s=self.p_s * factor, sigma2=self.sigma2 * factor)


@dataclass(frozen=True)
class PathLossLaw:
    """Gamma law for the per-link path-loss exponent, truncated to ``alpha > alpha_min``.

    The default (shape 9, scale 0.5) has mean 4.5 and puts about 0.75 of its
    mass in [2, 5.5]. Use :meth:`from_rate` for the rate parameterization.
    """

    shape: float = 9.0
    scale: float = 0.5
    alpha_min: float = 2.0

    @classmethod
    def from_rate(cls, shape: float, rate: float, alpha_min: float = 2.0) -> "PathLossLaw":
        return cls(shape=shape, scale=1.0 / rate, alpha_min=alpha_min)

    @property
    def rate(self) -> float:
        return 1.0 / self.scale

    def frozen(self):
        """The untruncated ``scipy.stats`` Gamma distribution."""
        from scipy import stats

        return stats.gamma(self.shape, scale=self.scale)

    def truncation_mass(self) -> float:
        """Probability mass of the untruncated law at or below ``alpha_min``."""
        return float(self.frozen().cdf(self.alpha_min))


@dataclass(frozen=True)
class DistanceK:
    """Cooperate with the ``k`` nearest base stations."""

    k: int

    def __post_init__(self):
        if isinstance(self.k, bool) or int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))

    @property
    def label(self) -> str:
        return f"distance_k={self.k}"


@dataclass(frozen=True)
class PowerThreshold:
    """Cooperate with every base station whose received power is at least ``t`` watts."""

    t: float

    def __post_init__(self):
        if not (self.t > 0):
            raise ValueError(f"threshold must be positive, got {self.t!r}")
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def from_dbm(cls, t_dbm: float) -> "PowerThreshold":
        return cls(dbm_to_watt(t_dbm))

    @property
    def label(self) -> str:
        return f"power_t={self.t:.6g}"


Strategy = Union[DistanceK, PowerThreshold]


class Method(str, Enum):
    MONTE_CARLO = "mc"
    QUADRATURE = "analytic"


@dataclass(frozen=True)
class Estimate:
    """A point estimate with its uncertainty.

    For Monte Carlo results ``half_width`` is a 95% confidence half-width; for
    quadrature results it is the error bound of the numerical integration.
    """

    value: float
    half_width: float
    n_trials: int = 0
    method: Method = Method.QUADRATURE
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not self.half_width >= 0:
            raise ValueError(f"half_width must be nonnegative, got {self.half_width!r}")

    @property
    def std_error(self) -> float:
        """Standard error for MC estimates; the error bound itself for quadrature."""
        if self.method is Method.MONTE_CARLO:
            return self.half_width / 1.96
        return self.half_width

    def __float__(self) -> float:
        return float(self.value)


def _check(violations: dict, name: str, ok: bool, message: str) -> None:
    if not ok:
        violations[name] = message


def config_violations(config: NetworkConfig, law: PathLossLaw) -> dict[str, str]:
    """Return ``{field: message}`` for every violated invariant (empty when valid)."""
    v: dict[str, str] = {}

    def finite(x):
        return isinstance(x, (int, float)) and math.isfinite(x)

    _check(v, "lambda_b", finite(config.lambda_b) and config.lambda_b > 0, "must be > 0")
    _check(v, "lambda_u", finite(config.lambda_u) and config.lambda_u > 0, "must be > 0")
    _check(v, "p_s", finite(config.p_s) and config.p_s > 0, "must be > 0")
    _check(v, "w", finite(config.w) and config.w > 0, "must be > 0")
    _check(v, "sigma2", finite(config.sigma2) and config.sigma2 >= 0, "must be >= 0")
    _check(v, "p0", finite(config.p0) and config.p0 >= 0, "must be >= 0")
    _check(v, "delta_p", finite(config.delta_p) and config.delta_p >= 0, "must be >= 0")
    _check(v, "area_s", finite(config.area_s) and config.area_s > 0, "must be > 0")
    _check(v, "shape", finite(law.shape) and law.shape > 0, "must be > 0")
    _check(v, "scale", finite(law.scale) and law.scale > 0, "must be > 0")
    _check(v, "alpha_min", finite(law.alpha_min) and law.alpha_min >= 2, "must be >= 2")
    return v


def validate(config: NetworkConfig, law: PathLossLaw) -> NetworkConfig:
    """Return ``config`` unchanged if it and ``law`` are valid, else raise :class:`ConfigError`."""
    violations = config_violations(config, law)
    if violations:
        raise ConfigError(violations)
    return config
