"""Base-station cooperation in small-cell networks with random path-loss exponents.

Two engines evaluate the same model: a Monte Carlo simulator
(:mod:`fractalcomp.montecarlo`) and a quadrature engine
(:mod:`fractalcomp.analytic`).
"""
from .analytic import (
    QuadSpec,
    energy_efficiency,
    laplace_id,
    laplace_ip,
    laplace_pd,
    laplace_pp,
    mean_coop_count,
    mean_ue_per_sbs,
    rate_distance,
    rate_power,
)
from .model import (
    ConfigError,
    DistanceK,
    Estimate,
    Method,
    NetworkConfig,
    PathLossLaw,
    PowerThreshold,
    dbm_to_watt,
    intensity_from_c,
    validate,
    watt_to_dbm,
)
from .montecarlo import (
    McPlan,
    estimate_coop_count,
    estimate_energy_efficiency,
    estimate_rate,
    estimate_rate_gain,
    estimate_ue_per_sbs,
    simulate,
    truncation_check,
)
from .quadrature import QuadratureError

__all__ = [
    "ConfigError", "DistanceK", "Estimate", "McPlan", "Method", "NetworkConfig", "PathLossLaw",
    "PowerThreshold", "QuadSpec", "QuadratureError", "dbm_to_watt", "energy_efficiency",
    "estimate_coop_count", "estimate_energy_efficiency", "estimate_rate", "estimate_rate_gain",
    "estimate_ue_per_sbs", "intensity_from_c", "laplace_id", "laplace_ip", "laplace_pd", "laplace_pp",
    "mean_coop_count", "mean_ue_per_sbs", "rate_distance", "rate_power", "simulate",
    "truncation_check", "validate", "watt_to_dbm",
]
