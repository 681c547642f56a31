"""Scenario files: loading, validation and the resolved form written to summaries.

A scenario is a mapping with up to five sections::

    network:    lambda_b | c_b, lambda_u | c_u, p_s, w, sigma2 | sigma2_dbm, p0, delta_p, area_s
    pathloss:   shape, scale, alpha_min
    mc:         n_trials, seed, window_radius, batch_size, workers
    quad:       rel_tol, abs_tol, s_max, r_max, alpha_max, n_alpha, fading_level,
                radial_step, max_refinements
    experiment: name, engines, sweep, truncation_check, form

``c_b`` sets the station intensity to ``1 / (c_b**2 * pi)`` and ``c_u`` the
user intensity to ``1 / (c_u * pi)``. ``quad.r_max`` defaults to
``mc.window_radius`` so both engines describe the same window. YAML and JSON
are both accepted; a run summary is itself a valid scenario.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from .analytic import FORMS, QuadSpec
from .model import ConfigError, NetworkConfig, PathLossLaw, dbm_to_watt, intensity_from_c, validate
from .montecarlo import McPlan

ENGINES = ("mc", "analytic")
METRICS = ("rate_distance", "rate_power", "coop_count", "ue_per_sbs", "energy_efficiency")
EXPERIMENTS = ("fig2", "fig3", "fig4", "fig5", "table1", "custom")

# thresholds paired with K = 1..6 in the comparison table
TABLE1_PAIRS = ((1, -22.0), (2, -28.0), (3, -32.0), (4, -35.0), (5, -37.0), (6, -39.0))
TABLE1_REFERENCE = {
    1: (0.2237, 1.722, 7.00),
    2: (0.3129, 2.606, 7.32),
    3: (0.3727, 3.291, 7.83),
    4: (0.4389, 3.713, 7.45),
    5: (0.4929, 4.138, 7.39),
    6: (0.5466, 4.478, 7.20),
}


@dataclass(frozen=True)
class Sweep:
    """Grid of one experiment: every metric is evaluated on every curve.

    A curve is one station intensity given as ``c`` in ``1 / (c**2 pi)``.
    Threshold metrics run over ``t_dbm`` and the distance rule over ``k``.
    """

    metrics: tuple[str, ...]
    c_b: tuple[float, ...]
    t_dbm: tuple[float, ...] = ()
    k: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.metrics:
            raise ConfigError({"experiment.sweep.metrics": "at least one metric is required"})
        bad = [m for m in self.metrics if m not in METRICS]
        if bad:
            raise ConfigError({"experiment.sweep.metrics": f"unknown metrics {bad}; choose from {METRICS}"})
        if not self.c_b or any(not c > 0 for c in self.c_b):
            raise ConfigError({"experiment.sweep.c_b": "need at least one positive intensity parameter"})
        needs_t = any(m != "rate_distance" for m in self.metrics)
        if needs_t and not self.t_dbm:
            raise ConfigError({"experiment.sweep.t_dbm": "threshold metrics need a nonempty threshold list"})
        if "rate_distance" in self.metrics and not self.k:
            raise ConfigError({"experiment.sweep.k": "the distance rule needs a nonempty k list"})
        if any(int(k) != k or k < 1 for k in self.k):
            raise ConfigError({"experiment.sweep.k": "k values must be positive integers"})
        if any(not math.isfinite(t) for t in self.t_dbm):
            raise ConfigError({"experiment.sweep.t_dbm": "thresholds must be finite"})

    @property
    def thresholds(self) -> tuple[float, ...]:
        return tuple(dbm_to_watt(t) for t in self.t_dbm)


PRESETS: dict[str, Sweep] = {
    "fig2": Sweep(("coop_count", "ue_per_sbs"), (100.0, 50.0), tuple(float(t) for t in range(-45, -19, 5))),
    "fig3": Sweep(("rate_distance",), (100.0, 50.0, 20.0), (), (1, 2, 3, 4, 5, 6)),
    "fig4": Sweep(("rate_power",), (100.0, 50.0, 20.0), tuple(float(t) for t in range(-40, -19, 4))),
    "fig5": Sweep(("energy_efficiency",), (100.0, 50.0), tuple(float(t) for t in range(-45, -4, 5))),
    "table1": Sweep(("rate_distance", "rate_power", "coop_count"), (50.0,),
                    tuple(t for _, t in TABLE1_PAIRS), tuple(k for k, _ in TABLE1_PAIRS)),
}


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    sweep: Sweep
    engines: tuple[str, ...]
    network: NetworkConfig
    law: PathLossLaw
    mc_plan: McPlan
    quad_spec: QuadSpec
    output_dir: Path | None = None
    truncation_check: bool = False
    form: str = "exact"

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ConfigError({"experiment.name": f"unknown experiment {self.name!r}; choose from {EXPERIMENTS}"})
        if not self.engines:
            raise ConfigError({"experiment.engines": "at least one engine is required"})
        bad = [e for e in self.engines if e not in ENGINES]
        if bad:
            raise ConfigError({"experiment.engines": f"unknown engines {bad}; choose from {ENGINES}"})
        if self.form not in FORMS:
            raise ConfigError({"experiment.form": f"form must be one of {FORMS}"})
        if self.name == "table1" and set(self.sweep.k) != {k for k, _ in TABLE1_PAIRS}:
            raise ConfigError({"experiment.sweep": "table1 uses its fixed (K, T) pairs"})
        validate(self.network, self.law)

    def network_for(self, c_b: float) -> NetworkConfig:
        return self.network.replace(lambda_b=intensity_from_c(c_b))

    def to_dict(self) -> dict[str, Any]:
        """Resolved scenario in the file schema; loading it reproduces this spec."""
        return {
            "network": asdict(self.network),
            "pathloss": asdict(self.law),
            "mc": asdict(self.mc_plan),
            "quad": {k: _finite_or_text(v) if isinstance(v, float) else v
                     for k, v in asdict(self.quad_spec).items()},
            "experiment": {
                "name": self.name,
                "engines": list(self.engines),
                "sweep": {
                    "metrics": list(self.sweep.metrics),
                    "c_b": list(self.sweep.c_b),
                    "t_dbm": list(self.sweep.t_dbm),
                    "k": list(self.sweep.k),
                },
                "truncation_check": self.truncation_check,
                "form": self.form,
            },
        }


_SECTIONS = ("network", "pathloss", "mc", "quad", "experiment")


def _section(raw: Mapping, name: str) -> dict:
    value = raw.get(name) or {}
    if not isinstance(value, Mapping):
        raise ConfigError({name: "section must be a mapping"})
    return dict(value)


def _take(section: dict, allowed, where: str) -> dict:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError({where: f"unknown keys {unknown}"})
    return section


def _exclusive(section: dict, a: str, b: str, where: str) -> None:
    if a in section and b in section:
        raise ConfigError({f"{where}.{a}": f"give either {a} or {b}, not both"})


def _network(section: dict) -> NetworkConfig:
    names = {f.name for f in fields(NetworkConfig)}
    _take(section, names | {"c_b", "c_u", "sigma2_dbm"}, "network")
    _exclusive(section, "lambda_b", "c_b", "network")
    _exclusive(section, "lambda_u", "c_u", "network")
    _exclusive(section, "sigma2", "sigma2_dbm", "network")
    if "c_b" in section:
        section["lambda_b"] = intensity_from_c(float(section.pop("c_b")))
    if "c_u" in section:
        section["lambda_u"] = 1.0 / (float(section.pop("c_u")) * math.pi)
    if "sigma2_dbm" in section:
        section["sigma2"] = dbm_to_watt(float(section.pop("sigma2_dbm")))
    try:
        return NetworkConfig(**{k: float(v) for k, v in section.items()})
    except ValueError as exc:
        raise ConfigError({"network": str(exc)}) from exc


def _plain(cls, section: dict, where: str):
    _take(section, {f.name for f in fields(cls)}, where)
    for f in fields(cls):
        # PyYAML reads "1e-10" and "inf" as strings
        if isinstance(f.default, float) and isinstance(section.get(f.name), str):
            try:
                section[f.name] = float(section[f.name])
            except ValueError as exc:
                raise ConfigError({f"{where}.{f.name}": f"not a number: {section[f.name]!r}"}) from exc
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError({where: str(exc)}) from exc


def _tuple(value, cast) -> tuple:
    if value is None:
        return ()
    if isinstance(value, (int, float, str)):
        value = [value]
    return tuple(cast(v) for v in value)


def _engines(value) -> tuple[str, ...]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    return tuple(str(v).strip() for v in value)


def _sweep(name: str, raw: Mapping | None) -> Sweep:
    base = PRESETS.get(name)
    raw = dict(raw or {})
    _take(raw, {"metrics", "c_b", "t_dbm", "k"}, "experiment.sweep")
    if base is None and not raw:
        raise ConfigError({"experiment.sweep": "the custom experiment needs a sweep"})
    values = asdict(base) if base is not None else {"metrics": (), "c_b": (), "t_dbm": (), "k": ()}
    for key, cast in (("metrics", str), ("c_b", float), ("t_dbm", float), ("k", int)):
        if key in raw:
            values[key] = _tuple(raw[key], cast)
    return Sweep(**{k: tuple(v) for k, v in values.items()})


def spec_from_mapping(raw: Mapping | None, overrides: Mapping | None = None) -> ExperimentSpec:
    """Build an :class:`ExperimentSpec` from a parsed scenario.

    ``overrides`` carries command-line values (``name``, ``engines``,
    ``n_trials``, ``seed``, ``output_dir``, ``truncation_check``) and wins over the file.
    A run summary is accepted as-is: its ``config`` entry is used.
    """
    raw = dict(raw or {})
    if "config" in raw and isinstance(raw["config"], Mapping):
        raw = dict(raw["config"])
    unknown = sorted(set(raw) - set(_SECTIONS))
    if unknown:
        raise ConfigError({"config": f"unknown sections {unknown}; expected {_SECTIONS}"})
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    network = _network(_section(raw, "network"))
    law = _plain(PathLossLaw, _section(raw, "pathloss"), "pathloss")
    mc = _section(raw, "mc")
    for key in ("n_trials", "seed"):
        if key in overrides:
            mc[key] = overrides[key]
    plan = _plain(McPlan, mc, "mc")
    quad = _section(raw, "quad")
    quad.setdefault("r_max", plan.window_radius)
    quad_spec = _plain(QuadSpec, quad, "quad")

    exp = _take(_section(raw, "experiment"),
                {"name", "engines", "sweep", "truncation_check", "form"}, "experiment")
    name = overrides.get("name", exp.get("name", "custom"))
    engines = _engines(overrides.get("engines", exp.get("engines", ENGINES)))
    output_dir = overrides.get("output_dir")
    spec = ExperimentSpec(
        name=name,
        sweep=_sweep(name, exp.get("sweep")),
        engines=engines,
        network=network,
        law=law,
        mc_plan=plan,
        quad_spec=quad_spec,
        output_dir=Path(output_dir) if output_dir is not None else None,
        truncation_check=bool(overrides.get("truncation_check", exp.get("truncation_check", False))),
        form=str(exp.get("form", "exact")),
    )
    return spec


def _finite_or_text(value):
    return value if math.isfinite(value) else str(value)


def load_mapping(path: str | Path) -> dict:
    """Parse a JSON or YAML scenario file."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise ConfigError({"config": f"{path} does not hold a mapping"})
    return dict(data)


def load_spec(path: str | Path | None, **overrides) -> ExperimentSpec:
    return spec_from_mapping(load_mapping(path) if path is not None else {}, overrides)


def with_plan(spec: ExperimentSpec, **changes) -> ExperimentSpec:
    return replace(spec, mc_plan=spec.mc_plan.replace(**changes))
