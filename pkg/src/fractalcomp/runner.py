"""Sweep execution, result files and the cross-engine comparison."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, NamedTuple

from . import analytic
from .config import TABLE1_PAIRS, TABLE1_REFERENCE, ExperimentSpec
from .model import DistanceK, Estimate, PowerThreshold, dbm_to_watt
from .montecarlo import McPlan, TrialTable, resolve_workers, round_half_up, simulate
from .quadrature import QuadratureError

log = logging.getLogger(__name__)

CSV_COLUMNS = ("param_name", "param_value", "metric", "value", "half_width", "n_trials", "seed")
GAIN_BAND = (0.5, 2.0)


class Row(NamedTuple):
    param_name: str
    param_value: str
    metric: str
    value: float
    half_width: float
    n_trials: int
    seed: str

    @property
    def key(self) -> tuple[str, str, str]:
        return self.param_name, self.param_value, self.metric


class GridMismatchError(ValueError):
    def __init__(self, only_mc: list, only_analytic: list):
        self.only_mc = only_mc
        self.only_analytic = only_analytic
        super().__init__(
            f"sweep grids differ: {len(only_mc)} point(s) only in the MC file {only_mc[:5]}, "
            f"{len(only_analytic)} only in the analytic file {only_analytic[:5]}"
        )


def _fmt(x: float) -> str:
    return repr(float(x))


def _axis(metric: str) -> str:
    return "k" if metric == "rate_distance" else "t_dbm"


def _param_name(c_b: float, metric: str) -> str:
    # the curve parameter rides along in the name; the swept one is last
    return f"c_b={_fmt(c_b)};{_axis(metric)}"


def _points(spec: ExperimentSpec, metric: str) -> list:
    if metric == "rate_distance":
        return list(spec.sweep.k)
    return list(spec.sweep.t_dbm)


def _param_value(metric: str, p) -> str:
    return str(int(p)) if metric == "rate_distance" else _fmt(p)


# --- engines -------------------------------------------------------------------

def _table_estimate(table: TrialTable, metric: str, p) -> Estimate:
    if metric == "rate_distance":
        return table.rate(DistanceK(int(p)))
    t = dbm_to_watt(p)
    if metric == "rate_power":
        return table.rate(PowerThreshold(t))
    if metric == "coop_count":
        return table.coop_count(t)
    if metric == "ue_per_sbs":
        return table.ue_per_sbs(t)
    if metric == "energy_efficiency":
        return table.energy_efficiency(t)
    raise ValueError(f"unknown metric {metric!r}")


def _simulate_curve(spec: ExperimentSpec, c_b: float, plan: McPlan) -> TrialTable:
    metrics = spec.sweep.metrics
    ks = spec.sweep.k if "rate_distance" in metrics else ()
    ts = spec.sweep.thresholds if any(m != "rate_distance" for m in metrics) else ()
    return simulate(spec.network_for(c_b), spec.law, plan, ks=ks, ts=ts)


def _analytic_call(spec: ExperimentSpec, metric: str) -> Callable:
    q, law, form = spec.quad_spec, spec.law, spec.form
    calls = {
        "rate_distance": lambda p, cfg: analytic.rate_distance(int(p), cfg, law, q, form=form),
        "rate_power": lambda p, cfg: analytic.rate_power(dbm_to_watt(p), cfg, law, q),
        "coop_count": lambda p, cfg: analytic.mean_coop_count(dbm_to_watt(p), cfg, law, q),
        "ue_per_sbs": lambda p, cfg: analytic.mean_ue_per_sbs(dbm_to_watt(p), cfg, law, q),
        "energy_efficiency": lambda p, cfg: analytic.energy_efficiency(dbm_to_watt(p), cfg, law, q),
    }
    return calls[metric]


@dataclass
class RunResult:
    rows: dict[tuple[str, str], list[Row]] = field(default_factory=dict)  # (engine, metric) -> rows
    timing: list[dict] = field(default_factory=list)
    truncation: list[dict] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    comparisons: dict[str, dict] = field(default_factory=dict)
    table1: dict[str, list[dict]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures


def _run_mc(spec: ExperimentSpec, result: RunResult) -> None:
    plan = spec.mc_plan
    for c_b in spec.sweep.c_b:
        start = time.perf_counter()
        table = _simulate_curve(spec, c_b, plan)
        elapsed = time.perf_counter() - start
        log.info("mc curve c_b=%g: %d trials in %.1f s", c_b, plan.n_trials, elapsed)
        for metric in spec.sweep.metrics:
            rows = result.rows.setdefault(("mc", metric), [])
            for p in _points(spec, metric):
                est = _table_estimate(table, metric, p)
                rows.append(Row(_param_name(c_b, metric), _param_value(metric, p), metric,
                                est.value, est.half_width, est.n_trials, str(plan.seed)))
        # one simulation pass serves every point of the curve
        result.timing.append({"engine": "mc", "c_b": c_b, "points": "all", "seconds": elapsed})
        if spec.truncation_check:
            _check_truncation(spec, c_b, table, result)


def _check_truncation(spec: ExperimentSpec, c_b: float, base: TrialTable, result: RunResult) -> None:
    plan = spec.mc_plan
    doubled = _simulate_curve(spec, c_b, plan.replace(window_radius=2 * plan.window_radius))
    for metric in spec.sweep.metrics:
        for p in _points(spec, metric):
            b = _table_estimate(base, metric, p)
            d = _table_estimate(doubled, metric, p)
            change = abs(d.value - b.value)
            ok = change < b.half_width
            result.truncation.append({
                "c_b": c_b, "metric": metric, "param": p, "base": b.value, "doubled": d.value,
                "change": change, "half_width": b.half_width, "passed": ok,
            })
            if not ok:
                msg = (f"window truncation: {metric} at c_b={c_b:g}, {_axis(metric)}={p} moved by "
                       f"{change:.4g} (half-width {b.half_width:.4g}) when the window radius doubled "
                       f"to {2 * plan.window_radius:g} m")
                log.warning(msg)
                result.failures.append(msg)


def _run_analytic(spec: ExperimentSpec, result: RunResult) -> None:
    jobs = []
    for metric in spec.sweep.metrics:
        call = _analytic_call(spec, metric)
        for c_b in spec.sweep.c_b:
            cfg = spec.network_for(c_b)
            for p in _points(spec, metric):
                jobs.append((metric, c_b, p, call, cfg))

    def work(job):
        metric, c_b, p, call, cfg = job
        start = time.perf_counter()
        try:
            est = call(p, cfg)
            err = None
        except QuadratureError as exc:
            est = Estimate(exc.value, exc.error)
            err = str(exc)
        return est, err, time.perf_counter() - start

    workers = resolve_workers(spec.mc_plan)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(work, jobs))
    # emitted in job order regardless of completion order
    for (metric, c_b, p, _, _), (est, err, elapsed) in zip(jobs, outcomes):
        result.rows.setdefault(("analytic", metric), []).append(
            Row(_param_name(c_b, metric), _param_value(metric, p), metric, est.value, est.half_width, 0, ""))
        result.timing.append({"engine": "analytic", "c_b": c_b, "metric": metric, "param": p, "seconds": elapsed})
        if err:
            result.failures.append(err)


# --- comparison ----------------------------------------------------------------

def compare_rows(mc_rows: Iterable[Row], analytic_rows: Iterable[Row], n_sigma: float = 3.0) -> dict:
    """Per-point verdict ``|mc - analytic| <= analytic error + n_sigma * mc standard error``.

    Raises :class:`GridMismatchError` when the two sets of points differ.
    """
    mc = {r.key: r for r in mc_rows}
    an = {r.key: r for r in analytic_rows}
    only_mc = sorted(set(mc) - set(an))
    only_an = sorted(set(an) - set(mc))
    if only_mc or only_an:
        raise GridMismatchError(only_mc, only_an)
    points = []
    for key in mc:
        m, a = mc[key], an[key]
        allowed = a.half_width + n_sigma * m.half_width / 1.96
        gap = abs(m.value - a.value)
        ok = bool(gap <= allowed)
        points.append({
            "param_name": key[0], "param_value": key[1], "metric": key[2],
            "mc": m.value, "analytic": a.value, "gap": gap, "allowed": allowed,
            "margin": allowed - gap, "passed": ok,
        })
    n_pass = sum(p["passed"] for p in points)
    return {"points": points, "n_points": len(points), "n_passed": n_pass,
            "pass_rate": n_pass / len(points) if points else 1.0}


def read_csv(path: str | Path) -> list[Row]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        return [Row(r["param_name"], r["param_value"], r["metric"], float(r["value"]),
                    float(r["half_width"]), int(r["n_trials"]), r["seed"]) for r in reader]


def compare(mc_csv: str | Path, analytic_csv: str | Path, n_sigma: float = 3.0) -> dict:
    """Compare an MC result file with an analytic one point by point."""
    return compare_rows(read_csv(mc_csv), read_csv(analytic_csv), n_sigma)


# --- table ---------------------------------------------------------------------

def table1_rows(rows: dict[str, list[Row]]) -> list[dict]:
    """Pair the distance rule at K with the threshold rule at its listed T.

    ``k_matched`` is the nearest integer to the mean cooperative count at T,
    reported beside the fixed K so the pairing can be audited.
    """
    by = {m: {r.param_value: r for r in rs} for m, rs in rows.items()}
    out = []
    for k, t_dbm in TABLE1_PAIRS:
        a = by["rate_distance"][str(k)]
        b = by["rate_power"][_fmt(t_dbm)]
        count = by["coop_count"][_fmt(t_dbm)]
        g = (b.value - a.value) / a.value
        ref_a, ref_b, ref_g = TABLE1_REFERENCE[k]
        ratio = g / ref_g
        out.append({
            "K": k, "T_dbm": t_dbm, "rate_A": a.value, "rate_A_hw": a.half_width,
            "rate_B": b.value, "rate_B_hw": b.half_width, "g": g,
            "mean_coop_count": count.value, "k_matched": round_half_up(count.value),
            "ref_rate_A": ref_a, "ref_rate_B": ref_b, "ref_g": ref_g, "g_ratio": ratio,
            "outside_band": not GAIN_BAND[0] <= ratio <= GAIN_BAND[1],
        })
    return out


# --- run -----------------------------------------------------------------------

def _prepare_output(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_probe"
    probe.write_text("")
    probe.unlink()


def _write_csv(path: Path, rows: list[Row]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow((r.param_name, r.param_value, r.metric, _fmt(r.value), _fmt(r.half_width),
                             r.n_trials, r.seed))


def _write_dicts(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: _fmt(v) if isinstance(v, float) else v for k, v in r.items()})


def csv_path(out: Path, name: str, engine: str, metric: str) -> Path:
    return out / f"{name}_{engine}_{metric}.csv"


def run(spec: ExperimentSpec) -> RunResult:
    """Execute every engine over the sweep and write results to ``spec.output_dir``.

    Writes one CSV per engine and metric, ``table1_<engine>.csv`` for the
    table preset, and ``<name>_summary.json``. The output directory is checked
    for writability before any computation.
    """
    if spec.output_dir is None:
        raise ValueError("an output directory is required")
    out = Path(spec.output_dir)
    _prepare_output(out)
    result = RunResult()
    start = time.perf_counter()
    if "mc" in spec.engines:
        _run_mc(spec, result)
    if "analytic" in spec.engines:
        _run_analytic(spec, result)

    if set(spec.engines) == {"mc", "analytic"}:
        for metric in spec.sweep.metrics:
            verdict = compare_rows(result.rows[("mc", metric)], result.rows[("analytic", metric)])
            result.comparisons[metric] = verdict
            for p in verdict["points"]:
                if not p["passed"]:
                    result.failures.append(
                        f"{metric} at {p['param_name']}={p['param_value']}: engines differ by {p['gap']:.4g}, "
                        f"allowed {p['allowed']:.4g}")

    if spec.name == "table1":
        for engine in spec.engines:
            rows = {m: result.rows[(engine, m)] for m in spec.sweep.metrics}
            table = table1_rows(rows)
            result.table1[engine] = table
            for r in table:
                if not r["g"] > 0:
                    result.failures.append(f"table1 ({engine}): gain g={r['g']:.4g} is not positive at K={r['K']}")
                if r["outside_band"]:
                    log.warning("table1 (%s): K=%d gain %.3g is %.3gx the reference value",
                                engine, r["K"], r["g"], r["g_ratio"])

    files = []
    for (engine, metric), rows in result.rows.items():
        path = csv_path(out, spec.name, engine, metric)
        _write_csv(path, rows)
        files.append(path.name)
    for engine, table in result.table1.items():
        path = out / f"table1_{engine}.csv"
        _write_dicts(path, table)
        files.append(path.name)

    summary = {
        "config": spec.to_dict(),
        "files": files,
        "wall_clock_seconds": time.perf_counter() - start,
        "timing": result.timing,
        "truncation": result.truncation,
        "comparisons": {m: {k: v for k, v in c.items()} for m, c in result.comparisons.items()},
        "table1": result.table1,
        "failures": result.failures,
        "passed": result.passed,
    }
    with open(out / f"{spec.name}_summary.json", "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2)
    return result


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x
