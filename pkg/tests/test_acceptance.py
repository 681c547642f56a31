"""End-to-end acceptance checks at full size.

Each test prints one ``[PASS]``/``[FAIL]`` line; the lines are repeated in the
terminal summary. The module is slow (over ten minutes on one core) because the
simulator runs 10^5 trials per curve.
"""
import csv
import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import integrate, stats

from conftest import record
from fractalcomp import (
    DistanceK,
    McPlan,
    NetworkConfig,
    PathLossLaw,
    PowerThreshold,
    dbm_to_watt,
    intensity_from_c,
    laplace_id,
    laplace_ip,
    laplace_pd,
    laplace_pp,
    simulate,
    truncation_check,
)
from fractalcomp.analytic import QuadSpec
from fractalcomp.channel import gamma_cdf, sample_alpha
from fractalcomp.config import PRESETS, TABLE1_PAIRS
from fractalcomp.pointprocess import joint_pdf_kth, ordered_distances, sample_ppp
from fractalcomp.runner import read_csv
from fractalcomp.streams import substream

N_TRIALS = 100_000
# the densest curve costs about ten times more per trial
N_TRIALS_DENSE = 20_000
SEED = 2024
LAW = PathLossLaw()


def network(c_b: float) -> NetworkConfig:
    return NetworkConfig().replace(lambda_b=intensity_from_c(c_b))


def cli(*args, env=None):
    return subprocess.run([sys.executable, "-m", "fractalcomp", *args], capture_output=True, text=True, env=env)


# --- shared runs ---------------------------------------------------------------

@pytest.fixture(scope="module")
def table1_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("table1")
    start = time.perf_counter()
    proc = cli("run", "--experiment", "table1", "--out", str(out), "--trials", str(N_TRIALS),
               "--seed", str(SEED), "--engines", "mc,analytic")
    elapsed = time.perf_counter() - start
    assert proc.returncode in (0, 1), proc.stderr
    summary = json.loads((out / "table1_summary.json").read_text())
    return out, summary, elapsed


@pytest.fixture(scope="module")
def curves():
    """One simulation per station intensity covering every figure grid."""
    t_dbm = sorted({t for name in ("fig2", "fig4", "fig5") for t in PRESETS[name].t_dbm})
    out = {}
    for c_b in (100.0, 50.0, 20.0):
        n = N_TRIALS_DENSE if c_b == 20.0 else N_TRIALS
        plan = McPlan(n_trials=n, seed=SEED)
        out[c_b] = simulate(network(c_b), LAW, plan, ks=range(1, 7), ts=[dbm_to_watt(t) for t in t_dbm])
    return out


def points(summary, metric, keep=None):
    pts = summary["comparisons"][metric]["points"]
    return [p for p in pts if keep is None or p["param_value"] in keep]


def describe(p):
    return f"{p['param_value']}: mc={p['mc']:.4g} an={p['analytic']:.4g} gap={p['gap']:.2g}/{p['allowed']:.2g}"


# --- 1, 2: the two engines agree ---------------------------------------------------

def test_mean_coop_count_engines_agree(table1_run):
    _, summary, _ = table1_run
    pts = points(summary, "coop_count")
    mc_s = sum(t["seconds"] for t in summary["timing"] if t["engine"] == "mc")
    ok = len(pts) == 6 and all(p["passed"] for p in pts)
    record("1 mean cooperative count, quadrature vs 1e5-trial MC at six thresholds", ok,
           "; ".join(describe(p) for p in pts) + f"; shared MC pass {mc_s:.0f} s")
    assert ok


def test_rates_engines_agree(table1_run):
    _, summary, elapsed = table1_run
    pts = points(summary, "rate_power") + points(summary, "rate_distance", {"1", "2", "3"})
    rel = [p["gap"] / abs(p["analytic"]) for p in pts]
    ok = len(pts) == 9 and all(p["passed"] for p in pts) and max(rel) <= 0.05
    record("2 rates, quadrature vs MC (six thresholds, k=1..3), relative gap <= 5%", ok,
           f"max relative gap {max(rel):.2%}; " + "; ".join(
               f"{p['metric']} {describe(p)}" for p in pts) + f"; whole run {elapsed:.0f} s")
    assert ok


# --- 3: transforms against direct sampling -------------------------------------------

N_LAPLACE = 100_000
R_WINDOW = 400.0
QUAD_400 = QuadSpec(r_max=R_WINDOW)


def powers(rng, r):
    h = rng.standard_exponential(r.shape)
    a = sample_alpha(LAW, rng, r.shape)
    return NetworkConfig().p_s * h * r ** (-a)


def poisson_annulus(rng, lam, r_in, r_out, n):
    """Per-sample point radii of a PPP in an annulus, flattened, with owning sample index."""
    counts = rng.poisson(lam * math.pi * (r_out**2 - r_in**2), n)
    owner = np.repeat(np.arange(n), counts)
    r = np.sqrt(r_in**2 + (r_out**2 - r_in**2) * rng.random(owner.size))
    return r, owner


def mean_exp(s, x):
    v = np.exp(-s * x)
    return v.mean(), v.std(ddof=1) / math.sqrt(len(v))


def check_transform(name, cases, analytic_fn, sampler):
    lines, ok = [], True
    for i, (s, param) in enumerate(cases):
        rng = substream(SEED, 1000 * len(name) + i)
        value = analytic_fn(s, param)
        m, se = mean_exp(s, sampler(rng, param))
        good = abs(m - value) <= 3 * se
        ok &= good
        lines.append(f"s={s:.0e},{param}: an={value:.4f} mc={m:.4f}+-{se:.1g}")
    record(f"3 {name} vs direct sampling of E[exp(-sX)]", ok, "; ".join(lines))
    return ok


def test_laplace_pd_spot_checks():
    lam = NetworkConfig().lambda_b

    def sample(rng, param):
        r, k = param
        inner = r * np.sqrt(rng.random((N_LAPLACE, k - 1)))
        x = powers(rng, np.full(N_LAPLACE, float(r)))
        return x + (powers(rng, inner).sum(axis=1) if k > 1 else 0.0)

    cases = [(1e6, (20.0, 1)), (1e7, (40.0, 2)), (3e7, (60.0, 3)), (1e8, (80.0, 2)), (1e8, (120.0, 4))]
    assert lam > 0
    assert check_transform("laplace_pd", cases,
                           lambda s, p: laplace_pd(s, p[0], p[1], NetworkConfig(), LAW, QUAD_400), sample)


def test_laplace_id_spot_checks():
    lam = NetworkConfig().lambda_b

    def sample(rng, r):
        radii, owner = poisson_annulus(rng, lam, r, R_WINDOW, N_LAPLACE)
        ring = np.bincount(owner, weights=powers(rng, radii), minlength=N_LAPLACE)
        return ring + powers(rng, np.full(N_LAPLACE, r))

    cases = [(1e5, 20.0), (3e5, 40.0), (1e6, 60.0), (3e5, 80.0), (1e6, 120.0)]
    assert check_transform("laplace_id", cases,
                           lambda s, r: laplace_id(s, r, NetworkConfig(), LAW, QUAD_400), sample)


def split_powers(rng, t):
    lam = NetworkConfig().lambda_b
    radii, owner = poisson_annulus(rng, lam, 0.0, R_WINDOW, N_LAPLACE)
    p = powers(rng, radii)
    above = np.bincount(owner, weights=np.where(p >= t, p, 0.0), minlength=N_LAPLACE)
    below = np.bincount(owner, weights=np.where(p < t, p, 0.0), minlength=N_LAPLACE)
    return above, below


def test_laplace_pp_spot_checks():
    cases = [(1e7, -22.0), (3e7, -28.0), (1e8, -32.0), (3e8, -35.0), (1e9, -39.0)]
    assert check_transform("laplace_pp", cases,
                           lambda s, t: laplace_pp(s, dbm_to_watt(t), NetworkConfig(), LAW, QUAD_400),
                           lambda rng, t: split_powers(rng, dbm_to_watt(t))[0])


def test_laplace_ip_spot_checks():
    cases = [(1e5, -22.0), (3e5, -28.0), (1e6, -32.0), (1e6, -35.0), (3e6, -39.0)]
    assert check_transform("laplace_ip", cases,
                           lambda s, t: laplace_ip(s, dbm_to_watt(t), NetworkConfig(), LAW, QUAD_400),
                           lambda rng, t: split_powers(rng, dbm_to_watt(t))[1])


# --- 4: distributions -------------------------------------------------------------

def pair_samples(k, lam, n, radius):
    out = np.empty((n, 2))
    for i in range(n):
        r = ordered_distances(sample_ppp(lam, radius, substream(SEED + k, i)))
        out[i] = r[k - 1], r[k]
    return out


def cell_probability(lam, k, a, b, c, d):
    # rectangle [a, b] x [c, d] intersected with r_k <= r_k1
    if d <= a:
        return 0.0
    return integrate.dblquad(lambda r2, r1: joint_pdf_kth(r1, r2, lam, k), a, min(b, d),
                             lambda r1: max(c, r1), lambda r1: d, epsabs=1e-10)[0]


@pytest.mark.parametrize("k", [1, 2, 3])
def test_joint_distance_density(k):
    lam = NetworkConfig().lambda_b
    total = integrate.dblquad(lambda r2, r1: joint_pdf_kth(r1, r2, lam, k), 0, np.inf,
                              lambda r1: r1, lambda r1: np.inf, epsabs=1e-12)[0]
    # a 300 m window holds about 36 stations, so fewer than k+1 is vanishingly rare
    pairs = pair_samples(k, lam, N_TRIALS, 300.0)
    e1 = np.quantile(pairs[:, 0], np.linspace(0, 1, 7))
    e2 = np.quantile(pairs[:, 1], np.linspace(0, 1, 7))
    e1[0] = e2[0] = 0.0
    e1[-1] = e2[-1] = np.inf
    observed, _, _ = np.histogram2d(pairs[:, 0], pairs[:, 1], bins=(e1, e2))
    expected = np.array([[cell_probability(lam, k, e1[i], e1[i + 1], e2[j], e2[j + 1]) for j in range(6)]
                         for i in range(6)]) * len(pairs)
    use = expected >= 5
    obs, exp = observed[use], expected[use]
    # fold the sparse cells into one so the totals still match
    obs = np.append(obs, observed[~use].sum())
    exp = np.append(exp, expected[~use].sum())
    if exp[-1] < 5:
        obs, exp = obs[:-2].tolist() + [obs[-2] + obs[-1]], exp[:-2].tolist() + [exp[-2] + exp[-1]]
    chi2, p = stats.chisquare(obs, np.asarray(exp) * np.sum(obs) / np.sum(exp))
    ok = abs(total - 1) <= 1e-4 and p > 0.01
    record(f"4 joint density of the k-th/(k+1)-th distances, k={k}", ok,
           f"integral {total:.8f}; chi-square {chi2:.1f} on {len(obs) - 1} dof, p={p:.3f}")
    assert ok


def test_exponent_law_mass():
    exact = gamma_cdf(5.5, LAW) - gamma_cdf(2.0, LAW)
    draws = sample_alpha(LAW, substream(SEED, 0), N_TRIALS)
    empirical = np.mean((draws >= 2) & (draws <= 5.5))
    ok = abs(exact - 0.75) <= 0.03 and abs(empirical - 0.75) <= 0.03
    record("4 exponent law P(2 <= alpha <= 5.5) = 0.75 +- 0.03", ok,
           f"law {exact:.4f}, {N_TRIALS} draws {empirical:.4f}")
    assert ok


# --- 5: qualitative shape of the figures -----------------------------------------------

def wrong_way(a, b, direction):
    """How far ``b`` moves against ``direction`` from ``a``, in units of twice the joint half-width."""
    joint = math.hypot(a.half_width, b.half_width)
    move = (b.value - a.value) * direction
    return -move / (2 * joint) if joint > 0 else (math.inf if move < 0 else 0.0)


def monotone(estimates, direction):
    """True when no step goes the wrong way by more than twice the joint half-width."""
    worst = max((wrong_way(a, b, direction) for a, b in zip(estimates, estimates[1:])), default=0.0)
    return worst <= 1.0, worst


def series(table, metric, grid):
    if metric == "rate_distance":
        return [table.rate(DistanceK(k)) for k in grid]
    fn = {"coop_count": table.coop_count, "ue_per_sbs": table.ue_per_sbs,
          "energy_efficiency": table.energy_efficiency,
          "rate_power": lambda t: table.rate(PowerThreshold(t))}[metric]
    return [fn(dbm_to_watt(t)) for t in grid]


def fmt(estimates):
    return "[" + ", ".join(f"{e.value:.4g}" for e in estimates) + "]"


def test_fig2_shape(curves):
    grid = PRESETS["fig2"].t_dbm
    ok, notes = True, []
    for metric in ("coop_count", "ue_per_sbs"):
        for c_b in (100.0, 50.0):
            good, worst = monotone(series(curves[c_b], metric, grid), -1)
            ok &= good
            notes.append(f"{metric} c={c_b:g} nonincreasing in T (worst {worst:.2f})")
    dense = series(curves[50.0], "coop_count", grid)
    sparse = series(curves[100.0], "coop_count", grid)
    for a, b in zip(sparse, dense):
        good = wrong_way(a, b, +1) <= 1.0
        ok &= good
    notes.append(f"N_C c=100 {fmt(sparse)} < c=50 {fmt(dense)}")
    record("5 fig2: counts fall with T, cooperative count rises with intensity", ok, "; ".join(notes))
    assert ok


def test_fig3_rate_rises_with_k(curves):
    ok, notes = True, []
    for c_b in (100.0, 50.0, 20.0):
        est = series(curves[c_b], "rate_distance", range(1, 7))
        good, worst = monotone(est, +1)
        ok &= good
        notes.append(f"c={c_b:g} {fmt(est)} (worst {worst:.2f})")
    record("5 fig3: distance-rule rate increasing in K", ok, "; ".join(notes))
    assert ok


def test_fig3_rate_falls_with_intensity(curves):
    ok, notes = True, []
    for k in range(1, 7):
        est = [curves[c].rate(DistanceK(k)) for c in (100.0, 50.0, 20.0)]
        good, worst = monotone(est, -1)
        ok &= good
        notes.append(f"K={k} c=100/50/20 {fmt(est)}")
    record("5 fig3: distance-rule rate decreasing in station intensity", ok, "; ".join(notes))
    assert ok


def test_fig4_shape(curves):
    grid = PRESETS["fig4"].t_dbm
    ok, notes = True, []
    for c_b in (100.0, 50.0, 20.0):
        est = series(curves[c_b], "rate_power", grid)
        good, worst = monotone(est, -1)
        ok &= good
        notes.append(f"c={c_b:g} {fmt(est)}")
    for t in grid:
        est = [curves[c].rate(PowerThreshold(dbm_to_watt(t))) for c in (100.0, 50.0, 20.0)]
        good, _ = monotone(est, +1)
        ok &= good
    record("5 fig4: threshold-rule rate falls with T and rises with intensity", ok, "; ".join(notes))
    assert ok


def test_fig5_shape(curves):
    grid = PRESETS["fig5"].t_dbm
    ok, notes = True, []
    curves_eta = {c: series(curves[c], "energy_efficiency", grid) for c in (100.0, 50.0)}
    for c_b, est in curves_eta.items():
        peak = int(np.argmax([e.value for e in est]))
        up, _ = monotone(est[:peak + 1], +1)
        down, _ = monotone(est[peak:], -1)
        interior = 0 < peak < len(est) - 1
        ok &= up and down and interior
        notes.append(f"c={c_b:g} peak at {grid[peak]:g} dBm {fmt(est)}")
    for a, b in zip(curves_eta[100.0], curves_eta[50.0]):
        ok &= wrong_way(a, b, -1) <= 1.0
    record("5 fig5: efficiency unimodal in T and lower at higher intensity", ok, "; ".join(notes))
    assert ok


# --- 6: comparison table ---------------------------------------------------------

def test_table1_rows(table1_run):
    out, summary, _ = table1_run
    notes, ok = [], True
    for engine in ("mc", "analytic"):
        with open(out / f"table1_{engine}.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        ok &= [(int(r["K"]), float(r["T_dbm"])) for r in rows] == list(TABLE1_PAIRS)
        for r in rows:
            ok &= float(r["g"]) > 0
        flagged = [r["K"] for r in rows if r["outside_band"] == "True"]
        notes.append(f"{engine}: g=" + ",".join(f"{float(r['g']):.2f}" for r in rows)
                     + f" (k_matched " + ",".join(r["k_matched"] for r in rows) + ")"
                     + (f", outside [0.5x, 2x] of the reference at K={','.join(flagged)}" if flagged else ""))
    record("6 table: six (K, T) rows with positive gain", ok, "; ".join(notes))
    assert ok


# --- 7: determinism under threading ------------------------------------------------

def test_thread_count_does_not_change_results(tmp_path):
    outputs = []
    for threads in ("1", "3"):
        env = dict(os.environ, FRACTALCOMP_THREADS=threads)
        out = tmp_path / f"threads{threads}"
        proc = cli("run", "--experiment", "fig4", "--out", str(out), "--trials", "2000", "--seed", "99", env=env)
        assert proc.returncode in (0, 1), proc.stderr
        outputs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
    ok = set(outputs[0]) == set(outputs[1]) and len(outputs[0]) == 2 and outputs[0] == outputs[1]
    record("7 fig4 run with 1 and 3 threads gives byte-identical CSVs", ok, ", ".join(outputs[0]))
    assert ok
    assert read_csv(tmp_path / "threads1" / "fig4_mc_rate_power.csv")[0].n_trials == 2000


# --- 8: window truncation ---------------------------------------------------------

def test_window_doubling_leaves_rate_unchanged():
    check = truncation_check(PowerThreshold(dbm_to_watt(-32)), network(50.0), LAW,
                             McPlan(n_trials=N_TRIALS, seed=SEED))
    record("8 doubling the window moves the -32 dBm threshold rate by less than its half-width", check.passed,
           f"{check.base.value:.4f} +- {check.base.half_width:.4f} at 2000 m, "
           f"{check.doubled.value:.4f} at 4000 m, change {check.change:.4f}")
    assert check.passed
