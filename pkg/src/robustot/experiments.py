"""Seeded experiment drivers.

Each experiment maps (params, seeds) to a list of trial records plus a list
of assertion results.  Records are written as CSV with a fixed column
order, so re-running a driver reproduces the file byte for byte; wall
times are therefore kept out of the CSV and reported only in the JSON
summary.  Trials are independent and keyed by (seed, n), which allows
optional thread-level parallelism with deterministic assembly order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError
from .measures import (
    DiscreteMeasure,
    GroundMetric,
    empirical,
    huber_mix,
    rng_from_seed,
)
from .radius import consistency_schedule
from .solvers import robust_wp, tv_robust_wp, uniform_partial_value, wasserstein

CALIBRATION_PATH = Path(__file__).parent / "data" / "calibration.json"


def load_calibration():
    with open(CALIBRATION_PATH, "r", encoding="utf-8") as fh:
        return json.load(fh)


@dataclass(frozen=True)
class AssertionResult:
    name: str
    passed: bool
    detail: str


def _run_keyed(keys, fn, threads=1):
    """Evaluate fn over keys, optionally in parallel, in stable key order."""
    keys = list(keys)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(fn, keys))
    else:
        results = [fn(k) for k in keys]
    return results


def _fit_slope(xs, ys):
    """Least-squares slope of ys against xs."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    xbar, ybar = xs.mean(), ys.mean()
    return float(((xs - xbar) @ (ys - ybar)) / ((xs - xbar) @ (xs - xbar)))


# ---------------------------------------------------------------------------
# Risk sandwich under Huber contamination.
# ---------------------------------------------------------------------------


def _contaminated_pair(seed, n, d, eps, outlier_dist, n_outliers):
    rng = rng_from_seed(seed)
    mu = empirical(rng.normal(size=(n, d)))
    nu = empirical(rng.normal(size=(n, d)))
    center_a = np.zeros(d)
    center_a[0] = outlier_dist
    center_b = np.zeros(d)
    center_b[0] = -outlier_dist
    alpha = empirical(center_a + rng.normal(size=(n_outliers, d)))
    beta = empirical(center_b + rng.normal(size=(n_outliers, d)))
    return (mu, nu, huber_mix(mu, alpha, eps), huber_mix(nu, beta, eps))


def exp_risk_sandwich(params, seeds):
    """Sandwich (1-3e) W^{3e}(mu,nu) <= W^e(contaminated) <= W(mu,nu)."""
    p = params.get("p", 1.0)
    eps = params.get("eps", 0.1)
    n = int(params.get("n", 40))
    d = int(params.get("d", 2))
    outlier_dist = params.get("outlier_dist", 1e6)
    if eps > 0.25:
        raise InvalidParameterError("the risk sandwich requires eps <= 1/4")
    n_out = int(round(eps * n))
    metric = GroundMetric(p=p)
    calib = load_calibration()
    c_frozen = calib["riskSandwichC"]
    q = calib["momentOrder"]

    def trial(seed):
        mu, nu, mu_t, nu_t = _contaminated_pair(seed, n, d, eps, outlier_dist,
                                                n_out)
        w_clean = wasserstein(mu, nu, metric)
        w3 = robust_wp(mu, nu, metric, 3 * eps).value
        r = robust_wp(mu_t, nu_t, metric, eps).value
        naive = wasserstein(mu_t, nu_t, metric)
        return {
            "seed": seed, "n": n, "eps": eps,
            "lower": (1 - 3 * eps) * w3, "robust": r,
            "clean": w_clean, "naive": naive,
        }

    records = _run_keyed(seeds, trial, params.get("threads", 1))
    tol = 1e-8
    sandwich_ok = all(
        rec["lower"] <= rec["robust"] + tol and rec["robust"] <= rec["clean"] + tol
        for rec in records
    )
    budget = [
        abs(rec["robust"] - rec["clean"])
        - (1 - (1 - 3 * eps) ** (1 / p)) * rec["clean"]
        - c_frozen * eps ** (1 - 1 / q)
        for rec in records
    ]
    calibrated_ok = all(b <= tol for b in budget)
    blowup_ok = all(rec["naive"] > 100 * max(rec["clean"], 1e-9)
                    for rec in records)
    assertions = [
        AssertionResult("sandwich_inequalities", sandwich_ok,
                        "lower <= robust <= clean per trial"),
        AssertionResult("calibrated_deviation", calibrated_ok,
                        f"|robust - clean| within frozen-C budget (C={c_frozen})"),
        AssertionResult("naive_blowup", blowup_ok,
                        "uncorrected distance explodes with outlier distance"),
    ]
    columns = ["seed", "n", "eps", "lower", "robust", "clean", "naive"]
    return records, assertions, columns


# ---------------------------------------------------------------------------
# Exact recovery under separated contamination.
# ---------------------------------------------------------------------------


def _recovery_fixture(seed, n, d, eps, ratio):
    rng = rng_from_seed(seed)
    pts_mu = rng.random(size=(n, d)) * 0.5
    pts_nu = rng.random(size=(n, d)) * 0.5
    pool = np.vstack([pts_mu, pts_nu])
    diam = float(np.max(np.linalg.norm(pool[:, None] - pool[None, :], axis=-1)))
    n_out = int(round(eps * n))
    off = ratio * diam + 1.0
    center_a = np.full(d, 0.25)
    center_a[0] += off
    center_b = np.full(d, 0.25)
    center_b[1] += off
    alpha = empirical(center_a + 0.01 * rng.random(size=(n_out, d)))
    beta = empirical(center_b + 0.01 * rng.random(size=(n_out, d)))
    mu, nu = empirical(pts_mu), empirical(pts_nu)
    return mu, nu, huber_mix(mu, alpha, eps), huber_mix(nu, beta, eps)


def exp_exact_recovery(params, seeds):
    """Trimming separated contamination reproduces the clean distance."""
    p = params.get("p", 1.0)
    eps = params.get("eps", 0.1)
    n = int(params.get("n", 40))
    d = int(params.get("d", 2))
    ratio = params.get("ratio", 3.0)
    if ratio <= 1:
        raise InvalidParameterError("separation ratio must exceed 1")
    metric = GroundMetric(p=p)

    def trial(seed):
        mu, nu, mu_t, nu_t = _recovery_fixture(seed, n, d, eps, ratio)
        w_clean = wasserstein(mu, nu, metric)
        r = robust_wp(mu_t, nu_t, metric, eps).value
        r_unneeded = robust_wp(mu, nu, metric, eps).value
        # Out-of-hypothesis probe: overlap-scale separation, recorded only.
        _, _, mu_c, nu_c = _recovery_fixture(seed, n, d, eps, 1.0)
        r_close = robust_wp(mu_c, nu_c, metric, eps).value
        return {
            "seed": seed, "n": n, "eps": eps,
            "clean": w_clean, "robust": r,
            "robust_uncontaminated": r_unneeded, "robust_close": r_close,
        }

    records = _run_keyed(seeds, trial, params.get("threads", 1))
    tol = 1e-8
    recovery_ok = all(abs(rec["robust"] - rec["clean"]) <= tol
                      for rec in records)
    strict_ok = all(rec["robust_uncontaminated"] < rec["clean"]
                    for rec in records)
    assertions = [
        AssertionResult("exact_recovery", recovery_ok,
                        f"|robust - clean| <= {tol} at separation ratio {ratio}"),
        AssertionResult("strict_trim_on_clean_input", strict_ok,
                        "positive radius on clean input strictly undershoots"),
    ]
    columns = ["seed", "n", "eps", "clean", "robust",
               "robust_uncontaminated", "robust_close"]
    return records, assertions, columns


# ---------------------------------------------------------------------------
# Two-sample convergence-rate fit.
# ---------------------------------------------------------------------------


def exp_rate_fit(params, seeds):
    """Log-log rate of the two-sample robust distance on Unif([0,1]^d)."""
    p = params.get("p", 1.0)
    d = int(params.get("d", 3))
    eps = params.get("eps", 0.1)
    tau = params.get("tau", 0.2)
    n_grid = params.get("n_grid", [100, 200, 400, 800, 1600, 3200])
    if d < 3 or p >= d / 2:
        raise InvalidParameterError("rate fit requires d >= 3 and p < d/2")

    def low_dim_sample(rng, n):
        # Mass 1 - tau on a line segment, tau scattered through the cube.
        pts = rng.random(size=(n, d))
        on_line = rng.random(n) >= tau
        pts[on_line, 1:] = 0.5
        return pts

    def trial(key):
        seed, n = key
        rng = rng_from_seed(seed)
        x = rng.random(size=(n, d))
        y = rng.random(size=(n, d))
        xl = low_dim_sample(rng, n)
        yl = low_dim_sample(rng, n)
        return {
            "seed": seed, "n": n, "eps": eps,
            "value_eps": uniform_partial_value(x, y, p, eps),
            "value_zero": uniform_partial_value(x, y, p, 0.0),
            "value_lowdim": uniform_partial_value(xl, yl, p, eps),
        }

    keys = [(seed, n) for seed in seeds for n in n_grid]
    records = _run_keyed(keys, trial, params.get("threads", 1))
    logn = [math.log(rec["n"]) for rec in records]
    slope_eps = _fit_slope(logn, [math.log(rec["value_eps"]) for rec in records])
    slope_zero = _fit_slope(logn, [math.log(rec["value_zero"]) for rec in records])
    slope_low = _fit_slope(logn, [math.log(rec["value_lowdim"]) for rec in records])
    assertions = [
        AssertionResult("slope_band", -0.50 <= slope_eps <= -0.20,
                        f"robust slope {slope_eps:.4f} in [-0.50, -0.20]"),
        AssertionResult("eps_independence", abs(slope_eps - slope_zero) <= 0.05,
                        f"slopes {slope_eps:.4f} vs {slope_zero:.4f}"),
        AssertionResult("lowdim_faster_decay", slope_low < slope_eps,
                        f"low-dim slope {slope_low:.4f} below {slope_eps:.4f}"),
    ]
    columns = ["seed", "n", "eps", "value_eps", "value_zero", "value_lowdim"]
    stats = {"slopeEps": slope_eps, "slopeZero": slope_zero,
             "slopeLowdim": slope_low}
    return records, assertions, columns, stats


# ---------------------------------------------------------------------------
# Robust consistency with a vanishing radius.
# ---------------------------------------------------------------------------

# Fixed discrete populations: two eight-point clouds in the unit square.
_POP_MU = np.array([
    [0.05, 0.10], [0.20, 0.35], [0.15, 0.80], [0.40, 0.55],
    [0.60, 0.20], [0.75, 0.70], [0.90, 0.40], [0.55, 0.90],
])
_POP_NU = np.array([
    [0.10, 0.60], [0.30, 0.15], [0.35, 0.95], [0.50, 0.30],
    [0.65, 0.85], [0.80, 0.10], [0.85, 0.65], [0.95, 0.90],
])


def _sample_discrete(rng, pop, n):
    idx = rng.integers(0, pop.shape[0], size=n)
    return pop[idx]


def _corrupt(rng, pts, m):
    if m == 0:
        return pts
    out = pts.copy()
    angles = rng.random(m) * 2 * math.pi
    radii = 1e3 * (1.0 + rng.random(m))
    out[:m, 0] = radii * np.cos(angles)
    out[:m, 1] = radii * np.sin(angles)
    return out


def exp_robust_consistency(params, seeds):
    """|W_p - W_p^{eps_n}| under shrinking corruption n^{-a}, radius n^{-b}."""
    p = params.get("p", 1.0)
    a = params.get("a", 0.5)
    b = params.get("b", 0.3)
    control_fraction = params.get("control_fraction", 0.2)
    n_grid = params.get("n_grid", [100, 200, 400, 800, 1600, 3200, 6400])
    if not a > b > 0:
        raise InvalidParameterError("consistency requires a > b > 0")
    metric = GroundMetric(p=p)
    mu0 = empirical(_POP_MU)
    nu0 = empirical(_POP_NU)
    w_true = wasserstein(mu0, nu0, metric)

    def trial(key):
        seed, n = key
        rng = rng_from_seed(seed)
        eps_n = consistency_schedule(n, b)
        m = int(math.ceil(n ** (1 - a)))
        m_fix = int(math.ceil(control_fraction * n))
        xs = _sample_discrete(rng, _POP_MU, n)
        ys = _sample_discrete(rng, _POP_NU, n)
        row = {"seed": seed, "n": n, "eps": eps_n}
        for tag, m_bad in (("err", m), ("err_clean", 0), ("err_control", m_fix)):
            mu_hat = empirical(_corrupt(rng, xs, m_bad))
            nu_hat = empirical(_corrupt(rng, ys, m_bad))
            val = robust_wp(mu_hat, nu_hat, metric, eps_n).value
            row[tag] = abs(w_true - val)
        return row

    keys = [(seed, n) for seed in seeds for n in n_grid]
    records = _run_keyed(keys, trial, params.get("threads", 1))
    by_seed = {}
    for rec in records:
        by_seed.setdefault(rec["seed"], []).append(rec)
    decreasing = 0
    for seed, recs in by_seed.items():
        recs = sorted(recs, key=lambda r: r["n"])
        errs = [r["err"] for r in recs]
        slope = _fit_slope([math.log(r["n"]) for r in recs],
                           [math.log(max(e, 1e-15)) for e in errs])
        if slope < 0 and errs[-1] < errs[0]:
            decreasing += 1
    n_max = max(n_grid)
    final = float(np.mean([r["err"] for r in records if r["n"] == n_max]))
    final_ctrl = float(np.mean([r["err_control"] for r in records
                                if r["n"] == n_max]))
    need = max(1, int(math.ceil(0.8 * len(by_seed))))
    assertions = [
        AssertionResult("error_decreasing",
                        decreasing >= need,
                        f"{decreasing}/{len(by_seed)} seeds decreasing"),
        AssertionResult("beats_negative_control",
                        final <= 0.25 * final_ctrl,
                        f"final {final:.4g} vs control {final_ctrl:.4g}"),
    ]
    columns = ["seed", "n", "eps", "err", "err_clean", "err_control"]
    stats = {"wTrue": w_true, "finalError": final,
             "finalControlError": final_ctrl, "decreasingSeeds": decreasing}
    return records, assertions, columns, stats


# ---------------------------------------------------------------------------
# Sandwich against the TV-ball variant.
# ---------------------------------------------------------------------------


def exp_sandwich_tv(params, seeds):
    """W_p^{2e,tv} <= W_p^e <= (1-e)^{-1/p} W_p^{e,tv} on random instances."""
    p = params.get("p", 1.0)
    eps = params.get("eps", 0.1)
    n = int(params.get("n", 10))
    d = int(params.get("d", 2))
    metric = GroundMetric(p=p)

    def trial(seed):
        rng = rng_from_seed(seed)
        mu = DiscreteMeasure(rng.normal(size=(n, d)),
                             _random_weights(rng, n))
        nu = DiscreteMeasure(rng.normal(size=(n, d)),
                             _random_weights(rng, n))
        r = robust_wp(mu, nu, metric, eps).value
        tv_tight = tv_robust_wp(mu, nu, metric, eps)
        tv_loose = tv_robust_wp(mu, nu, metric, 2 * eps)
        return {
            "seed": seed, "n": n, "eps": eps,
            "robust": r, "tv_eps": tv_tight, "tv_2eps": tv_loose,
        }

    records = _run_keyed(seeds, trial, params.get("threads", 1))
    tol = 1e-8
    lower_ok = all(rec["tv_2eps"] <= rec["robust"] + tol for rec in records)
    upper_ok = all(
        rec["robust"] <= (1 - eps) ** (-1 / p) * rec["tv_eps"] + tol
        for rec in records
    )
    assertions = [
        AssertionResult("tv_lower", lower_ok, "W^{2e,tv} <= W^e"),
        AssertionResult("tv_upper", upper_ok, "W^e <= (1-e)^{-1/p} W^{e,tv}"),
    ]
    columns = ["seed", "n", "eps", "robust", "tv_eps", "tv_2eps"]
    return records, assertions, columns


def _random_weights(rng, n):
    w = rng.random(n) + 0.05
    return w / w.sum()


# ---------------------------------------------------------------------------
# Registry and artifact writing.
# ---------------------------------------------------------------------------

REGISTRY = {
    "risk_sandwich": exp_risk_sandwich,
    "exact_recovery": exp_exact_recovery,
    "rate_fit": exp_rate_fit,
    "robust_consistency": exp_robust_consistency,
    "sandwich_tv": exp_sandwich_tv,
}


def records_to_csv_text(records, columns):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for rec in records:
        row = []
        for col in columns:
            v = rec[col]
            row.append(repr(float(v)) if isinstance(v, float) else str(v))
        writer.writerow(row)
    return buf.getvalue()


def run_experiment(name, seeds, out_dir, params=None, threads=1,
                   figures=True):
    """Run a registered experiment and write CSV, JSON summary, and figure.

    Returns the summary dict; ``summary["allPassed"]`` reflects the
    experiment's own assertions.
    """
    if name not in REGISTRY:
        raise InvalidParameterError(
            f"unknown experiment {name!r}; choose from {sorted(REGISTRY)}"
        )
    if not seeds:
        raise InvalidParameterError("need at least one seed")
    params = dict(params or {})
    params.setdefault("threads", threads)
    t0 = time.perf_counter()
    result = REGISTRY[name](params, list(seeds))
    records, assertions, columns = result[0], result[1], result[2]
    stats = result[3] if len(result) > 3 else {}
    elapsed_ms = 1000.0 * (time.perf_counter() - t0)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{name}.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(records_to_csv_text(records, columns))
    summary = {
        "experiment": name,
        "seeds": list(seeds),
        "assertions": [
            {"name": a.name, "pass": a.passed, "detail": a.detail}
            for a in assertions
        ],
        "allPassed": all(a.passed for a in assertions),
        "stats": stats,
        "wallTimeMs": elapsed_ms,
        "csv": str(csv_path),
    }
    if figures:
        from .report import experiment_figure

        fig_path = out / f"{name}.png"
        experiment_figure(name, records, columns, fig_path)
        summary["figure"] = str(fig_path)
    with open(out / f"{name}_summary.json", "w", encoding="utf-8",
              newline="") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return summary
