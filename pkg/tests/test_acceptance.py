"""Acceptance gate: ten end-to-end criteria, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines.  Each criterion re-derives its expected values from independent
oracles (subset enumeration, HiGHS LPs, threshold scans) or from closed-form
bounds, and asserts the stated tolerance and runtime budget.
"""

import math
import time

import numpy as np
from conftest import (
    brute_winf,
    kept_subset_oracle,
    lp_robust_power,
    random_measure,
)
from scipy.optimize import linprog
from scipy.stats import kstest

from robustot import (
    DiscreteMeasure,
    GroundMetric,
    build_income_framework,
    cost_matrix,
    dual_ascent,
    dual_from_flow,
    elbow_detect,
    empirical,
    huber_mix,
    mechanism_calibrate,
    robust_winf,
    robust_wp,
    robust_wp_mass_addition,
    rng_from_seed,
    trimmed_dual_value,
    tv_distance,
    tv_robust_wp,
    wasserstein,
)
from robustot.experiments import _recovery_fixture, run_experiment
from robustot.privacy import laplace_sample

P1 = GroundMetric(p=1)
P2 = GroundMetric(p=2)


def _report(num, name, ok, detail, elapsed):
    line = (f"criterion {num:2d} [{'PASS' if ok else 'FAIL'}] {name}: "
            f"{detail} ({elapsed:.1f}s)")
    print(line)
    assert ok, line


def test_criterion_01_oracle_equivalence():
    # 200 seeded uniform instances, n = m <= 6, eps a multiple of 1/n,
    # p in {1, 2}: solver value equals kept-subset enumeration within 1e-8.
    t0 = time.perf_counter()
    rng = rng_from_seed(101)
    worst = 0.0
    for trial in range(200):
        n = int(rng.integers(2, 7))
        eps = int(rng.integers(0, n)) / n
        p = 1.0 if trial % 2 == 0 else 2.0
        x = rng.normal(size=(n, 2))
        y = rng.normal(size=(n, 2))
        got = robust_wp(empirical(x), empirical(y), GroundMetric(p=p),
                        eps).value
        want = kept_subset_oracle(x, y, p, eps)
        worst = max(worst, abs(got - want))
    elapsed = time.perf_counter() - t0
    _report(1, "oracle equivalence", worst <= 1e-8 and elapsed < 30,
            f"max deviation {worst:.2e} over 200 instances", elapsed)


def test_criterion_02_strong_duality():
    # 100 instances with n, m <= 200; the flow certificate's duality gap is
    # at most 1e-8 times the largest cost entry.
    t0 = time.perf_counter()
    rng = rng_from_seed(202)
    eps_grid = [0.0, 0.05, 0.25, 0.49]
    worst = 0.0
    for trial in range(100):
        n = int(rng.integers(2, 201))
        m = int(rng.integers(2, 201))
        mu = random_measure(rng, n, 2)
        nu = random_measure(rng, m, 2)
        eps = eps_grid[trial % 4]
        plan = robust_wp(mu, nu, P2, eps)
        cert = dual_from_flow(plan)
        scale = max(float(plan.cost.max()), 1e-12)
        worst = max(worst, abs(cert.gap) / scale)
    elapsed = time.perf_counter() - t0
    _report(2, "strong duality", worst <= 1e-8 and elapsed < 120,
            f"max relative gap {worst:.2e} over 100 instances", elapsed)


def test_criterion_03_formulation_equivalence():
    # Coupling, removal, and addition values agree within 1e-8 on 100
    # instances; the trimmed dual at the flow potential equals the primal
    # power on uniform instances with integral eps * n.
    t0 = time.perf_counter()
    rng = rng_from_seed(303)
    worst_form = 0.0
    for trial in range(100):
        mu = random_measure(rng, int(rng.integers(2, 9)), 2)
        nu = random_measure(rng, int(rng.integers(2, 9)), 2)
        eps = [0.0, 0.05, 0.2, 0.4][trial % 4]
        vals = [robust_wp(mu, nu, P2, eps, formulation=f).value
                for f in ("coupling", "removal", "addition")]
        vals.append(robust_wp_mass_addition(mu, nu, P2, eps))
        worst_form = max(worst_form, max(vals) - min(vals))
    worst_trim = 0.0
    for trial in range(100):
        n = int(rng.choice([4, 5, 6, 8]))
        k = int(rng.integers(0, n // 2 + 1))
        eps = k / n
        mu = empirical(rng.normal(size=(n, 2)))
        nu = empirical(rng.normal(size=(n, 2)))
        plan = robust_wp(mu, nu, P2, eps)
        cert = dual_from_flow(plan)
        got = trimmed_dual_value(cert.f, plan.cost, eps)
        worst_trim = max(worst_trim, abs(got - plan.power_value))
    elapsed = time.perf_counter() - t0
    _report(3, "formulation equivalence",
            worst_form <= 1e-8 and worst_trim <= 1e-8,
            f"formulation spread {worst_form:.2e}, "
            f"trimmed-dual deviation {worst_trim:.2e}", elapsed)


def _lower_envelope_lp(plan, mu, nu, eps):
    C = plan.cost
    n, m = C.shape
    nv = n * m
    rows = np.zeros((n, nv))
    for i in range(n):
        rows[i, i * m:(i + 1) * m] = 1.0
    cols = np.zeros((m, nv))
    for j in range(m):
        cols[j, j::m] = 1.0
    floor = np.minimum(mu.weights, nu.weights) / (1 - eps)
    res = linprog(
        C.ravel(),
        A_ub=np.vstack([rows, cols, -rows, -cols]),
        b_ub=np.concatenate([mu.weights / (1 - eps), nu.weights / (1 - eps),
                             -floor, -floor]),
        A_eq=np.ones((1, nv)),
        b_eq=[1.0],
        bounds=(0, None),
        method="highs",
    )
    assert res.success, res.message
    return float(res.fun)


def test_criterion_04_property_suite():
    # Eight inequality families, 100 seeded instances each.
    t0 = time.perf_counter()
    rng = rng_from_seed(404)
    fails = []

    # (a) Shared-mass lower envelope: forcing kept mass >= min(mu, nu) on
    # shared atoms does not change the value.  The floor is only feasible
    # while eps <= TV/2, so the radius is capped there.
    pool = rng.normal(size=(6, 2))
    for _ in range(100):
        wa = rng.random(6) + 0.1
        wb = rng.random(6) + 0.1
        mu = DiscreteMeasure(pool, wa / wa.sum())
        nu = DiscreteMeasure(pool, wb / wb.sum())
        eps = min(0.2, 0.45 * tv_distance(mu, nu))
        plan = robust_wp(mu, nu, P2, eps)
        if abs(_lower_envelope_lp(plan, mu, nu, eps)
               - plan.power_value) > 1e-8:
            fails.append("lower-envelope")
            break

    # (b) Maximizer localization: removed atoms sit at the top of their
    # potential.
    for _ in range(100):
        mu = random_measure(rng, 7, 2)
        nu = random_measure(rng, 7, 2)
        plan = robust_wp(mu, nu, P1, 0.25, 0.25)
        cert = dual_from_flow(plan)
        scale = max(float(plan.cost.max()), 1.0)
        rr = plan.removed_mu > 1e-9
        rc = plan.removed_nu > 1e-9
        if np.any(rr) and np.min(cert.f[rr]) < cert.f.max() - 1e-6 * scale:
            fails.append("localization-f")
            break
        if np.any(rc) and np.min(cert.g[rc]) < cert.g.max() - 1e-6 * scale:
            fails.append("localization-g")
            break

    # (c) Endpoints: eps = 0 recovers the classical value; eps >= TV/2
    # annihilates the distance.
    lattice = np.arange(5.0).reshape(-1, 1)
    for _ in range(100):
        wa = rng.random(5) + 0.1
        wb = rng.random(5) + 0.1
        mu = DiscreteMeasure(lattice, wa / wa.sum())
        nu = DiscreteMeasure(lattice, wb / wb.sum())
        if abs(robust_wp(mu, nu, P1, 0.0).value
               - wasserstein(mu, nu, P1)) > 1e-9:
            fails.append("eps-zero")
            break
        eps = tv_distance(mu, nu) / 2.0
        if eps < 1.0 and robust_wp(mu, nu, P1, eps).value > 1e-6:
            fails.append("tv-half")
            break

    # (d) Monotonicity in eps.
    for _ in range(100):
        mu = random_measure(rng, 6, 2)
        nu = random_measure(rng, 6, 2)
        vals = [robust_wp(mu, nu, P1, e).value
                for e in (0.0, 0.1, 0.2, 0.35, 0.49)]
        if any(vals[i + 1] > vals[i] + 1e-9 for i in range(len(vals) - 1)):
            fails.append("monotone")
            break

    # (e) Diameter bound between radii.
    for _ in range(100):
        mu = random_measure(rng, 6, 2)
        nu = random_measure(rng, 6, 2)
        pts = np.vstack([mu.points, nu.points])
        diam = float(np.max(np.linalg.norm(pts[:, None] - pts[None, :],
                                           axis=-1)))
        p = 1.0 if _ % 2 == 0 else 2.0
        metric = GroundMetric(p=p)
        for e, ep in ((0.0, 0.1), (0.1, 0.3)):
            lhs = robust_wp(mu, nu, metric, e).value
            rhs = (((1 - ep) / (1 - e)) ** (1 / p)
                   * robust_wp(mu, nu, metric, ep).value
                   + 4 * diam * ((ep - e) / (1 - e)) ** (1 / p))
            if lhs > rhs + 1e-9:
                fails.append("diameter")
                break

    # (f) Contamination sandwich with eps <= 1/4.
    eps = 0.2
    for _ in range(100):
        mu = random_measure(rng, 8, 2)
        nu = random_measure(rng, 8, 2)
        alpha = random_measure(rng, 2, 2)
        beta = random_measure(rng, 2, 2)
        mid = robust_wp(huber_mix(mu, alpha, eps), huber_mix(nu, beta, eps),
                        P1, eps).value
        lo = (1 - 3 * eps) * robust_wp(mu, nu, P1, 3 * eps).value
        hi = wasserstein(mu, nu, P1)
        if not (lo <= mid + 1e-8 and mid <= hi + 1e-8):
            fails.append("sandwich")
            break

    # (g) Two-sided bracket against the total-variation-ball variant.
    for _ in range(100):
        mu = random_measure(rng, 6, 2)
        nu = random_measure(rng, 6, 2)
        e = [0.05, 0.1, 0.2][_ % 3]
        p = 1.0 if _ % 2 == 0 else 2.0
        metric = GroundMetric(p=p)
        mid = robust_wp(mu, nu, metric, e).value
        if tv_robust_wp(mu, nu, metric, 2 * e) > mid + 1e-8:
            fails.append("tv-lower")
            break
        if mid > ((1 - e) ** (-1 / p) * tv_robust_wp(mu, nu, metric, e)
                  + 1e-8):
            fails.append("tv-upper")
            break

    # (h) Two-sample deterministic stability bound.
    eps = 0.15
    for _ in range(100):
        mu = random_measure(rng, 6, 2)
        nu = random_measure(rng, 6, 2)
        mu_hat = DiscreteMeasure(
            mu.points + 0.05 * rng.normal(size=mu.points.shape), mu.weights)
        nu_hat = DiscreteMeasure(
            nu.points + 0.05 * rng.normal(size=nu.points.shape), nu.weights)
        lhs = (1 - eps) * abs(
            robust_wp(mu_hat, nu_hat, P1, eps).power_value
            - robust_wp(mu, nu, P1, eps).power_value)
        rhs = wasserstein(mu, mu_hat, P1) + wasserstein(nu, nu_hat, P1)
        if lhs > rhs + 1e-9:
            fails.append("two-sample")
            break

    elapsed = time.perf_counter() - t0
    _report(4, "property suite", not fails and elapsed < 300,
            "all 8 inequality families x 100 instances"
            + (f"; failed: {fails}" if fails else ""), elapsed)


def test_criterion_05_exact_recovery():
    # 20 fixtures at separation ratio 3: trimming reproduces the clean value.
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        mu, nu, mu_t, nu_t = _recovery_fixture(seed, n=40, d=2, eps=0.1,
                                               ratio=3.0)
        clean = wasserstein(mu, nu, P1)
        robust = robust_wp(mu_t, nu_t, P1, 0.1).value
        worst = max(worst, abs(robust - clean))
    elapsed = time.perf_counter() - t0
    _report(5, "exact recovery", worst <= 1e-8,
            f"max |robust - clean| {worst:.2e} over 20 fixtures", elapsed)


def _elbow_fixture(seed, eps=0.1, n=100, sep=100.0):
    # Inliers span [0, 1]; outliers sit at distance ~sep on opposite sides.
    rng = rng_from_seed(seed)
    n_out = int(round(eps * n))

    def contaminated(shift):
        left = rng.random(size=(n // 2, 1)) * 0.2
        right = 0.8 + rng.random(size=(n - n // 2, 1)) * 0.2
        inliers = np.vstack([left, right])
        outliers = shift + 0.01 * rng.random(size=(n_out, 1))
        return empirical(np.vstack([inliers[: n - n_out], outliers]))

    return contaminated(sep), contaminated(-sep)


def test_criterion_06_elbow():
    # Standard fixture (inlier diameter 1, outlier distance 100, eps = 0.1,
    # grid step 0.02): the detected radius lands in [0.08, 0.12] on all of
    # 10 seeds, and the slopes respect the -sep / -diam bounds.
    t0 = time.perf_counter()
    grid = np.arange(0.0, 0.2001, 0.02)
    sep, diam, eps = 100.0, 1.0, 0.1
    band_ok = True
    slopes_ok = True
    hats = []
    for seed in range(10):
        mu_t, nu_t = _elbow_fixture(seed, eps=eps, sep=sep)
        report = elbow_detect(mu_t, nu_t, P1, grid=grid)
        hats.append(report.eps_hat)
        band_ok &= 0.08 <= report.eps_hat <= 0.12
        mids = 0.5 * (grid[:-1] + grid[1:])
        for mid, slope in zip(mids, report.slopes):
            if mid < eps and slope > -(sep ** 1) * (1 - 1e-6):
                slopes_ok = False
            if mid > eps and slope < -(diam ** 1) * (1 + 1e-6):
                slopes_ok = False
    elapsed = time.perf_counter() - t0
    _report(6, "elbow detection", band_ok and slopes_ok,
            f"eps-hat range [{min(hats):.2f}, {max(hats):.2f}] over 10 seeds",
            elapsed)


def test_criterion_07_rate_fit(tmp_path):
    # Two-sample log-log slope on Unif([0,1]^3), p = 1, n up to 3200,
    # averaged over 10 seeds; the eps = 0.1 and eps = 0 slopes agree.
    t0 = time.perf_counter()
    summary = run_experiment("rate_fit", list(range(10)), str(tmp_path),
                             threads=4, figures=False)
    stats = summary["stats"]
    slope_eps = stats["slopeEps"]
    slope_zero = stats["slopeZero"]
    elapsed = time.perf_counter() - t0
    ok = (-0.50 <= slope_eps <= -0.20
          and abs(slope_eps - slope_zero) <= 0.05
          and elapsed < 600)
    _report(7, "rate fit", ok,
            f"slope {slope_eps:.3f} (eps=0.1) vs {slope_zero:.3f} (eps=0)",
            elapsed)


def test_criterion_08_robust_consistency(tmp_path):
    # Corruption n^{-0.5}, radius n^{-0.3}, n up to 6400: error decreases
    # on >= 8/10 seeds and beats the fixed-fraction negative control.
    t0 = time.perf_counter()
    summary = run_experiment("robust_consistency", list(range(10)),
                             str(tmp_path), threads=4, figures=False)
    stats = summary["stats"]
    decreasing = stats["decreasingSeeds"]
    final = stats["finalError"]
    ctrl = stats["finalControlError"]
    elapsed = time.perf_counter() - t0
    ok = decreasing >= 8 and final <= 0.25 * ctrl
    _report(8, "robust consistency", ok,
            f"{decreasing}/10 seeds decreasing; final {final:.4g} "
            f"vs control {ctrl:.4g}", elapsed)


def test_criterion_09_privacy():
    # (i) Robust infinity-order value matches a threshold-scan LP oracle on
    # supports <= 4; (ii) the Laplace sampler passes a KS test at 1e5 draws;
    # (iii) the income example cuts the noise scale by >= 5x versus delta=0.
    t0 = time.perf_counter()
    inf = GroundMetric(p=math.inf)
    rng = rng_from_seed(909)
    worst = 0.0
    for trial in range(20):
        mu = random_measure(rng, int(rng.integers(2, 5)), 2)
        nu = random_measure(rng, int(rng.integers(2, 5)), 2)
        delta = [0.0, 0.1, 0.3, 0.45][trial % 4]
        got = robust_winf(mu, nu, inf, delta).value
        D = np.linalg.norm(mu.points[:, None] - nu.points[None, :], axis=-1)
        worst = max(worst, abs(got - brute_winf(mu.weights, nu.weights,
                                                D, delta)))
    ks = kstest(laplace_sample(1.0, seed=424242, size=10 ** 5),
                "laplace").statistic
    robust_scale = mechanism_calibrate(build_income_framework()).noise_scale
    classical = mechanism_calibrate(
        build_income_framework(delta_priv=0.0)).noise_scale
    ratio = classical / robust_scale
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and ks <= 0.01 and ratio >= 5
    _report(9, "privacy mechanism", ok,
            f"winf deviation {worst:.1e}, KS {ks:.4f}, "
            f"noise reduction {ratio:.1f}x", elapsed)


def test_criterion_10_dual_ascent():
    # Subgradient ascent reaches the flow-certified value to relative error
    # 1e-3 within the default 1e5 iteration cap on 20 instances, n <= 50.
    t0 = time.perf_counter()
    rng = rng_from_seed(1010)
    worst = 0.0
    for trial in range(20):
        mu = random_measure(rng, int(rng.integers(5, 51)), 2)
        nu = random_measure(rng, int(rng.integers(5, 51)), 2)
        eps = [0.0, 0.05, 0.2, 0.4][trial % 4]
        plan = robust_wp(mu, nu, P1, eps)
        target = (1 - eps) ** 2 * plan.power_value
        C = cost_matrix(mu, nu, P1)
        cert = dual_ascent(mu.weights, nu.weights, C, eps, eps,
                           target_power=target)
        rel = abs(cert.objective - target) / max(abs(target), 1e-12)
        worst = max(worst, rel)
    elapsed = time.perf_counter() - t0
    _report(10, "dual ascent", worst <= 1e-3,
            f"max relative error {worst:.2e} over 20 instances", elapsed)
