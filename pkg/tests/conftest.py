"""Shared independent oracles for the test suite.

Everything here avoids the package's own flow engine: brute-force subset
enumeration with the Hungarian algorithm, and direct LP solves through
scipy's HiGHS backend.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist


def kept_subset_oracle(x, y, p, eps):
    """Robust distance between uniform measures by subset enumeration.

    Requires eps * n integral.  Enumerates every pair of kept subsets of
    size (1 - eps) * n and solves each restricted assignment exactly.
    """
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    n = x.shape[0]
    k = int(round((1 - eps) * n))
    assert abs((1 - eps) * n - k) < 1e-9 and k >= 1
    C = cdist(x, y) ** p
    best = math.inf
    for rows in itertools.combinations(range(n), k):
        sub = C[list(rows)]
        for cols in itertools.combinations(range(n), k):
            block = sub[:, list(cols)]
            r, c = linear_sum_assignment(block)
            best = min(best, float(block[r, c].sum()))
    return (best / k) ** (1.0 / p)


def lp_robust_power(mu_w, nu_w, C, eps_mu, eps_nu):
    """(1, eps)-capped transportation LP value via HiGHS.

    Minimizes <pi, C> over pi >= 0 with row sums <= mu/(1-eps_mu), column
    sums <= nu/(1-eps_nu), total mass 1.  Returns the optimal p-th power
    cost (no root taken).
    """
    n, m = C.shape
    nv = n * m
    rows = np.zeros((n, nv))
    for i in range(n):
        rows[i, i * m:(i + 1) * m] = 1.0
    cols = np.zeros((m, nv))
    for j in range(m):
        cols[j, j::m] = 1.0
    res = linprog(
        C.ravel(),
        A_ub=np.vstack([rows, cols]),
        b_ub=np.concatenate([mu_w / (1 - eps_mu), nu_w / (1 - eps_nu)]),
        A_eq=np.ones((1, nv)),
        b_eq=[1.0],
        bounds=(0, None),
        method="highs",
    )
    assert res.success, res.message
    return float(res.fun)


def lp_winf_feasible(mu_w, nu_w, D, eps, t):
    """LP feasibility of a unit-mass coupling on edges with d <= t."""
    n, m = D.shape
    nv = n * m
    cost = np.where(D <= t + 1e-15, 0.0, 1.0).ravel()
    rows = np.zeros((n, nv))
    for i in range(n):
        rows[i, i * m:(i + 1) * m] = 1.0
    cols = np.zeros((m, nv))
    for j in range(m):
        cols[j, j::m] = 1.0
    res = linprog(
        cost,
        A_ub=np.vstack([rows, cols]),
        b_ub=np.concatenate([mu_w / (1 - eps), nu_w / (1 - eps)]),
        A_eq=np.ones((1, nv)),
        b_eq=[1.0],
        bounds=(0, None),
        method="highs",
    )
    return res.success and res.fun <= 1e-10


def brute_winf(mu_w, nu_w, D, eps):
    """Robust infinity-order value by scanning every distance threshold."""
    for t in np.unique(D):
        if lp_winf_feasible(mu_w, nu_w, D, eps, float(t)):
            return float(t)
    raise AssertionError("no feasible threshold found")


def random_measure(rng, n, d):
    """Random discrete measure with well-separated positive weights."""
    from robustot import DiscreteMeasure

    w = rng.random(n) + 0.1
    return DiscreteMeasure(rng.normal(size=(n, d)), w / w.sum())
