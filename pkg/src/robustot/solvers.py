"""Outlier-robust Wasserstein solvers.

The canonical formulation is a single transportation network: a coupling of
total mass one whose row sums are capped by mu/(1 - eps_mu) and column sums
by nu/(1 - eps_nu).  Equivalent formulations (explicit mass removal, and
mass addition through zero-cost slack atoms) are provided as cross-checks,
along with the order-infinity distance, a total-variation-ball variant, and
a rounding step onto the finite-support vertex structure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.sparse import csr_matrix
from scipy.spatial.distance import cdist

from .errors import InternalError, InvalidParameterError
from .flow import (
    STATUS_OPTIMAL,
    FlowSolution,
    TransportNetwork,
    max_flow_feasible,
    min_cost_flow,
)
from .measures import cost_matrix, distance_matrix

FORMULATIONS = ("coupling", "removal", "addition")


@dataclass(frozen=True)
class RobustPlan:
    """Solution of a robust transport problem.

    ``coupling`` has total mass one; ``kept_mu = (1 - eps_mu) * row sums``
    is the part of mu that participates in transport, and ``removed_mu``
    the discarded remainder (likewise for nu).  ``power_value`` is the
    expected ground cost under the coupling, so ``value = power_value**(1/p)``
    for finite p; for p = inf it is the certified threshold itself.
    """

    value: float
    power_value: float
    p: float
    eps_mu: float
    eps_nu: float
    coupling: np.ndarray
    kept_mu: np.ndarray
    kept_nu: np.ndarray
    removed_mu: np.ndarray
    removed_nu: np.ndarray
    mu_weights: np.ndarray
    nu_weights: np.ndarray
    cost: np.ndarray
    solution: FlowSolution | None = field(default=None, repr=False)

    def to_json_dict(self):
        triples = []
        rows, cols = np.nonzero(self.coupling)
        for i, j in zip(rows.tolist(), cols.tolist()):
            triples.append([i, j, float(self.coupling[i, j])])
        return {
            "value": self.value,
            "p": None if self.p == math.inf else self.p,
            "epsMu": self.eps_mu,
            "epsNu": self.eps_nu,
            "coupling": triples,
            "removedMu": self.removed_mu.tolist(),
            "removedNu": self.removed_nu.tolist(),
        }


def save_plan(plan, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(plan.to_json_dict(), fh, indent=2)
        fh.write("\n")


def load_plan(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _check_eps(eps, name):
    if not (0 <= eps < 1):
        raise InvalidParameterError(f"{name} must lie in [0, 1), got {eps!r}")


def _make_plan(mu_w, nu_w, C, p, eps_mu, eps_nu, coupling, power, solution=None):
    kept_mu = (1 - eps_mu) * coupling.sum(axis=1)
    kept_nu = (1 - eps_nu) * coupling.sum(axis=0)
    removed_mu = np.maximum(mu_w - kept_mu, 0.0)
    removed_nu = np.maximum(nu_w - kept_nu, 0.0)
    value = power if p == math.inf else power ** (1.0 / p)
    return RobustPlan(
        value=float(value),
        power_value=float(power),
        p=p,
        eps_mu=eps_mu,
        eps_nu=eps_nu,
        coupling=coupling,
        kept_mu=kept_mu,
        kept_nu=kept_nu,
        removed_mu=removed_mu,
        removed_nu=removed_nu,
        mu_weights=np.asarray(mu_w, dtype=np.float64),
        nu_weights=np.asarray(nu_w, dtype=np.float64),
        cost=C,
        solution=solution,
    )


def robust_wp(mu, nu, metric, eps_mu, eps_nu=None, formulation="coupling"):
    """Robust Wasserstein distance with up to eps mass removed per side.

    Returns a :class:`RobustPlan`.  ``formulation`` selects one of three
    equivalent network encodings; ``"coupling"`` is canonical and the only
    one that attaches flow potentials for dual certificates.  For
    ``p = inf`` the threshold search of :func:`robust_winf` is used.
    """
    if eps_nu is None:
        eps_nu = eps_mu
    _check_eps(eps_mu, "eps_mu")
    _check_eps(eps_nu, "eps_nu")
    if metric.p == math.inf:
        return robust_winf(mu, nu, metric, eps_mu, eps_nu)
    if formulation not in FORMULATIONS:
        raise InvalidParameterError(f"unknown formulation {formulation!r}")
    C = cost_matrix(mu, nu, metric)
    if formulation == "coupling":
        return _solve_coupling(mu, nu, C, metric.p, eps_mu, eps_nu)
    if formulation == "removal":
        return _solve_removal(mu, nu, C, metric.p, eps_mu, eps_nu)
    return _solve_addition(mu, nu, C, metric.p, eps_mu, eps_nu)


def wasserstein(mu, nu, metric):
    """Classical Wasserstein distance (the eps = 0 special case)."""
    return robust_wp(mu, nu, metric, 0.0, 0.0).value


def _solve_coupling(mu, nu, C, p, eps_mu, eps_nu):
    net = TransportNetwork(
        source_caps=mu.weights / (1 - eps_mu),
        sink_caps=nu.weights / (1 - eps_nu),
        costs=C,
        required_flow=1.0,
    )
    sol = min_cost_flow(net)
    if sol.status != STATUS_OPTIMAL:
        raise InternalError("coupling network unexpectedly infeasible")
    return _make_plan(mu.weights, nu.weights, C, p, eps_mu, eps_nu, sol.flow,
                      sol.total_cost, solution=sol)


def _solve_removal(mu, nu, C, p, eps_mu, eps_nu):
    # Trim each side explicitly: ship (1-eps_mu)(1-eps_nu) of mass between
    # caps (1-eps_nu)*mu and (1-eps_mu)*nu, then renormalize the kept parts.
    keep = (1 - eps_mu) * (1 - eps_nu)
    net = TransportNetwork(
        source_caps=(1 - eps_nu) * mu.weights,
        sink_caps=(1 - eps_mu) * nu.weights,
        costs=C,
        required_flow=keep,
    )
    sol = min_cost_flow(net)
    if sol.status != STATUS_OPTIMAL:
        raise InternalError("removal network unexpectedly infeasible")
    coupling = sol.flow / keep
    return _make_plan(mu.weights, nu.weights, C, p, eps_mu, eps_nu, coupling,
                      sol.total_cost / keep)


def _solve_addition(mu, nu, C, p, eps_mu, eps_nu):
    # Huber-ball enlargement: each side may add delta = eps/(1+eps) of mass
    # anywhere.  Added mass can always be relocated to wherever it is
    # matched, so slack atoms connect at zero cost; the slack-to-slack edge
    # is excluded since any optimum can avoid it.
    if eps_mu != eps_nu:
        raise InvalidParameterError(
            "the mass-addition formulation requires a symmetric radius"
        )
    eps = eps_mu
    delta = eps / (1 + eps)
    n, m = C.shape
    big = np.zeros((n + 1, m + 1))
    big[:n, :m] = C
    allowed = np.ones((n + 1, m + 1), dtype=bool)
    allowed[n, m] = False
    net = TransportNetwork(
        source_caps=np.concatenate([(1 - delta) * mu.weights, [delta]]),
        sink_caps=np.concatenate([(1 - delta) * nu.weights, [delta]]),
        costs=big,
        required_flow=1.0,
        allowed=allowed,
    )
    sol = min_cost_flow(net)
    if sol.status != STATUS_OPTIMAL:
        raise InternalError("mass-addition network unexpectedly infeasible")
    keep = 1 - 2 * delta
    coupling = sol.flow[:n, :m] / keep
    return _make_plan(mu.weights, nu.weights, C, p, eps_mu, eps_nu, coupling,
                      sol.total_cost / keep)


# ---------------------------------------------------------------------------
# Order-infinity distance.
# ---------------------------------------------------------------------------


def robust_winf(mu, nu, metric, eps_mu, eps_nu=None):
    """Robust infinity-order distance via threshold search.

    The value is the smallest ground distance t such that a coupling of
    total mass one exists on edges with d <= t, under the usual inflated
    caps.  One-dimensional Euclidean inputs use a linear-time greedy
    feasibility sweep; the general case runs max-flow probes.
    """
    if eps_nu is None:
        eps_nu = eps_mu
    _check_eps(eps_mu, "eps_mu")
    _check_eps(eps_nu, "eps_nu")
    D = distance_matrix(mu, nu, metric)
    a = mu.weights / (1 - eps_mu)
    b = nu.weights / (1 - eps_nu)
    candidates = np.unique(D)
    one_dim = metric.kind == "euclidean" and mu.dim == 1

    if one_dim:
        xs = mu.points[:, 0]
        ys = nu.points[:, 0]

        def feasible(t):
            return _interval_max_flow(xs, a, ys, b, t)[0] >= 1.0 - 1e-12
    else:

        def feasible(t):
            net = TransportNetwork(
                source_caps=a,
                sink_caps=b,
                costs=np.zeros_like(D),
                required_flow=1.0,
                allowed=D <= t,
            )
            return max_flow_feasible(net)

    lo, hi = 0, len(candidates) - 1
    if not feasible(candidates[hi]):
        raise InternalError("threshold search found no feasible coupling")
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(candidates[mid]):
            hi = mid
        else:
            lo = mid + 1
    tstar = float(candidates[lo])

    # Materialize a witness coupling at the optimal threshold.
    if one_dim:
        _, triples = _interval_max_flow(xs, a, ys, b, tstar)
        coupling = np.zeros_like(D)
        for i, j, amount in triples:
            coupling[i, j] += amount
        total = coupling.sum()
        if total > 1.0:
            coupling /= total
    else:
        net = TransportNetwork(
            source_caps=a,
            sink_caps=b,
            costs=np.zeros_like(D),
            required_flow=1.0,
            allowed=D <= tstar,
        )
        sol = min_cost_flow(net)
        if sol.status != STATUS_OPTIMAL:
            raise InternalError("witness coupling vanished at optimal threshold")
        coupling = sol.flow
    return _make_plan(mu.weights, nu.weights, D, math.inf, eps_mu, eps_nu,
                      coupling, tstar)


def _interval_max_flow(xs, a, ys, b, t):
    """Greedy max flow when row i may serve col j iff |x_i - y_j| <= t.

    Sorting both sides makes every row's feasible set an interval of
    columns, so serving each column from the leftmost still-live rows is
    optimal.  Returns (shipped total, list of (i, j, amount))."""
    ri = np.argsort(xs, kind="stable")
    cj = np.argsort(ys, kind="stable")
    rem = a[ri].astype(float).copy()
    xs_s = xs[ri]
    shipped = 0.0
    triples = []
    ptr = 0
    n = xs_s.size
    for pos in range(cj.size):
        j = cj[pos]
        y = ys[j]
        need = float(b[j])
        while need > 1e-18 and ptr < n:
            # Compare |x - y| to t directly so a threshold equal to some
            # pairwise distance reproduces that comparison bit for bit.
            if rem[ptr] <= 0 or y - xs_s[ptr] > t:
                ptr += 1
                continue
            if xs_s[ptr] - y > t:
                break
            take = min(rem[ptr], need)
            rem[ptr] -= take
            need -= take
            shipped += take
            triples.append((int(ri[ptr]), int(j), take))
            if rem[ptr] <= 0:
                ptr += 1
    return shipped, triples


# ---------------------------------------------------------------------------
# Total-variation-ball variant.
# ---------------------------------------------------------------------------


def tv_robust_wp(mu, nu, metric, eps):
    """Robust distance over TV balls of radius eps around each marginal.

    Each side may remove mass and add mass (removal + addition <= eps, and
    conservation forces them equal, so each is at most eps / 2).  Added
    mass relocates to its match for free, so it rides zero-cost slack arcs;
    candidate supports are restricted to the union of the input supports.
    """
    if not 0 <= eps <= 2:
        raise InvalidParameterError("a TV radius must lie in [0, 2]")
    if metric.p == math.inf:
        raise InvalidParameterError("the TV variant is defined for finite p")
    C = cost_matrix(mu, nu, metric)
    n, m = C.shape
    half = eps / 2.0
    big = np.zeros((n + 1, m + 1))
    big[:n, :m] = C
    net = TransportNetwork(
        source_caps=np.concatenate([mu.weights, [half]]),
        sink_caps=np.concatenate([nu.weights, [half]]),
        costs=big,
        required_flow=1.0,
    )
    sol = min_cost_flow(net)
    if sol.status != STATUS_OPTIMAL:
        raise InternalError("TV-ball network unexpectedly infeasible")
    power = sol.total_cost
    return power ** (1.0 / metric.p)


# ---------------------------------------------------------------------------
# Vertex rounding for uniform measures.
# ---------------------------------------------------------------------------


def vertex_round(plan):
    """Optimal plan at a vertex of the capped transportation polytope.

    For uniform measures on n points per side, some optimal kept marginal
    gives mass 1/n to floor((1-eps) n) atoms plus a residual
    ceil(eps n)/n - eps on one more atom.  An exact simplex re-solve of
    the trimmed linear program lands on such a vertex; the value is
    unchanged.
    """
    if plan.eps_mu != plan.eps_nu:
        raise InvalidParameterError("vertex rounding needs a symmetric radius")
    eps = plan.eps_mu
    n = plan.mu_weights.size
    if plan.nu_weights.size != n:
        raise InvalidParameterError("vertex rounding needs equally sized supports")
    for w in (plan.mu_weights, plan.nu_weights):
        if np.max(np.abs(w - 1.0 / n)) > 1e-12:
            raise InvalidParameterError("vertex rounding needs uniform weights")
    if plan.p == math.inf:
        raise InvalidParameterError("vertex rounding is defined for finite p")
    C = plan.cost
    nv = n * n
    rows = csr_matrix(
        (np.ones(nv), (np.repeat(np.arange(n), n), np.arange(nv)))
    )
    cols = csr_matrix(
        (np.ones(nv), (np.tile(np.arange(n), n), np.arange(nv)))
    )
    a_ub = csr_matrix(np.vstack([rows.toarray(), cols.toarray()]))
    b_ub = np.full(2 * n, 1.0 / n)
    a_eq = csr_matrix(np.ones((1, nv)))
    res = linprog(
        C.ravel(),
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=[1.0 - eps],
        bounds=(0, None),
        method="highs-ds",
    )
    if not res.success:
        raise InternalError(f"vertex rounding LP failed: {res.message}")
    pi = np.asarray(res.x).reshape(n, n)
    keep = 1.0 - eps
    coupling = pi / keep
    power = float(np.sum(pi * C)) / keep
    return _make_plan(plan.mu_weights, plan.nu_weights, C, plan.p, eps, eps,
                      coupling, power)


# ---------------------------------------------------------------------------
# Fast path for large uniform instances (used by the experiment harness).
# ---------------------------------------------------------------------------


def uniform_partial_value(x, y, p, eps):
    """Robust distance between uniform empirical measures of equal size.

    Requires eps * n integral.  By the vertex structure the optimum keeps
    exactly k = (1 - eps) n atoms per side matched one to one, so the
    problem reduces to a partial assignment, solved exactly by padding the
    cost matrix with zero-cost dummy rows and columns.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    n = x.shape[0]
    if y.shape[0] != n:
        raise InvalidParameterError("uniform fast path needs equal sample sizes")
    _check_eps(eps, "eps")
    k_float = (1 - eps) * n
    k = int(round(k_float))
    if abs(k_float - k) > 1e-9 or k < 1:
        raise InvalidParameterError("eps * n must be a positive integer")
    C = cdist(x, y, metric="euclidean") ** p
    if k == n:
        r, c = linear_sum_assignment(C)
        cost = float(C[r, c].sum())
    else:
        pad = n - k
        size = n + pad
        forbid = float(C.max()) * (n + 1) + 1.0
        M = np.zeros((size, size))
        M[:n, :n] = C
        M[n:, n:] = forbid
        r, c = linear_sum_assignment(M)
        real = (r < n) & (c < n)
        cost = float(M[r[real], c[real]].sum())
    return (cost / k) ** (1.0 / p)


# ---------------------------------------------------------------------------
# Named convenience wrappers.
# ---------------------------------------------------------------------------


def one_sided_robust_wp(mu, nu, metric, eps):
    """Robust distance trimming only the first argument (eps_nu = 0)."""
    return robust_wp(mu, nu, metric, eps, 0.0)


def robust_wp_mass_addition(mu, nu, metric, eps):
    """Value of the mass-addition cross-check formulation."""
    return robust_wp(mu, nu, metric, eps, formulation="addition").value
