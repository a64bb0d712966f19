"""Min-cost flow on bipartite transportation networks.

Successive shortest augmenting paths with node potentials; each search is a
Dijkstra on reduced costs, so costs must be nonnegative.  Source and sink
arcs are implicit: every row with remaining capacity is a Dijkstra source,
and the search stops at the first settled column with remaining capacity.
Ties are broken toward the lowest node index (rows before columns).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, NumericError

# Required flow must be met within this absolute shortfall, else Infeasible.
SHORTFALL_TOL = 1e-9
# Augmentations below this fraction of the required flow count as exhausted.
EXHAUSTED_FRACTION = 1e-13
# Complementary slackness check tolerance, relative to the cost scale.
SLACKNESS_TOL = 1e-8

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class TransportNetwork:
    """Bipartite network: rows ship at most ``source_caps``, columns absorb
    at most ``sink_caps``, and exactly ``required_flow`` must move overall.

    ``allowed`` optionally masks out edges (used by threshold feasibility
    probes for the infinity-order distance)."""

    source_caps: np.ndarray
    sink_caps: np.ndarray
    costs: np.ndarray
    required_flow: float
    allowed: np.ndarray | None = field(default=None)

    def __post_init__(self):
        a = np.asarray(self.source_caps, dtype=np.float64).ravel()
        b = np.asarray(self.sink_caps, dtype=np.float64).ravel()
        c = np.asarray(self.costs, dtype=np.float64)
        if c.ndim != 2 or c.shape != (a.size, b.size):
            raise InvalidParameterError(
                f"cost shape {c.shape} does not match caps ({a.size}, {b.size})"
            )
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise NumericError("costs must be finite and nonnegative")
        if np.any(a < 0) or np.any(b < 0):
            raise NumericError("capacities must be nonnegative")
        if not np.isfinite(self.required_flow) or self.required_flow < 0:
            raise InvalidParameterError("required flow must be finite and >= 0")
        if self.required_flow > min(a.sum(), b.sum()) + 1e-12:
            raise InvalidParameterError(
                "required flow exceeds total capacity on one side"
            )
        mask = self.allowed
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != c.shape:
                raise InvalidParameterError("edge mask shape mismatch")
        object.__setattr__(self, "source_caps", a)
        object.__setattr__(self, "sink_caps", b)
        object.__setattr__(self, "costs", c)
        object.__setattr__(self, "allowed", mask)

    def to_json_dict(self):
        """Debug dump of the full network."""
        out = {
            "sourceCaps": self.source_caps.tolist(),
            "sinkCaps": self.sink_caps.tolist(),
            "costs": self.costs.tolist(),
            "requiredFlow": self.required_flow,
        }
        if self.allowed is not None:
            out["allowed"] = self.allowed.astype(int).tolist()
        return out

    def dump(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")


@dataclass(frozen=True)
class FlowSolution:
    """Flow matrix plus the node potentials that certify its optimality."""

    flow: np.ndarray
    total_cost: float
    status: str
    potentials_row: np.ndarray
    potentials_col: np.ndarray
    pushed: float

    @property
    def node_potentials(self):
        return np.concatenate([self.potentials_row, self.potentials_col])


def min_cost_flow(net):
    """Solve the network, returning a :class:`FlowSolution`.

    The reduced cost of a forward arc (i -> j) is
    ``costs[i, j] + pot_row[i] - pot_col[j]`` and stays nonnegative on all
    residual arcs throughout, which is what makes Dijkstra valid and what
    later yields a zero-gap dual certificate.
    """
    a = net.source_caps
    b = net.sink_caps
    cost = net.costs
    n, m = cost.shape
    required = float(net.required_flow)
    if net.allowed is not None:
        # Excluded edges become unusable in both directions.
        cost = np.where(net.allowed, cost, np.inf)

    flow = np.zeros((n, m))
    rem_a = a.copy()
    rem_b = b.copy()
    pot_r = np.zeros(n)
    pot_c = np.zeros(m)
    pushed = 0.0
    tiny = EXHAUSTED_FRACTION * max(required, 1.0)

    while required - pushed > tiny:
        dist_r = np.where(rem_a > tiny, 0.0, np.inf)
        dist_c = np.full(m, np.inf)
        done_r = np.zeros(n, dtype=bool)
        done_c = np.zeros(m, dtype=bool)
        par_c = np.full(m, -1, dtype=np.int64)  # settled via row i -> col j
        par_r = np.full(n, -1, dtype=np.int64)  # settled via col j -> row i
        target = -1
        while True:
            dr = np.where(done_r, np.inf, dist_r)
            dc = np.where(done_c, np.inf, dist_c)
            ir = int(np.argmin(dr))
            jc = int(np.argmin(dc))
            if dr[ir] <= dc[jc]:
                if not np.isfinite(dr[ir]):
                    break
                done_r[ir] = True
                # Forward arcs ir -> all columns.
                cand = dist_r[ir] + cost[ir, :] + pot_r[ir] - pot_c
                better = ~done_c & (cand < dist_c)
                if np.any(better):
                    dist_c[better] = cand[better]
                    par_c[better] = ir
            else:
                if not np.isfinite(dc[jc]):
                    break
                done_c[jc] = True
                if rem_b[jc] > tiny:
                    target = jc
                    break
                # Backward arcs jc -> rows currently carrying flow into jc.
                carriers = flow[:, jc] > 0
                if np.any(carriers):
                    cand = dist_c[jc] - cost[:, jc] + pot_c[jc] - pot_r
                    better = carriers & ~done_r & (cand < dist_r)
                    if np.any(better):
                        dist_r[better] = cand[better]
                        par_r[better] = jc
        if target < 0:
            break  # no augmenting path left
        delta = dist_c[target]
        pot_r += np.minimum(dist_r, delta)
        pot_c += np.minimum(dist_c, delta)

        # Trace the alternating path back to a free row, finding the bottleneck.
        path_fwd = []  # arcs gaining flow
        path_bwd = []  # arcs losing flow
        bott = min(rem_b[target], required - pushed)
        j = target
        while True:
            i = int(par_c[j])
            path_fwd.append((i, j))
            jprev = int(par_r[i])
            if jprev < 0:
                bott = min(bott, rem_a[i])
                start = i
                break
            bott = min(bott, flow[i, jprev])
            path_bwd.append((i, jprev))
            j = jprev
        if bott <= tiny:
            # Numerically exhausted residuals: clear them and search again.
            cleared = bool(
                np.any((rem_a > 0) & (rem_a <= tiny))
                or np.any((rem_b > 0) & (rem_b <= tiny))
            )
            rem_a[rem_a <= tiny] = 0.0
            rem_b[rem_b <= tiny] = 0.0
            for (i, j) in path_bwd:
                if 0 < flow[i, j] <= tiny:
                    flow[i, j] = 0.0
                    cleared = True
            if not cleared:
                break
            continue
        for (i, j) in path_fwd:
            flow[i, j] += bott
        for (i, j) in path_bwd:
            flow[i, j] -= bott
        rem_a[start] -= bott
        rem_b[target] -= bott
        pushed += bott

    shortfall = required - pushed
    status = STATUS_OPTIMAL if shortfall <= SHORTFALL_TOL else STATUS_INFEASIBLE
    with np.errstate(invalid="ignore"):
        total = float(np.sum(np.where(flow > 0, flow * np.where(
            np.isfinite(cost), cost, 0.0), 0.0)))
    return FlowSolution(
        flow=flow,
        total_cost=total,
        status=status,
        potentials_row=pot_r,
        potentials_col=pot_c,
        pushed=pushed,
    )


def max_flow_feasible(net):
    """True when ``required_flow`` can be routed at all (costs ignored)."""
    probe = TransportNetwork(
        source_caps=net.source_caps,
        sink_caps=net.sink_caps,
        costs=np.zeros_like(net.costs),
        required_flow=net.required_flow,
        allowed=net.allowed,
    )
    return min_cost_flow(probe).status == STATUS_OPTIMAL


def check_slackness(net, sol, tol=SLACKNESS_TOL):
    """Verify complementary slackness of a solved network.

    Every positive-flow edge must have reduced cost zero within
    ``tol * max cost``; returns the worst violation.
    """
    cost = net.costs
    scale = max(float(np.max(cost)) if cost.size else 0.0, 1.0)
    red = cost + sol.potentials_row[:, None] - sol.potentials_col[None, :]
    active = sol.flow > 0
    worst = float(np.max(np.abs(red[active]))) if np.any(active) else 0.0
    if worst > tol * scale:
        return worst
    # Residual forward arcs must have nonnegative reduced cost.
    if net.allowed is not None:
        red = np.where(net.allowed, red, np.inf)
    neg = float(np.min(red)) if red.size else 0.0
    if neg < -tol * scale:
        return max(worst, -neg)
    return worst
