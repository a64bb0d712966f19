"""Dual certificates for robust transport.

The robust problem has a Kantorovich-type dual over potentials f with a
range penalty: with g the c-transform of f,

    (1 - e1)(1 - e2) V^p = sup_f (1-e2) <mu, f> + (1-e1) <nu, g>
                           - e1 (1-e2) max f - e2 (1-e1) max g.

``max g`` plays the role of ``-inf f`` over the whole space through the
identity inf_y f^c(y) = -sup_x f(x), so for a symmetric radius the penalty
is eps * Range(f).  Certificates are normalized with max f = max g, which
makes the penalty read 2 * eps * ||f||_inf as well.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InternalError, InvalidParameterError, NumericError

# Strong-duality gap allowance, relative to the cost scale.
GAP_TOL = 1e-8


@dataclass(frozen=True)
class DualCertificate:
    """Feasible dual pair with its penalized objective bookkeeping.

    ``primal_power`` is (1-e1)(1-e2) * value^p of the matching primal;
    ``objective`` is the penalized dual value of (f, g); ``gap`` their
    difference (nonnegative up to roundoff by weak duality)."""

    f: np.ndarray
    g: np.ndarray
    eps_mu: float
    eps_nu: float
    penalty: float
    objective: float
    primal_power: float
    gap: float

    def to_json_dict(self):
        return {
            "f": self.f.tolist(),
            "g": self.g.tolist(),
            "penalty": self.penalty,
            "primalPower": self.primal_power,
            "gap": self.gap,
        }


def save_certificate(cert, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(cert.to_json_dict(), fh, indent=2)
        fh.write("\n")


def c_transform(f, C):
    """g_j = min_i (C_ij - f_i)."""
    f = np.asarray(f, dtype=np.float64)
    return np.min(C - f[:, None], axis=0)


def dual_objective(f, g, mu_w, nu_w, eps_mu, eps_nu):
    """Penalized dual objective; a lower bound on (1-e1)(1-e2) V^p
    whenever f_i + g_j <= C_ij."""
    fmax = float(np.max(f))
    gmax = float(np.max(g))
    penalty = eps_mu * (1 - eps_nu) * fmax + eps_nu * (1 - eps_mu) * gmax
    obj = (1 - eps_nu) * float(mu_w @ f) + (1 - eps_mu) * float(nu_w @ g) - penalty
    return obj, penalty


def dual_from_flow(plan):
    """Exact dual certificate extracted from flow potentials.

    Requires a plan produced by the coupling formulation (it carries the
    node potentials).  Raises :class:`InternalError` if the resulting gap
    exceeds tolerance.
    """
    if plan.solution is None:
        raise InvalidParameterError(
            "plan carries no flow potentials; solve with the coupling formulation"
        )
    if plan.p == math.inf:
        raise InvalidParameterError("dual certificates require finite p")
    sol = plan.solution
    C = plan.cost
    e1, e2 = plan.eps_mu, plan.eps_nu
    mu_w, nu_w = plan.mu_weights, plan.nu_weights
    caps_a = mu_w / (1 - e1)
    caps_b = nu_w / (1 - e2)
    tinycap = 1e-12

    # Node prices y with C_ij >= y_i - y_j, tight on positive flow.
    y_r = -sol.potentials_row
    y_c = -sol.potentials_col
    row_flow = sol.flow.sum(axis=1)
    col_flow = sol.flow.sum(axis=0)
    unsat_r = caps_a - row_flow > tinycap
    unsat_c = caps_b - col_flow > tinycap
    # Source price: rows with spare capacity must get a zero multiplier.
    y_s = float(np.min(y_r[unsat_r])) if np.any(unsat_r) else float(np.max(y_r))
    y_t = float(np.max(y_c[unsat_c])) if np.any(unsat_c) else float(np.min(y_c))
    alpha = np.maximum(0.0, y_s - y_r)
    beta = np.maximum(0.0, y_c - y_t)
    gamma = y_s - y_t

    f = gamma / 2.0 - alpha
    g = gamma / 2.0 - beta
    obj, penalty = dual_objective(f, g, mu_w, nu_w, e1, e2)
    primal_power = (1 - e1) * (1 - e2) * plan.power_value
    gap = primal_power - obj
    scale = max(float(np.max(C)), 1.0)
    if abs(gap) > GAP_TOL * scale:
        raise InternalError(f"duality gap {gap!r} exceeds tolerance")
    return DualCertificate(
        f=f,
        g=g,
        eps_mu=e1,
        eps_nu=e2,
        penalty=penalty,
        objective=obj,
        primal_power=primal_power,
        gap=gap,
    )


def trimmed_dual_value(f, C, eps):
    """Loss-trimming evaluation for uniform measures with eps * n integral.

    Averages the smallest (1 - eps) n values of f and of its c-transform;
    at an optimal f this equals the robust distance to the power p.
    """
    f = np.asarray(f, dtype=np.float64)
    n = f.size
    m = C.shape[1]
    keep_n = (1 - eps) * n
    keep_m = (1 - eps) * m
    if abs(keep_n - round(keep_n)) > 1e-9 or abs(keep_m - round(keep_m)) > 1e-9:
        raise InvalidParameterError("eps times each support size must be integral")
    kn, km = int(round(keep_n)), int(round(keep_m))
    if kn < 1 or km < 1:
        raise InvalidParameterError("trimming would discard every atom")
    g = c_transform(f, C)
    fs = np.sort(f)[:kn]
    gs = np.sort(g)[:km]
    return float(fs.mean() + gs.mean())


def asymmetric_dual_value(f, C, mu_w, nu_w, eps_mu, eps_nu):
    """Penalized dual objective for one-sided or asymmetric radii.

    Weak duality: the result never exceeds (1-e1)(1-e2) V^p, with equality
    at a maximizing f.  The sup-f term enters with a negative sign, which
    the one-sided case (eps_nu = 0) makes explicit:
    (1-e) V^p = sup_f <mu, f> + (1-e) <nu, f^c> - e sup f.
    """
    g = c_transform(f, C)
    obj, _ = dual_objective(f, g, mu_w, nu_w, eps_mu, eps_nu)
    return obj


@dataclass(frozen=True)
class AscentConfig:
    """Subgradient ascent settings.

    ``step_constant`` defaults to a tenth of the cost scale; the schedule
    is ``c / sqrt(t)`` unless ``schedule == "constant"``.  When a target
    value is available the Polyak rule (gap over squared subgradient norm)
    overrides the schedule, since it needs no tuning."""

    max_iters: int = 100000
    step_constant: float | None = None
    schedule: str = "sqrt"
    tol: float = 1e-3


def _trimmed_col_weights(fc, nu_w, eps):
    """Trim ``eps`` mass from the columns with the largest f^c values.

    This is the exact inner maximization over g <= f^c of
    <nu, g> - eps * max(g): the optimal g caps f^c at its (1 - eps)
    nu-quantile, which is equivalent to reweighting the columns.
    Returns (trimmed weights, cap value)."""
    if eps <= 0:
        return nu_w, float(np.max(fc))
    order = np.argsort(-fc, kind="stable")  # largest first, lowest index wins
    cum = np.cumsum(nu_w[order])
    k = int(np.searchsorted(cum, eps, side="left"))
    out = nu_w.copy()
    out[order[:k]] = 0.0
    out[order[k]] -= eps - (cum[k - 1] if k > 0 else 0.0)
    return out, float(fc[order[k]])


def dual_ascent(mu_w, nu_w, C, eps_mu, eps_nu=0.0, config=None,
                target_power=None):
    """Maximize the penalized dual over f by subgradient ascent.

    The companion potential is the capped c-transform
    g = min(f^c, quantile cap), realized through trimmed column weights,
    so the supremum over f alone equals the full dual value on discrete
    supports.  Keeps the best iterate seen.  When ``target_power`` (the
    primal value scaled by the kept fractions) is supplied, the Polyak
    step rule is used and iteration stops once the relative gap drops
    below ``config.tol``.
    """
    cfg = config or AscentConfig()
    if cfg.schedule not in ("sqrt", "constant"):
        raise InvalidParameterError(f"unknown step schedule {cfg.schedule!r}")
    mu_w = np.asarray(mu_w, dtype=np.float64)
    nu_w = np.asarray(nu_w, dtype=np.float64)
    n, m = C.shape
    scale = max(float(np.max(C)), 1e-12)
    c0 = cfg.step_constant if cfg.step_constant is not None else scale / 10.0
    e1, e2 = eps_mu, eps_nu

    f = np.zeros(n)
    best_obj = -np.inf
    best_f = f.copy()
    cols = np.arange(m)
    for t in range(1, cfg.max_iters + 1):
        vals = C - f[:, None]
        arg = np.argmin(vals, axis=0)  # lowest index on ties
        fc = vals[arg, cols]
        nu_t, cap = _trimmed_col_weights(fc, nu_w, e2)
        fmax_i = int(np.argmax(f))
        obj = ((1 - e2) * float(mu_w @ f) - e1 * (1 - e2) * f[fmax_i]
               + (1 - e1) * float(nu_t @ fc))
        if not math.isfinite(obj):
            raise NumericError("dual ascent diverged to a non-finite value")
        if obj > best_obj:
            best_obj = obj
            best_f = f.copy()
        if target_power is not None:
            rel = abs(target_power - best_obj) / max(abs(target_power), 1e-12)
            if rel <= cfg.tol:
                break
        grad = (1 - e2) * mu_w.copy()
        np.subtract.at(grad, arg, (1 - e1) * nu_t)
        grad[fmax_i] -= e1 * (1 - e2)
        if target_power is not None:
            # Polyak step: exact gap over the squared subgradient norm.
            gnorm2 = float(grad @ grad)
            if gnorm2 <= 1e-30:
                break  # zero subgradient: current f is optimal
            step = max(target_power - best_obj, 0.0) / gnorm2
            if step <= 0.0:
                step = c0 / math.sqrt(t)
        else:
            step = c0 if cfg.schedule == "constant" else c0 / math.sqrt(t)
        f = f + step * grad

    fc = c_transform(best_f, C)
    _, cap = _trimmed_col_weights(fc, nu_w, e2)
    g = np.minimum(fc, cap)
    obj, penalty = dual_objective(best_f, g, mu_w, nu_w, e1, e2)
    primal = target_power if target_power is not None else obj
    return DualCertificate(
        f=best_f,
        g=g,
        eps_mu=e1,
        eps_nu=e2,
        penalty=penalty,
        objective=obj,
        primal_power=float(primal),
        gap=float(primal - obj),
    )
