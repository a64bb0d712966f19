"""Choosing the robustness radius.

The trimming curve delta -> (1 - delta) * W^delta(mu, nu)^p is convex-like
and piecewise linear in delta for discrete inputs: it falls at a rate of at
least the outlier separation (to the p) while contamination is still being
removed, then flattens to at most the inlier diameter (to the p).  The
elbow detector scans a delta grid for the first slope above a threshold
between those two scales.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import InternalError, InvalidParameterError
from .solvers import robust_wp

# The curve must be non-increasing up to this slack (relative to its start).
MONOTONE_TOL = 1e-9


@dataclass(frozen=True)
class ElbowReport:
    """Grid, curve, finite-difference slopes, threshold, and the estimate.

    ``eps_hat = 0`` flags a curve that is already (numerically) zero at
    delta = 0, i.e. contamination below the grid resolution."""

    grid: np.ndarray
    curve: np.ndarray
    slopes: np.ndarray
    threshold: float
    eps_hat: float

    def to_csv_text(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["delta", "curve", "slope"])
        for i in range(self.grid.size):
            slope = self.slopes[i] if i < self.slopes.size else ""
            writer.writerow([repr(float(self.grid[i])),
                             repr(float(self.curve[i])),
                             repr(float(slope)) if slope != "" else ""])
        return buf.getvalue()

    def to_json_dict(self):
        return {
            "epsHat": self.eps_hat,
            "threshold": self.threshold,
            "grid": self.grid.tolist(),
        }


def default_grid(grid_max=0.5, steps=26):
    """Evenly spaced radii from 0 to ``grid_max`` inclusive."""
    if not (0 < grid_max < 1):
        raise InvalidParameterError("grid_max must lie in (0, 1)")
    if steps < 2:
        raise InvalidParameterError("need at least two grid points")
    return np.linspace(0.0, grid_max, steps)


def default_slope_threshold(mu, nu, p):
    """Geometric mean of outlier-scale and inlier-scale slope magnitudes.

    The outlier separation is estimated by the 99th percentile of pooled
    pairwise distances; the inlier diameter by the 90th percentile of the
    distances below the largest gap in their sorted sequence.
    """
    pts = np.vstack([mu.points, nu.points])
    if pts.shape[0] > 800:
        # Deterministic thinning keeps the quantiles cheap on big inputs.
        stride = int(math.ceil(pts.shape[0] / 800))
        pts = pts[::stride]
    d = np.sort(pdist(pts))
    if d.size == 0 or d[-1] == 0:
        return -1.0
    big_hat = float(np.quantile(d, 0.99))
    gaps = np.diff(d)
    split = int(np.argmax(gaps))
    within = d[: split + 1]
    if within.size == 0 or within[-1] == 0:
        diam_hat = big_hat
    else:
        diam_hat = float(np.quantile(within, 0.90))
    diam_hat = max(diam_hat, 1e-12)
    return -math.sqrt((big_hat ** p) * (diam_hat ** p))


def elbow_detect(mu, nu, metric, grid=None, slope_threshold=None):
    """Estimate the contamination level from the trimming curve.

    Returns an :class:`ElbowReport` whose ``eps_hat`` is the midpoint of
    the first grid interval whose forward-difference slope rises above the
    threshold.
    """
    if metric.p == math.inf:
        raise InvalidParameterError("elbow detection requires finite p")
    if grid is None:
        grid = default_grid()
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size < 2 or np.any(np.diff(grid) <= 0) or grid[0] < 0 or grid[-1] >= 1:
        raise InvalidParameterError("grid must be increasing within [0, 1)")
    if slope_threshold is None:
        slope_threshold = default_slope_threshold(mu, nu, metric.p)

    curve = np.empty(grid.size)
    for i, delta in enumerate(grid):
        plan = robust_wp(mu, nu, metric, float(delta))
        curve[i] = (1 - delta) * plan.power_value
    slack = MONOTONE_TOL * (1.0 + curve[0])
    if np.any(np.diff(curve) > slack):
        raise InternalError("trimming curve failed to be non-increasing")
    slopes = np.diff(curve) / np.diff(grid)

    if curve[0] <= 1e-12:
        eps_hat = 0.0  # below grid resolution
    else:
        above = np.nonzero(slopes > slope_threshold)[0]
        if above.size:
            k = int(above[0])
            eps_hat = float(0.5 * (grid[k] + grid[k + 1]))
        else:
            eps_hat = float(grid[-1])
    return ElbowReport(
        grid=grid,
        curve=curve,
        slopes=slopes,
        threshold=float(slope_threshold),
        eps_hat=eps_hat,
    )


def save_elbow_report(report, prefix):
    """Write ``<prefix>.csv`` and ``<prefix>.json``; returns the two paths."""
    csv_path = f"{prefix}.csv"
    json_path = f"{prefix}.json"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(report.to_csv_text())
    with open(json_path, "w", encoding="utf-8", newline="") as fh:
        json.dump(report.to_json_dict(), fh, indent=2)
        fh.write("\n")
    return csv_path, json_path


def consistency_schedule(n, b, clamp=0.49):
    """Radius schedule eps_n = n^(-b), clamped into [0, ``clamp``].

    Any corruption fraction shrinking faster than the schedule is
    eventually removed entirely, giving a consistent estimate.
    """
    if n < 1:
        raise InvalidParameterError("sample size must be positive")
    if b < 0:
        raise InvalidParameterError("the exponent b must be nonnegative")
    return float(min(clamp, n ** (-b)))
