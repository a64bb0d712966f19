"""Discrete probability measures, ground costs, samplers, and file I/O.

A measure is a finite list of support points with strictly positive weights
summing to one.  All solvers in the package consume pairs of these together
with a ground cost matrix raised to the transport exponent ``p``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import FileFormatError, InvalidParameterError, NumericError

# Weight sums farther than this from 1 are rejected outright.
WEIGHT_SUM_HARD_TOL = 1e-9
# Duplicate-merge accumulation must reproduce the original total this tightly.
WEIGHT_SUM_MERGE_TOL = 1e-12


def rng_from_seed(seed):
    """Return a counter-based 64-bit generator (Philox) for the given seed.

    Philox is counter based, so streams are reproducible across platforms
    and independent for distinct seeds.
    """
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely supported probability measure.

    Duplicate support points (exact bitwise equality) are merged by summing
    their weights, keeping first-occurrence order.  Weights must be strictly
    positive and sum to one within ``1e-9``; small deviations are
    renormalized away.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if pts.ndim != 2:
            raise InvalidParameterError("points must be a 2-d array (n, d)")
        if pts.shape[0] != w.shape[0]:
            raise InvalidParameterError(
                f"{pts.shape[0]} points but {w.shape[0]} weights"
            )
        if pts.shape[0] == 0:
            raise InvalidParameterError("a measure needs at least one atom")
        if not np.all(np.isfinite(pts)):
            raise NumericError("support points must be finite")
        if not np.all(np.isfinite(w)):
            raise NumericError("weights must be finite")
        if np.any(w <= 0):
            raise NumericError("weights must be strictly positive")
        total = float(w.sum())
        if abs(total - 1.0) > WEIGHT_SUM_HARD_TOL:
            raise InvalidParameterError(
                f"weights sum to {total!r}, expected 1 within {WEIGHT_SUM_HARD_TOL}"
            )
        pts, w = _merge_duplicates(pts, w)
        w = w / w.sum()
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def to_json_dict(self):
        return {
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
        }


def _merge_duplicates(pts, w):
    """Merge bitwise-identical rows, summing weights, first-seen order."""
    seen = {}
    order = []
    sums = []
    raw = np.ascontiguousarray(pts)
    for i in range(raw.shape[0]):
        key = raw[i].tobytes()
        j = seen.get(key)
        if j is None:
            seen[key] = len(order)
            order.append(i)
            sums.append(float(w[i]))
        else:
            sums[j] += float(w[i])
    merged_w = np.asarray(sums, dtype=np.float64)
    if abs(merged_w.sum() - w.sum()) > WEIGHT_SUM_MERGE_TOL:
        raise NumericError("duplicate merge failed to conserve total weight")
    return raw[order].copy(), merged_w


@dataclass(frozen=True)
class GroundMetric:
    """Ground cost specification.

    ``kind`` is ``"euclidean"`` or ``"custom"``; a custom metric carries an
    explicit nonnegative matrix indexed by (mu atom, nu atom).  ``p`` is the
    transport exponent, a float ``>= 1`` or ``math.inf``.
    """

    p: float
    kind: str = "euclidean"
    matrix: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.kind not in ("euclidean", "custom"):
            raise InvalidParameterError(f"unknown metric kind {self.kind!r}")
        if not (self.p == math.inf or self.p >= 1):
            raise InvalidParameterError("p must be >= 1 or inf")
        if self.kind == "custom":
            if self.matrix is None:
                raise InvalidParameterError("custom metric needs a matrix")
            m = np.asarray(self.matrix, dtype=np.float64)
            if m.ndim != 2 or not np.all(np.isfinite(m)) or np.any(m < 0):
                raise NumericError("custom distance matrix must be finite and >= 0")
            object.__setattr__(self, "matrix", m)


def distance_matrix(mu, nu, metric=None):
    """Raw ground distances d(x_i, y_j), before raising to the power p."""
    if metric is not None and metric.kind == "custom":
        m = metric.matrix
        if m.shape != (mu.n, nu.n):
            raise InvalidParameterError(
                f"custom matrix shape {m.shape} does not match ({mu.n}, {nu.n})"
            )
        return m
    return cdist(mu.points, nu.points, metric="euclidean")


def cost_matrix(mu, nu, metric):
    """Ground cost d(x_i, y_j)^p; for p = inf the raw distances are returned."""
    d = distance_matrix(mu, nu, metric)
    if metric.p == math.inf:
        return d
    if metric.p == 1:
        return d
    return d ** metric.p


def tv_distance(mu, nu):
    """Total variation distance sum_x |mu(x) - nu(x)| over the joint support.

    No 1/2 factor is applied, so the range is [0, 2]; disjoint supports give 2.
    """
    diff = {}
    for i in range(mu.n):
        key = mu.points[i].tobytes()
        diff[key] = diff.get(key, 0.0) + float(mu.weights[i])
    for j in range(nu.n):
        key = nu.points[j].tobytes()
        diff[key] = diff.get(key, 0.0) - float(nu.weights[j])
    # Summation in sorted key order keeps the result exactly symmetric.
    return float(sum(abs(diff[key]) for key in sorted(diff)))


def huber_mix(base, outlier, eps):
    """Exact eps-contamination (1 - eps) * base + eps * outlier.

    Shared atoms are merged, so the result can have fewer atoms than the
    two inputs combined.
    """
    if not 0 <= eps < 1:
        raise InvalidParameterError("contamination level must be in [0, 1)")
    if base.dim != outlier.dim:
        raise InvalidParameterError("mixture components must share a dimension")
    if eps == 0:
        return base
    pts = np.vstack([base.points, outlier.points])
    w = np.concatenate([(1 - eps) * base.weights, eps * outlier.weights])
    return DiscreteMeasure(pts, w)


def empirical(points):
    """Uniform empirical measure over the given sample rows."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = pts.shape[0]
    return DiscreteMeasure(pts, np.full(n, 1.0 / n))


def sample_gaussian(n, d, seed, mean=0.0, scale=1.0):
    """n standard Gaussian points in R^d, optionally shifted and scaled."""
    rng = rng_from_seed(seed)
    return rng.normal(size=(n, d)) * scale + mean


def sample_uniform_cube(n, d, seed):
    """n points uniform on [0, 1]^d."""
    rng = rng_from_seed(seed)
    return rng.random(size=(n, d))


def sample_exponential(n, rate, seed):
    """n points from Exp(rate) on the half line, as an (n, 1) array."""
    if rate <= 0:
        raise InvalidParameterError("rate must be positive")
    rng = rng_from_seed(seed)
    return rng.exponential(scale=1.0 / rate, size=(n, 1))


# ---------------------------------------------------------------------------
# File formats.  JSON: {"points": [[...], ...], "weights": [...]}.
# CSV: header x1,...,xd,w then one row per atom.
# ---------------------------------------------------------------------------


def load_measure(path):
    text = _read_text(path)
    if str(path).lower().endswith(".json"):
        return _measure_from_json(text, path)
    if str(path).lower().endswith(".csv"):
        return _measure_from_csv(text, path)
    raise FileFormatError(f"{path}: unsupported extension (use .json or .csv)")


def save_measure(measure, path):
    if str(path).lower().endswith(".json"):
        payload = json.dumps(measure.to_json_dict(), indent=2)
        _write_text(path, payload + "\n")
    elif str(path).lower().endswith(".csv"):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x{k + 1}" for k in range(measure.dim)] + ["w"])
        for i in range(measure.n):
            row = [repr(float(v)) for v in measure.points[i]]
            row.append(repr(float(measure.weights[i])))
            writer.writerow(row)
        _write_text(path, buf.getvalue())
    else:
        raise FileFormatError(f"{path}: unsupported extension (use .json or .csv)")


def _measure_from_json(text, path):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(obj, dict) or "points" not in obj or "weights" not in obj:
        raise FileFormatError(f"{path}: expected keys 'points' and 'weights'")
    try:
        return DiscreteMeasure(np.asarray(obj["points"], dtype=np.float64),
                               np.asarray(obj["weights"], dtype=np.float64))
    except (ValueError, TypeError) as exc:
        raise FileFormatError(f"{path}: malformed measure ({exc})") from exc


def _measure_from_csv(text, path):
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r]
    if len(rows) < 2:
        raise FileFormatError(f"{path}: need a header row and at least one atom")
    header = [h.strip() for h in rows[0]]
    if header[-1] != "w" or any(h != f"x{k + 1}" for k, h in enumerate(header[:-1])):
        raise FileFormatError(f"{path}: header must be x1,...,xd,w")
    d = len(header) - 1
    pts, w = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != d + 1:
            raise FileFormatError(f"{path}:{lineno}: expected {d + 1} fields")
        try:
            vals = [float(v) for v in row]
        except ValueError as exc:
            raise FileFormatError(f"{path}:{lineno}: non-numeric field") from exc
        pts.append(vals[:-1])
        w.append(vals[-1])
    return DiscreteMeasure(np.asarray(pts), np.asarray(w))


def _read_text(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def point_cloud_from_file(path):
    """Alias for :func:`load_measure`; reads a point cloud with weights."""
    return load_measure(path)
