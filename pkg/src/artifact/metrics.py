"""Accuracy and demographic-parity metrics on prediction samples.

Unfairness metrics compare the predictions of the two true groups.  The
TV here is the histogram version over equal-width bins, not the
measure-theoretic distance.
"""

from __future__ import annotations

import numpy as np

from .domain import FairnessReport, Group, ValidationError

DEFAULT_BINS = 50


def _sample(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValidationError(f"{name} is empty")
    if not np.isfinite(x).all():
        raise ValidationError(f"{name} has non-finite values")
    return x


def mse(predictions, targets) -> float:
    p = _sample(predictions, "predictions")
    t = _sample(targets, "targets")
    if p.shape != t.shape:
        raise ValidationError(f"length mismatch: {p.size} predictions vs {t.size} targets")
    return float(np.mean((p - t) ** 2))


def w2_weighted(x, a, y, b) -> float:
    """W2 between weighted empirical measures, by quantile matching on the merged grid."""
    x = _sample(x, "samples_a")
    y = _sample(y, "samples_b")
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape != x.shape or b.shape != y.shape:
        raise ValidationError("weights and samples must have equal length")
    ox = np.argsort(x, kind="stable")
    oy = np.argsort(y, kind="stable")
    x, a = x[ox], a[ox] / a.sum()
    y, b = y[oy], b[oy] / b.sum()
    ca = np.cumsum(a)
    cb = np.cumsum(b)
    ca[-1] = cb[-1] = 1.0
    cuts = np.union1d(ca, cb)
    lo = np.concatenate([[0.0], cuts[:-1]])
    mass = cuts - lo
    mid = 0.5 * (lo + cuts)
    i = np.minimum(np.searchsorted(ca, mid), x.size - 1)
    j = np.minimum(np.searchsorted(cb, mid), y.size - 1)
    return float(np.sqrt(max(np.dot(mass, (x[i] - y[j]) ** 2), 0.0)))


def w2_empirical(samples_a, samples_b) -> float:
    a = _sample(samples_a, "samples_a")
    b = _sample(samples_b, "samples_b")
    return w2_weighted(a, np.full(a.size, 1.0 / a.size), b, np.full(b.size, 1.0 / b.size))


def _pooled_range(a, b):
    return min(a.min(), b.min()), max(a.max(), b.max())


def tv_binned(samples_a, samples_b, n_bins: int = DEFAULT_BINS) -> float:
    a = _sample(samples_a, "samples_a")
    b = _sample(samples_b, "samples_b")
    if n_bins < 1:
        raise ValidationError("n_bins must be >= 1")
    lo, hi = _pooled_range(a, b)
    if hi <= lo:
        return 0.0
    edges = np.linspace(lo, hi, n_bins + 1)
    pa = np.histogram(a, bins=edges)[0] / a.size
    pb = np.histogram(b, bins=edges)[0] / b.size
    return float(0.5 * np.abs(pa - pb).sum())


def _ecdf(sorted_x, points):
    return np.searchsorted(sorted_x, points, side="right") / sorted_x.size


def ks(samples_a, samples_b) -> float:
    a = np.sort(_sample(samples_a, "samples_a"))
    b = np.sort(_sample(samples_b, "samples_b"))
    pts = np.concatenate([a, b])
    return float(np.max(np.abs(_ecdf(a, pts) - _ecdf(b, pts))))


def ks_grid(samples_a, samples_b, n_grid: int = DEFAULT_BINS) -> float:
    a = np.sort(_sample(samples_a, "samples_a"))
    b = np.sort(_sample(samples_b, "samples_b"))
    if n_grid < 1:
        raise ValidationError("n_grid must be >= 1")
    lo, hi = _pooled_range(a, b)
    grid = np.linspace(lo, hi, n_grid)
    return float(np.max(np.abs(_ecdf(a, grid) - _ecdf(b, grid))))


def _variance(x: np.ndarray) -> float:
    # constant samples give exactly 0 rather than rounding residue
    return 0.0 if x.min() == x.max() else float(np.var(x))


def build_report(predictions, targets, sensitive) -> FairnessReport:
    p = _sample(predictions, "predictions")
    s = np.asarray(sensitive).reshape(-1)
    if s.shape != p.shape:
        raise ValidationError("predictions and sensitive have different lengths")
    plus = s == Group.PLUS
    if plus.all() or not plus.any():
        raise ValidationError("report needs predictions from both groups")
    a, b = p[plus], p[~plus]
    return FairnessReport(
        mse=mse(p, targets),
        w2=w2_empirical(a, b),
        tv=tv_binned(a, b),
        ks=ks(a, b),
        ks_grid=ks_grid(a, b),
        var_plus=_variance(a),
        var_minus=_variance(b),
    )
