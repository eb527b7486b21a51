"""Closed-form fair maps when the sensitive attribute is observed.

Everything here works on the two group-conditional distributions of the
base predictions.  The exact fair map sends a prediction to the same rank
in the prior-weighted quantile average of both groups; the W2 relaxation
moves only part of the way there; the TV relaxation either merges a
quantile-matched pair completely or leaves it alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import Group, GroupPriors, Penalty, ValidationError, is_infinite
from .ot import solve_monotone_1d

# slack when comparing a level t against cumulative weights
_LEVEL_EPS = 1e-12


@dataclass(frozen=True)
class EmpiricalDistribution:
    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if v.size == 0:
            raise ValidationError("empirical distribution needs at least one value")
        if v.shape != w.shape:
            raise ValidationError("values and weights must have equal length")
        if (np.diff(v) < 0).any():
            raise ValidationError("values must be sorted nondecreasingly")
        if not (w > 0).all() or abs(w.sum() - 1.0) > 1e-12:
            raise ValidationError("weights must be positive and sum to 1")
        cw = np.cumsum(w)
        cw[-1] = 1.0
        for arr in (v, w, cw):
            arr.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_cum", cw)

    @classmethod
    def from_samples(cls, samples, weights=None) -> "EmpiricalDistribution":
        x = np.asarray(samples, dtype=float).reshape(-1)
        w = np.full(x.size, 1.0 / max(x.size, 1)) if weights is None else np.asarray(weights, dtype=float)
        order = np.argsort(x, kind="stable")
        w = w[order]
        return cls(x[order], w / w.sum())

    def __len__(self) -> int:
        return self.values.shape[0]

    def cdf(self, y):
        return cdf(self, y)

    def quantile(self, t):
        return quantile(self, t)


def cdf(dist: EmpiricalDistribution, y):
    """Right-continuous CDF: total weight of values ``<= y``."""
    idx = np.searchsorted(dist.values, np.asarray(y, dtype=float), side="right")
    out = np.where(idx > 0, dist._cum[np.maximum(idx - 1, 0)], 0.0)
    return float(out) if out.ndim == 0 else out


def quantile(dist: EmpiricalDistribution, t):
    """Left-continuous generalised inverse: smallest value with ``F >= t``."""
    t = np.asarray(t, dtype=float)
    if ((t <= 0) | (t > 1)).any():
        raise ValidationError("quantile level must lie in (0, 1]")
    idx = np.searchsorted(dist._cum, t - _LEVEL_EPS, side="left")
    out = dist.values[np.minimum(idx, len(dist) - 1)]
    return float(out) if out.ndim == 0 else out


def _own_rank(h, group, dist_plus, dist_minus):
    h = np.asarray(h, dtype=float)
    g = np.broadcast_to(_group_codes(group), h.shape)
    t_plus = np.clip(cdf(dist_plus, h), 0.5 / len(dist_plus), 1.0)
    t_minus = np.clip(cdf(dist_minus, h), 0.5 / len(dist_minus), 1.0)
    return np.where(g == Group.PLUS, t_plus, t_minus)


def _group_codes(group):
    arr = np.asarray(group)
    if arr.dtype.kind in "iub":
        return np.where(arr.astype(np.int64) == Group.PLUS, int(Group.PLUS), int(Group.MINUS))
    if arr.ndim == 0:
        return np.asarray(int(Group.parse(arr.item())))
    return np.array([int(Group.parse(v)) for v in arr.ravel()]).reshape(arr.shape)


def _mix(priors: GroupPriors, q_plus, q_minus):
    q_plus, q_minus = np.asarray(q_plus, dtype=float), np.asarray(q_minus, dtype=float)
    # equal quantiles return themselves exactly
    return np.where(q_plus == q_minus, q_plus, priors.p_plus * q_plus + priors.p_minus * q_minus)


def barycenter_quantile(t, dist_plus, dist_minus, priors: GroupPriors):
    return _mix(priors, quantile(dist_plus, t), quantile(dist_minus, t))


def exact_fair_aware(h, group, dist_plus, dist_minus, priors: GroupPriors):
    """Exact fair prediction: barycenter quantile at the within-group rank of ``h``.

    The rank is clamped to ``[1/(2 n_s), 1]`` to stay off the open end at 0.
    """
    t = _own_rank(h, group, dist_plus, dist_minus)
    out = barycenter_quantile(t, dist_plus, dist_minus, priors)
    return float(out) if np.ndim(out) == 0 else out


def interpolation_weight(priors: GroupPriors, lam: float) -> float:
    """Weight kept on the base prediction: ``p+ p- / (p+ p- + lam)``."""
    if is_infinite(lam):
        return 0.0
    pp = priors.p_plus * priors.p_minus
    return pp / (pp + lam)


def interpolate_w2_aware(h, group, dist_plus, dist_minus, priors: GroupPriors, lam: float):
    alpha = interpolation_weight(priors, lam)
    f_inf = exact_fair_aware(h, group, dist_plus, dist_minus, priors)
    out = (1.0 - alpha) * np.asarray(f_inf) + alpha * np.asarray(h, dtype=float)
    return float(out) if np.ndim(out) == 0 else out


def aware_tv_predict(h1, h2, priors: GroupPriors, lam: float):
    """Targets for a quantile-matched pair ``(h1 from +, h2 from -)``.

    Merged to ``p+ h1 + p- h2`` when ``p+ p- (h1 - h2)^2 <= lam``.
    """
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    if is_infinite(lam):
        merged = np.ones(np.broadcast(h1, h2).shape, dtype=bool)
    else:
        merged = priors.p_plus * priors.p_minus * (h1 - h2) ** 2 <= lam
    y = _mix(priors, h1, h2)
    y_plus, y_minus = np.where(merged, y, h1), np.where(merged, y, h2)
    if y_plus.ndim == 0:
        return float(y_plus), float(y_minus)
    return y_plus, y_minus


def aware_tv_map(h, group, dist_plus, dist_minus, priors: GroupPriors, lam: float):
    """Out-of-sample aware TV prediction.

    The partner of ``h`` is found at the same within-group rank in the
    other group (the monotone plan), then the pair is thresholded.
    """
    h = np.asarray(h, dtype=float)
    t = _own_rank(h, group, dist_plus, dist_minus)
    q_plus = quantile(dist_plus, t)
    q_minus = quantile(dist_minus, t)
    if is_infinite(lam):
        merged = np.ones(h.shape, dtype=bool)
    else:
        merged = priors.p_plus * priors.p_minus * (q_plus - q_minus) ** 2 <= lam
    out = np.where(merged, _mix(priors, q_plus, q_minus), h)
    return float(out) if out.ndim == 0 else out


def aware_tv_pseudo_labels(h_plus, h_minus, priors: GroupPriors, lam: float):
    """Training-sample aware TV labels via the monotone 1-d plan.

    Returns ``(labels_plus, labels_minus, plan)`` in the input order of each group.
    """
    h_plus = np.asarray(h_plus, dtype=float)
    h_minus = np.asarray(h_minus, dtype=float)
    op = np.argsort(h_plus, kind="stable")
    om = np.argsort(h_minus, kind="stable")
    a = np.full(h_plus.size, 1.0 / h_plus.size)
    b = np.full(h_minus.size, 1.0 / h_minus.size)
    plan = solve_monotone_1d(a, h_plus[op], b, h_minus[om])
    x1 = h_plus[op][plan.rows]
    x2 = h_minus[om][plan.cols]
    y1, y2 = aware_tv_predict(x1, x2, priors, lam)
    y1, y2 = np.atleast_1d(y1), np.atleast_1d(y2)
    dev_p = np.bincount(plan.rows, weights=plan.mass * (y1 - x1), minlength=h_plus.size)
    dev_m = np.bincount(plan.cols, weights=plan.mass * (y2 - x2), minlength=h_minus.size)
    labels_plus = np.empty(h_plus.size)
    labels_minus = np.empty(h_minus.size)
    labels_plus[op] = h_plus[op] + dev_p / a
    labels_minus[om] = h_minus[om] + dev_m / b
    return labels_plus, labels_minus, plan


@dataclass(frozen=True)
class AwareTransport:
    """Group maps ``T_+`` and ``T_-`` fitted on training predictions."""

    dist_plus: EmpiricalDistribution
    dist_minus: EmpiricalDistribution
    priors: GroupPriors
    penalty: Penalty = Penalty.W2
    lam: float = float("inf")

    @classmethod
    def fit(cls, h, sensitive, priors: GroupPriors | None = None, penalty=Penalty.W2, lam=float("inf")):
        h = np.asarray(h, dtype=float)
        s = np.asarray(sensitive)
        plus = s == Group.PLUS
        if plus.all() or not plus.any():
            raise ValidationError("aware maps need both groups in the training predictions")
        priors = priors or GroupPriors.from_counts(int(plus.sum()), int((~plus).sum()))
        return cls(
            EmpiricalDistribution.from_samples(h[plus]),
            EmpiricalDistribution.from_samples(h[~plus]),
            priors,
            Penalty(penalty),
            float(lam),
        )

    def __call__(self, h, group):
        if self.penalty is Penalty.W2:
            return interpolate_w2_aware(h, group, self.dist_plus, self.dist_minus, self.priors, self.lam)
        return aware_tv_map(h, group, self.dist_plus, self.dist_minus, self.priors, self.lam)

    def map_plus(self, h):
        return self(h, Group.PLUS)

    def map_minus(self, h):
        return self(h, Group.MINUS)
