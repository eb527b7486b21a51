"""Relaxed-fairness kernels and the unaware post-processing pipeline.

For a plus-side point ``z1 = (h1, d1)`` and a minus-side point
``z2 = (h2, d2)`` with ``a = |d|``, the pairwise problem

    min_{y1, y2}  (h1 - y1)^2 / a1 + (h2 - y2)^2 / a2 + lam * pen(y1, y2)

has closed-form value and minimisers for ``pen = (y1 - y2)^2`` (W2) and
``pen = 1{y1 != y2}`` (TV).  The values form the transport cost between
the two pseudo-measures; the minimisers are the per-pair targets that
barycentric projection averages into pseudo-labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .decomposition import JordanPartition, build_partition, estimate_delta
from .domain import (
    Dataset,
    Group,
    GroupPriors,
    Penalty,
    PseudoPoint,
    RelaxationConfig,
    Setting,
    TransportPlan,
    ValidationError,
    is_infinite,
)
from .estimators import NonparametricRegressor, OraclePosterior, fit_nonparametric, predict_nonparametric
from .ot import solve_discrete_ot


# -- vectorised kernels (broadcast over h1, a1, h2, a2) ---------------------


def _check_lam(lam: float) -> float:
    lam = float(lam)
    if math.isnan(lam) or lam < 0:
        raise ValidationError("lambda must be >= 0 or INFINITE")
    return lam


def _abs_nonzero(d):
    a = np.abs(np.asarray(d, dtype=float))
    if (a == 0).any():
        raise ValidationError("signed ratio d must be nonzero")
    return a


def barycenter(h1, a1, h2, a2):
    """Minimiser of ``(h1-y)^2/a1 + (h2-y)^2/a2``; ``h1 == h2`` returns ``h1`` exactly."""
    return np.where(h1 == h2, h1, (a2 * h1 + a1 * h2) / (a1 + a2))


def exact_cost(h1, a1, h2, a2):
    """Unrelaxed pair cost ``(h1-h2)^2 / (a1+a2)``."""
    return (h1 - h2) ** 2 / (a1 + a2)


def w2_cost(h1, a1, h2, a2, lam):
    if is_infinite(lam):
        return exact_cost(h1, a1, h2, a2)
    return lam / (1.0 + lam * (a1 + a2)) * (h1 - h2) ** 2


def w2_targets(h1, a1, h2, a2, lam):
    if is_infinite(lam):
        y = barycenter(h1, a1, h2, a2)
        return y, y
    den = 1.0 + lam * (a1 + a2)
    gap = h2 - h1
    # offset form of ((1 + lam a2) h1 + lam a1 h2) / den and its mirror
    return h1 + lam * a1 * gap / den, h2 - lam * a2 * gap / den


def tv_cost(h1, a1, h2, a2, lam):
    c = exact_cost(h1, a1, h2, a2)
    if is_infinite(lam):
        return c
    return np.minimum(lam, c)


def tv_targets(h1, a1, h2, a2, lam):
    """Returns ``(y_plus, y_minus, merged)``; pairs merge when cost <= lam."""
    h1, a1, h2, a2 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (h1, a1, h2, a2)))
    merged = np.ones(h1.shape, dtype=bool) if is_infinite(lam) else exact_cost(h1, a1, h2, a2) <= lam
    y = barycenter(h1, a1, h2, a2)
    return np.where(merged, y, h1), np.where(merged, y, h2), merged


# -- scalar API on pseudo-points ---------------------------------------------


@dataclass(frozen=True)
class PairTargets:
    y_plus: float
    y_minus: float
    merged: bool = False

    def __post_init__(self):
        if self.merged and self.y_plus != self.y_minus:
            raise ValidationError("merged targets must coincide")


def _hd(z) -> tuple[float, float]:
    if isinstance(z, PseudoPoint):
        return z.h, z.d
    h, d = z[0], z[1]
    return float(h), float(d)


def _pair(z1, z2, lam):
    h1, d1 = _hd(z1)
    h2, d2 = _hd(z2)
    a1, a2 = float(_abs_nonzero(d1)), float(_abs_nonzero(d2))
    return h1, a1, h2, a2, _check_lam(lam)


def cost_w2_unaware(z1, z2, lam) -> float:
    return float(w2_cost(*_pair(z1, z2, lam)))


def targets_w2(z1, z2, lam) -> PairTargets:
    h1, a1, h2, a2, lam = _pair(z1, z2, lam)
    y_plus, y_minus = w2_targets(h1, a1, h2, a2, lam)
    return PairTargets(float(y_plus), float(y_minus), merged=is_infinite(lam))


def cost_tv_unaware(z1, z2, lam) -> float:
    return float(tv_cost(*_pair(z1, z2, lam)))


def targets_tv(z1, z2, lam) -> PairTargets:
    y_plus, y_minus, merged = tv_targets(*_pair(z1, z2, lam))
    return PairTargets(float(y_plus), float(y_minus), bool(merged))


# -- assembly, projection ----------------------------------------------------


@dataclass(frozen=True)
class TargetTable:
    """Pairwise targets between the two sides of a partition, evaluated lazily.

    ``at(rows, cols)`` evaluates only the requested pairs, which is all
    barycentric projection needs; ``dense()`` materialises the full tables.
    """

    partition: JordanPartition
    config: RelaxationConfig

    def at(self, rows, cols):
        mp, mm = self.partition.measure_plus, self.partition.measure_minus
        h1, a1 = mp.h[rows], np.abs(mp.d[rows])
        h2, a2 = mm.h[cols], np.abs(mm.d[cols])
        lam = self.config.lam
        if self.config.penalty is Penalty.W2:
            y_plus, y_minus = w2_targets(h1, a1, h2, a2, lam)
            y_plus = np.broadcast_to(y_plus, h1.shape)
            y_minus = np.broadcast_to(y_minus, h1.shape)
            merged = np.full(h1.shape, is_infinite(lam))
            return y_plus, y_minus, merged
        return tv_targets(h1, a1, h2, a2, lam)

    def dense(self):
        m, k = len(self.partition.measure_plus), len(self.partition.measure_minus)
        rows, cols = np.meshgrid(np.arange(m), np.arange(k), indexing="ij")
        return self.at(rows, cols)

    def __getitem__(self, ij) -> PairTargets:
        i, j = ij
        y_plus, y_minus, merged = self.at(np.array([i]), np.array([j]))
        return PairTargets(float(y_plus[0]), float(y_minus[0]), bool(merged[0]))


def cost_matrix(partition: JordanPartition, config: RelaxationConfig) -> np.ndarray:
    mp, mm = partition.measure_plus, partition.measure_minus
    h1 = mp.h[:, None]
    a1 = np.abs(mp.d)[:, None]
    h2 = mm.h[None, :]
    a2 = np.abs(mm.d)[None, :]
    kernel = w2_cost if config.penalty is Penalty.W2 else tv_cost
    C = np.asarray(kernel(h1, a1, h2, a2, config.lam), dtype=float)
    return np.ascontiguousarray(np.broadcast_to(C, (h1.shape[0], h2.shape[1])))


def assemble_relaxed_problem(partition: JordanPartition, config: RelaxationConfig):
    if partition.degenerate:
        raise ValidationError("partition is degenerate: one side of the sign split is empty")
    return cost_matrix(partition, config), TargetTable(partition, config)


def barycentric_project(plan: TransportPlan, partition: JordanPartition, targets: TargetTable) -> np.ndarray:
    """Pseudo-label per sample: plan-weighted average of the pair targets.

    Written as ``h + sum(mass * (y - h)) / w`` so a row whose targets all
    equal its own ``h`` returns ``h`` bit for bit.
    """
    mp, mm = partition.measure_plus, partition.measure_minus
    if plan.n_plus != len(mp) or plan.n_minus != len(mm):
        raise ValidationError("plan shape does not match the partition")
    f = np.empty(partition.n)
    f[partition.zero_indices] = partition.zero_h
    y_plus, y_minus, _ = targets.at(plan.rows, plan.cols)
    dev_plus = np.bincount(plan.rows, weights=plan.mass * (y_plus - mp.h[plan.rows]), minlength=len(mp))
    dev_minus = np.bincount(plan.cols, weights=plan.mass * (y_minus - mm.h[plan.cols]), minlength=len(mm))
    if (mp.w <= 0).any() or (mm.w <= 0).any():
        raise ValidationError("pseudo-measure point with zero mass cannot be projected")
    f[partition.plus_indices] = mp.h + dev_plus / mp.w
    f[partition.minus_indices] = mm.h + dev_minus / mm.w
    return f


# -- end-to-end predictor ------------------------------------------------------


@dataclass(frozen=True)
class _DropLastColumn:
    base: Any

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        return self.base.predict(X[:, :-1])


def _indicator_posterior(X):
    return np.asarray(X, dtype=float)[:, -1]


@dataclass(frozen=True)
class FairPredictor:
    base: Any
    classifier: Any
    priors: GroupPriors
    config: RelaxationConfig
    fair_map: NonparametricRegressor | None
    h_train: np.ndarray = field(repr=False)
    d_train: np.ndarray = field(repr=False)
    pseudo_labels: np.ndarray = field(repr=False)
    partition: JordanPartition | None = field(default=None, repr=False)
    plan: TransportPlan | None = field(default=None, repr=False)

    @property
    def degenerate(self) -> bool:
        return self.fair_map is None

    def predict(self, X, sensitive=None):
        return predict_fair(self, X, sensitive)


def _augment(X, sensitive, aware: bool):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if not aware:
        return X
    if sensitive is None:
        raise ValidationError("aware predictor needs the sensitive attribute at inference")
    s = np.atleast_1d(np.asarray(sensitive))
    col = (s == Group.PLUS).astype(float) if s.dtype.kind in "iub" else np.array(
        [float(Group.parse(v) is Group.PLUS) for v in s]
    )
    return np.hstack([X, col[:, None]])


def fit_fair_predictor(
    dataset: Dataset,
    base,
    classifier,
    config: RelaxationConfig,
    *,
    priors: GroupPriors | None = None,
    k_neighbors: int = 15,
) -> FairPredictor:
    """Fit the out-of-sample fair map on ``dataset`` (targets are not used).

    ``base`` needs ``predict(X)``, ``classifier`` needs ``predict_proba(X)``.
    With ``config.setting == aware`` the sensitive label is appended to the
    features and the posterior becomes its indicator, so ``d = +-1/p^s``;
    ``classifier`` is then ignored.
    """
    priors = priors or GroupPriors.from_dataset(dataset)
    aware = config.setting is Setting.AWARE
    if aware:
        base = _DropLastColumn(base)
        classifier = OraclePosterior(_indicator_posterior)
    X = _augment(dataset.features, dataset.sensitive, aware)
    h = np.asarray(base.predict(X), dtype=float).reshape(-1)
    d = np.asarray(estimate_delta(classifier, priors, X), dtype=float).reshape(-1)
    partition = build_partition(h, d, config.tau)
    if partition.degenerate:
        return FairPredictor(base, classifier, priors, config, None, h, d, h.copy(), partition, None)
    if config.lam == 0:
        # every pair target is the point's own prediction, whatever the plan
        f, plan = h.copy(), None
    else:
        C, targets = assemble_relaxed_problem(partition, config)
        mp, mm = partition.measure_plus, partition.measure_minus
        plan = solve_discrete_ot(
            mp.w, mm.w, C, row_order=np.argsort(mp.h, kind="stable"), col_order=np.argsort(mm.h, kind="stable")
        )
        del C
        f = barycentric_project(plan, partition, targets)
    fair_map = fit_nonparametric(np.column_stack([h, d]), f, k=k_neighbors)
    return FairPredictor(base, classifier, priors, config, fair_map, h, d, f, partition, plan)


def predict_fair(predictor: FairPredictor, X, sensitive=None):
    """Fair prediction for a feature matrix, or a float for a single feature row."""
    X = np.asarray(X, dtype=float)
    single = X.ndim <= 1
    Xa = _augment(X.reshape(1, -1) if single else X, sensitive, predictor.config.setting is Setting.AWARE)
    h = np.asarray(predictor.base.predict(Xa), dtype=float).reshape(-1)
    out = h.copy()
    if not predictor.degenerate:
        d = np.asarray(estimate_delta(predictor.classifier, predictor.priors, Xa), dtype=float).reshape(-1)
        active = np.abs(d) > predictor.config.tau
        if active.any():
            out[active] = predict_nonparametric(predictor.fair_map, h[active], d[active])
    return float(out[0]) if single else out


def pseudo_label_unfairness(predictor: FairPredictor) -> float:
    """W2 distance between the pushforwards of the two pseudo-measures by the pseudo-labels."""
    from .metrics import w2_weighted

    part = predictor.partition
    if part is None or part.degenerate:
        return 0.0
    f = predictor.pseudo_labels
    return w2_weighted(f[part.plus_indices], part.measure_plus.w, f[part.minus_indices], part.measure_minus.w)
