"""Base learners: OLS regressor, logistic posterior, k-NN fair map."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .domain import Group, ValidationError

log = logging.getLogger(__name__)


def _as_matrix(X, n_features: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X.reshape(1, -1) if n_features is not None and X.shape[0] == n_features else X[:, None]
    if n_features is not None and X.shape[1] != n_features:
        raise ValidationError(f"expected {n_features} features, got {X.shape[1]}")
    return X


def _unwrap(X_in, out: np.ndarray):
    return float(out[0]) if np.ndim(X_in) <= 1 and out.shape[0] == 1 else out


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    intercept: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if not np.isfinite(w).all() or not np.isfinite(self.intercept):
            raise ValidationError("linear model parameters must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "intercept", float(self.intercept))

    def predict(self, X) -> np.ndarray | float:
        return predict_linear(self, X)


@dataclass(frozen=True)
class LogisticModel:
    """P(S=+ | x) = sigmoid(w.x + b)."""

    weights: np.ndarray
    intercept: float
    n_iter: int = 0
    grad_norm: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if not np.isfinite(w).all() or not np.isfinite(self.intercept):
            raise ValidationError("logistic model parameters must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "intercept", float(self.intercept))

    def predict_proba(self, X) -> np.ndarray | float:
        return predict_proba(self, X)


@dataclass(frozen=True)
class OracleRegressor:
    """Wraps a known regression function ``fn(X) -> eta`` (vectorised over rows)."""

    fn: Callable[[np.ndarray], np.ndarray]

    def predict(self, X):
        X = _as_matrix(X)
        return _unwrap(X, np.asarray(self.fn(X), dtype=float).reshape(-1))


@dataclass(frozen=True)
class OraclePosterior:
    """Wraps a known posterior ``fn(X) -> P(S=+|x)``."""

    fn: Callable[[np.ndarray], np.ndarray]

    def predict_proba(self, X):
        X = _as_matrix(X)
        return _unwrap(X, np.asarray(self.fn(X), dtype=float).reshape(-1))


def fit_ols(X, y) -> LinearModel:
    """Least squares with intercept via the normal equations.

    A rank-deficient design falls back to a ridge of ``1e-10 * trace`` on
    the Gram matrix (logged), which picks the minimum-norm-like solution
    instead of amplifying noise.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).reshape(-1)
    n, p = X.shape
    if y.shape[0] != n:
        raise ValidationError("X and y have different row counts")
    # centre first: the intercept decouples and the Gram matrix is better conditioned
    mx = X.mean(axis=0)
    my = y.mean()
    Xc = X - mx
    G = Xc.T @ Xc
    rhs = Xc.T @ (y - my)
    if p == 0:
        return LinearModel(np.zeros(0), my)
    rank = np.linalg.matrix_rank(G) if n > 1 else 0
    if rank < p:
        ridge = 1e-10 * max(np.trace(G), 1.0)
        log.warning("OLS design is rank deficient (rank %d < %d); using ridge %.3g", rank, p, ridge)
        G = G + ridge * np.eye(p)
    w = np.linalg.solve(G, rhs)
    return LinearModel(w, my - mx @ w)


def predict_linear(model: LinearModel, X):
    Xm = _as_matrix(X, model.weights.shape[0])
    return _unwrap(X, Xm @ model.weights + model.intercept)


def _logistic_loss_grad(theta, Xa, t):
    z = Xa @ theta
    # mean of log(1 + exp(-t z)) for t in {-1, +1}
    loss = np.mean(np.logaddexp(0.0, -t * z))
    g = Xa.T @ (-t * sigmoid(-t * z)) / Xa.shape[0]
    return loss, g


def fit_logistic(X, s, max_iters: int = 2000, gtol: float = 1e-6) -> LogisticModel:
    """Unregularised logistic regression by full-batch gradient descent.

    Step sizes follow Armijo backtracking from an initial step of
    ``4 / L`` where ``L`` bounds the loss curvature.
    """
    X = _as_matrix(X)
    s = np.asarray(s).reshape(-1)
    t = np.where(s == Group.PLUS, 1.0, -1.0) if s.dtype.kind in "iu" else np.array(
        [1.0 if Group.parse(v) is Group.PLUS else -1.0 for v in s]
    )
    if t.shape[0] != X.shape[0]:
        raise ValidationError("X and s have different row counts")
    if np.all(t > 0) or np.all(t < 0):
        raise ValidationError("logistic fit needs both groups present")
    # standardise internally; parameters are mapped back at the end
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    Xa = np.hstack([(X - mu) / sd, np.ones((X.shape[0], 1))])
    L = 0.25 * np.linalg.norm(Xa, 2) ** 2 / Xa.shape[0]
    theta = np.zeros(Xa.shape[1])
    loss, g = _logistic_loss_grad(theta, Xa, t)
    step = 4.0 / L
    it = 0
    while it < max_iters and np.linalg.norm(g) > gtol:
        it += 1
        gg = g @ g
        step = min(step * 2.0, 1e6)
        while True:
            cand = theta - step * g
            c_loss, c_g = _logistic_loss_grad(cand, Xa, t)
            if c_loss <= loss - 0.5 * step * gg or step < 1e-12:
                break
            step *= 0.5
        theta, loss, g = cand, c_loss, c_g
    w = theta[:-1] / sd
    b = theta[-1] - mu @ w
    return LogisticModel(w, b, n_iter=it, grad_norm=float(np.linalg.norm(g)))


def predict_proba(model: LogisticModel, X):
    Xm = _as_matrix(X, model.weights.shape[0])
    return _unwrap(X, sigmoid(Xm @ model.weights + model.intercept))


@dataclass(frozen=True)
class NonparametricRegressor:
    """Distance-weighted k-NN on per-axis standardised ``(h, d)`` inputs."""

    inputs: np.ndarray
    targets: np.ndarray
    k: int = 15
    center: np.ndarray = field(default=None, repr=False)
    scale: np.ndarray = field(default=None, repr=False)
    _tree: cKDTree = field(default=None, repr=False, compare=False)

    def predict(self, h, d) -> np.ndarray | float:
        return predict_nonparametric(self, h, d)


def fit_nonparametric(inputs, targets, k: int = 15) -> NonparametricRegressor:
    Z = np.asarray(inputs, dtype=float).reshape(-1, 2)
    f = np.asarray(targets, dtype=float).reshape(-1)
    if Z.shape[0] == 0:
        raise ValidationError("cannot fit a regressor on an empty training set")
    if Z.shape[0] != f.shape[0]:
        raise ValidationError("inputs and targets have different lengths")
    if k < 1:
        raise ValidationError("k must be a positive integer")
    center = Z.mean(axis=0)
    scale = Z.std(axis=0)
    scale[~(scale > 0)] = 1.0
    Zs = (Z - center) / scale
    for arr in (Z, f, center, scale):
        arr.setflags(write=False)
    return NonparametricRegressor(Z, f, int(k), center, scale, cKDTree(Zs))


_EXTRA_CANDIDATES = 8


def predict_nonparametric(model: NonparametricRegressor, h, d):
    """Inverse-distance weighted mean of the ``k`` nearest training targets.

    Exact hits (distance 0) return the mean of the coincident targets.
    Equal distances are resolved in favour of the lower training index.
    """
    if model._tree is None:
        raise ValidationError("regressor is not fitted")
    scalar = np.ndim(h) == 0 and np.ndim(d) == 0
    h, d = np.broadcast_arrays(np.atleast_1d(np.asarray(h, dtype=float)), np.atleast_1d(np.asarray(d, dtype=float)))
    Q = (np.column_stack([h.ravel(), d.ravel()]) - model.center) / model.scale
    n = model.targets.shape[0]
    k = min(model.k, n)
    kq = min(n, k + _EXTRA_CANDIDATES)
    dist, idx = model._tree.query(Q, k=kq)
    if kq == 1:
        dist, idx = dist[:, None], idx[:, None]
    # stable re-sort by (distance, index) so ties go to the lower index
    order = np.lexsort((idx, dist), axis=1)
    dist = np.take_along_axis(dist, order, axis=1)[:, :k]
    idx = np.take_along_axis(idx, order, axis=1)[:, :k]
    vals = model.targets[idx]
    exact = dist == 0.0
    has_exact = exact.any(axis=1)
    with np.errstate(divide="ignore"):
        w = np.where(exact, 0.0, 1.0 / dist)
    w[has_exact] = exact[has_exact].astype(float)
    out = (w * vals).sum(axis=1) / w.sum(axis=1)
    return float(out[0]) if scalar else out.reshape(h.shape)
