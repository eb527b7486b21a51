"""Signed group probability and its sign partition into two unit-mass measures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import Group, GroupPriors, PseudoMeasure, ValidationError

DEFAULT_TAU = 1e-6


def estimate_delta(classifier, priors: GroupPriors, X):
    """``P(+|x)/p+ - P(-|x)/p-`` for each row of ``X``.

    ``classifier`` is anything exposing ``predict_proba(X) -> P(S=+|x)``.
    """
    prob = np.asarray(classifier.predict_proba(X), dtype=float)
    out = delta_from_posterior(prob, priors)
    return float(out) if out.ndim == 0 else out


def delta_from_posterior(prob, priors: GroupPriors):
    prob = np.clip(np.asarray(prob, dtype=float), 0.0, 1.0)
    return prob / priors.p_plus - (1.0 - prob) / priors.p_minus


@dataclass(frozen=True)
class JordanPartition:
    """Index split of the sample by the sign of ``d`` with dead zone ``tau``.

    ``measure_plus.h[r]`` belongs to sample ``plus_indices[r]`` (same for
    the minus side).  ``degenerate`` is set when either side is empty.
    """

    plus_indices: np.ndarray
    minus_indices: np.ndarray
    zero_indices: np.ndarray
    measure_plus: PseudoMeasure
    measure_minus: PseudoMeasure
    tau: float
    zero_h: np.ndarray

    @property
    def n(self) -> int:
        return self.plus_indices.size + self.minus_indices.size + self.zero_indices.size

    @property
    def degenerate(self) -> bool:
        return self.plus_indices.size == 0 or self.minus_indices.size == 0


def _normalised(absd: np.ndarray) -> np.ndarray:
    if absd.size == 0:
        return absd
    return absd / absd.sum()


def build_partition(h_values, d_values, tau: float = DEFAULT_TAU) -> JordanPartition:
    h = np.asarray(h_values, dtype=float).reshape(-1)
    d = np.asarray(d_values, dtype=float).reshape(-1)
    if h.shape != d.shape:
        raise ValidationError("h_values and d_values must have equal length")
    if not (tau >= 0):
        raise ValidationError("tau must be >= 0")
    plus = np.flatnonzero(d > tau)
    minus = np.flatnonzero(d < -tau)
    zero = np.flatnonzero((d <= tau) & (d >= -tau))
    for arr in (plus, minus, zero):
        arr.setflags(write=False)
    mp = PseudoMeasure(Group.PLUS, h[plus], d[plus], _normalised(d[plus]))
    mm = PseudoMeasure(Group.MINUS, h[minus], d[minus], _normalised(-d[minus]))
    zero_h = h[zero]
    zero_h.setflags(write=False)
    return JordanPartition(plus, minus, zero, mp, mm, float(tau), zero_h)
