"""Plug-in proxy baselines: estimate the group, then apply the aware maps.

``maps`` is anything with ``map_plus(h)`` and ``map_minus(h)`` (e.g.
:class:`artifact.aware.AwareTransport`).
"""

from __future__ import annotations

import numpy as np

HARD_THRESHOLD = 0.5


def _inputs(X, base, classifier):
    h = np.atleast_1d(np.asarray(base.predict(X), dtype=float)).reshape(-1)
    p = np.atleast_1d(np.asarray(classifier.predict_proba(X), dtype=float)).reshape(-1)
    return h, p


def _out(X, arr):
    arr = np.asarray(arr, dtype=float)
    return float(arr[0]) if np.ndim(X) <= 1 and arr.size == 1 else arr


def plug_in_hard(X, base, classifier, maps):
    """Apply the map of the more likely group; a posterior of exactly 0.5 goes to ``+``."""
    h, p = _inputs(X, base, classifier)
    plus = p >= HARD_THRESHOLD
    out = np.empty_like(h)
    if plus.any():
        out[plus] = maps.map_plus(h[plus])
    if (~plus).any():
        out[~plus] = maps.map_minus(h[~plus])
    return _out(X, out)


def plug_in_soft(X, base, classifier, maps):
    """Posterior-weighted average of both group maps at the base prediction."""
    h, p = _inputs(X, base, classifier)
    out = p * np.asarray(maps.map_plus(h)) + (1.0 - p) * np.asarray(maps.map_minus(h))
    return _out(X, out)
