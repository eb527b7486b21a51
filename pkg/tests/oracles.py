"""Independent reference computations used by the tests.

Nothing here imports the package: each oracle recomputes its quantity
from first principles (vertex enumeration, dense grids, golden-section
search) so agreement is meaningful.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

# -- transportation LP by vertex enumeration -----------------------------------


@lru_cache(maxsize=None)
def spanning_tree_bases(m: int, k: int):
    """Every basis of the m x k transportation polytope.

    A basis is a set of ``m + k - 1`` cells forming a spanning tree of the
    bipartite row/column graph.  Returns ``(cells, pinv)`` where
    ``cells[t]`` lists flat cell indices and ``pinv[t] @ [a; b]`` is the
    basic solution on those cells.
    """
    n_cells = m * k
    size = m + k - 1
    A = np.zeros((m + k, n_cells))
    for c in range(n_cells):
        A[c // k, c] = 1.0
        A[m + c % k, c] = 1.0
    cells, pinvs = [], []
    for subset in itertools.combinations(range(n_cells), size):
        parent = list(range(m + k))

        def find(u):
            while parent[u] != u:
                parent[u] = parent[parent[u]]
                u = parent[u]
            return u

        acyclic = True
        for c in subset:
            ru, rv = find(c // k), find(m + c % k)
            if ru == rv:
                acyclic = False
                break
            parent[ru] = rv
        if not acyclic:
            continue
        cells.append(subset)
        pinvs.append(np.linalg.pinv(A[:, subset]))
    return np.array(cells, dtype=np.int64).reshape(-1, size), np.array(pinvs).reshape(-1, size, m + k)


def lp_vertex_minimum(a, b, costs, tol: float = 1e-12) -> np.ndarray:
    """Minimum of ``<P, C>`` over all basic feasible solutions.

    ``a``: (P, m), ``b``: (P, k), ``costs``: (P, R, m, k).  Returns (P, R).
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    costs = np.asarray(costs, dtype=float)
    P, m = a.shape
    k = b.shape[1]
    cells, pinv = spanning_tree_bases(m, k)
    T = cells.shape[0]
    out = np.empty(costs.shape[:2])
    step = max(1, 2_000_000 // (T * m * k))
    for s in range(0, P, step):
        ab = np.hstack([a[s : s + step], b[s : s + step]])
        X = np.einsum("tij,pj->pti", pinv, ab)  # (p, T, size)
        full = np.zeros((X.shape[0], T, m * k))
        np.put_along_axis(full, np.broadcast_to(cells, X.shape), X, axis=2)
        feasible = (X >= -tol).all(axis=2)  # (p, T)
        Cf = costs[s : s + step].reshape(X.shape[0], -1, m * k).transpose(0, 2, 1)  # (p, mk, R)
        val = full @ Cf  # (p, T, R)
        val[~feasible] = np.inf
        out[s : s + step] = val.min(axis=1)
    return out


def simplex_grid(size: int, step: float = 0.1) -> np.ndarray:
    """All positive weight vectors of length ``size`` on the ``step`` grid."""
    units = int(round(1 / step))
    rows = []
    for cut in itertools.combinations(range(1, units), size - 1):
        parts = np.diff((0, *cut, units))
        rows.append(parts / units)
    return np.array(rows).reshape(-1, size)


# -- pairwise objective ---------------------------------------------------------

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def phi(y1, y2, h1, a1, h2, a2, lam, penalty):
    fit = (h1 - y1) ** 2 / a1 + (h2 - y2) ** 2 / a2
    if penalty == "W2":
        return fit + lam * (y1 - y2) ** 2
    return fit + lam * (y1 != y2)


def _golden(f, lo, hi, iters):
    """Vectorised golden-section minimisation on [lo, hi]."""
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        left = f1 < f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        x2n = np.where(left, x1, lo + GOLDEN * (hi - lo))
        x1n = np.where(left, hi - GOLDEN * (hi - lo), x2)
        fx1 = f(x1n)
        fx2 = f(x2n)
        x1, x2, f1, f2 = x1n, x2n, fx1, fx2
    x = 0.5 * (lo + hi)
    return x, f(x)


def brute_force_w2(h1, a1, h2, a2, lam, grid: int = 400, iters: int = 80):
    """Minimise the W2 pair objective by a dense grid plus golden-section refinement.

    The grid spans the hull of ``{h1, h2}`` padded by 1.  The refinement
    brackets the best grid cell by +-5 spacings in ``y1`` and minimises
    over ``y2`` on the full padded range for each probe.
    """
    h1, a1, h2, a2, lam = (np.asarray(v, dtype=float) for v in (h1, a1, h2, a2, lam))
    lo = np.minimum(h1, h2) - 1.0
    hi = np.maximum(h1, h2) + 1.0
    t = np.linspace(0.0, 1.0, grid)
    Y = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    best_val = np.full(h1.shape, np.inf)
    best_y1 = np.empty(h1.shape)
    for i in range(grid):
        y1 = Y[:, i][:, None]
        vals = phi(y1, Y, h1[:, None], a1[:, None], h2[:, None], a2[:, None], lam[:, None], "W2")
        j = vals.argmin(axis=1)
        v = vals[np.arange(h1.size), j]
        better = v < best_val
        best_val = np.where(better, v, best_val)
        best_y1 = np.where(better, Y[:, i], best_y1)
    spacing = (hi - lo) / (grid - 1)

    def inner(y1):
        return _golden(lambda y2: phi(y1, y2, h1, a1, h2, a2, lam, "W2"), lo, hi, iters)

    def outer(y1):
        return inner(y1)[1]

    y1, val = _golden(outer, best_y1 - 5 * spacing, best_y1 + 5 * spacing, iters)
    y2, val = inner(y1)
    return val, y1, y2


def brute_force_tv(h1, a1, h2, a2, lam, grid: int = 400, iters: int = 80):
    """TV pair objective: the better of the merged (``y1 = y2``) and split branches.

    The split branch costs ``lam`` at best (at ``y = h``); it is still
    searched on the grid so the oracle does not assume that.
    """
    h1, a1, h2, a2, lam = (np.asarray(v, dtype=float) for v in (h1, a1, h2, a2, lam))
    lo = np.minimum(h1, h2) - 1.0
    hi = np.maximum(h1, h2) + 1.0
    t = np.linspace(0.0, 1.0, grid)
    Y = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    spacing = (hi - lo) / (grid - 1)

    def merged_f(y):
        return (h1 - y) ** 2 / a1 + (h2 - y) ** 2 / a2

    mv = (h1[:, None] - Y) ** 2 / a1[:, None] + (h2[:, None] - Y) ** 2 / a2[:, None]
    y0 = Y[np.arange(h1.size), mv.argmin(axis=1)]
    ym, vm = _golden(merged_f, y0 - 5 * spacing, y0 + 5 * spacing, iters)
    # split branch: separable, each coordinate on its own grid then refined
    s1 = (h1[:, None] - Y) ** 2 / a1[:, None]
    s2 = (h2[:, None] - Y) ** 2 / a2[:, None]
    g1 = Y[np.arange(h1.size), s1.argmin(axis=1)]
    g2 = Y[np.arange(h1.size), s2.argmin(axis=1)]
    y1, v1 = _golden(lambda y: (h1 - y) ** 2 / a1, g1 - 5 * spacing, g1 + 5 * spacing, iters)
    y2, v2 = _golden(lambda y: (h2 - y) ** 2 / a2, g2 - 5 * spacing, g2 + 5 * spacing, iters)
    vs = v1 + v2 + lam
    take_merged = vm <= vs
    return (
        np.where(take_merged, vm, vs),
        np.where(take_merged, ym, y1),
        np.where(take_merged, ym, y2),
    )


# -- 1-d helpers -----------------------------------------------------------------


def cdf_intervals(weights_sorted):
    c = np.cumsum(weights_sorted)
    return np.concatenate([[0.0], c[:-1]]), c
