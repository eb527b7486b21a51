"""Exact discrete optimal transport.

``solve_discrete_ot`` runs a primal network simplex on the bipartite
transportation graph.  Marginals are converted to 64-bit fixed point
(``SCALE`` units of mass) so flow updates are exact integer arithmetic.
Degenerate pivots are ruled out by the classical supply perturbation
(each source gets one extra unit, one sink absorbs ``m`` units, after
multiplying everything by ``m + 1``); the unperturbed flows are recovered
on the optimal basis at the end.

``solve_monotone_1d`` is the north-west-corner (comonotone) coupling of
two sorted 1-d measures, optimal for any convex cost ``g(x - y)``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .domain import MASS_TOL, TransportPlan, ValidationError

SCALE = 10**9
# float basis flows below this are rounding noise around a zero flow
FLOW_TOL = 1e-14


class SolverError(RuntimeError):
    pass


def to_fixed_point(weights: np.ndarray, scale: int = SCALE) -> np.ndarray:
    """Integer masses summing exactly to ``scale`` (largest-remainder rounding)."""
    w = np.asarray(weights, dtype=float) / float(np.sum(weights)) * scale
    base = np.floor(w).astype(np.int64)
    short = int(scale - base.sum())
    if short:
        frac = w - base
        order = np.lexsort((np.arange(w.size), -frac))
        base[order[:short]] += 1
    return base


@njit(cache=True)
def _tree_order(m, k, bi, bj, root):
    """BFS over the basis tree from ``root``.

    Returns (order, parent_arc, parent_node, depth).  Nodes 0..m-1 are rows,
    m..m+k-1 columns.
    """
    n_nodes = m + k
    nb = bi.shape[0]
    deg = np.zeros(n_nodes + 1, np.int64)
    for e in range(nb):
        deg[bi[e] + 1] += 1
        deg[m + bj[e] + 1] += 1
    for v in range(n_nodes):
        deg[v + 1] += deg[v]
    fill = deg[:-1].copy()
    adj = np.empty(2 * nb, np.int64)
    for e in range(nb):
        u = bi[e]
        adj[fill[u]] = e
        fill[u] += 1
        v = m + bj[e]
        adj[fill[v]] = e
        fill[v] += 1
    order = np.empty(n_nodes, np.int64)
    parent_arc = np.full(n_nodes, -1, np.int64)
    parent_node = np.full(n_nodes, -1, np.int64)
    depth = np.zeros(n_nodes, np.int64)
    seen = np.zeros(n_nodes, np.bool_)
    order[0] = root
    seen[root] = True
    head = 0
    tail = 1
    while head < tail:
        u = order[head]
        head += 1
        for p in range(deg[u], deg[u + 1]):
            e = adj[p]
            v = m + bj[e] if u < m else bi[e]
            if not seen[v]:
                seen[v] = True
                parent_arc[v] = e
                parent_node[v] = u
                depth[v] = depth[u] + 1
                order[tail] = v
                tail += 1
    return order, parent_arc, parent_node, depth, tail


@njit(cache=True)
def _potentials(C, m, bi, bj, order, parent_arc, parent_node, n_nodes):
    pot = np.zeros(n_nodes)
    for t in range(1, n_nodes):
        v = order[t]
        e = parent_arc[v]
        u = parent_node[v]
        pot[v] = C[bi[e], bj[e]] - pot[u]
    return pot


@njit(cache=True)
def _link(e, u, v, head, nxt, prv):
    # half-edge 2e sits in u's list, 2e+1 in v's list
    for h, node in ((2 * e, u), (2 * e + 1, v)):
        first = head[node]
        nxt[h] = first
        prv[h] = -1
        if first >= 0:
            prv[first] = h
        head[node] = h


@njit(cache=True)
def _unlink(e, u, v, head, nxt, prv):
    for h, node in ((2 * e, u), (2 * e + 1, v)):
        if prv[h] >= 0:
            nxt[prv[h]] = nxt[h]
        else:
            head[node] = nxt[h]
        if nxt[h] >= 0:
            prv[nxt[h]] = prv[h]


@njit(cache=True)
def _network_simplex(C, supply, demand, row_order, col_order, max_iter, tol, block_factor):
    m, k = C.shape
    n_nodes = m + k
    nb = n_nodes - 1
    bi = np.empty(nb, np.int64)
    bj = np.empty(nb, np.int64)
    flow = np.empty(nb, np.int64)

    # north-west corner along the given orders; nondegenerate under perturbation
    rem_s = supply.copy()
    rem_d = demand.copy()
    r = 0
    c = 0
    e = 0
    while e < nb:
        i = row_order[r]
        j = col_order[c]
        q = min(rem_s[i], rem_d[j])
        bi[e] = i
        bj[e] = j
        flow[e] = q
        e += 1
        rem_s[i] -= q
        rem_d[j] -= q
        if rem_s[i] == 0 and r < m - 1:
            r += 1
        elif rem_d[j] == 0 and c < k - 1:
            c += 1
        elif r < m - 1:
            r += 1
        else:
            c += 1

    # rooting mid-staircase halves the initial tree depth
    order, parent_arc, parent_node, depth, reached = _tree_order(m, k, bi, bj, row_order[m // 2])
    if reached != n_nodes:
        return bi, bj, flow, 0, 2
    pot = _potentials(C, m, bi, bj, order, parent_arc, parent_node, n_nodes)
    head = np.full(n_nodes, -1, np.int64)
    nxt = np.empty(2 * nb, np.int64)
    prv = np.empty(2 * nb, np.int64)
    for e in range(nb):
        _link(e, bi[e], m + bj[e], head, nxt, prv)

    path = np.empty(2 * n_nodes, np.int64)
    sign = np.empty(2 * n_nodes, np.int64)
    side = np.empty(2 * n_nodes, np.int64)
    stack = np.empty(n_nodes, np.int64)

    n_cells = m * k
    block = max(int(block_factor * np.sqrt(n_cells)), 16)
    block = min(block, n_cells)
    pos = 0
    it = 0
    status = 0
    while True:
        # block pricing, Dantzig rule within block; ties -> first in scan order
        best = -tol
        ein = -1
        scanned = 0
        while scanned < n_cells:
            stop = min(scanned + block, n_cells)
            while scanned < stop:
                cell = pos
                pos += 1
                if pos == n_cells:
                    pos = 0
                scanned += 1
                i = cell // k
                j = cell - i * k
                rc = C[i, j] - pot[i] - pot[m + j]
                if rc < best:
                    best = rc
                    ein = cell
            if ein >= 0:
                break
        if ein < 0:
            break
        if it >= max_iter:
            status = 1
            break
        it += 1

        i_in = ein // k
        j_in = ein - i_in * k
        # cycle: entering arc row i_in -> col j_in, then back along the tree.
        a = i_in
        b = m + j_in
        npath = 0
        while a != b:
            if depth[a] >= depth[b]:
                # walking j->i this arc goes parent->child; minus iff child is a row
                path[npath] = a
                sign[npath] = -1 if a < m else 1
                side[npath] = 0
                npath += 1
                a = parent_node[a]
            else:
                # child->parent; minus iff child is a column
                path[npath] = b
                sign[npath] = -1 if b >= m else 1
                side[npath] = 1
                npath += 1
                b = parent_node[b]
        theta = -1
        cut = -1
        cut_key = -1
        cut_side = 0
        for t in range(npath):
            if sign[t] < 0:
                f = parent_arc[path[t]]
                key = bi[f] * k + bj[f]
                if theta < 0 or flow[f] < theta or (flow[f] == theta and key < cut_key):
                    theta = flow[f]
                    cut = path[t]
                    cut_key = key
                    cut_side = side[t]
        for t in range(npath):
            f = parent_arc[path[t]]
            flow[f] += sign[t] * theta
        eout = parent_arc[cut]
        _unlink(eout, bi[eout], m + bj[eout], head, nxt, prv)
        bi[eout] = i_in
        bj[eout] = j_in
        flow[eout] = theta
        _link(eout, i_in, m + j_in, head, nxt, prv)

        # re-hang the subtree below the leaving arc from the entering endpoint
        if cut_side == 0:
            root = i_in
            anchor = m + j_in
        else:
            root = m + j_in
            anchor = i_in
        parent_node[root] = anchor
        parent_arc[root] = eout
        depth[root] = depth[anchor] + 1
        pot[root] = C[i_in, j_in] - pot[anchor]
        stack[0] = root
        top = 1
        while top > 0:
            top -= 1
            u = stack[top]
            h = head[u]
            while h >= 0:
                f = h >> 1
                v = m + bj[f] if (h & 1) == 0 else bi[f]
                if v != parent_node[u] or f != parent_arc[u]:
                    parent_node[v] = u
                    parent_arc[v] = f
                    depth[v] = depth[u] + 1
                    pot[v] = C[bi[f], bj[f]] - pot[u]
                    stack[top] = v
                    top += 1
                h = nxt[h]
    return bi, bj, flow, it, status


@njit(cache=True)
def _basis_flows(m, k, bi, bj, supply, demand):
    """Unique flows of a spanning-tree basis for the given integer marginals."""
    n_nodes = m + k
    order, parent_arc, parent_node, depth, reached = _tree_order(m, k, bi, bj, 0)
    net = np.empty(n_nodes, supply.dtype)
    for i in range(m):
        net[i] = supply[i]
    for j in range(k):
        net[m + j] = -demand[j]
    flow = np.zeros(bi.shape[0], supply.dtype)
    for t in range(n_nodes - 1, 0, -1):
        v = order[t]
        e = parent_arc[v]
        flow[e] = net[v] if v < m else -net[v]
        net[parent_node[v]] += net[v]
    return flow


def _check_weights(w: np.ndarray, name: str) -> np.ndarray:
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size == 0:
        raise ValidationError(f"{name} is empty")
    if not np.isfinite(w).all() or (w < 0).any():
        raise ValidationError(f"{name} must be finite and nonnegative")
    if abs(w.sum() - 1.0) > MASS_TOL:
        raise ValidationError(f"{name} sums to {w.sum()!r}, expected 1")
    return w


def solve_discrete_ot(
    a: np.ndarray,
    b: np.ndarray,
    C: np.ndarray,
    *,
    row_order: np.ndarray | None = None,
    col_order: np.ndarray | None = None,
    max_iter: int = 50_000_000,
) -> TransportPlan:
    """Exact optimal coupling of ``a`` and ``b`` for the cost matrix ``C``.

    ``row_order`` / ``col_order`` only seed the initial north-west-corner
    basis (sorting both sides by a 1-d key close to the cost structure
    shortens the pivot sequence); they do not change the optimum.
    """
    a = _check_weights(a, "a")
    b = _check_weights(b, "b")
    C = np.ascontiguousarray(C, dtype=float)
    if C.shape != (a.size, b.size):
        raise ValidationError(f"cost matrix shape {C.shape} does not match marginals ({a.size}, {b.size})")
    if not np.isfinite(C).all():
        raise ValidationError("cost matrix has non-finite entries")
    m, k = C.shape
    ro = np.arange(m) if row_order is None else np.asarray(row_order, dtype=np.int64)
    co = np.arange(k) if col_order is None else np.asarray(col_order, dtype=np.int64)
    if sorted(ro.tolist()) != list(range(m)) or sorted(co.tolist()) != list(range(k)):
        raise ValidationError("row_order/col_order must be permutations")
    if m == 1 or k == 1:
        rows = np.zeros(k, dtype=np.int64) if m == 1 else np.arange(m)
        cols = np.arange(k) if m == 1 else np.zeros(m, dtype=np.int64)
        mass = b.copy() if m == 1 else a.copy()
        keep = mass > 0
        return TransportPlan(rows[keep], cols[keep], mass[keep], m, k)

    sa = to_fixed_point(a)
    sb = to_fixed_point(b)
    mult = m + 1
    supply = sa * mult + 1
    demand = sb * mult
    demand[co[-1]] += m

    scale = max(1.0, float(np.max(np.abs(C))))
    tol = 1e-12 * scale
    bi, bj, _, iters, status = _network_simplex(C, supply, demand, ro, co, max_iter, tol, 1.0)
    if status == 1:
        raise SolverError(f"network simplex hit the iteration cap ({max_iter})")
    if status == 2:
        raise SolverError("network simplex basis is not a spanning tree")

    # the optimal basis does not depend on the marginals; re-solve its flows
    # with the true float weights so fixed-point rounding does not leak out
    mass = _basis_flows(m, k, bi, bj, a, b)
    if (mass < -FLOW_TOL).any():
        flow = _basis_flows(m, k, bi, bj, sa, sb)
        if (flow < 0).any():
            raise SolverError("negative flow after removing perturbation")
        mass = flow.astype(float) / SCALE
    keep = mass > FLOW_TOL
    rows, cols, mass = bi[keep], bj[keep], mass[keep]
    # proportional row correction of the fixed-point rounding drift
    rs = np.bincount(rows, weights=mass, minlength=m)
    mass = mass * (a[rows] / rs[rows])
    order = np.lexsort((cols, rows))
    return TransportPlan(rows[order], cols[order], mass[order], m, k)


def solve_monotone_1d(
    a: np.ndarray, x: np.ndarray, b: np.ndarray, y: np.ndarray
) -> TransportPlan:
    """Comonotone coupling of weights ``a`` at sorted ``x`` and ``b`` at sorted ``y``."""
    a = _check_weights(a, "a")
    b = _check_weights(b, "b")
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape != a.shape or y.shape != b.shape:
        raise ValidationError("locations and weights must have equal length")
    if (np.diff(x) < 0).any() or (np.diff(y) < 0).any():
        raise ValidationError("locations must be sorted nondecreasingly")
    # merge the two cumulative grids; each interval of the merged grid is one plan cell
    ca = np.cumsum(a)
    cb = np.cumsum(b)
    ca[-1] = cb[-1] = 1.0
    cuts = np.union1d(ca, cb)
    cuts = cuts[cuts > 0]
    lo = np.concatenate([[0.0], cuts[:-1]])
    mass = cuts - lo
    keep = mass > 1e-15
    mid = 0.5 * (lo + cuts)[keep]
    rows = np.minimum(np.searchsorted(ca, mid), a.size - 1)
    cols = np.minimum(np.searchsorted(cb, mid), b.size - 1)
    mass = mass[keep]
    return TransportPlan(rows, cols, mass, a.size, b.size)


def plan_cost(plan: TransportPlan, C: np.ndarray) -> float:
    C = np.asarray(C, dtype=float)
    if len(plan) == 0:
        return 0.0
    if plan.rows.max() >= C.shape[0] or plan.cols.max() >= C.shape[1]:
        raise ValidationError("plan index out of range for cost matrix")
    return float(np.dot(plan.mass, C[plan.rows, plan.cols]))
