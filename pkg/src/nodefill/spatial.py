"""Incremental nearest-neighbour structures: a k-d tree and a background grid.

Both classes share one contract (``insert``, ``nearest``, ``size``). The
array-level functions below are also called directly by the fill kernels,
which keep the point storage themselves.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = ["SpatialIndex", "KDTree", "BackgroundGrid", "brute_force_nearest"]


@njit(cache=True, inline="always")
def _dist2(pts, i, q):
    s = 0.0
    for a in range(q.shape[0]):
        t = pts[i, a] - q[a]
        s += t * t
    return s


# -- k-d tree -------------------------------------------------------------------
# One tree node per point, stored by slot in a single table so a visit touches
# one cache line: T[s] = [coordinates..., left slot, right slot] (children as
# floats, -1 for none). The split axis of a node is its depth mod d. A balanced
# build lays slots out in preorder; later inserts append slots.
# tid[s] is the point index held by slot s.
# meta = [root slot, max depth, size at last balanced build, slots used].

# rebuild once the tree has grown by this factor since the last balanced build
_REBUILD_NUM, _REBUILD_DEN = 2, 1


@njit(cache=True)
def _select(order, s, e, kth, pts, ax):
    """Partially order ``order[s:e]`` so position ``kth`` holds its median key."""
    lo = s
    hi = e - 1
    while lo < hi:
        pivot = pts[order[(lo + hi) // 2], ax]
        i = lo
        j = hi
        while i <= j:
            while pts[order[i], ax] < pivot:
                i += 1
            while pts[order[j], ax] > pivot:
                j -= 1
            if i <= j:
                t = order[i]
                order[i] = order[j]
                order[j] = t
                i += 1
                j -= 1
        if kth <= j:
            hi = j
        elif kth >= i:
            lo = i
        else:
            return


@njit(cache=True)
def kd_build(pts, n, T, tid, meta):
    """Balanced build over the first ``n`` points (median splits)."""
    d = pts.shape[1]
    meta[0] = -1
    meta[1] = 0
    meta[2] = n
    meta[3] = 0
    if n == 0:
        return
    order = np.arange(n)
    # stack of (start, end, level, parent slot, side)
    st = np.empty((64 + 2 * int(math.log2(n + 1)) + 4, 5), np.int64)
    top = 0
    st[top] = (0, n, 0, -1, 0)
    top += 1
    slot = 0
    while top > 0:
        top -= 1
        s, e, lev, parent, side = st[top]
        ax = lev % d
        mid = s + (e - s) // 2
        _select(order, s, e, mid, pts, ax)
        p = order[mid]
        for a in range(d):
            T[slot, a] = pts[p, a]
        T[slot, d] = -1.0
        T[slot, d + 1] = -1.0
        tid[slot] = p
        if lev > meta[1]:
            meta[1] = lev
        if parent == -1:
            meta[0] = slot
        else:
            T[parent, d + side] = slot
        # right pushed first so the left subtree is laid out right after its parent
        if mid + 1 < e:
            st[top] = (mid + 1, e, lev + 1, slot, 1)
            top += 1
        if s < mid:
            st[top] = (s, mid, lev + 1, slot, 0)
            top += 1
        slot += 1
    meta[3] = n


@njit(cache=True)
def kd_insert(pts, i, T, tid, meta):
    d = pts.shape[1]
    s = meta[3]
    meta[3] = s + 1
    for a in range(d):
        T[s, a] = pts[i, a]
    T[s, d] = -1.0
    T[s, d + 1] = -1.0
    tid[s] = i
    node = meta[0]
    if node == -1:
        meta[0] = s
        return
    lev = 0
    while True:
        a = lev % d
        side = 0 if T[s, a] < T[node, a] else 1
        nxt = int(T[node, d + side])
        lev += 1
        if nxt == -1:
            T[node, d + side] = s
            break
        node = nxt
    if lev > meta[1]:
        meta[1] = lev


@njit(cache=True)
def kd_add(pts, i, T, tid, meta):
    """Insert point ``i`` (points must be added in index order).

    The tree is rebuilt balanced whenever it has doubled: advancing fronts
    insert spatially coherent sequences, which otherwise grow it several
    times deeper than log2(n). Adversarial orders (points sorted along an
    axis) can still build long chains between rebuilds.
    """
    if i + 1 >= 64 and (i + 1) * _REBUILD_DEN >= meta[2] * _REBUILD_NUM:
        kd_build(pts, i + 1, T, tid, meta)
    else:
        kd_insert(pts, i, T, tid, meta)


@njit(cache=True)
def kd_nearest(q, T, tid, meta):
    """Exact nearest point ``(index, squared distance)``; ties go to the lowest index."""
    best = -1
    best_d2 = np.inf
    root = meta[0]
    if root == -1:
        return best, best_d2
    d = q.shape[0]
    cap = 2 * meta[1] + 4
    nodes = np.empty(cap, np.int64)
    levels = np.empty(cap, np.int64)
    bounds = np.empty(cap)
    nodes[0] = root
    levels[0] = 0
    bounds[0] = 0.0
    top = 1
    while top > 0:
        top -= 1
        node = nodes[top]
        lev = levels[top]
        lb = bounds[top]
        if lb > best_d2:
            continue
        d2 = _dist2(T, node, q)
        if d2 < best_d2 or (d2 == best_d2 and tid[node] < best):
            best_d2 = d2
            best = tid[node]
        a = lev % d
        diff = q[a] - T[node, a]
        if diff < 0:
            near = int(T[node, d])
            far = int(T[node, d + 1])
        else:
            near = int(T[node, d + 1])
            far = int(T[node, d])
        if far != -1:
            nodes[top] = far
            levels[top] = lev + 1
            bounds[top] = max(lb, diff * diff)
            top += 1
        if near != -1:
            nodes[top] = near
            levels[top] = lev + 1
            bounds[top] = lb
            top += 1
    return best, best_d2


@njit(cache=True)
def kd_any_within(q, r2, T, meta):
    """True iff some stored point lies strictly closer than ``sqrt(r2)``."""
    return kd_any_within_buf(q, r2, T, meta, kd_stack(meta))


@njit(cache=True)
def kd_stack(meta):
    """Traversal stack large enough for the current tree depth."""
    return np.empty((2 * meta[1] + 4, 2), np.int64)


@njit(cache=True)
def kd_any_within_buf(q, r2, T, meta, stack):
    """:func:`kd_any_within` with a caller-owned stack of at least ``2 * depth + 4`` rows."""
    root = meta[0]
    if root == -1:
        return False
    d = q.shape[0]
    top = 1
    stack[0, 0] = root
    stack[0, 1] = 0
    while top > 0:
        top -= 1
        node = stack[top, 0]
        lev = stack[top, 1]
        if _dist2(T, node, q) < r2:
            return True
        a = lev % d
        diff = q[a] - T[node, a]
        if diff < 0:
            near = int(T[node, d])
            far = int(T[node, d + 1])
        else:
            near = int(T[node, d + 1])
            far = int(T[node, d])
        if far != -1 and diff * diff < r2:
            stack[top, 0] = far
            stack[top, 1] = lev + 1
            top += 1
        if near != -1:
            stack[top, 0] = near
            stack[top, 1] = lev + 1
            top += 1
    return False


# -- background grid ------------------------------------------------------------
# head[cell] is the most recently inserted point in the cell, nxt[i] the one
# inserted before i, so a cell may hold several points.

@njit(cache=True)
def grid_cell_of(q, origin, cell, dims):
    idx = 0
    for a in range(q.shape[0]):
        c = int(math.floor((q[a] - origin[a]) / cell))
        if c < 0 or c >= dims[a]:
            return -1
        idx = idx * dims[a] + c
    return idx


@njit(cache=True)
def grid_insert(pts, i, head, nxt, origin, cell, dims):
    c = grid_cell_of(pts[i], origin, cell, dims)
    if c < 0:
        return False
    nxt[i] = head[c]
    head[c] = i
    return True


@njit(cache=True)
def _grid_base(q, origin, cell, dims, base):
    for a in range(q.shape[0]):
        base[a] = int(math.floor((q[a] - origin[a]) / cell))


@njit(cache=True)
def grid_any_within(pts, q, r2, reach, head, nxt, origin, cell, dims):
    """True iff some stored point lies strictly closer than ``sqrt(r2)``.

    ``reach`` is the number of cells to scan on each side of the query cell.
    """
    d = q.shape[0]
    base = np.empty(d, np.int64)
    _grid_base(q, origin, cell, dims, base)
    off = np.full(d, -reach, np.int64)
    while True:
        idx = 0
        ok = True
        for a in range(d):
            c = base[a] + off[a]
            if c < 0 or c >= dims[a]:
                ok = False
                break
            idx = idx * dims[a] + c
        if ok:
            j = head[idx]
            while j != -1:
                if _dist2(pts, j, q) < r2:
                    return True
                j = nxt[j]
        a = d - 1
        while a >= 0:
            off[a] += 1
            if off[a] <= reach:
                break
            off[a] = -reach
            a -= 1
        if a < 0:
            return False


@njit(cache=True)
def grid_nearest(pts, q, head, nxt, origin, cell, dims):
    """Exact nearest point by expanding rings of cells; ties go to the lowest index."""
    d = q.shape[0]
    base = np.empty(d, np.int64)
    _grid_base(q, origin, cell, dims, base)
    maxring = 0
    for a in range(d):
        maxring = max(maxring, abs(base[a]) + 1, abs(dims[a] - 1 - base[a]) + 1)
    best = -1
    best_d2 = np.inf
    off = np.empty(d, np.int64)
    for k in range(maxring + 1):
        # points in ring k are at least (k - 1) * cell away from q
        if best != -1 and (k - 1) * cell > 0 and ((k - 1) * cell) ** 2 > best_d2:
            break
        off[:] = -k
        while True:
            on_ring = False
            for a in range(d):
                if off[a] == k or off[a] == -k:
                    on_ring = True
                    break
            if on_ring:
                idx = 0
                ok = True
                for a in range(d):
                    c = base[a] + off[a]
                    if c < 0 or c >= dims[a]:
                        ok = False
                        break
                    idx = idx * dims[a] + c
                if ok:
                    j = head[idx]
                    while j != -1:
                        d2 = _dist2(pts, j, q)
                        if d2 < best_d2 or (d2 == best_d2 and j < best):
                            best_d2 = d2
                            best = j
                        j = nxt[j]
            a = d - 1
            while a >= 0:
                off[a] += 1
                if off[a] <= k:
                    break
                off[a] = -k
                a -= 1
            if a < 0:
                break
    return best, best_d2


def brute_force_nearest(points, q):
    """Linear-scan oracle: ``(index, distance)``, lowest index on ties."""
    points = np.asarray(points, dtype=float)
    d = np.sqrt(((points - np.asarray(q, dtype=float)) ** 2).sum(axis=1))
    i = int(np.argmin(d))
    return i, float(d[i])


# -- Python-facing classes -----------------------------------------------------

class SpatialIndex:
    """Incremental exact nearest-neighbour contract."""

    def __init__(self, dim: int, capacity: int = 64):
        self.dim = dim
        self._pts = np.empty((max(capacity, 16), dim))
        self._n = 0

    @property
    def size(self) -> int:
        return self._n

    def __len__(self):
        return self._n

    @property
    def points(self) -> np.ndarray:
        return self._pts[: self._n]

    def _grow(self, need):
        cap = self._pts.shape[0]
        if need <= cap:
            return False
        new = max(need, 2 * cap)
        pts = np.empty((new, self.dim))
        pts[: self._n] = self._pts[: self._n]
        self._pts = pts
        return True

    def _check(self, p):
        p = np.ascontiguousarray(p, dtype=float).ravel()
        if p.size != self.dim:
            raise ValueError(f"expected a {self.dim}-D point, got {p.size} coordinates")
        return p

    def nearest(self, q):
        """``(point, distance)`` of the closest stored point."""
        i, dist = self.nearest_index(q)
        return self._pts[i].copy(), dist

    def nearest_index(self, q):
        raise NotImplementedError

    def insert(self, p) -> int:
        raise NotImplementedError


class KDTree(SpatialIndex):
    """k-d tree: balanced build, cheap inserts, balanced rebuild on doubling."""

    def __init__(self, points=None, dim: int | None = None):
        pts = None if points is None else np.asarray(points, dtype=float)
        if pts is not None and pts.size:
            pts = pts.reshape(len(pts), -1)
            dim = pts.shape[1]
        if dim is None:
            raise ValueError("dimension unknown: pass points or dim")
        n0 = 0 if pts is None or not pts.size else len(pts)
        super().__init__(dim, capacity=2 * n0 + 16)
        cap = self._pts.shape[0]
        self._T = np.empty((cap, dim + 2))
        self._tid = np.full(cap, -1, np.int64)
        self._meta = np.array([-1, 0, 0, 0], np.int64)
        if n0:
            self._pts[:n0] = pts
            self._n = n0
            kd_build(self._pts, n0, self._T, self._tid, self._meta)

    @property
    def depth(self) -> int:
        return int(self._meta[1])

    def _grow(self, need):
        old = self._pts.shape[0]
        if not super()._grow(need):
            return False
        cap = self._pts.shape[0]
        T = np.empty((cap, self.dim + 2))
        T[:old] = self._T
        tid = np.full(cap, -1, np.int64)
        tid[:old] = self._tid
        self._T, self._tid = T, tid
        return True

    def insert(self, p) -> int:
        p = self._check(p)
        self._grow(self._n + 1)
        i = self._n
        self._pts[i] = p
        kd_add(self._pts, i, self._T, self._tid, self._meta)
        self._n += 1
        return i

    def nearest_index(self, q):
        if self._n == 0:
            raise ValueError("nearest() on an empty index")
        i, d2 = kd_nearest(self._check(q), self._T, self._tid, self._meta)
        return int(i), math.sqrt(d2)

    def any_within(self, q, radius: float) -> bool:
        return bool(kd_any_within(self._check(q), radius * radius, self._T, self._meta))


class BackgroundGrid(SpatialIndex):
    """Uniform grid with cell size ``h / sqrt(d)`` covering ``[lo, hi]``.

    The covered region is padded by ``h`` on every side so points on or
    slightly outside the box can still be stored.
    """

    def __init__(self, lo, hi, h: float, points=None):
        lo = np.asarray(lo, dtype=float).ravel()
        hi = np.asarray(hi, dtype=float).ravel()
        if not h > 0:
            raise ValueError("grid spacing must be positive")
        d = lo.size
        super().__init__(d)
        self.h = float(h)
        self.cell = self.h / math.sqrt(d)
        self.origin = lo - self.h
        span = (hi + self.h) - self.origin
        self.dims = np.maximum(1, np.ceil(span / self.cell).astype(np.int64))
        ncells = int(np.prod(self.dims))
        if ncells > 500_000_000:
            raise MemoryError(f"grid would need {ncells} cells")
        self._head = np.full(ncells, -1, np.int64)
        self._next = np.full(self._pts.shape[0], -1, np.int64)
        if points is not None:
            for p in np.asarray(points, dtype=float).reshape(-1, d):
                self.insert(p)

    @property
    def ncells(self) -> int:
        return self._head.size

    def _grow(self, need):
        old = self._pts.shape[0]
        if not super()._grow(need):
            return False
        new = np.full(self._pts.shape[0], -1, np.int64)
        new[:old] = self._next
        self._next = new
        return True

    def insert(self, p) -> int:
        p = self._check(p)
        if grid_cell_of(p, self.origin, self.cell, self.dims) < 0:
            raise ValueError(f"point {p.tolist()} lies outside the grid coverage "
                             f"[{self.origin.tolist()}, {(self.origin + self.dims * self.cell).tolist()}]")
        self._grow(self._n + 1)
        i = self._n
        self._pts[i] = p
        grid_insert(self._pts, i, self._head, self._next, self.origin, self.cell, self.dims)
        self._n += 1
        return i

    def nearest_index(self, q):
        if self._n == 0:
            raise ValueError("nearest() on an empty index")
        i, d2 = grid_nearest(self._pts, self._check(q), self._head, self._next,
                             self.origin, self.cell, self.dims)
        return int(i), math.sqrt(d2)

    def any_within(self, q, radius: float) -> bool:
        reach = int(math.ceil(radius / self.cell))
        return bool(grid_any_within(self._pts, self._check(q), radius * radius, reach,
                                    self._head, self._next, self.origin, self.cell, self.dims))
