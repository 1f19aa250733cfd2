"""Two-dimensional advancing-front box fill and its irregular-domain wrapper.

The front is a list of potential node locations kept in x order. Each step
accepts the lowest one, removes everything closer than ``h(p)`` and places
``n`` new candidates on the upper arc of radius ``h(p)`` between the nearest
survivors on either side.
"""
from __future__ import annotations

import math
import time

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .geometry import Domain, discretize_boundary
from .pnp import FillResult
from .spacing import SpacingField, spacing_at

__all__ = ["ff_fill_box", "ff_fill_domain"]

# candidates at distance r (1 - 1e-10) or more survive; absorbs drift in the bottom row
_KEEP = 1.0 - 1e-10


@njit(cache=True)
def _arc_dirs(lx, ly, rx, ry, n, dx, dy):
    """Unit directions at angles ``(k + 1/2)/n`` of the way from ``l`` clockwise to ``r``.

    ``l`` and ``r`` are unit vectors with ``r`` at most a half turn clockwise
    of ``l``. One atan2 and a rotation recurrence replace per-point trig.
    """
    span = math.atan2(abs(rx * ly - ry * lx), rx * lx + ry * ly)
    c = math.cos(span / n)
    s = math.sin(span / n)
    ch = math.sqrt(0.5 * (1.0 + c))
    sh = 0.5 * s / ch if ch > 0.0 else 1.0
    x = lx * ch + ly * sh
    y = ly * ch - lx * sh
    for k in range(n):
        dx[k] = x
        dy[k] = y
        x, y = x * c + y * s, y * c - x * s


@njit(cache=True)
def _unit(x, y):
    norm = math.sqrt(x * x + y * y)
    return x / norm, y / norm


@njit(cache=True)
def _bottom_row(xmin, xmax, ymin, kind, fparams, code, image):
    xs = np.empty(64)
    m = 0
    p = np.empty(2)
    x = xmin
    while True:
        p[0] = x
        p[1] = ymin
        r = spacing_at(kind, fparams, code, image, p)
        if not (r > 0.0) or not math.isfinite(r):
            return xs[:m], x
        if m == xs.shape[0]:
            grown = np.empty(2 * m)
            grown[:m] = xs
            xs = grown
        xs[m] = x
        m += 1
        x += r
        if x > xmax + 1e-9 * r:
            break
    return xs[:m], np.nan


@njit(cache=True)
def _ff_kernel(xmin, xmax, ymin, ymax, n, kind, fparams, code, image, row):
    """Returns ``(nodes, bad_point)``; ``bad_point`` is NaN unless h failed somewhere."""
    m = row.shape[0]
    cap = max(4 * m + 4 * n + 16, 256)
    cx = np.empty(cap)
    cy = np.empty(cap)
    cx[:m] = row
    cy[:m] = ymin
    out = np.empty((max(16, m * m // 4), 2))
    cnt = 0
    bad = np.full(2, np.nan)
    p = np.empty(2)
    nx = np.empty(n)
    ny = np.empty(n)
    ux = np.empty(n)
    uy = np.empty(n)
    while m > 0:
        imin = 0
        for k in range(1, m):
            if cy[k] < cy[imin]:
                imin = k
        if cy[imin] > ymax:
            break
        p[0] = cx[imin]
        p[1] = cy[imin]
        if cnt == out.shape[0]:
            grown = np.empty((2 * cnt, 2))
            grown[:cnt] = out[:cnt]
            out = grown
        out[cnt, 0] = p[0]
        out[cnt, 1] = p[1]
        cnt += 1
        r = spacing_at(kind, fparams, code, image, p)
        if not (r > 0.0) or not math.isfinite(r):
            bad[0] = p[0]
            bad[1] = p[1]
            break
        r2 = r * r * _KEEP
        # compact survivors; pos = number of survivors left of p
        w = 0
        pos = 0
        for k in range(m):
            dx = cx[k] - p[0]
            dy = cy[k] - p[1]
            if dx * dx + dy * dy >= r2:
                cx[w] = cx[k]
                cy[w] = cy[k]
                w += 1
                if k < imin:
                    pos = w
        m = w
        lx, ly = _unit(cx[pos - 1] - p[0], cy[pos - 1] - p[1]) if pos > 0 else (-1.0, 0.0)
        rx, ry = _unit(cx[pos] - p[0], cy[pos] - p[1]) if pos < m else (1.0, 0.0)
        _arc_dirs(lx, ly, rx, ry, n, ux, uy)
        k_new = 0
        for k in range(n):
            x = p[0] + r * ux[k]
            if x < xmin or x > xmax:
                continue
            nx[k_new] = x
            ny[k_new] = p[1] + r * uy[k]
            k_new += 1
        if m + k_new > cx.shape[0]:
            ncap = 2 * (m + k_new)
            gx = np.empty(ncap)
            gy = np.empty(ncap)
            gx[:m] = cx[:m]
            gy[:m] = cy[:m]
            cx = gx
            cy = gy
        for k in range(m - 1, pos - 1, -1):
            cx[k + k_new] = cx[k]
            cy[k + k_new] = cy[k]
        for k in range(k_new):
            cx[pos + k] = nx[k]
            cy[pos + k] = ny[k]
        m += k_new
    return out[:cnt].copy(), bad


def _ff_python(xmin, xmax, ymin, ymax, n, h):
    """Same procedure with Python-level spacing evaluation (callable fields)."""
    xs = []
    x = xmin
    while True:
        r = float(h(np.array([x, ymin])))
        _check_h(r, (x, ymin))
        xs.append(x)
        x += r
        if x > xmax + 1e-9 * r:
            break
    cand = [(float(v), float(ymin)) for v in xs]
    out = []
    ux, uy = np.empty(n), np.empty(n)
    while cand:
        imin = min(range(len(cand)), key=lambda k: (cand[k][1], k))
        px, py = cand[imin]
        if py > ymax:
            break
        out.append((px, py))
        r = float(h(np.array([px, py])))
        _check_h(r, (px, py))
        keep = []
        pos = 0
        for k, (cx, cy) in enumerate(cand):
            if (cx - px) ** 2 + (cy - py) ** 2 >= r * r * _KEEP:
                keep.append((cx, cy))
                if k < imin:
                    pos = len(keep)
        cand = keep
        lx, ly = _unit(cand[pos - 1][0] - px, cand[pos - 1][1] - py) if pos > 0 else (-1.0, 0.0)
        rx, ry = _unit(cand[pos][0] - px, cand[pos][1] - py) if pos < len(cand) else (1.0, 0.0)
        _arc_dirs(lx, ly, rx, ry, n, ux, uy)
        new = []
        for k in range(n):
            x = px + r * ux[k]
            if xmin <= x <= xmax:
                new.append((x, py + r * uy[k]))
        cand[pos:pos] = new
    return np.array(out, dtype=float).reshape(-1, 2)


def _check_h(r, p):
    if not (r > 0) or not math.isfinite(r):
        raise ValueError(f"spacing must be positive and finite; h={r} at {list(map(float, p))}")


def ff_fill_box(xmin: float, xmax: float, ymin: float, ymax: float, h: SpacingField,
                n: int = 5, path: str = "auto") -> np.ndarray:
    """Advancing-front fill of ``[xmin, xmax] x [ymin, ymax]``.

    The bottom row starts at ``xmin`` and steps by ``h`` along ``y = ymin``.
    Returns the accepted nodes in acceptance order.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (xmax > xmin and ymax >= ymin):
        raise ValueError("empty box")
    if path == "auto":
        path = "compiled" if getattr(h, "compiled", False) else "python"
    if path == "python":
        return _ff_python(float(xmin), float(xmax), float(ymin), float(ymax), int(n), h)
    prog = h.program()
    row, bad_x = _bottom_row(float(xmin), float(xmax), float(ymin), *prog)
    if not math.isnan(bad_x):
        _check_h(h(np.array([bad_x, ymin])), (bad_x, ymin))
    nodes, bad = _ff_kernel(float(xmin), float(xmax), float(ymin), float(ymax), int(n),
                            *prog, row)
    if not np.isnan(bad[0]):
        _check_h(h(bad), bad)
    return nodes


def _near_cells(pts, anchors, origin, cell):
    """Indices of ``pts`` lying in the 3 x 3 cell block around some anchor."""
    ia = np.floor((anchors - origin) / cell).astype(np.int64)
    ip = np.floor((pts - origin) / cell).astype(np.int64)
    width = int(max(ia[:, 0].max(), ip[:, 0].max())) + 3
    keys = [(ia[:, 0] + a + 1) * width + (ia[:, 1] + b + 1) for a in (-1, 0, 1) for b in (-1, 0, 1)]
    occupied = np.unique(np.concatenate(keys))
    return np.flatnonzero(np.isin((ip[:, 0] + 1) * width + (ip[:, 1] + 1), occupied))


def ff_fill_domain(domain: Domain, h: SpacingField, n: int = 5, boundary=None,
                   path: str = "auto") -> FillResult:
    """Box fill on the bounding box, then clip to the domain and merge the boundary.

    Interior nodes closer than ``h(p)/2`` to their nearest boundary node ``p``
    are discarded. Boundary nodes come first in the result.
    """
    if domain.dim != 2:
        raise ValueError("FF supports 2-D only")
    t0 = time.perf_counter()
    if boundary is None:
        boundary = discretize_boundary(domain, h)
    bpts = np.asarray(getattr(boundary, "points", boundary), dtype=float).reshape(-1, 2)
    lo, hi = domain.bbox
    box = ff_fill_box(lo[0], hi[0], lo[1], hi[1], h, n, path=path)
    generated = len(box)
    inner = box[domain.contains(box)] if len(box) else box
    if len(bpts) and len(inner):
        hb = np.atleast_1d(h(bpts))
        reach = float(hb.max()) / 2
        # only nodes in cells next to a boundary node can be within reach of one
        near = _near_cells(inner, bpts, lo, reach)
        dist, j = cKDTree(bpts).query(inner[near], distance_upper_bound=reach)
        hit = np.isfinite(dist)
        close = np.zeros(near.size, bool)
        close[hit] = dist[hit] < hb[j[hit]] / 2
        drop = np.zeros(len(inner), bool)
        drop[near] = close
        inner = inner[~drop]
    nodes = np.concatenate([bpts, inner]) if len(bpts) else inner
    stats = {"time": time.perf_counter() - t0, "generated": generated}
    return FillResult(nodes=nodes, seed_count=len(bpts), beta=None, algorithm="ff", stats=stats)
