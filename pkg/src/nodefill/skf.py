"""Poisson-disk fill of an oriented bounding box with a normal-based inclusion filter.

The boundary is shifted inward by ``h``, a PCA box is fitted around the
shifted points and filled by Bridson sampling, and samples are kept when they
lie on the inner side of their closest shifted point.
Constant spacing only.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .geometry import Domain, discretize_boundary
from .pnp import FillResult

__all__ = ["OrientedBox", "pca_obb", "bridson_pds", "skf_fill"]


@dataclass(frozen=True)
class OrientedBox:
    """Box ``center + axes @ t`` with ``|t_k| <= half_extents[k]``; ``axes`` columns are orthonormal."""

    center: np.ndarray
    axes: np.ndarray
    half_extents: np.ndarray

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def volume(self) -> float:
        return float(np.prod(2 * self.half_extents))

    def to_local(self, pts) -> np.ndarray:
        """Coordinates in ``[0, 2 * half_extents]``."""
        return (np.asarray(pts, float) - self.center) @ self.axes + self.half_extents

    def to_global(self, local) -> np.ndarray:
        return self.center + (np.asarray(local, float) - self.half_extents) @ self.axes.T


def _box_in_frame(pts: np.ndarray, axes: np.ndarray) -> OrientedBox:
    proj = pts @ axes
    lo, hi = proj.min(axis=0), proj.max(axis=0)
    return OrientedBox(center=axes @ ((lo + hi) / 2), axes=axes, half_extents=(hi - lo) / 2)


def pca_obb(points) -> OrientedBox:
    """Oriented bounding box along the principal axes of ``points``.

    When two covariance eigenvalues nearly coincide the principal directions
    are arbitrary; the axis-aligned frame is then also tried and the smaller
    box is kept.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError("points must be an (m, d) array")
    m, d = pts.shape
    if m < d + 1:
        raise ValueError(f"need at least {d + 1} points for a {d}-D box, got {m}")
    cov = np.cov(pts, rowvar=False).reshape(d, d)
    w, v = np.linalg.eigh(cov)
    scale = max(float(w[-1]), np.finfo(float).tiny)
    if w[0] <= 1e-12 * scale:
        raise ValueError(f"degenerate point cloud: no spread along direction {v[:, 0].tolist()}")
    if np.linalg.det(v) < 0:
        v[:, 0] = -v[:, 0]
    box = _box_in_frame(pts, v)
    gaps = np.diff(w) / scale
    if d > 1 and np.any(gaps < 1e-6):
        alt = _box_in_frame(pts, np.eye(d))
        if alt.volume < box.volume:
            box = alt
    return box


@njit(cache=True)
def _bridson_kernel(ext, h, n, seed):
    np.random.seed(seed)
    d = ext.shape[0]
    cell = h / math.sqrt(d)
    dims = np.empty(d, np.int64)
    ncell = 1
    for a in range(d):
        dims[a] = max(1, int(math.ceil(ext[a] / cell)))
        ncell *= dims[a]
    grid = np.full(ncell, -1, np.int64)
    cap = 1024
    pts = np.empty((cap, d))
    active = np.empty(cap, np.int64)
    for a in range(d):
        pts[0, a] = np.random.random() * ext[a]
    grid[_cell(pts[0], cell, dims)] = 0
    npts = 1
    active[0] = 0
    nact = 1
    q = np.empty(d)
    h2 = h * h
    rlo = h ** d
    rhi = (2.0 * h) ** d
    reach = int(math.ceil(h / cell))
    base = np.empty(d, np.int64)
    off = np.empty(d, np.int64)
    while nact > 0:
        k = np.random.randint(0, nact)
        i = active[k]
        found = False
        for _ in range(n):
            nrm = 0.0
            for a in range(d):
                q[a] = np.random.standard_normal()
                nrm += q[a] * q[a]
            nrm = math.sqrt(nrm)
            rad = (rlo + np.random.random() * (rhi - rlo)) ** (1.0 / d)
            inside = True
            for a in range(d):
                q[a] = pts[i, a] + rad * q[a] / nrm
                if q[a] < 0.0 or q[a] > ext[a]:
                    inside = False
            if not inside:
                continue
            if _too_close(q, pts, grid, cell, dims, reach, h2, base, off):
                continue
            if npts == pts.shape[0]:
                grown = np.empty((2 * npts, d))
                grown[:npts] = pts
                pts = grown
                ga = np.empty(2 * npts, np.int64)
                ga[:nact] = active[:nact]
                active = ga
            for a in range(d):
                pts[npts, a] = q[a]
            grid[_cell(q, cell, dims)] = npts
            active[nact] = npts
            nact += 1
            npts += 1
            found = True
            break
        if not found:
            nact -= 1
            active[k] = active[nact]
    return pts[:npts].copy()


@njit(cache=True)
def _cell(q, cell, dims):
    idx = 0
    for a in range(q.shape[0]):
        c = min(max(int(q[a] / cell), 0), dims[a] - 1)
        idx = idx * dims[a] + c
    return idx


@njit(cache=True)
def _too_close(q, pts, grid, cell, dims, reach, h2, base, off):
    d = q.shape[0]
    for a in range(d):
        base[a] = min(max(int(q[a] / cell), 0), dims[a] - 1)
        off[a] = -reach
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
            j = grid[idx]
            if j != -1:
                s = 0.0
                for a in range(d):
                    t = pts[j, a] - q[a]
                    s += t * t
                if s < h2:
                    return True
        a = d - 1
        while a >= 0:
            off[a] += 1
            if off[a] <= reach:
                break
            off[a] = -reach
            a -= 1
        if a < 0:
            return False


def bridson_pds(box: OrientedBox, h: float, n: int = 15, seed: Optional[int] = None) -> np.ndarray:
    """Bridson sampling of ``box``: pairwise distances are at least ``h``.

    Candidates are uniform (by volume) in the annulus ``[h, 2h]`` around a
    random active sample; the first acceptable one is taken and a sample is
    retired after ``n`` failures in a row.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1)[0] & 0x7FFFFFFF)
    ext = np.ascontiguousarray(2 * np.asarray(box.half_extents, dtype=float))
    local = _bridson_kernel(ext, float(h), int(n), int(seed) & 0xFFFFFFFF)
    return box.to_global(local)


def _nearest_lowest(tree: cKDTree, q: np.ndarray) -> np.ndarray:
    """Nearest point index with equal distances resolved to the lowest index."""
    if tree.n == 1:
        return np.zeros(len(q), np.int64)
    dist, idx = tree.query(q, k=2)
    tie = dist[:, 0] == dist[:, 1]
    out = idx[:, 0].copy()
    out[tie] = np.minimum(idx[tie, 0], idx[tie, 1])
    return out


def skf_fill(domain: Domain, h, boundary=None, n: int = 15,
             seed: Optional[int] = None) -> FillResult:
    """Fill ``domain`` with constant spacing ``h`` (a float or a constant field)."""
    if hasattr(h, "is_constant"):
        if not h.is_constant:
            raise ValueError("SKF supports constant spacing only")
        hval = float(h.value)
    else:
        hval = float(h)
    if not hval > 0:
        raise ValueError("h must be positive")
    t0 = time.perf_counter()
    if boundary is None:
        boundary = discretize_boundary(domain, hval)
    bpts = np.asarray(boundary.points, dtype=float)
    normals = np.asarray(boundary.normals, dtype=float)
    shifted = bpts - hval * normals
    box = pca_obb(shifted)
    samples = bridson_pds(box, hval, n, seed)
    idx = _nearest_lowest(cKDTree(shifted), samples)
    outside = np.einsum("ij,ij->i", samples - shifted[idx], normals[idx]) > 0
    inner = samples[~outside]
    nodes = np.concatenate([bpts, inner])
    stats = {"time": time.perf_counter() - t0, "generated": len(samples),
             "obb_volume": box.volume}
    return FillResult(nodes=nodes, seed_count=len(bpts), beta=None, algorithm="skf", stats=stats)
