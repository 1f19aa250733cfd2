"""Advancing Poisson-disk style node placing with variable spacing.

Nodes are expanded in queue order. Each expansion places candidates on a
sphere of radius ``h(p)`` around the node and keeps those that are inside the
domain and no closer than ``(1 - eps) h(p)`` to any existing node.

Two execution paths produce identical results for identical inputs: a
compiled kernel (domains and spacings built from the canonical primitives)
and a Python loop over the :class:`~nodefill.spatial.SpatialIndex` contract
(any callable domain or spacing).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .geometry import Domain, program_contains
from .spacing import SpacingField, spacing_at
from .spatial import (BackgroundGrid, KDTree, grid_any_within, grid_insert, kd_add,
                      kd_any_within_buf, kd_build, kd_stack)

__all__ = [
    "CandidateStrategy",
    "FillResult",
    "unit_sphere_pattern",
    "random_rotation",
    "generate_candidates",
    "pnp_fill",
    "default_pattern_k",
]

RANDOM, FIXED, RANDOMIZED = 0, 1, 2
_VARIANTS = {"random": RANDOM, "fixed-pattern": FIXED, "randomized-pattern": RANDOMIZED}

DEFAULT_EPS = 1e-10
DEFAULT_NMAX = 10_000_000


def unit_sphere_pattern(d: int, k: int) -> np.ndarray:
    """Deterministic discretization of the unit sphere in ``R^d``.

    In 2-D these are ``k`` equally spaced directions starting at angle 0. In
    higher dimensions the polar angle takes ``ceil(k/2) + 1`` equally spaced
    values; each latitude is a scaled lower-dimensional pattern with
    ``ceil(k sin(theta))`` points and the poles are single points.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if k < 2:
        raise ValueError(f"pattern parameter k must be >= 2, got {k}")
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        phi = 2 * np.pi * np.arange(k) / k
        return np.stack([np.cos(phi), np.sin(phi)], axis=1)
    nlat = math.ceil(k / 2)
    out = []
    for m in range(nlat + 1):
        theta = m * math.pi / nlat
        s, c = math.sin(theta), math.cos(theta)
        if m == 0 or m == nlat:
            ring = np.zeros((1, d - 1))
            ring[0, 0] = 1.0
            s = 0.0
        else:
            # tolerance keeps e.g. 12*sin(pi/6) = 5.999... at 6
            count = max(1, math.ceil(k * s - 1e-9))
            if count < 2:
                ring = np.zeros((1, d - 1))
                ring[0, 0] = 1.0
            else:
                ring = unit_sphere_pattern(d - 1, count)
        block = np.empty((ring.shape[0], d))
        block[:, 0] = c
        block[:, 1:] = s * ring
        out.append(block)
    pts = np.concatenate(out)
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    _, first = np.unique(np.round(pts, 12), axis=0, return_index=True)
    return pts[np.sort(first)]


def default_pattern_k(d: int, target: Optional[int] = None) -> int:
    """Smallest ``k`` whose pattern has at least ``target`` points (15 in 2-D, 30 above)."""
    if target is None:
        target = 15 if d <= 2 else 30
    if d == 1:
        return 2
    k = 2
    while unit_sphere_pattern(d, k).shape[0] < target:
        k += 1
    return k


@dataclass(frozen=True)
class CandidateStrategy:
    """How candidates are placed around an expanded node.

    ``random``: ``n`` uniform directions per expansion. ``fixed-pattern``: the
    unit-sphere pattern with parameter ``k``. ``randomized-pattern``: the same
    pattern under a fresh uniform rotation per expansion.
    """

    variant: str = "randomized-pattern"
    n: Optional[int] = None
    k: Optional[int] = None

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown candidate variant {self.variant!r}")
        if self.variant == "random" and self.n is not None and self.n < 1:
            raise ValueError("random strategy needs n >= 1")
        if self.variant != "random" and self.k is not None and self.k < 2:
            raise ValueError("pattern strategies need k >= 2")

    def resolved(self, d: int) -> tuple[int, int, np.ndarray]:
        """``(variant code, candidate count, unit pattern)`` for dimension ``d``."""
        code = _VARIANTS[self.variant]
        if code == RANDOM:
            n = self.n if self.n is not None else (15 if d <= 2 else 30)
            return code, n, np.zeros((0, d))
        k = self.k if self.k is not None else default_pattern_k(d)
        pat = np.ascontiguousarray(unit_sphere_pattern(d, k))
        return code, pat.shape[0], pat


# -- random numbers and candidates ----------------------------------------------

@njit(cache=True)
def rotation_from_normals(z, d):
    """Uniform rotation from ``d*d`` standard normals (Gram-Schmidt, det fixed to +1)."""
    q = np.empty((d, d))
    for j in range(d):
        for i in range(d):
            q[i, j] = z[j * d + i]
    for j in range(d):
        for m in range(j):
            dot = 0.0
            for i in range(d):
                dot += q[i, m] * q[i, j]
            for i in range(d):
                q[i, j] -= dot * q[i, m]
        nrm = 0.0
        for i in range(d):
            nrm += q[i, j] * q[i, j]
        nrm = math.sqrt(nrm)
        for i in range(d):
            q[i, j] /= nrm
    # determinant sign by elimination on a copy
    a = q.copy()
    sign = 1.0
    for c in range(d):
        piv = c
        for r in range(c + 1, d):
            if abs(a[r, c]) > abs(a[piv, c]):
                piv = r
        if piv != c:
            for t in range(d):
                tmp = a[c, t]
                a[c, t] = a[piv, t]
                a[piv, t] = tmp
            sign = -sign
        if a[c, c] < 0:
            sign = -sign
        for r in range(c + 1, d):
            f = a[r, c] / a[c, c]
            for t in range(c, d):
                a[r, t] -= f * a[c, t]
    if sign < 0:
        for i in range(d):
            q[i, 0] = -q[i, 0]
    return q


@njit(cache=True)
def _fill_candidates(p, r, variant, ncand, pattern, rnd, rpos, out):
    """Write candidates around ``p`` into ``out``; returns the new random offset."""
    d = p.shape[0]
    if variant == 0:
        for c in range(ncand):
            nrm = 0.0
            for a in range(d):
                nrm += rnd[rpos + a] * rnd[rpos + a]
            nrm = math.sqrt(nrm)
            for a in range(d):
                out[c, a] = p[a] + r * (rnd[rpos + a] / nrm)
            rpos += d
        return rpos
    if variant == 1:
        for c in range(ncand):
            for a in range(d):
                out[c, a] = p[a] + r * pattern[c, a]
        return rpos
    rot = rotation_from_normals(rnd[rpos:rpos + d * d], d)
    rpos += d * d
    for c in range(ncand):
        for a in range(d):
            s = 0.0
            for b in range(d):
                s += rot[a, b] * pattern[c, b]
            out[c, a] = p[a] + r * s
    return rpos


def _normals_needed(variant: int, d: int, ncand: int) -> int:
    if variant == RANDOM:
        return ncand * d
    if variant == RANDOMIZED:
        return d * d
    return 0


class _NormalStream:
    """Standard normals drawn from a Generator in fixed-size chunks.

    Both fill paths refill at the same moments, so they see the same numbers.
    """

    CHUNK = 1 << 16

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.buf = np.empty(0)
        self.pos = 0

    def refill(self):
        self.buf = np.concatenate([self.buf[self.pos:], self.rng.standard_normal(self.CHUNK)])
        self.pos = 0

    def take(self, k: int) -> np.ndarray:
        if self.pos + k > self.buf.size:
            self.refill()
        out = self.buf[self.pos:self.pos + k]
        self.pos += k
        return out


def random_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform element of SO(d)."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return rotation_from_normals(rng.standard_normal(d * d), d)


def generate_candidates(p, r: float, strategy: CandidateStrategy = CandidateStrategy(),
                        rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Candidates on the sphere of radius ``r`` around ``p`` (one expansion)."""
    p = np.ascontiguousarray(p, dtype=float).ravel()
    if not r > 0:
        raise ValueError("radius must be positive")
    d = p.size
    code, ncand, pattern = strategy.resolved(d)
    need = _normals_needed(code, d, ncand)
    if need and rng is None:
        raise ValueError(f"{strategy.variant} candidates need an rng")
    rnd = rng.standard_normal(need) if need else np.empty(0)
    out = np.empty((ncand, d))
    _fill_candidates(p, float(r), code, ncand, pattern, rnd, 0, out)
    return out


# -- result -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FillResult:
    """Output of a fill.

    ``nodes[:seed_count]`` are the given seeds (boundary nodes for the
    baselines). ``beta[j]`` is the node whose expansion created ``j`` and -1
    for seeds; it is ``None`` for algorithms without a predecessor relation.
    """

    nodes: np.ndarray
    seed_count: int
    beta: Optional[np.ndarray] = None
    terminal: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    truncated: bool = False
    algorithm: str = "pnp"
    stats: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[self.seed_count:]

    @property
    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.n, bool)
        m[: self.seed_count] = True
        return m


# -- compiled kernel -------------------------------------------------------------

ST_DONE, ST_CAPACITY, ST_RANDOM, ST_TRUNCATED, ST_BAD_H = range(5)


@njit(cache=True)
def _pnp_kernel(pts, beta, terminal, state, use_grid, kd, grid, dom, sp,
                variant, ncand, pattern, rnd, nmax, eps, cand):
    """Run expansions until done or some resource runs out.

    ``state`` = [n, i, rpos, generated, accepted] is updated in place.
    Returns a status code; on ST_BAD_H the offending node is ``state[1]``.
    """
    d = pts.shape[1]
    n = state[0]
    i = state[1]
    rpos = state[2]
    T, tid, meta = kd
    head, nxt, origin, cell, dims, reach = grid
    ops, dparams = dom
    kind, fparams, code, image = sp
    need = 0
    if variant == 0:
        need = ncand * d
    elif variant == 2:
        need = d * d
    status = ST_DONE
    stack = kd_stack(meta)
    while i < n:
        if rpos + need > rnd.shape[0]:
            status = ST_RANDOM
            break
        if n + ncand > pts.shape[0]:
            status = ST_CAPACITY
            break
        p = pts[i]
        r = spacing_at(kind, fparams, code, image, p)
        if not (r > 0.0) or not math.isfinite(r):
            status = ST_BAD_H
            break
        rpos = _fill_candidates(p, r, variant, ncand, pattern, rnd, rpos, cand)
        state[3] += ncand
        rr = (1.0 - eps) * r
        r2 = rr * rr
        acc = 0
        for c in range(ncand):
            q = cand[c]
            if not program_contains(ops, dparams, q):
                continue
            if use_grid:
                close = grid_any_within(pts, q, r2, reach, head, nxt, origin, cell, dims)
            else:
                if stack.shape[0] < 2 * meta[1] + 4:
                    stack = kd_stack(meta)
                close = kd_any_within_buf(q, r2, T, meta, stack)
            if close:
                continue
            for a in range(d):
                pts[n, a] = q[a]
            beta[n] = i
            if use_grid:
                grid_insert(pts, n, head, nxt, origin, cell, dims)
            else:
                kd_add(pts, n, T, tid, meta)
            n += 1
            acc += 1
            if n >= nmax:
                break
        state[4] += acc
        terminal[i] = acc == 0
        i += 1
        if n >= nmax:
            status = ST_TRUNCATED
            break
    state[0] = n
    state[1] = i
    state[2] = rpos
    return status


def _dedup_seeds(seeds: np.ndarray, hvals: np.ndarray, eps: float) -> np.ndarray:
    if len(seeds) < 2:
        return seeds
    from scipy.spatial import cKDTree

    tree = cKDTree(seeds)
    pairs = tree.query_pairs(r=eps * float(hvals.max()), output_type="ndarray")
    drop = np.zeros(len(seeds), bool)
    for a, b in pairs:
        a, b = min(a, b), max(a, b)
        if not drop[a] and np.linalg.norm(seeds[a] - seeds[b]) <= eps * hvals[b]:
            drop[b] = True
    return seeds[~drop]


def _random_interior_seed(domain: Domain, rng: np.random.Generator, tries: int = 1_000_000):
    lo, hi = np.asarray(domain.lo), np.asarray(domain.hi)
    drawn = 0
    while drawn < tries:
        m = min(4096, tries - drawn)
        pts = lo + (hi - lo) * rng.random((m, domain.dim))
        drawn += m
        for q in pts:
            if domain.contains(q):
                return q[None, :]
    raise ValueError(f"no interior seed found in {tries} bounding-box draws; is the domain empty?")


def _prepare_seeds(domain, h, seeds, eps, rng):
    d = domain.dim
    if seeds is None or len(seeds) == 0:
        seeds = _random_interior_seed(domain, rng)
    seeds = np.ascontiguousarray(np.asarray(seeds, dtype=float).reshape(-1, d))
    hv = np.asarray(h(seeds), dtype=float).reshape(-1)
    bad = ~(hv > 0)
    if np.any(bad):
        j = int(np.argmax(bad))
        raise ValueError(f"spacing must be positive; h={hv[j]} at seed {seeds[j].tolist()}")
    return _dedup_seeds(seeds, hv, eps)


def pnp_fill(domain: Domain, h: SpacingField, seeds=None,
             strategy: CandidateStrategy = CandidateStrategy(),
             max_nodes: int = DEFAULT_NMAX, eps: float = DEFAULT_EPS,
             seed: Optional[int] = None, index: str = "kdtree",
             path: str = "auto") -> FillResult:
    """Fill ``domain`` with nodes spaced according to ``h``.

    Parameters
    ----------
    seeds : (m, d) array or None
        Initial nodes, usually a boundary discretization. When empty, one
        uniform random interior node is drawn.
    strategy : CandidateStrategy
        Candidate placement; defaults to a randomly rotated fixed pattern.
    max_nodes : int
        Hard limit; reaching it sets ``truncated``.
    index : {"kdtree", "grid"}
        Proximity structure. The grid needs constant spacing.
    path : {"auto", "compiled", "python"}
        ``auto`` uses the compiled kernel whenever domain and spacing allow it.
    """
    if index not in ("kdtree", "grid"):
        raise ValueError(f"unknown index {index!r}")
    if index == "grid" and not getattr(h, "is_constant", False):
        raise ValueError("the background grid index requires constant spacing")
    if max_nodes < 1:
        raise ValueError("max_nodes must be >= 1")
    d = domain.dim
    rng = np.random.default_rng(seed)
    seeds = _prepare_seeds(domain, h, seeds, eps, rng)
    compiled_ok = domain.compiled and getattr(h, "compiled", False)
    if path == "auto":
        path = "compiled" if compiled_ok else "python"
    if path == "compiled" and not compiled_ok:
        raise ValueError("compiled path needs a canonical domain and a compiled spacing field")
    if len(seeds) > max_nodes:
        seeds = seeds[:max_nodes]
    stream = _NormalStream(rng)
    t0 = time.perf_counter()
    if path == "compiled":
        res = _run_compiled(domain, h, seeds, strategy, max_nodes, eps, stream, index)
    else:
        res = _run_python(domain, h, seeds, strategy, max_nodes, eps, stream, index)
    nodes, beta, terminal, truncated, gen, acc = res
    stats = {"time": time.perf_counter() - t0, "generated": gen, "accepted": acc,
             "index": index, "path": path}
    return FillResult(nodes=nodes, seed_count=len(seeds), beta=beta, terminal=terminal,
                      truncated=truncated, algorithm="pnp-grid" if index == "grid" else "pnp",
                      stats=stats)


def _run_compiled(domain, h, seeds, strategy, nmax, eps, stream, index):
    d = domain.dim
    variant, ncand, pattern = strategy.resolved(d)
    nb = len(seeds)
    cap = max(1024, 4 * nb + 2 * ncand)
    pts = np.empty((cap, d))
    pts[:nb] = seeds
    beta = np.full(cap, -1, np.int64)
    terminal = np.zeros(cap, np.bool_)
    use_grid = index == "grid"
    kd = _kd_arrays(1 if use_grid else cap, d)
    if use_grid:
        g = BackgroundGrid(domain.lo, domain.hi, h.value)
        head = g._head
        nxt = np.full(cap, -1, np.int64)
        for j in range(nb):
            if not grid_insert(pts, j, head, nxt, g.origin, g.cell, g.dims):
                raise ValueError(f"seed {seeds[j].tolist()} lies outside the grid coverage")
        grid = (head, nxt, g.origin, g.cell, g.dims, int(math.ceil(h.value / g.cell)))
    else:
        kd_build(pts, nb, *kd)
        grid = (np.full(1, -1, np.int64), np.full(1, -1, np.int64), np.zeros(d), 1.0,
                np.ones(d, np.int64), 0)
    dom = domain.program()
    sp = h.program()
    state = np.array([nb, 0, 0, 0, 0], np.int64)
    cand = np.empty((ncand, d))
    stream.buf = np.empty(0)
    stream.pos = 0
    truncated = False
    while True:
        status = _pnp_kernel(pts, beta, terminal, state, use_grid, kd, grid, dom, sp,
                             variant, ncand, pattern, stream.buf, nmax, eps, cand)
        if status == ST_DONE:
            break
        if status == ST_TRUNCATED:
            truncated = True
            break
        if status == ST_BAD_H:
            p = pts[state[1]]
            raise ValueError(f"spacing must be positive and finite; h={h(p)} at {p.tolist()}")
        if status == ST_RANDOM:
            stream.pos = int(state[2])
            stream.refill()
            state[2] = 0
            continue
        # ST_CAPACITY
        new = 2 * pts.shape[0]
        pts = _grown(pts, new)
        beta = _grown(beta, new, -1)
        terminal = _grown(terminal, new, False)
        if use_grid:
            grid = (grid[0], _grown(grid[1], new, -1)) + grid[2:]
        else:
            kd = (_grown(kd[0], new), _grown(kd[1], new, -1), kd[2])
    n, i = int(state[0]), int(state[1])
    term = np.flatnonzero(terminal[:i])
    return pts[:n].copy(), beta[:n].copy(), term, truncated, int(state[3]), int(state[4])


def _kd_arrays(cap, d):
    return (np.empty((cap, d + 2)), np.full(cap, -1, np.int64), np.array([-1, 0, 0, 0], np.int64))


def _grown(a, new, fill=None):
    shape = (new,) + a.shape[1:]
    out = np.empty(shape, a.dtype) if fill is None else np.full(shape, fill, a.dtype)
    out[: a.shape[0]] = a
    return out


def _run_python(domain, h, seeds, strategy, nmax, eps, stream, index):
    d = domain.dim
    variant, ncand, pattern = strategy.resolved(d)
    need = _normals_needed(variant, d, ncand)
    if index == "grid":
        idx = BackgroundGrid(domain.lo, domain.hi, h.value, points=seeds)
    else:
        idx = KDTree(seeds, dim=d)
    nodes = [np.array(s) for s in seeds]
    beta = [-1] * len(seeds)
    terminal = []
    cand = np.empty((ncand, d))
    gen = acc_total = 0
    truncated = False
    i = 0
    while i < len(nodes):
        p = nodes[i]
        r = float(h(p))
        if not (r > 0) or not math.isfinite(r):
            raise ValueError(f"spacing must be positive and finite; h={r} at {p.tolist()}")
        rnd = stream.take(need) if need else np.empty(0)
        _fill_candidates(p, r, variant, ncand, pattern, rnd, 0, cand)
        gen += ncand
        acc = 0
        for q in cand:
            if not domain.contains(q):
                continue
            _, dist = idx.nearest(q)
            if dist < (1.0 - eps) * r:
                continue
            idx.insert(q)
            nodes.append(q.copy())
            beta.append(i)
            acc += 1
            if len(nodes) >= nmax:
                break
        acc_total += acc
        if acc == 0:
            terminal.append(i)
        i += 1
        if len(nodes) >= nmax:
            truncated = True
            break
    return (np.array(nodes).reshape(-1, d), np.array(beta, np.int64),
            np.array(terminal, np.int64), truncated, gen, acc_total)
