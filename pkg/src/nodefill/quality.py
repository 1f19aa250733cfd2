"""Quality measures for node sets: neighbour distances, holes, spacing checks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import Delaunay, QhullError, cKDTree

__all__ = [
    "NeighborStats",
    "HoleReport",
    "EmptyDiskReport",
    "neighbor_stats",
    "distance_histogram",
    "hole_sizes_2d",
    "verify_empty_disk",
    "min_pairwise_distance",
]


def _as_nodes(nodes) -> np.ndarray:
    pts = getattr(nodes, "nodes", nodes)
    pts = np.asarray(pts, dtype=float)
    if pts.ndim != 2:
        raise ValueError("nodes must be an (N, d) array")
    return pts


@dataclass(frozen=True)
class NeighborStats:
    """Distances from each evaluated node to its ``c`` nearest neighbours.

    ``index`` lists the evaluated nodes; ``dists[i]`` holds their sorted
    neighbour distances.
    """

    c: int
    index: np.ndarray
    dists: np.ndarray

    @property
    def dbar(self) -> np.ndarray:
        return self.dists.mean(axis=1)

    @property
    def dmin(self) -> np.ndarray:
        return self.dists[:, 0]

    @property
    def dmax(self) -> np.ndarray:
        return self.dists[:, -1]

    @property
    def mean(self) -> float:
        return float(self.dbar.mean())

    @property
    def std(self) -> float:
        return float(self.dbar.std())

    @property
    def spread(self) -> float:
        """Mean of ``dmax - dmin`` over the evaluated nodes."""
        return float((self.dmax - self.dmin).mean())

    def summary(self) -> dict:
        return {"c": self.c, "count": int(self.index.size), "mean": self.mean, "std": self.std,
                "spread": self.spread, "dmin_mean": float(self.dmin.mean()),
                "dmax_mean": float(self.dmax.mean())}


def _interior_mask(pts, margin, boundary, domain):
    if margin <= 0:
        return np.ones(len(pts), bool)
    if boundary is not None and len(boundary):
        dist, _ = cKDTree(np.asarray(boundary, dtype=float)).query(pts)
    elif domain is not None:
        dist = domain.boundary_distance(pts)
    else:
        raise ValueError("a positive margin needs boundary nodes or a domain")
    return dist >= margin


def neighbor_stats(nodes, c: int = 3, margin: float = 0.0, boundary=None,
                   domain=None) -> NeighborStats:
    """Nearest-neighbour distance statistics over nodes at least ``margin`` from the boundary.

    Parameters
    ----------
    nodes : (N, d) array or FillResult
        All nodes; every node may serve as a neighbour.
    c : int
        Number of neighbours per node (the node itself is excluded).
    margin : float
        Only nodes whose boundary distance is at least this are evaluated.
    boundary : (Nb, d) array, optional
        Boundary nodes used to measure that distance. Defaults to the seed
        nodes of a FillResult; otherwise the exact distance to ``domain``'s
        boundary is used.
    """
    if c < 1:
        raise ValueError("c must be >= 1")
    if margin < 0:
        raise ValueError("margin must be >= 0")
    pts = _as_nodes(nodes)
    if boundary is None and hasattr(nodes, "seed_count") and nodes.seed_count:
        boundary = pts[: nodes.seed_count]
    if len(pts) < c + 1:
        raise ValueError(f"need at least {c + 1} nodes, got {len(pts)}")
    keep = np.flatnonzero(_interior_mask(pts, margin, boundary, domain))
    if keep.size < c + 1:
        raise ValueError(f"only {keep.size} nodes lie at least {margin} from the boundary; "
                         f"need {c + 1}")
    dist, _ = cKDTree(pts).query(pts[keep], k=c + 1)
    return NeighborStats(c=c, index=keep, dists=dist[:, 1:])


def distance_histogram(nodes, c: int = 3, bins=50, margin: float = 0.0, boundary=None,
                       domain=None):
    """Histogram of all ``c * N`` neighbour distances of the evaluated nodes.

    Returns ``(counts, edges)`` as from :func:`numpy.histogram`.
    """
    if np.isscalar(bins) and int(bins) < 1:
        raise ValueError("bins must be >= 1")
    st = neighbor_stats(nodes, c, margin, boundary, domain)
    vals = st.dists.ravel()
    lo, hi = float(vals.min()), float(vals.max())
    if hi - lo <= 1e-9 * max(hi, 1e-300):
        # (nearly) equal distances; numpy refuses bins narrower than rounding
        pad = 1e-6 * max(hi, 1e-300)
        return np.histogram(vals, bins=bins, range=(lo - pad, hi + pad))
    return np.histogram(vals, bins=bins)


@dataclass(frozen=True)
class HoleReport:
    """Empty circles centred at Voronoi vertices inside the domain; ``s`` are diameters."""

    vertices: np.ndarray
    s: np.ndarray

    @property
    def max(self) -> float:
        return float(self.s.max())

    @property
    def min(self) -> float:
        return float(self.s.min())

    @property
    def mean(self) -> float:
        return float(self.s.mean())

    def summary(self) -> dict:
        return {"count": int(self.s.size), "min": self.min, "mean": self.mean, "max": self.max}


def _circumcenters(pts, simplices):
    a, b, c = pts[simplices[:, 0]], pts[simplices[:, 1]], pts[simplices[:, 2]]
    ab, ac = b - a, c - a
    dd = 2 * (ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0])
    nb, nc = (ab ** 2).sum(1), (ac ** 2).sum(1)
    ux = (ac[:, 1] * nb - ab[:, 1] * nc) / dd
    uy = (ab[:, 0] * nc - ac[:, 0] * nb) / dd
    return a + np.stack([ux, uy], axis=1), dd


def hole_sizes_2d(nodes, domain=None) -> HoleReport:
    """Diameters ``2 min_i |v - p_i|`` of empty circles at interior Voronoi vertices."""
    pts = _as_nodes(nodes)
    if pts.shape[1] != 2:
        raise ValueError("hole analysis is 2-D only")
    if len(pts) < 3:
        raise ValueError("need at least 3 nodes")
    scale = float(np.ptp(pts, axis=0).max())
    try:
        tri = Delaunay(pts)
    except QhullError as exc:
        raise ValueError(f"degenerate node set (collinear?): {exc}") from None
    centers, dd = _circumcenters(pts, tri.simplices)
    ok = np.abs(dd) > 1e-12 * scale * scale
    centers = centers[ok]
    if domain is not None:
        centers = centers[domain.contains(centers)]
    if len(centers) == 0:
        raise ValueError("no Voronoi vertex lies inside the domain")
    dist, _ = cKDTree(pts).query(centers)
    return HoleReport(vertices=centers, s=2 * dist)


@dataclass(frozen=True)
class EmptyDiskReport:
    """Smallest ratio ``|p_k - p_j| / h(p_beta(j))`` over generated ``j`` and ``k < j``."""

    ok: bool
    worst_ratio: float
    worst_pair: Optional[tuple]


def verify_empty_disk(result, h, eps: float = 1e-10, chunk: int = 2048) -> EmptyDiskReport:
    """Exhaustive check of the minimal spacing inequality for a fill with predecessors.

    Every node ``j`` created by expansion must be at least
    ``(1 - eps) h(p_beta(j))`` away from all earlier nodes.
    """
    beta = getattr(result, "beta", None)
    if beta is None:
        raise ValueError("the result carries no predecessor array")
    pts = np.asarray(result.nodes, dtype=float)
    beta = np.asarray(beta)
    gen = np.flatnonzero(beta >= 0)
    if gen.size == 0:
        return EmptyDiskReport(ok=True, worst_ratio=np.inf, worst_pair=None)
    hb = np.asarray(h(pts[beta[gen]]), dtype=float).reshape(-1)
    worst, pair = np.inf, None
    for s in range(0, gen.size, chunk):
        js = gen[s:s + chunk]
        upto = int(js.max())
        d2 = ((pts[js, None, :] - pts[None, :upto, :]) ** 2).sum(-1)
        d2[np.arange(upto)[None, :] >= js[:, None]] = np.inf
        kmin = np.argmin(d2, axis=1)
        ratio = np.sqrt(d2[np.arange(js.size), kmin]) / hb[s:s + chunk]
        m = int(np.argmin(ratio))
        if ratio[m] < worst:
            worst, pair = float(ratio[m]), (int(kmin[m]), int(js[m]))
    return EmptyDiskReport(ok=worst >= 1 - eps, worst_ratio=worst, worst_pair=pair)


def min_pairwise_distance(nodes, brute_limit: int = 1_000):
    """Exact minimum distance over all pairs and the pair ``(i, j)``, ``i < j``, attaining it."""
    pts = _as_nodes(nodes)
    n = len(pts)
    if n < 2:
        raise ValueError("need at least 2 nodes")
    if n > brute_limit:
        dist, idx = cKDTree(pts).query(pts, k=2)
        i = int(np.argmin(dist[:, 1]))
        # with duplicates the query may list the point itself second
        j = int(idx[i, 1]) if idx[i, 1] != i else int(idx[i, 0])
        return float(dist[i, 1]), (min(i, j), max(i, j))
    best, pair = np.inf, (0, 1)
    for s in range(0, n - 1, 1024):
        rows = np.arange(s, min(s + 1024, n - 1))
        d2 = ((pts[rows, None, :] - pts[None, :, :]) ** 2).sum(-1)
        d2[np.arange(n)[None, :] <= rows[:, None]] = np.inf
        flat = int(np.argmin(d2))
        r, c = divmod(flat, n)
        if d2[r, c] < best:
            best, pair = float(d2[r, c]), (int(rows[r]), int(c))
    return float(np.sqrt(best)), pair
