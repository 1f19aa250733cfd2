"""Timing experiments: density sweeps and fills of increasingly empty domains."""
from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .ff import ff_fill_domain
from .geometry import Domain, discretize_boundary, shrinking_domain as omega
from .pnp import FillResult, pnp_fill
from .skf import skf_fill
from .spacing import constant_spacing

__all__ = ["ALGORITHMS", "BenchRecord", "run_fill", "sweep", "fit_slope", "shrinking_domain",
           "h_for_count", "write_records"]

ALGORITHMS = ("pnp", "pnp-grid", "ff", "skf")


@dataclass(frozen=True)
class BenchRecord:
    algorithm: str
    variant: str
    h: float
    n: int
    times: tuple
    alpha: Optional[float] = None

    @property
    def median(self) -> float:
        return float(np.median(self.times))

    def row(self) -> list:
        return [self.algorithm, self.variant, repr(self.h), self.n, repr(self.median),
                "" if self.alpha is None else repr(self.alpha)] + [repr(t) for t in self.times]


def _variant(alg: str) -> str:
    return {"pnp": "kdtree", "pnp-grid": "grid"}.get(alg, "-")


def run_fill(alg: str, domain: Domain, h: float, boundary=None, seed: int = 0) -> FillResult:
    """One fill with constant spacing ``h`` by algorithm id."""
    hf = constant_spacing(h)
    if boundary is None:
        boundary = discretize_boundary(domain, hf)
    if alg == "pnp":
        return pnp_fill(domain, hf, boundary.points, seed=seed)
    if alg == "pnp-grid":
        return pnp_fill(domain, hf, boundary.points, seed=seed, index="grid")
    if alg == "ff":
        return ff_fill_domain(domain, hf, boundary=boundary)
    if alg == "skf":
        return skf_fill(domain, hf, boundary=boundary, seed=seed)
    raise ValueError(f"unknown algorithm {alg!r}; choose from {', '.join(ALGORITHMS)}")


def _measure(configs, repeats, seed) -> list[BenchRecord]:
    """Time each ``(alg, domain, h, alpha)`` config ``repeats`` times.

    Repeats are interleaved across configs so slow phases of a shared
    machine hit every config alike; one warm-up run per config is discarded.
    """
    if repeats < 3:
        raise ValueError("at least 3 repeats are required")
    boundaries, counts = [], []
    for alg, dom, h, _ in configs:
        bnd = discretize_boundary(dom, constant_spacing(h))
        boundaries.append(bnd)
        counts.append(run_fill(alg, dom, h, bnd, seed).n)
    times = [[] for _ in configs]
    for _ in range(repeats):
        for k, (alg, dom, h, _) in enumerate(configs):
            t0 = time.perf_counter()
            run_fill(alg, dom, h, boundaries[k], seed)
            times[k].append(time.perf_counter() - t0)
    out = []
    for (alg, _, h, alpha), n, ts in zip(configs, counts, times):
        if min(ts) < 1e-3:
            warnings.warn(f"{alg} at h={h:g}: run time {min(ts):.1e}s is near timer resolution; "
                          "use more nodes", RuntimeWarning, stacklevel=3)
        out.append(BenchRecord(alg, _variant(alg), float(h), int(n), tuple(ts), alpha))
    return out


def h_for_count(domain: Domain, n: float) -> float:
    """Constant spacing giving roughly ``n`` nodes in ``domain``."""
    return float((domain.volume() / n) ** (1.0 / domain.dim))


def sweep(alg: str, domain: Domain, h_list: Iterable[float], repeats: int = 3,
          seed: int = 0) -> list[BenchRecord]:
    """Median fill times over a list of spacings."""
    return _measure([(alg, domain, float(h), None) for h in h_list], repeats, seed)


def fit_slope(records: Sequence[BenchRecord], n_min: float = 1e4) -> float:
    """Least-squares slope of log(median time) against log(N) for records with N >= n_min."""
    pts = [(r.n, r.median) for r in records if r.n >= n_min]
    if len(pts) < 2:
        raise ValueError(f"need at least 2 records with N >= {n_min:g} to fit a slope")
    n, t = np.array(pts, dtype=float).T
    return float(np.polyfit(np.log(n), np.log(t), 1)[0])


def shrinking_domain(alg_list: Sequence[str], alphas: Sequence[float], h: float = 0.005,
                     repeats: int = 3, seed: int = 0) -> list[BenchRecord]:
    """Fill the unit square minus the centred square of half-width ``alpha`` for each alpha."""
    configs = []
    for a in alphas:
        if not 0 < a < 0.5:
            raise ValueError(f"alpha must lie in (0, 0.5), got {a}")
        dom = omega(a)
        configs += [(alg, dom, float(h), float(a)) for alg in alg_list]
    return _measure(configs, repeats, seed)


def write_records(path, records: Sequence[BenchRecord]) -> None:
    reps = max((len(r.times) for r in records), default=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alg", "variant", "h", "N", "t_median", "alpha"]
                   + [f"t{k}" for k in range(reps)])
        for r in records:
            w.writerow(r.row())
