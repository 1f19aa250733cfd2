"""RBF-FD Laplacian with polyharmonic splines and a Poisson test problem.

Stencils are the ``nn`` nearest nodes of each centre (centre included).
Weights solve the usual saddle-point system with monomial augmentation in
local coordinates shifted to the centre and scaled by the stencil radius.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

__all__ = [
    "PhsConfig",
    "OperatorDiscretization",
    "NumericalError",
    "monomial_exponents",
    "phs_laplacian_weights",
    "assemble_poisson",
    "solve",
    "l1_error",
    "laplacian_spectrum",
    "poisson_problem",
    "run_poisson",
]

SPECTRUM_LIMIT = 5000


class NumericalError(RuntimeError):
    """A linear system could not be solved to the requested accuracy."""


@dataclass(frozen=True)
class PhsConfig:
    """PHS exponent ``k``, monomial order ``m`` and stencil size ``nn`` (None: 15 in 2-D, 42 in 3-D)."""

    k: int = 3
    m: int = 2
    nn: Optional[int] = None

    def __post_init__(self):
        if self.k < 1 or self.k == 2:
            raise ValueError(f"PHS exponent must be odd or an even number >= 4, got {self.k}")
        if self.m < 0:
            raise ValueError("monomial order must be >= 0")

    def stencil_size(self, d: int) -> int:
        if self.nn is not None:
            return self.nn
        return 15 if d <= 2 else 42


def monomial_exponents(d: int, m: int) -> np.ndarray:
    """Exponent rows of all monomials of total degree <= m, ordered by degree."""
    rows = []
    for deg in range(m + 1):
        for combo in combinations_with_replacement(range(d), deg):
            e = np.zeros(d, int)
            for a in combo:
                e[a] += 1
            rows.append(e)
    return np.array(rows)


def _phs(r, k):
    if k % 2:
        return r ** k
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(r > 0, r ** k * np.log(np.where(r > 0, r, 1.0)), 0.0)


def _phs_lap(r, k, d):
    """Laplacian of the radial function, as a function of r."""
    if k % 2:
        return k * (k + d - 2) * r ** (k - 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.log(np.where(r > 0, r, 1.0))
        val = r ** (k - 2) * (k * (k + d - 2) * lr + 2 * k + d - 2)
    return np.where(r > 0, val, 0.0)


def _poly(x, exps):
    """Monomials evaluated at rows of ``x``: shape (..., P)."""
    return np.prod(x[..., None, :] ** exps, axis=-1)


def _poly_lap_at_origin(exps):
    """Laplacian of each monomial at the origin: 2 for pure squares, else 0."""
    return np.where((exps.sum(1) == 2) & (exps.max(1) == 2), 2.0, 0.0)


def _saddle_matrices(local, cfg, exps):
    """Batched interpolation matrices for stencils in local coordinates (B, nn, d)."""
    diff = local[:, :, None, :] - local[:, None, :, :]
    r = np.sqrt((diff ** 2).sum(-1))
    phi = _phs(r, cfg.k)
    P = _poly(local, exps)
    B, nn, _ = local.shape
    npoly = exps.shape[0]
    A = np.zeros((B, nn + npoly, nn + npoly))
    A[:, :nn, :nn] = phi
    A[:, :nn, nn:] = P
    A[:, nn:, :nn] = np.swapaxes(P, 1, 2)
    return A


def _local_coords(nodes, stencils, centers):
    local = nodes[stencils] - centers[:, None, :]
    scale = np.sqrt((local ** 2).sum(-1)).max(axis=1)
    scale[scale == 0] = 1.0
    return local / scale[:, None, None], scale


def _laplacian_weights_batch(nodes, stencils, cfg, exps):
    centers = nodes[stencils[:, 0]]
    local, scale = _local_coords(nodes, stencils, centers)
    B, nn, d = local.shape
    npoly = exps.shape[0]
    A = _saddle_matrices(local, cfg, exps)
    rhs = np.zeros((B, nn + npoly))
    rhs[:, :nn] = _phs_lap(np.sqrt((local ** 2).sum(-1)), cfg.k, d)
    rhs[:, nn:] = _poly_lap_at_origin(exps)
    try:
        sol = np.linalg.solve(A, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        sol = np.full_like(rhs, np.nan)
        for b in range(B):
            try:
                sol[b] = np.linalg.solve(A[b], rhs[b])
            except np.linalg.LinAlgError:
                pass
    w = sol[:, :nn] / scale[:, None] ** 2
    return w


def phs_laplacian_weights(center, neighbors, cfg: PhsConfig = PhsConfig()) -> np.ndarray:
    """Laplacian weights at ``center`` for the stencil ``neighbors`` (which may include it)."""
    center = np.asarray(center, dtype=float).ravel()
    nb = np.asarray(neighbors, dtype=float)
    d = center.size
    exps = monomial_exponents(d, cfg.m)
    if len(nb) < exps.shape[0]:
        raise ValueError(f"stencil of {len(nb)} nodes is too small for {exps.shape[0]} monomials")
    pts = np.concatenate([center[None, :], nb])
    stencil = np.arange(1, len(pts))[None, :]
    local, scale = _local_coords(pts, stencil, center[None, :])
    A = _saddle_matrices(local, cfg, exps)[0]
    nn = len(nb)
    rhs = np.zeros(nn + exps.shape[0])
    rhs[:nn] = _phs_lap(np.sqrt((local[0] ** 2).sum(-1)), cfg.k, d)
    rhs[nn:] = _poly_lap_at_origin(exps)
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        raise NumericalError("singular local system: coincident or degenerate stencil nodes") from None
    w = sol[:nn] / scale[0] ** 2
    if not np.all(np.isfinite(w)):
        raise NumericalError("non-finite weights: coincident or degenerate stencil nodes")
    return w


@dataclass(frozen=True, eq=False)
class OperatorDiscretization:
    """Sparse system ``L u = b``; boundary rows are identity rows."""

    L: sp.csr_matrix
    b: np.ndarray
    boundary: np.ndarray
    stencils: np.ndarray = field(repr=False)

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)


def _stencils(nodes, nn):
    if nn > len(nodes):
        raise ValueError(f"stencil size {nn} exceeds the number of nodes {len(nodes)}")
    _, idx = cKDTree(nodes).query(nodes, k=nn)
    idx = np.asarray(idx).reshape(len(nodes), nn)
    # the centre comes first, even if another node coincides with it
    rows = np.arange(len(nodes))
    has_self = (idx == rows[:, None])
    pos = np.where(has_self.any(1), has_self.argmax(1), nn - 1)
    idx[rows, pos] = idx[:, 0]
    idx[:, 0] = rows
    return idx


def assemble_poisson(nodes, boundary_mask, cfg: PhsConfig = PhsConfig(),
                     f: Optional[Callable] = None, g: Optional[Callable] = None,
                     batch: int = 4096) -> OperatorDiscretization:
    """Laplacian rows on interior nodes and Dirichlet rows on boundary nodes.

    ``f`` and ``g`` map an ``(m, d)`` array to values; ``None`` means zero.
    """
    nodes = np.asarray(nodes, dtype=float)
    N, d = nodes.shape
    bmask = np.asarray(boundary_mask, bool)
    if bmask.shape != (N,):
        raise ValueError("boundary mask must have one entry per node")
    if not bmask.any():
        raise ValueError("at least one boundary node is required")
    exps = monomial_exponents(d, cfg.m)
    nn = cfg.stencil_size(d)
    if nn < exps.shape[0]:
        raise ValueError(f"stencil size {nn} is below the {exps.shape[0]} augmentation monomials")
    stencils = _stencils(nodes, nn)
    inner = np.flatnonzero(~bmask)
    W = np.empty((inner.size, nn))
    for s in range(0, inner.size, batch):
        rows = inner[s:s + batch]
        W[s:s + batch] = _laplacian_weights_batch(nodes, stencils[rows], cfg, exps)
    bad = ~np.all(np.isfinite(W), axis=1)
    if np.any(bad):
        i = int(inner[np.argmax(bad)])
        raise NumericalError(f"singular stencil at node {i} {nodes[i].tolist()}: "
                             "coincident or degenerate neighbours")
    bnd = np.flatnonzero(bmask)
    rows = np.concatenate([np.repeat(inner, nn), bnd])
    cols = np.concatenate([stencils[inner].ravel(), bnd])
    vals = np.concatenate([W.ravel(), np.ones(bnd.size)])
    L = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
    b = np.zeros(N)
    if f is not None and inner.size:
        b[inner] = np.asarray(f(nodes[inner]), dtype=float)
    if g is not None:
        b[bnd] = np.asarray(g(nodes[bnd]), dtype=float)
    return OperatorDiscretization(L=L, b=b, boundary=bmask, stencils=stencils)


def solve(system: OperatorDiscretization, tol: float = 1e-10, method: str = "direct",
          maxiter: int = 1000) -> np.ndarray:
    """Solve the system; raises :class:`NumericalError` if the relative residual exceeds ``tol``.

    ``method`` is ``"direct"`` (sparse LU) or ``"bicgstab"`` (ILU preconditioned).
    """
    L, b = system.L.tocsc(), system.b
    bn = np.linalg.norm(b)
    if bn == 0:
        return np.zeros_like(b)
    if method == "direct":
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                u = spla.spsolve(L, b)
            except (spla.MatrixRankWarning, RuntimeError) as exc:
                raise NumericalError(f"sparse direct solve failed: {exc}") from None
    elif method == "bicgstab":
        try:
            ilu = spla.spilu(L, fill_factor=20, drop_tol=1e-5)
        except RuntimeError as exc:
            raise NumericalError(f"incomplete LU failed: {exc}") from None
        M = spla.LinearOperator(L.shape, ilu.solve)
        u, _ = spla.bicgstab(L, b, rtol=tol, atol=0.0, maxiter=maxiter, M=M)
    else:
        raise ValueError(f"unknown method {method!r}")
    if not np.all(np.isfinite(u)):
        raise NumericalError("solution is not finite (singular system?)")
    res = np.linalg.norm(L @ u - b) / bn
    if not res <= tol:
        raise NumericalError(f"relative residual {res:.3e} exceeds tolerance {tol:.1e}")
    return u


def _interp_coefficients(nodes, stencils, u, cfg, exps, batch=4096):
    """Per-stencil PHS+polynomial interpolant coefficients in local coordinates."""
    N, nn = stencils.shape
    npoly = exps.shape[0]
    coef = np.empty((N, nn + npoly))
    for s in range(0, N, batch):
        st = stencils[s:s + batch]
        centers = nodes[st[:, 0]]
        local, _ = _local_coords(nodes, st, centers)
        A = _saddle_matrices(local, cfg, exps)
        rhs = np.zeros((len(st), nn + npoly))
        rhs[:, :nn] = u[st]
        coef[s:s + batch] = np.linalg.solve(A, rhs[..., None])[..., 0]
    return coef


def interpolate(nodes, u, query, cfg: PhsConfig = PhsConfig(), stencils=None) -> np.ndarray:
    """Evaluate nodal values at ``query`` with the local interpolant of the nearest node."""
    nodes = np.asarray(nodes, dtype=float)
    d = nodes.shape[1]
    exps = monomial_exponents(d, cfg.m)
    if stencils is None:
        stencils = _stencils(nodes, cfg.stencil_size(d))
    nn = stencils.shape[1]
    coef = _interp_coefficients(nodes, stencils, np.asarray(u, dtype=float), cfg, exps)
    query = np.asarray(query, dtype=float).reshape(-1, d)
    _, owner = cKDTree(nodes).query(query)
    out = np.empty(len(query))
    for s in range(0, len(query), 8192):
        o = owner[s:s + 8192]
        st = stencils[o]
        centers = nodes[st[:, 0]]
        local, scale = _local_coords(nodes, st, centers)
        x = (query[s:s + 8192] - centers) / scale[:, None]
        r = np.sqrt(((local - x[:, None, :]) ** 2).sum(-1))
        c = coef[o]
        out[s:s + 8192] = (c[:, :nn] * _phs(r, cfg.k)).sum(1) + (c[:, nn:] * _poly(x, exps)).sum(1)
    return out


def l1_error(u_h, nodes, exact: Callable, domain, h: float, factor: int = 3,
             cfg: PhsConfig = PhsConfig(), stencils=None) -> float:
    """Mean ``|u - u_h|`` over a uniform grid ``factor`` times denser than ``h``, inside ``domain``."""
    nodes = np.asarray(nodes, dtype=float)
    lo, hi = domain.bbox
    step = h / factor
    axes = [np.arange(lo[a], hi[a] + step / 2, step) for a in range(nodes.shape[1])]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, nodes.shape[1])
    grid = grid[domain.contains(grid)]
    if len(grid) == 0:
        raise ValueError("evaluation grid is empty")
    uh = interpolate(nodes, u_h, grid, cfg, stencils)
    return float(np.mean(np.abs(np.asarray(exact(grid), dtype=float) - uh)))


def laplacian_spectrum(system: OperatorDiscretization, limit: int = SPECTRUM_LIMIT) -> np.ndarray:
    """Eigenvalues of the interior-interior block, sorted by decreasing real part."""
    inner = system.interior
    if system.L.shape[0] > limit:
        raise ValueError(f"dense eigensolve refused: N={system.L.shape[0]} exceeds the limit {limit}")
    block = system.L[inner][:, inner].toarray()
    ev = np.linalg.eigvals(block)
    return ev[np.argsort(-ev.real, kind="stable")]


def poisson_problem(d: int):
    """Manufactured solution ``u = prod sin(pi x_a)`` on the unit box, zero on the boundary."""

    def u(p):
        return np.prod(np.sin(np.pi * np.asarray(p, dtype=float)), axis=-1)

    def f(p):
        return -d * np.pi ** 2 * u(p)

    return u, f


def run_poisson(fill: "FillResult", domain, h: float, cfg: PhsConfig = PhsConfig(),
                tol: float = 1e-10, method: str = "direct") -> dict:
    """Assemble and solve the manufactured problem on ``fill``; returns N, L1 error and timing."""
    d = fill.dim
    u, f = poisson_problem(d)
    t0 = time.perf_counter()
    system = assemble_poisson(fill.nodes, fill.boundary_mask, cfg, f=f)
    uh = solve(system, tol=tol, method=method)
    elapsed = time.perf_counter() - t0
    err = l1_error(uh, fill.nodes, u, domain, h, cfg=cfg, stencils=system.stencils)
    return {"N": int(fill.n), "L1": err, "runtime": elapsed}
