"""Implicit domains, canonical shapes and their boundary discretizations.

A :class:`Domain` is a characteristic function plus an axis-aligned bounding
box. Domains assembled from boxes, balls and differences also carry a small
postfix program so the compiled fill kernels can evaluate membership without
calling back into Python.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numba import njit

__all__ = [
    "Domain",
    "BoundaryDiscretization",
    "make_box",
    "make_ball",
    "difference",
    "from_predicate",
    "shrinking_domain",
    "discretize_boundary",
    "parse_domain",
]

# postfix opcodes
OP_BOX = 0
OP_BALL = 1
OP_DIFF = 2


@njit(cache=True)
def program_contains(ops, params, p):
    """Evaluate a postfix shape program at point ``p``.

    ``ops`` rows are ``(opcode, param_offset, closed)``. The boolean stack is
    packed into the bits of one integer, so at most 62 nested shapes.
    """
    d = p.shape[0]
    stack = 0
    for k in range(ops.shape[0]):
        op = ops[k, 0]
        off = ops[k, 1]
        closed = ops[k, 2] == 1
        if op == OP_BOX:
            inside = True
            for a in range(d):
                lo = params[off + a]
                hi = params[off + d + a]
                x = p[a]
                if closed:
                    if x < lo or x > hi:
                        inside = False
                        break
                else:
                    if x <= lo or x >= hi:
                        inside = False
                        break
            stack = (stack << 1) | (1 if inside else 0)
        elif op == OP_BALL:
            r2 = 0.0
            for a in range(d):
                t = p[a] - params[off + a]
                r2 += t * t
            rad = params[off + d]
            if closed:
                inside = r2 <= rad * rad
            else:
                inside = r2 < rad * rad
            stack = (stack << 1) | (1 if inside else 0)
        else:
            b = stack & 1
            stack >>= 1
            a_ = stack & 1
            stack >>= 1
            stack = (stack << 1) | (1 if (a_ == 1 and b == 0) else 0)
    return (stack & 1) == 1


@njit(cache=True)
def program_contains_many(ops, params, pts):
    out = np.empty(pts.shape[0], np.bool_)
    for i in range(pts.shape[0]):
        out[i] = program_contains(ops, params, pts[i])
    return out


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Domain:
    """Closed or open region given by a membership test and a bounding box.

    ``kind`` is one of ``"box"``, ``"ball"``, ``"difference"`` or ``"custom"``;
    only the first three can be fed to the compiled kernels.
    """

    dim: int
    lo: np.ndarray
    hi: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)
    parts: tuple = ()
    predicate: Optional[Callable] = None
    volume_hint: Optional[float] = None

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lo, self.hi

    @property
    def compiled(self) -> bool:
        return self.kind != "custom" and all(part.compiled for part in self.parts)

    def program(self) -> tuple[np.ndarray, np.ndarray]:
        """Postfix ``(ops, params)`` arrays for :func:`program_contains`."""
        ops: list[tuple[int, int, int]] = []
        params: list[float] = []
        self._emit(ops, params)
        return np.array(ops, dtype=np.int64).reshape(-1, 3), np.array(params, dtype=float)

    def _emit(self, ops, params):
        if self.kind == "box":
            ops.append((OP_BOX, len(params), int(self.params["closed"])))
            params.extend(self.params["lo"])
            params.extend(self.params["hi"])
        elif self.kind == "ball":
            ops.append((OP_BALL, len(params), int(self.params["closed"])))
            params.extend(self.params["center"])
            params.append(self.params["radius"])
        elif self.kind == "difference":
            self.parts[0]._emit(ops, params)
            self.parts[1]._emit(ops, params)
            ops.append((OP_DIFF, 0, 0))
        else:
            raise TypeError("custom domains have no compiled program")

    def contains(self, p):
        """Membership of one point ``(d,)`` or many points ``(m, d)``."""
        p = np.asarray(p, dtype=float)
        single = p.ndim == 1
        pts = np.atleast_2d(p)
        if pts.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim}-D points, got shape {p.shape}")
        if self.compiled:
            ops, params = self._cached_program()
            out = program_contains_many(ops, params, np.ascontiguousarray(pts))
        else:
            inbox = np.all((pts >= self.lo) & (pts <= self.hi), axis=1)
            out = np.array([bool(b) and bool(self.predicate(q)) for b, q in zip(inbox, pts)],
                           dtype=bool)
        return bool(out[0]) if single else out

    def _cached_program(self):
        prog = self.__dict__.get("_program")
        if prog is None:
            prog = self.program()
            object.__setattr__(self, "_program", prog)
        return prog

    def boundary_distance(self, pts) -> np.ndarray:
        """Unsigned distance to the boundary, for canonical shapes."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.kind == "box":
            lo, hi = self.lo, self.hi
            inside = np.all((pts >= lo) & (pts <= hi), axis=1)
            din = np.minimum(pts - lo, hi - pts).min(axis=1)
            dout = np.linalg.norm(np.maximum(np.maximum(lo - pts, pts - hi), 0.0), axis=1)
            return np.where(inside, din, dout)
        if self.kind == "ball":
            c, r = self.params["center"], self.params["radius"]
            return np.abs(np.linalg.norm(pts - c, axis=1) - r)
        if self.kind == "difference":
            return np.minimum(self.parts[0].boundary_distance(pts),
                              self.parts[1].boundary_distance(pts))
        raise TypeError("boundary distance is only known for canonical shapes")

    def volume(self, samples: int = 100_000, seed: int = 0) -> float:
        if self.volume_hint is not None:
            return self.volume_hint
        rng = np.random.default_rng(seed)
        pts = self.lo + (self.hi - self.lo) * rng.random((samples, self.dim))
        return float(np.prod(self.hi - self.lo) * self.contains(pts).mean())

    def describe(self) -> str:
        """Round-trippable text form, see :func:`parse_domain`."""
        if self.kind == "box":
            name = "box" if self.params["closed"] else "openbox"
            vals = list(self.params["lo"]) + list(self.params["hi"])
        elif self.kind == "ball":
            name = "ball" if self.params["closed"] else "openball"
            vals = list(self.params["center"]) + [self.params["radius"]]
        elif self.kind == "difference":
            return f"diff ({self.parts[0].describe()}) ({self.parts[1].describe()})"
        else:
            return "custom"
        return name + " " + " ".join(repr(float(v)) for v in vals)


def make_box(lo, hi, closed: bool = True) -> Domain:
    lo = np.asarray(lo, dtype=float).ravel()
    hi = np.asarray(hi, dtype=float).ravel()
    if lo.shape != hi.shape or lo.size == 0:
        raise ValueError("lo and hi must be nonempty vectors of equal length")
    if np.any(lo >= hi):
        raise ValueError(f"degenerate box: lo={lo.tolist()} hi={hi.tolist()}")
    return Domain(
        dim=lo.size, lo=_frozen(lo), hi=_frozen(hi), kind="box",
        params={"lo": tuple(lo), "hi": tuple(hi), "closed": closed},
        volume_hint=float(np.prod(hi - lo)),
    )


def make_ball(center, radius: float, closed: bool = True) -> Domain:
    center = np.asarray(center, dtype=float).ravel()
    if not radius > 0:
        raise ValueError(f"ball radius must be positive, got {radius}")
    d = center.size
    from math import gamma, pi
    vol = pi ** (d / 2) / gamma(d / 2 + 1) * radius ** d
    return Domain(
        dim=d, lo=_frozen(center - radius), hi=_frozen(center + radius), kind="ball",
        params={"center": tuple(center), "radius": float(radius), "closed": closed},
        volume_hint=vol,
    )


def difference(a: Domain, b: Domain) -> Domain:
    """``a`` with ``b`` removed; the bounding box is that of ``a``."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return Domain(dim=a.dim, lo=a.lo, hi=a.hi, kind="difference", parts=(a, b))


def from_predicate(predicate: Callable, lo, hi, volume_hint: Optional[float] = None) -> Domain:
    """Wrap an arbitrary ``p -> bool`` test. Such domains use the Python fill paths."""
    box = make_box(lo, hi)
    return Domain(dim=box.dim, lo=box.lo, hi=box.hi, kind="custom",
                  predicate=predicate, volume_hint=volume_hint)


def shrinking_domain(alpha: float, dim: int = 2) -> Domain:
    """Unit cube minus the open centred cube of half-width ``alpha``."""
    if not 0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 0.5)")
    outer = make_box(np.zeros(dim), np.ones(dim))
    hole = make_box(np.full(dim, 0.5 - alpha), np.full(dim, 0.5 + alpha), closed=False)
    dom = difference(outer, hole)
    object.__setattr__(dom, "volume_hint", 1.0 - (2 * alpha) ** dim)
    return dom


# -- text form -----------------------------------------------------------------

def parse_domain(text: str) -> Domain:
    """Parse ``box lo.. hi..``, ``ball c.. r``, ``diff (<a>) (<b>)`` and ``omega <alpha>``.

    ``openbox``/``openball`` give open shapes, useful as holes.
    """
    text = text.strip()
    if text.startswith("(") and text.endswith(")"):
        return parse_domain(text[1:-1])
    head, _, rest = text.partition(" ")
    head = head.lower()
    if head == "diff":
        groups, depth, cur = [], 0, ""
        for ch in rest:
            if ch == "(":
                depth += 1
                if depth == 1:
                    cur = ""
                    continue
            elif ch == ")":
                depth -= 1
                if depth == 0:
                    groups.append(cur)
                    continue
            if depth >= 1:
                cur += ch
        if len(groups) != 2 or depth != 0:
            raise ValueError(f"diff needs two parenthesized operands: {text!r}")
        return difference(parse_domain(groups[0]), parse_domain(groups[1]))
    try:
        vals = [float(v) for v in rest.split()]
    except ValueError:
        raise ValueError(f"bad numbers in domain spec {text!r}") from None
    if head in ("box", "openbox"):
        if len(vals) < 2 or len(vals) % 2:
            raise ValueError("box needs 2*d numbers: lo.. hi..")
        d = len(vals) // 2
        return make_box(vals[:d], vals[d:], closed=head == "box")
    if head in ("ball", "openball"):
        if len(vals) < 2:
            raise ValueError("ball needs d+1 numbers: center.. radius")
        return make_ball(vals[:-1], vals[-1], closed=head == "ball")
    if head == "omega":
        if len(vals) not in (1, 2):
            raise ValueError("omega needs alpha [dim]")
        return shrinking_domain(vals[0], int(vals[1]) if len(vals) == 2 else 2)
    raise ValueError(f"unknown domain kind {head!r}")


# -- boundary discretization ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class BoundaryDiscretization:
    points: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        if self.points.shape != self.normals.shape:
            raise ValueError("points and normals must align")

    def __len__(self):
        return self.points.shape[0]


def _spacing_values(h, pts) -> np.ndarray:
    vals = np.asarray(h(pts), dtype=float)
    vals = np.broadcast_to(vals, (pts.shape[0],))
    bad = ~(vals > 0)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ValueError(f"spacing must be positive on the boundary; h={vals[i]} at {pts[i].tolist()}")
    return vals


def _line_positions(a: float, b: float, hline) -> np.ndarray:
    """Parameters in [a, b] spaced by ``hline`` in arclength, endpoints included.

    The segment count is the rounded value of the integral of 1/h, and points
    sit at equal increments of that integral.
    """
    coarse = np.linspace(a, b, 257)
    hc = hline(coarse)
    est = (b - a) / hc.min()
    m_fine = int(min(2_000_000, max(257, 16 * est)))
    t = np.linspace(a, b, m_fine)
    ht = hline(t)
    if np.ptp(ht) == 0.0:
        m = max(1, int(round((b - a) / ht[0])))
        return np.linspace(a, b, m + 1)
    w = 1.0 / ht
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(t))])
    m = max(1, int(round(cum[-1])))
    targets = np.linspace(0.0, cum[-1], m + 1)
    pos = np.interp(targets, cum, t)
    pos[0], pos[-1] = a, b
    return pos


def _box_boundary(lo, hi, h) -> BoundaryDiscretization:
    d = lo.size
    if d == 1:
        pts = np.array([[lo[0]], [hi[0]]])
        _spacing_values(h, pts)
        return BoundaryDiscretization(pts, np.array([[-1.0], [1.0]]))
    chunks = []
    for axis in range(d):
        for side, val in ((0, lo[axis]), (1, hi[axis])):
            axes_pos = []
            for j in range(d):
                if j == axis:
                    axes_pos.append(np.array([val]))
                    continue
                base = lo.copy()
                base[axis] = val

                def hline(t, base=base, j=j):
                    q = np.repeat(base[None, :], t.size, axis=0)
                    q[:, j] = t
                    return _spacing_values(h, q)

                axes_pos.append(_line_positions(lo[j], hi[j], hline))
            grid = np.stack(np.meshgrid(*axes_pos, indexing="ij"), axis=-1).reshape(-1, d)
            chunks.append(grid)
    pts = np.concatenate(chunks)
    _, first = np.unique(pts, axis=0, return_index=True)
    pts = pts[np.sort(first)]
    normals = np.zeros_like(pts)
    normals -= np.isclose(pts, lo, rtol=0, atol=0)
    normals += np.isclose(pts, hi, rtol=0, atol=0)
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    _spacing_values(h, pts)
    return BoundaryDiscretization(pts, normals)


def _snap_to_sphere(center, radius, dirs, closed):
    """Points ``center + radius * dirs`` nudged so rounding keeps them on the boundary side.

    On a closed ball they must satisfy the ``<= r^2`` test, on an open one fail ``< r^2``.
    """
    pts = center + radius * dirs
    scale = np.ones(len(pts))
    step = -1.0 if closed else 1.0
    for _ in range(8):
        r2 = ((pts - center) ** 2).sum(axis=1)
        bad = r2 > radius * radius if closed else r2 < radius * radius
        if not bad.any():
            break
        scale[bad] = np.nextafter(scale[bad], scale[bad] + step) + step * 2 * np.finfo(float).eps
        pts[bad] = center + (radius * scale[bad])[:, None] * dirs[bad]
    return pts


def _ball_boundary(center, radius, h, closed=True) -> BoundaryDiscretization:
    d = center.size
    if d == 1:
        pts = np.array([[center[0] - radius], [center[0] + radius]])
        _spacing_values(h, pts)
        return BoundaryDiscretization(pts, np.array([[-1.0], [1.0]]))
    if d == 2:
        def hline(t):
            q = center + radius * np.stack([np.cos(t), np.sin(t)], axis=1)
            return _spacing_values(h, q) / radius

        th = _line_positions(0.0, 2 * np.pi, hline)[:-1]
        if th.size < 3:
            th = np.linspace(0, 2 * np.pi, 3, endpoint=False)
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        return BoundaryDiscretization(_snap_to_sphere(center, radius, dirs, closed), dirs)
    if d == 3:
        def hmer(t):
            q = center + radius * np.stack([np.sin(t), np.zeros_like(t), np.cos(t)], axis=1)
            return _spacing_values(h, q) / radius

        thetas = _line_positions(0.0, np.pi, hmer)
        dirs = []
        for th in thetas:
            s = np.sin(th)
            if s < 1e-12:
                dirs.append([0.0, 0.0, np.cos(th)])
                continue

            def hlat(t, th=th):
                q = center + radius * np.stack(
                    [np.sin(th) * np.cos(t), np.sin(th) * np.sin(t), np.full_like(t, np.cos(th))], axis=1)
                return _spacing_values(h, q) / (radius * np.sin(th))

            phis = _line_positions(0.0, 2 * np.pi, hlat)[:-1]
            for ph in phis:
                dirs.append([s * np.cos(ph), s * np.sin(ph), np.cos(th)])
        dirs = np.array(dirs)
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        return BoundaryDiscretization(_snap_to_sphere(center, radius, dirs, closed), dirs)
    raise NotImplementedError("ball boundaries are implemented for d <= 3")


def discretize_boundary(domain: Domain, h) -> BoundaryDiscretization:
    """Boundary nodes with outward unit normals, spaced by ``h`` along the boundary.

    ``h`` is any callable mapping an ``(m, d)`` array to spacings, e.g. a
    :class:`~nodefill.spacing.SpacingField`, or a positive number. Box corners
    get exactly one node; per-edge counts are rounded so that corners are hit
    exactly.
    """
    if not callable(h):
        from .spacing import constant_spacing

        h = constant_spacing(h)
    if domain.kind == "box":
        return _box_boundary(np.array(domain.lo), np.array(domain.hi), h)
    if domain.kind == "ball":
        return _ball_boundary(np.array(domain.params["center"]), domain.params["radius"], h,
                              domain.params["closed"])
    if domain.kind == "difference":
        a, b = domain.parts
        outer = discretize_boundary(a, h)
        inner = discretize_boundary(b, h)
        keep_a = domain.contains(outer.points)
        keep_b = a.contains(inner.points)
        return BoundaryDiscretization(
            np.concatenate([outer.points[keep_a], inner.points[keep_b]]),
            np.concatenate([outer.normals[keep_a], -inner.normals[keep_b]]),
        )
    raise TypeError(f"cannot discretize the boundary of a {domain.kind} domain")
