"""Nodal spacing functions and the expected node count."""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
from numba import njit

__all__ = [
    "SpacingField",
    "GrayImage",
    "constant_spacing",
    "analytic_spacing",
    "image_spacing",
    "gray_to_spacing",
    "read_pgm",
    "write_pgm",
    "estimate_count",
]

KIND_CONSTANT = 0
KIND_IMAGE = 1
KIND_EXPR = 2

# expression opcodes
E_CONST, E_VAR, E_ADD, E_SUB, E_MUL, E_DIV, E_POW, E_NEG = range(8)
E_SQRT, E_EXP, E_LOG, E_SIN, E_COS, E_ABS = range(8, 14)

_FUNCS = {"sqrt": E_SQRT, "exp": E_EXP, "log": E_LOG, "sin": E_SIN, "cos": E_COS, "abs": E_ABS}
_BINOPS = {ast.Add: E_ADD, ast.Sub: E_SUB, ast.Mult: E_MUL, ast.Div: E_DIV, ast.Pow: E_POW}
_VARS = {"x": 0, "y": 1, "z": 2}
_NAMED = {"pi": math.pi, "e": math.e}


def gray_to_spacing(g):
    """Grey level in [0, 1] to spacing: 0.002 + 0.006 g + 0.012 g^8."""
    return 0.002 + 0.006 * g + 0.012 * g ** 8


@njit(cache=True)
def _eval_expr(code, consts, p):
    stack = np.empty(code.shape[0] + 1)
    top = 0
    for k in range(code.shape[0]):
        op = code[k, 0]
        arg = code[k, 1]
        if op == E_CONST:
            stack[top] = consts[arg]
            top += 1
        elif op == E_VAR:
            stack[top] = p[arg]
            top += 1
        elif op <= E_POW:
            b = stack[top - 1]
            a = stack[top - 2]
            top -= 1
            if op == E_ADD:
                stack[top - 1] = a + b
            elif op == E_SUB:
                stack[top - 1] = a - b
            elif op == E_MUL:
                stack[top - 1] = a * b
            elif op == E_DIV:
                stack[top - 1] = a / b if b != 0.0 else np.inf * (1.0 if a >= 0 else -1.0)
            else:
                stack[top - 1] = a ** b
        else:
            a = stack[top - 1]
            if op == E_NEG:
                a = -a
            elif op == E_SQRT:
                a = math.sqrt(a) if a >= 0 else np.nan
            elif op == E_EXP:
                a = math.exp(a)
            elif op == E_LOG:
                a = math.log(a) if a > 0 else np.nan
            elif op == E_SIN:
                a = math.sin(a)
            elif op == E_COS:
                a = math.cos(a)
            else:
                a = abs(a)
            stack[top - 1] = a
    return stack[0]


@njit(cache=True)
def spacing_at(kind, fparams, code, image, p):
    """Compiled spacing evaluation shared by every fill kernel."""
    if kind == KIND_CONSTANT:
        return fparams[0]
    if kind == KIND_IMAGE:
        w = fparams[0]
        h0 = fparams[1]
        nr = image.shape[0]
        nc = image.shape[1]
        i = int(math.floor(w * p[0]))
        j = int(math.floor(w * p[1]))
        i = min(max(i, 0), nr - 1)
        j = min(max(j, 0), nc - 1)
        g = image[i, j] / 255.0
        return h0 * (0.002 + 0.006 * g + 0.012 * g ** 8)
    return _eval_expr(code, fparams, p)


@njit(cache=True)
def spacing_many(kind, fparams, code, image, pts):
    out = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        out[i] = spacing_at(kind, fparams, code, image, pts[i])
    return out


def compile_expression(text: str) -> tuple[np.ndarray, np.ndarray, int]:
    """Parse an arithmetic expression in x, y, z into a postfix program.

    Returns ``(code, consts, nvars)`` where ``nvars`` is one more than the
    highest coordinate used. ``^`` is accepted as power.
    """
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse spacing expression {text!r}: {exc.msg}") from None
    code: list[tuple[int, int]] = []
    consts: list[float] = []
    used = [-1]

    def emit(node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            consts.append(float(node.value))
            code.append((E_CONST, len(consts) - 1))
        elif isinstance(node, ast.Name) and node.id in _NAMED:
            consts.append(_NAMED[node.id])
            code.append((E_CONST, len(consts) - 1))
        elif isinstance(node, ast.Name) and node.id in _VARS:
            code.append((E_VAR, _VARS[node.id]))
            used[0] = max(used[0], _VARS[node.id])
        elif isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            emit(node.left)
            emit(node.right)
            code.append((_BINOPS[type(node.op)], 0))
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            emit(node.operand)
            if isinstance(node.op, ast.USub):
                code.append((E_NEG, 0))
        elif (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
              and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
            emit(node.args[0])
            code.append((_FUNCS[node.func.id], 0))
        else:
            raise ValueError(f"unsupported syntax in spacing expression {text!r}: {ast.dump(node)}")

    emit(tree.body)
    return np.array(code, dtype=np.int64).reshape(-1, 2), np.array(consts, dtype=float), used[0] + 1


@dataclass(frozen=True, eq=False)
class SpacingField:
    """Positive spacing function ``h``; call it on one point or an ``(m, d)`` array.

    Constant, expression and image fields are compiled; fields wrapping a
    Python callable are evaluated in Python and force the Python fill paths.
    """

    kind: str
    value: Optional[float] = None
    expr: Optional[str] = None
    func: Optional[Callable] = None
    image: Optional["GrayImage"] = None
    h0: Optional[float] = None
    _prog: tuple = field(default=(), repr=False)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    @property
    def compiled(self) -> bool:
        return bool(self._prog)

    def program(self):
        """``(kind, fparams, code, image)`` tuple for :func:`spacing_at`."""
        if not self._prog:
            raise TypeError("this spacing field wraps a Python callable")
        return self._prog

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        single = p.ndim == 1
        pts = np.atleast_2d(p)
        if self._prog:
            out = spacing_many(*self._prog, np.ascontiguousarray(pts))
        else:
            out = np.array([float(self.func(q)) for q in pts])
        return float(out[0]) if single else out


_DUMMY_CODE = np.zeros((0, 2), dtype=np.int64)
_DUMMY_IMG = np.zeros((1, 1))


def constant_spacing(c: float) -> SpacingField:
    c = float(c)
    if not c > 0 or not math.isfinite(c):
        raise ValueError(f"constant spacing must be positive and finite, got {c}")
    prog = (KIND_CONSTANT, np.array([c]), _DUMMY_CODE, _DUMMY_IMG)
    return SpacingField(kind="constant", value=c, _prog=prog)


def analytic_spacing(expr: Union[str, Callable]) -> SpacingField:
    """Spacing from an expression string like ``"0.015*(1+x+y)"`` or a callable.

    Positivity is checked where the field is evaluated, not here.
    """
    if callable(expr):
        return SpacingField(kind="analytic", func=expr)
    code, consts, _ = compile_expression(expr)
    return SpacingField(kind="analytic", expr=expr, _prog=(KIND_EXPR, consts, code, _DUMMY_IMG))


# -- images ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grey image; ``pixels[i, j]`` is row ``i`` (0 at the top), column ``j``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.size == 0:
            raise ValueError("image must be a nonempty 2-D array")
        if px.min() < 0 or px.max() > 255:
            raise ValueError("pixel values must lie in [0, 255]")
        px = px.astype(np.uint8)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def read_pgm(path: Union[str, Path]) -> GrayImage:
    """Read an ASCII (P2) or binary (P5) graymap with maxval 255."""
    from PIL import Image

    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic not in (b"P2", b"P5"):
        raise ValueError(f"{path}: not a PGM file (magic {magic!r})")
    with Image.open(path) as im:
        if im.mode != "L":
            raise ValueError(f"{path}: expected 8-bit greyscale, got mode {im.mode}")
        return GrayImage(np.array(im))


def write_pgm(path: Union[str, Path], img: GrayImage, binary: bool = True) -> None:
    if binary:
        from PIL import Image

        Image.fromarray(img.pixels, mode="L").save(path, format="PPM")
        return
    rows = [" ".join(str(int(v)) for v in row) for row in img.pixels]
    Path(path).write_text(f"P2\n{img.width} {img.height}\n255\n" + "\n".join(rows) + "\n")


def image_spacing(img: Union[GrayImage, np.ndarray], h0: float) -> SpacingField:
    """Piecewise constant spacing ``h0 * s(I[floor(w x), floor(w y)] / 255)``.

    ``w`` is the image width and is used for both indices; indices are clamped
    into the raster, so the unit square maps onto a square image.
    """
    if not isinstance(img, GrayImage):
        img = GrayImage(np.asarray(img))
    if not h0 > 0:
        raise ValueError("h0 must be positive")
    prog = (KIND_IMAGE, np.array([float(img.width), float(h0)]), _DUMMY_CODE,
            img.pixels.astype(float))
    return SpacingField(kind="image", image=img, h0=float(h0), _prog=prog)


# -- expected count -------------------------------------------------------------

def estimate_count(domain, h: SpacingField, samples: int = 1_000_000, seed: int = 0,
                   chunk: int = 200_000) -> float:
    """Monte Carlo estimate of the integral of ``1 / h(p)^d`` over the domain.

    Constant spacing on a box is returned exactly as ``V / c^d``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    d = domain.dim
    if getattr(h, "is_constant", False) and domain.kind == "box":
        return float(np.prod(domain.hi - domain.lo) / h.value ** d)
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(domain.lo), np.asarray(domain.hi)
    total = 0.0
    left = samples
    while left > 0:
        m = min(chunk, left)
        left -= m
        pts = lo + (hi - lo) * rng.random((m, d))
        inside = domain.contains(pts)
        q = pts[inside]
        if q.shape[0] == 0:
            continue
        hv = np.asarray(h(q), dtype=float)
        bad = ~(hv > 0)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise ValueError(f"spacing must be positive; h={hv[i]} at {q[i].tolist()}")
        total += float(np.sum(hv ** (-d)))
    return float(np.prod(hi - lo) * total / samples)
