"""Node files: CSV rows of coordinates under a ``#``-prefixed JSON header line."""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

__all__ = ["NodeFile", "write_nodes", "read_nodes"]

_AXES = "xyz"


@dataclass
class NodeFile:
    """In-memory node file; ``header`` holds dim, count, algorithm, spacing, seed and flags."""

    nodes: np.ndarray
    header: dict = field(default_factory=dict)
    beta: Optional[np.ndarray] = None

    @property
    def seed_count(self) -> int:
        return int(self.header.get("seed_count", 0))

    @property
    def terminal(self) -> np.ndarray:
        return np.asarray(self.header.get("terminal", []), dtype=np.int64)


def _column_names(d: int, with_beta: bool) -> list[str]:
    names = [_AXES[a] if d <= 3 else f"x{a}" for a in range(d)]
    return names + (["beta"] if with_beta else [])


def write_nodes(path: Union[str, Path], nodes, header: dict, beta=None) -> None:
    """Write nodes with 17 significant digits so values round-trip exactly."""
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 2:
        raise ValueError("nodes must be an (N, d) array")
    if not np.all(np.isfinite(nodes)):
        raise ValueError("node coordinates must be finite")
    head = dict(header)
    head["dim"] = int(nodes.shape[1])
    head["count"] = int(nodes.shape[0])
    buf = io.StringIO()
    buf.write("# " + json.dumps(head, sort_keys=True) + "\n")
    buf.write(",".join(_column_names(nodes.shape[1], beta is not None)) + "\n")
    for k, row in enumerate(nodes):
        vals = ["%.17g" % v for v in row]
        if beta is not None:
            vals.append(str(int(beta[k])))
        buf.write(",".join(vals) + "\n")
    Path(path).write_text(buf.getvalue())


def read_nodes(path: Union[str, Path]) -> NodeFile:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise ValueError(f"{path}: missing '#' JSON header line")
    try:
        header = json.loads(text[0][1:])
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: bad header: {exc}") from None
    cols = text[1].split(",") if len(text) > 1 else []
    rows = [line for line in text[2:] if line.strip()]
    data = np.array([[float(v) for v in line.split(",")] for line in rows]).reshape(len(rows), len(cols))
    has_beta = bool(cols) and cols[-1] == "beta"
    nodes = data[:, :-1] if has_beta else data
    beta = data[:, -1].astype(np.int64) if has_beta else None
    if "count" in header and header["count"] != len(nodes):
        raise ValueError(f"{path}: header says {header['count']} rows, found {len(nodes)}")
    return NodeFile(nodes=np.ascontiguousarray(nodes), header=header, beta=beta)
