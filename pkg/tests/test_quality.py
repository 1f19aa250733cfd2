from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nodefill import constant_spacing, discretize_boundary, make_box, pnp_fill
from nodefill.pnp import FillResult
from nodefill.quality import (distance_histogram, hole_sizes_2d, min_pairwise_distance,
                              neighbor_stats, verify_empty_disk)


def _grid(h, n):
    g = np.arange(n) * h
    return np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)


def test_stats_on_square_lattice():
    pts = _grid(0.1, 11)
    st_ = neighbor_stats(pts, c=3, margin=0.15, domain=make_box([0, 0], [1, 1]))
    # interior lattice nodes have four neighbours at exactly h
    assert st_.mean == pytest.approx(0.1)
    assert st_.spread == pytest.approx(0.0, abs=1e-12)
    assert st_.std == pytest.approx(0.0, abs=1e-12)
    assert st_.index.size == 7 * 7


def test_stats_margin_from_fill_seeds(unit_square, h025):
    res = pnp_fill(unit_square, h025, discretize_boundary(unit_square, h025).points, seed=0)
    a = neighbor_stats(res, margin=0.05)
    b = neighbor_stats(res.nodes, margin=0.05, boundary=res.nodes[: res.seed_count])
    assert np.array_equal(a.index, b.index)
    assert neighbor_stats(res).index.size == res.n


def test_stats_errors():
    with pytest.raises(ValueError):
        neighbor_stats(np.zeros((3, 2)), c=3)
    with pytest.raises(ValueError):
        neighbor_stats(np.random.rand(10, 2), margin=0.1)
    with pytest.raises(ValueError):
        neighbor_stats(np.random.rand(10, 2), c=0)


def test_histogram_counts():
    pts = _grid(0.1, 5)
    counts, edges = distance_histogram(pts, c=2, bins=4)
    assert counts.sum() == 2 * len(pts)
    assert len(edges) == 5


def test_holes_on_lattice():
    pts = _grid(0.1, 11)
    rep = hole_sizes_2d(pts, make_box([0, 0], [1, 1]))
    # largest empty circle in a unit square cell has diameter h * sqrt(2)
    assert rep.max == pytest.approx(0.1 * np.sqrt(2))
    assert rep.min == pytest.approx(0.1 * np.sqrt(2))


def test_holes_single_triangle():
    pts = np.array([[0, 0], [1, 0], [0, 1.0]])
    rep = hole_sizes_2d(pts)
    assert rep.max == pytest.approx(np.sqrt(2))


def test_holes_degenerate():
    with pytest.raises(ValueError):
        hole_sizes_2d(np.array([[0, 0], [1, 1], [2, 2.0], [3, 3.0]]))
    with pytest.raises(ValueError):
        hole_sizes_2d(np.zeros((4, 3)))


def test_empty_disk_detects_violation():
    nodes = np.array([[0, 0], [1, 0], [1.5, 0.0]])
    beta = np.array([-1, 0, 1])
    res = FillResult(nodes=nodes, seed_count=1, beta=beta)
    rep = verify_empty_disk(res, constant_spacing(1.0))
    assert not rep.ok and rep.worst_pair == (1, 2)
    assert rep.worst_ratio == pytest.approx(0.5)
    with pytest.raises(ValueError):
        verify_empty_disk(FillResult(nodes=nodes, seed_count=1), constant_spacing(1.0))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 300), st.integers(1, 3)),
              elements=st.floats(-5, 5)),
       st.integers(1, 400))
def test_min_pairwise_matches_brute_force(pts, limit):
    dist, (i, j) = min_pairwise_distance(pts, brute_limit=limit)
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.sqrt((diff ** 2).sum(-1))
    d[np.diag_indices(len(pts))] = np.inf
    assert dist == pytest.approx(d.min(), abs=1e-12)
    assert i < j
    assert np.linalg.norm(pts[i] - pts[j]) == pytest.approx(dist, abs=1e-12)
