from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import cKDTree

from nodefill import analytic_spacing, constant_spacing, make_ball, make_box, shrinking_domain
from nodefill.ff import ff_fill_box, ff_fill_domain
from nodefill.quality import neighbor_stats


def test_unit_square_count(unit_square, h025):
    res = ff_fill_domain(unit_square, h025)
    assert abs(res.n - 1555) <= 0.05 * 1555
    assert res.beta is None and res.algorithm == "ff"


_PACKING = pytest.mark.xfail(
    strict=True, reason="FF packs near 0.93/h^2: +5.3% at h=0.05 (boundary share), -5.2% at h=0.0125")


@pytest.mark.parametrize("h", [pytest.param(0.05, marks=_PACKING), 0.025,
                               pytest.param(0.0125, marks=_PACKING)])
def test_count_near_estimate(unit_square, h):
    n = ff_fill_domain(unit_square, constant_spacing(h)).n
    assert abs(n - 1 / h ** 2) <= 0.05 / h ** 2


def test_mean_neighbor_distance(unit_square, h025):
    res = ff_fill_domain(unit_square, h025)
    st_ = neighbor_stats(res, c=3, margin=0.05)
    assert st_.mean == pytest.approx(0.02575, rel=0.05)


def test_no_hard_spacing_guarantee(unit_square):
    res = ff_fill_domain(unit_square, constant_spacing(0.005))
    d, _ = cKDTree(res.nodes).query(res.nodes, k=2)
    assert d[:, 1].min() < 0.005


def test_front_rises_monotonically():
    nodes = ff_fill_box(0, 1, 0, 1, constant_spacing(0.03))
    assert np.all(np.diff(nodes[:, 1]) >= 0)
    assert np.all((nodes[:, 0] >= 0) & (nodes[:, 0] <= 1))


def test_bottom_row_is_regular():
    nodes = ff_fill_box(0, 1, 0, 1, constant_spacing(0.1))
    row = np.sort(nodes[nodes[:, 1] == 0, 0])
    assert np.allclose(row, np.linspace(0, 1, 11))


def test_disk_clipping_and_boundary_margin():
    disk = make_ball([0, 0], 1.0)
    h = constant_spacing(0.05)
    res = ff_fill_domain(disk, h)
    assert np.all(disk.contains(res.nodes))
    bnd = res.nodes[: res.seed_count]
    d, _ = cKDTree(bnd).query(res.interior)
    assert d.min() >= 0.025


def test_shrinking_domain_has_empty_hole():
    om = shrinking_domain(0.25)
    res = ff_fill_domain(om, constant_spacing(0.02))
    inside_hole = np.all(np.abs(res.nodes - 0.5) < 0.25, axis=1)
    assert not inside_hole.any()


def test_compiled_and_python_identical():
    h = analytic_spacing("0.02*(1+x+y)")
    a = ff_fill_box(0, 1, 0, 1, h, path="compiled")
    b = ff_fill_box(0, 1, 0, 1, analytic_spacing(lambda p: 0.02 * (1 + p[0] + p[1])))
    assert np.array_equal(a, b)


def test_rejections(unit_cube, unit_square):
    with pytest.raises(ValueError, match="2-D"):
        ff_fill_domain(unit_cube, constant_spacing(0.1))
    with pytest.raises(ValueError):
        ff_fill_box(0, 1, 0, 1, analytic_spacing("0.1*x - 0.05"))
    with pytest.raises(ValueError):
        ff_fill_box(0, 1, 0, 1, constant_spacing(0.1), n=0)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.03, 0.2), st.integers(1, 9))
def test_variable_spacing_respected_loosely(h0, n):
    h = analytic_spacing(f"{h0!r}*(1+x)")
    nodes = ff_fill_box(0, 1, 0, 1, h, n=n)
    d, _ = cKDTree(nodes).query(nodes, k=2)
    # no hard guarantee, but nothing collapses
    assert d[:, 1].min() > 0.2 * h0
