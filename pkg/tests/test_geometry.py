from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nodefill import (constant_spacing, difference, discretize_boundary, from_predicate,
                      make_ball, make_box, parse_domain, shrinking_domain)


def test_box_membership_closed_and_open():
    closed = make_box([0, 0], [1, 1])
    opened = make_box([0, 0], [1, 1], closed=False)
    pts = np.array([[0.5, 0.5], [0.0, 0.3], [1.0, 1.0], [1.1, 0.5]])
    assert closed.contains(pts).tolist() == [True, True, True, False]
    assert opened.contains(pts).tolist() == [True, False, False, False]


def test_ball_and_difference():
    ring = difference(make_ball([0, 0], 1.0), make_ball([0, 0], 0.5, closed=False))
    assert ring.contains(np.array([0.75, 0.0]))
    assert not ring.contains(np.array([0.25, 0.0]))
    assert ring.contains(np.array([0.5, 0.0]))  # inner circle belongs to the ring
    assert not ring.contains(np.array([1.01, 0.0]))


def test_parse_domain_forms():
    assert parse_domain("box 0 0 1 1").dim == 2
    assert parse_domain("ball 0 0 0 1").dim == 3
    d = parse_domain("diff (box 0 0 1 1) (openball 0.5 0.5 0.2)")
    assert not d.contains(np.array([0.5, 0.5]))
    assert d.contains(np.array([0.05, 0.05]))
    om = parse_domain("omega 0.25")
    assert not om.contains(np.array([0.5, 0.5]))
    assert om.contains(np.array([0.25, 0.5]))


@pytest.mark.parametrize("text", ["", "box 0 0 1", "box 1 1 0 0", "torus 1 2", "ball 0 0 -1"])
def test_parse_domain_rejects(text):
    with pytest.raises(ValueError):
        parse_domain(text)


def test_shrinking_domain_volume():
    om = shrinking_domain(0.25)
    assert om.volume() == pytest.approx(1 - 0.5 ** 2, rel=1e-2)
    with pytest.raises(ValueError):
        shrinking_domain(0.6)


def test_box_boundary_counts_and_normals():
    b = discretize_boundary(make_box([0, 0], [1, 1]), constant_spacing(0.1))
    # 4 sides of 10 steps, corners shared
    assert len(b) == 40
    assert np.allclose(np.linalg.norm(b.normals, axis=1), 1)
    left = np.isclose(b.points[:, 0], 0) & (b.points[:, 1] > 0.05) & (b.points[:, 1] < 0.95)
    assert np.allclose(b.normals[left], [-1, 0])


def test_boundary_accepts_float_spacing():
    b = discretize_boundary(make_box([0, 0], [1, 1]), 0.25)
    assert len(b) == 16


def test_ball_boundary_spacing():
    b = discretize_boundary(make_ball([0, 0], 1.0), constant_spacing(0.05))
    gaps = np.linalg.norm(np.diff(np.vstack([b.points, b.points[:1]]), axis=0), axis=1)
    assert gaps.min() > 0.045 and gaps.max() < 0.055
    assert np.allclose(b.normals, b.points)


def test_cube_boundary_spacing():
    from scipy.spatial import cKDTree

    b = discretize_boundary(make_box([0, 0, 0], [1, 1, 1]), constant_spacing(0.1))
    d, _ = cKDTree(b.points).query(b.points, k=2)
    assert d[:, 1].min() >= 0.1 - 1e-12


def test_custom_domain():
    dom = from_predicate(lambda p: p[..., 0] + p[..., 1] <= 1, [0, 0], [1, 1], volume_hint=0.5)
    assert not dom.compiled
    assert dom.volume() == 0.5
    assert dom.contains(np.array([0.2, 0.2]))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_boundary_distance_matches_box_formula(x, y):
    dom = make_box([0, 0], [1, 1])
    dist = dom.boundary_distance(np.array([[x, y]]))[0]
    assert dist == pytest.approx(min(x, y, 1 - x, 1 - y), abs=1e-12)


@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("radius", [1.0, 0.3, 0.77])
def test_sphere_points_survive_rounding(d, radius):
    closed = make_ball(np.full(d, 0.1), radius)
    opened = make_ball(np.full(d, 0.1), radius, closed=False)
    assert closed.contains(discretize_boundary(closed, constant_spacing(0.05)).points).all()
    assert not opened.contains(discretize_boundary(opened, constant_spacing(0.05)).points).any()
