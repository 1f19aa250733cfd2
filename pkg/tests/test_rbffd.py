from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nodefill import constant_spacing, discretize_boundary, make_box, pnp_fill
from nodefill.rbffd import (NumericalError, PhsConfig, assemble_poisson, interpolate, l1_error,
                            laplacian_spectrum, monomial_exponents, phs_laplacian_weights,
                            poisson_problem, run_poisson, solve)


def _fill(h, d=2, seed=0):
    dom = make_box(np.zeros(d), np.ones(d))
    hf = constant_spacing(h)
    return dom, pnp_fill(dom, hf, discretize_boundary(dom, hf).points, seed=seed)


def test_monomials():
    assert len(monomial_exponents(2, 2)) == 6
    assert len(monomial_exponents(3, 2)) == 10
    assert monomial_exponents(2, 0).tolist() == [[0, 0]]


def test_config_validation():
    with pytest.raises(ValueError):
        PhsConfig(k=2)
    assert PhsConfig().stencil_size(2) == 15
    assert PhsConfig().stencil_size(3) == 42


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(0.01, 10.0))
def test_weights_exact_for_quadratics(seed, scale):
    rng = np.random.default_rng(seed)
    c = rng.random(2) * scale
    nb = c + (rng.random((15, 2)) - 0.5) * 0.1 * scale
    w = phs_laplacian_weights(c, nb)
    a, b, e = rng.standard_normal(3)
    vals = a * nb[:, 0] ** 2 + b * nb[:, 1] ** 2 + e * nb[:, 0] * nb[:, 1] + 3 * nb[:, 0]
    assert w @ vals == pytest.approx(2 * a + 2 * b, rel=1e-6, abs=1e-6)
    assert w.sum() == pytest.approx(0.0, abs=1e-6 / (0.1 * scale) ** 2)


def test_weights_coincident_nodes():
    nb = np.zeros((15, 2))
    with pytest.raises(NumericalError):
        phs_laplacian_weights(np.zeros(2), nb)
    with pytest.raises(ValueError):
        phs_laplacian_weights(np.zeros(2), np.random.rand(3, 2))


def test_poisson_accuracy_and_convergence():
    errs, ns = [], []
    for h in (0.05, 0.025):
        dom, res = _fill(h)
        out = run_poisson(res, dom, h)
        errs.append(out["L1"])
        ns.append(out["N"])
    assert errs[1] < errs[0] / 2.5
    assert errs[1] < 2e-3


def test_bicgstab_matches_direct():
    dom, res = _fill(0.05)
    u, f = poisson_problem(2)
    sys_ = assemble_poisson(res.nodes, res.boundary_mask, f=f)
    a = solve(sys_, method="direct")
    b = solve(sys_, tol=1e-10, method="bicgstab")
    assert np.allclose(a, b, atol=1e-7)


def test_solver_failure_raises():
    dom, res = _fill(0.1)
    sys_ = assemble_poisson(res.nodes, res.boundary_mask, f=lambda p: np.ones(len(p)))
    with pytest.raises(NumericalError):
        solve(sys_, tol=1e-30, method="bicgstab", maxiter=1)


def test_interpolation_reproduces_quadratics():
    rng = np.random.default_rng(0)
    nodes = rng.random((300, 2))
    u = 1 + nodes[:, 0] - 2 * nodes[:, 1] ** 2 + nodes[:, 0] * nodes[:, 1]
    q = rng.random((50, 2)) * 0.8 + 0.1
    ref = 1 + q[:, 0] - 2 * q[:, 1] ** 2 + q[:, 0] * q[:, 1]
    assert np.allclose(interpolate(nodes, u, q), ref, atol=1e-9)


def test_interpolation_l1_small():
    dom, res = _fill(0.025)
    u, _ = poisson_problem(2)
    assert l1_error(u(res.nodes), res.nodes, u, dom, 0.025) <= 1e-3


def test_spectrum_stable_small():
    dom, res = _fill(0.08)
    sys_ = assemble_poisson(res.nodes, res.boundary_mask)
    ev = laplacian_spectrum(sys_)
    assert ev.real.max() < 0
    assert np.all(np.diff(ev.real) <= 0)
    with pytest.raises(ValueError):
        laplacian_spectrum(sys_, limit=10)


def test_3d_sanity():
    errs = []
    for h in (1 / 10, 1 / 15):
        dom, res = _fill(h, d=3)
        errs.append(run_poisson(res, dom, h)["L1"])
    assert errs[1] < errs[0] < 0.05
