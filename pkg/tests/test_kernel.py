"""Kernel evaluation, symmetry, cancellation, profile and cone tests."""

import math

import numpy as np
import pytest
import scipy.special
from hypothesis import given, settings, strategies as st

from kdlab.exponents import exact_params
from kdlab.kernel import (
    HyperplaneQuadrature,
    cancellation_residual,
    cone_estimate,
    kernel_eval,
    kernel_eval_many,
    kernel_symmetry_residual,
    polar_pv_patch,
    upper_bound_profile,
)
from kdlab.vgrid import Density, GridSpec

P2 = exact_params(2, 0, "0.45")
P3 = exact_params(3, -1, "0.6")

G17 = GridSpec(2, 6.0, 17)
G33 = GridSpec(2, 6.0, 33)
G65 = GridSpec(2, 6.0, 65)
G17_3 = GridSpec(3, 3.0, 17)


def gaussian(grid):
    sq = np.zeros(grid.shape())
    for c in grid.mesh():
        sq = sq + c ** 2
    return Density(grid, np.exp(-sq))


def two_bump(grid, offset=1.5):
    shift = np.zeros(grid.d)
    shift[0] = offset
    pts = grid.points()
    vals = (np.exp(-np.sum((pts - shift) ** 2, axis=1))
            + np.exp(-np.sum((pts + shift) ** 2, axis=1)))
    return Density(grid, vals.reshape(grid.shape()))


def maxwellian_closed_form(params, pnorm):
    # hyperplane integral of e^{-|w|^2}|w|^{gamma+2s+1} in closed form
    d = params.d
    a = float(params.gamma) + 2.0 * float(params.s) + 2.0
    if d == 2:
        plane = scipy.special.gamma(a / 2.0)
    else:
        plane = 2.0 * np.pi * 0.5 * scipy.special.gamma((a + 1.0) / 2.0)
    return 2.0 ** (d - 1) * plane * pnorm ** (-(d + 2.0 * float(params.s)))


def test_quadrature_validation():
    with pytest.raises(ValueError):
        HyperplaneQuadrature(n_nodes=64)
    with pytest.raises(ValueError):
        HyperplaneQuadrature(n_nodes=1)
    with pytest.raises(ValueError):
        HyperplaneQuadrature(extent=0.0)


def test_kernel_zero_density():
    f = Density(G17, np.zeros(G17.shape()))
    assert kernel_eval(f, [0.0, 0.0], [0.5, 0.0], P2) == 0.0


def test_kernel_coincident_points_rejected():
    f = gaussian(G17)
    with pytest.raises(ValueError):
        kernel_eval(f, [0.5, 0.5], [0.5, 0.5], P2)


def test_kernel_single_node_no_nan():
    # the |w|^{gamma+2s+1} weight kills the foot-point node, so a density
    # concentrated at v itself must yield a finite value
    vals = np.zeros(G17.shape())
    vals[G17.N // 2, G17.N // 2] = 1.0
    f = Density(G17, vals)
    out = kernel_eval(f, [0.0, 0.0], [0.5, 0.0], P2)
    assert np.isfinite(out)


def test_kernel_matches_refined_quadrature():
    f = gaussian(G65)
    coarse = kernel_eval(f, [0.0, 0.0], [0.5, 0.0], P2)
    fine = kernel_eval(f, [0.0, 0.0], [0.5, 0.0], P2,
                       HyperplaneQuadrature(n_nodes=651))
    assert abs(coarse - fine) / abs(fine) < 0.005


@pytest.mark.parametrize("params,grid,vp", [
    (P2, G65, [0.5, 0.0]),
    (P2, G65, [0.31, -0.47]),
    (P3, G17_3, [0.5, 0.0, 0.0]),
])
def test_kernel_maxwellian_closed_form(params, grid, vp):
    f = gaussian(grid)
    got = kernel_eval(f, np.zeros(grid.d), vp, params)
    want = maxwellian_closed_form(params, float(np.linalg.norm(vp)))
    tol = 0.02 if grid.d == 2 else 0.05
    assert abs(got - want) / want < tol


def test_kernel_homogeneous_in_f():
    rng = np.random.default_rng(41)
    vals = rng.random(G17.shape())
    f = Density(G17, vals)
    cf = Density(G17, 2.75 * vals)
    V = np.zeros((8, 2))
    VP = rng.uniform(-2, 2, size=(8, 2))
    base = kernel_eval_many(f, V, VP, P2)
    scaled = kernel_eval_many(cf, V, VP, P2)
    assert np.allclose(scaled, 2.75 * base, rtol=1e-12)


def test_kernel_btilde_constant_sweep():
    # constant btilde acts linearly on K, so the compensated kernel stays
    # between the swept constants times the btilde=1 value
    f = gaussian(G33)
    v = np.array([0.3, -0.1])
    vp = np.array([1.1, 0.4])
    base = kernel_eval(f, v, vp, P2)
    for c in (0.5, 1.0, 2.0):
        got = kernel_eval(f, v, vp, P2, btilde=lambda ct, c=c: c)
        assert np.isclose(got, c * base, rtol=1e-12)


def test_symmetry_residual_zero_density():
    f = Density(G17, np.zeros(G17.shape()))
    w = np.array([[0.5, 0.25]])
    assert kernel_symmetry_residual(f, [0.0, 0.0], w, P2) == 0.0


def test_symmetry_residual_hundred_probes():
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(10):
        f = Density(G17, rng.random(G17.shape()))
        v = rng.uniform(-2, 2, size=2)
        w = rng.uniform(-3, 3, size=(10, 2))
        worst = max(worst, kernel_symmetry_residual(f, v, w, P2))
    assert worst <= 1e-12


st_seed = st.integers(0, 2 ** 31 - 1)


@settings(max_examples=25, deadline=None)
@given(seed=st_seed)
def test_symmetry_residual_property(seed):
    rng = np.random.default_rng(seed)
    f = Density(G17, rng.random(G17.shape()) * rng.exponential(1.0))
    v = rng.uniform(-3, 3, size=2)
    w = rng.uniform(-4, 4, size=(5, 2))
    assert kernel_symmetry_residual(f, v, w, P2) <= 1e-12


def test_cancellation_zero_density_rejected():
    f = Density(G33, np.zeros(G33.shape()))
    with pytest.raises(ValueError):
        cancellation_residual(f, [0.0, 0.0], P2)


def test_cancellation_maxwellian_center():
    f = gaussian(G33)
    lhs, rhs, rel = cancellation_residual(f, [0.0, 0.0], P2)
    assert rhs > 0
    assert rel <= 0.05


def test_cancellation_off_center():
    f = gaussian(G33)
    _, _, rel = cancellation_residual(f, [1.5, 0.75], P2)
    assert rel <= 0.05


def test_cancellation_refinement_ladder():
    # eps_pv = 2h rides along as N refines; 20% noise allowance on
    # monotonicity, and the last rung must clearly beat the first
    rels = []
    for N in (17, 33, 65):
        grid = GridSpec(2, 6.0, N)
        f = gaussian(grid)
        rels.append(cancellation_residual(f, [0.0, 0.0], P2)[2])
    for a, b in zip(rels, rels[1:]):
        assert b <= 1.2 * a
    assert rels[-1] < 0.8 * rels[0]


def test_cancellation_tail_truncation_dominated():
    # at |v| ~ 0.8R the reference convolution still sees the full mass but
    # the kernel rows are starved by the box, so the ratio breaks down
    f = gaussian(G33)
    _, _, rel = cancellation_residual(f, [4.875, 0.0], P2)
    assert rel > 0.2


def test_polar_patch_covers_self_cell():
    # the v' = v node is always excluded from the lattice sum, so the patch
    # never shrinks past that node's own cell
    def g(p):
        return np.ones(len(p))

    area = polar_pv_patch(g, [0.0, 0.0], 1e-9, G33, 0.45,
                          n_r=40, n_dirs=256)
    assert abs(area - G33.h ** 2) / G33.h ** 2 < 2e-3


def test_polar_patch_constant_integrand_area():
    # paired directions + graded radii integrate a constant to the area of
    # the 3x3 cell block around the center node
    def g(p):
        return np.ones(len(p))

    area = polar_pv_patch(g, [0.0, 0.0], 2.0 * G33.h, G33, 0.45,
                          n_r=40, n_dirs=256)
    want = (3.0 * G33.h) ** 2
    assert abs(area - want) / want < 2e-3


def test_upper_bound_profile_slope_and_lambda():
    f = gaussian(G33)
    rep0 = upper_bound_profile(f, [0.0, 0.0], [0.25, 0.5, 1.0], P2)
    assert not rep0["degenerate"]
    assert abs(rep0["slope"] - (2.0 - 2.0 * 0.45)) < 0.15
    rep2 = upper_bound_profile(f, [2.0, 0.0], [0.25, 0.5, 1.0], P2)
    ratio = rep0["Lambda0"] / rep2["Lambda0"]
    assert 1.0 / 3.0 < ratio < 3.0


def test_upper_bound_profile_degenerate():
    f = Density(G17, np.zeros(G17.shape()))
    rep = upper_bound_profile(f, [0.0, 0.0], [0.25, 0.5, 1.0], P2)
    assert rep["degenerate"]
    assert rep["slope"] is None
    assert rep["Lambda0"] == 0.0


def test_upper_bound_profile_needs_three_radii():
    f = gaussian(G17)
    with pytest.raises(ValueError):
        upper_bound_profile(f, [0.0, 0.0], [0.5, 1.0], P2)


def test_cone_maxwellian_isotropic():
    f = gaussian(G33)
    measure, lam, c0 = cone_estimate(f, [0.0, 0.0], 1e-6, P2)
    assert np.isclose(measure, 2.0 * np.pi)
    assert lam > 0
    assert c0 > 0


def test_cone_two_bump_concentrates():
    f = two_bump(G33)
    full_measure, lam_full, _ = cone_estimate(f, [0.0, 0.0], 1e-9, P2)
    assert np.isclose(full_measure, 2.0 * np.pi)
    measure, lam, c0 = cone_estimate(f, [0.0, 0.0], 4.0 * lam_full, P2)
    assert 0.0 < measure < 2.0 * np.pi
    assert lam >= 4.0 * lam_full
    assert c0 > 0


def test_cone_zero_density_empty():
    f = Density(G17, np.zeros(G17.shape()))
    assert cone_estimate(f, [0.0, 0.0], 1e-6, P2) == (0.0, 0.0, 0.0)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
