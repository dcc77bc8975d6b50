"""Tests for the truncated convex functionals and Bregman divergences."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kdlab.convexity import (
    Phi_a,
    TruncationLevel,
    bregman_d,
    bregman_special_constant,
    dphi_a,
    integral_representation_check,
    m_kappa,
    phi0k,
    phi_a,
)
from kdlab.exponents import exact_params
from kdlab.vgrid import Density, GridSpec

Q0 = 1.45


def test_truncation_level_validation():
    assert TruncationLevel(2.0).kappa == 2.0
    with pytest.raises(ValueError):
        TruncationLevel(0.0)


def test_kruzhkov_examples():
    assert phi_a(1.0, 0.5) == 0.0
    assert phi_a(1.0, 2.5) == 1.5
    assert dphi_a(1.0, 0.5, 2.0) == 1.0
    assert dphi_a(1.0, 2.0, 0.3) == 0.7
    for r in (0.2, 1.0, 3.0):
        assert dphi_a(1.0, r, r) == 0.0
    assert Phi_a(1.0, 2.0) == 1.0
    assert Phi_a(1.0, 0.5) == 0.0
    with pytest.raises(ValueError):
        phi_a(0.0, 1.0)
    with pytest.raises(ValueError):
        dphi_a(-1.0, 1.0, 1.0)


def test_kruzhkov_conjugate_identity():
    rng = np.random.default_rng(2)
    a = 0.7
    r = rng.uniform(0, 3, 1000)
    lhs = Phi_a(a, r)
    step = (r > a).astype(float)
    assert np.allclose(lhs, step * r - phi_a(a, r), atol=1e-14)


def test_phi0k_example_and_smoothness():
    ev = phi0k(2.0, 1.5, 3.0)
    assert np.isclose(ev.phi, 2.0 ** 1.5 + 1.5 * 2.0 ** 0.5, rtol=1e-14)
    zero = phi0k(2.0, 1.5, -1.0)
    assert zero.phi == zero.phi_dot == zero.Phi == 0.0
    kappa = 2.0
    eps = 1e-10
    below = phi0k(kappa, Q0, kappa - eps)
    at = phi0k(kappa, Q0, kappa)
    above = phi0k(kappa, Q0, kappa + eps)
    assert np.isclose(below.phi, at.phi, rtol=1e-8)
    assert np.isclose(above.phi, at.phi, rtol=1e-8)
    assert np.isclose(below.phi_dot, above.phi_dot, rtol=1e-8)
    with pytest.raises(ValueError):
        phi0k(-1.0, Q0, 1.0)


def test_conjugate_identity_everywhere():
    # Phi = phi_dot * r - phi holds on both sides of the truncation level.
    rng = np.random.default_rng(4)
    r = rng.uniform(0, 8, 5000)
    kappa = 2.0
    ev = phi0k(kappa, Q0, r)
    assert np.allclose(ev.Phi, ev.phi_dot * r - ev.phi, atol=1e-12)


def test_conjugate_shift_identity():
    # With the time-dependent argument f - A the conjugate picks up the
    # barrier term: phi_dot(f-A) f - phi(f-A) = Phi(f-A) + A phi_dot(f-A).
    rng = np.random.default_rng(5)
    f = rng.uniform(0, 6, 2000)
    A = rng.uniform(0, 4, 2000)
    kappa = 1.5
    ev = phi0k(kappa, Q0, f - A)
    lhs = ev.phi_dot * f - ev.phi
    rhs = ev.Phi + A * ev.phi_dot
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_bregman_diagonal_and_example():
    assert bregman_d(2.0, Q0, 1.3, 1.3) == 0.0
    assert bregman_d(2.0, Q0, 3.0, 1.0) >= 0.0
    assert np.isclose(bregman_special_constant(1.45), 0.09103, atol=1e-5)
    val = bregman_d(5.0, 1.45, 1.0, 0.5)
    assert np.isclose(val, bregman_special_constant(1.45), rtol=1e-12)


def test_bregman_nonnegative_bulk():
    rng = np.random.default_rng(6)
    n = 100_000
    r = rng.uniform(0, 10, n)
    s = rng.uniform(0, 10, n)
    kappa = rng.uniform(0.1, 5, n)
    a = rng.uniform(0.1, 5, n)
    assert np.all(dphi_a(a, r, s) >= 0)
    assert np.min(bregman_d(kappa, Q0, r, s)) >= -1e-14


def test_bregman_halving_identity_bulk():
    # d(r, (r ^ kappa)/2) equals c_{q0}(r ^ kappa)^{q0} for every r, kappa.
    rng = np.random.default_rng(7)
    n = 10_000
    r = rng.uniform(0, 10, n)
    kappa = rng.uniform(0.1, 5, n)
    clipped = np.minimum(r, kappa)
    lhs = bregman_d(kappa, Q0, r, clipped / 2)
    rhs = bregman_special_constant(Q0) * clipped ** Q0
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-12)


def test_integral_representation_quadratic():
    res = integral_representation_check(
        lambda r: np.asarray(r) ** 2, lambda a: 2.0 * np.ones_like(np.asarray(a)), 3.0)
    assert res <= 1e-12
    assert integral_representation_check(
        lambda r: np.asarray(r) ** 2, lambda a: 2.0 * np.ones_like(np.asarray(a)), 0.0) == 0.0


def test_integral_representation_smoothed_power():
    # Smoothed version of the truncated power below the truncation level;
    # the regularization keeps the second derivative bounded near 0.
    eps = 0.05

    def phi(r):
        return (np.asarray(r) ** 2 + eps ** 2) ** (Q0 / 2) - eps ** Q0

    def ddphi(a):
        a = np.asarray(a)
        return Q0 * (a ** 2 + eps ** 2) ** (Q0 / 2 - 2) * ((Q0 - 1) * a ** 2 + eps ** 2)

    res = integral_representation_check(phi, ddphi, 1.0, n_nodes=10001)
    assert res <= 1e-6


def test_kruzhkov_reconstruction():
    # int phidd(a) d_{phi_a}(r, s) da rebuilds the Bregman divergence of a
    # smooth phi; for phi = r^2 the divergence is (s - r)^2.
    # the divergence jumps at a = r, so trapezoid is first-order there
    r, s = 1.0, 3.0
    a = np.linspace(1e-9, 6.0, 60001)
    integrand = 2.0 * dphi_a(a, r, s)
    val = np.trapezoid(integrand, a)
    assert np.isclose(val, (s - r) ** 2, atol=1e-3)


class _PowerBarrier:
    """Minimal stand-in with the profile interface used by m_kappa."""

    def __init__(self, a_star, q, beta):
        self.a_star = a_star
        self.q = q
        self.beta = beta

    def profile(self, t, grid):
        amp = self.a_star * (1.0 + t ** (-self.beta))
        return amp * grid.bracket() ** (-self.q)


PARAMS = exact_params(2, 0, "0.45")


def _maxwellian(grid, amplitude=1.0):
    sq = np.zeros(grid.shape())
    for c in grid.mesh():
        sq = sq + c ** 2
    return Density(grid, amplitude * np.exp(-sq))


def test_m_kappa_trivial_cases():
    grid = GridSpec(2, 6.0, 33)
    bar = _PowerBarrier(10.0, 3.0, 20 / 9)
    below = _maxwellian(grid, amplitude=1.0)
    assert m_kappa(below, bar, 1.0, 5.0, PARAMS) == 0.0
    vals = np.array(bar.profile(1.0, grid))
    idx = (3, 7)
    vals[idx] += 1.0
    f = Density(grid, vals)
    assert np.isclose(m_kappa(f, bar, 1.0, 5.0, PARAMS), grid.cell, rtol=1e-12)


def test_m_kappa_monotone_in_kappa_and_converges():
    grid = GridSpec(2, 6.0, 65)
    bar = _PowerBarrier(10.0, 3.0, 20 / 9)
    f = _maxwellian(grid, amplitude=40.0)
    kappas = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
    vals = [m_kappa(f, bar, 1.0, k, PARAMS) for k in kappas]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    # f - A is bounded, so the series saturates once kappa clears the bound
    assert np.isclose(vals[-1], vals[-2], rtol=1e-12)


def test_m_kappa_refinement_oracle():
    bar = _PowerBarrier(10.0, 3.0, 20 / 9)
    coarse = m_kappa(_maxwellian(GridSpec(2, 6.0, 65), 40.0), bar, 1.0, 5.0, PARAMS)
    fine = m_kappa(_maxwellian(GridSpec(2, 6.0, 257), 40.0), bar, 1.0, 5.0, PARAMS)
    assert abs(coarse - fine) / fine < 1e-3


st_r = st.floats(min_value=0, max_value=20)
st_kappa = st.floats(min_value=1e-3, max_value=20)


@given(r=st_r, s=st_r, kappa=st_kappa)
def test_bregman_property(r, s, kappa):
    assert bregman_d(kappa, Q0, r, s) >= -1e-12


@given(r=st_r, kappa=st_kappa)
def test_phi0k_conjugate_property(r, kappa):
    ev = phi0k(kappa, Q0, r)
    assert ev.phi >= 0 and ev.phi_dot >= 0
    assert np.isclose(ev.Phi, ev.phi_dot * r - ev.phi, rtol=0, atol=1e-10 * (1 + abs(ev.phi)))
