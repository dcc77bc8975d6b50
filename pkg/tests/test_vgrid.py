"""Grid, norm, moment, convolution and serialization tests."""

import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, settings, strategies as st

from kdlab.exponents import HydroBounds, derive_base, exact_params
from kdlab.vgrid import (
    Density,
    GridSpec,
    absorption_split_check,
    bracket_moment,
    convolve_gamma,
    entropy,
    holder_weight_check,
    hydro_check,
    interp_general_check,
    interp_second_check,
    interp_zero_check,
    load_binary,
    load_csv,
    moments,
    sample,
    save_binary,
    save_csv,
    self_cell_integral,
    weighted_lp_norm,
)

G65 = GridSpec(2, 6.0, 65)
G17 = GridSpec(2, 4.0, 17)
G9 = GridSpec(3, 3.0, 9)


def gaussian(grid):
    sq = np.zeros(grid.shape())
    for c in grid.mesh():
        sq = sq + c ** 2
    return Density(grid, np.exp(-sq))


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(4, 6.0, 65)
    with pytest.raises(ValueError):
        GridSpec(2, 6.0, 64)
    with pytest.raises(ValueError):
        GridSpec(2, -1.0, 65)
    assert np.isclose(GridSpec(2, 6.0, 65).h, 0.1875)


def test_density_validation():
    with pytest.raises(ValueError):
        Density(G17, np.zeros((5, 5)))
    bad = np.zeros(G17.shape())
    bad[0, 0] = -1e-9
    with pytest.raises(ValueError):
        Density(G17, bad)
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        Density(G17, bad)


def test_gaussian_moments():
    f = gaussian(G65)
    mass, mom, energy = moments(f)
    assert np.isclose(mass, np.pi, rtol=0, atol=1e-4)
    assert np.allclose(mom, 0.0, atol=1e-13)
    assert np.isclose(energy, np.pi, rtol=0, atol=1e-4)


def test_gaussian_entropy():
    # integral of e^{-r^2} (-r^2) 2 pi r dr over (0, inf) equals -pi
    f = gaussian(G65)
    assert np.isclose(entropy(f), -np.pi, rtol=0, atol=1e-3)


def test_entropy_conventions():
    assert entropy(Density(G17, np.zeros(G17.shape()))) == 0.0
    f = Density(G17, np.full(G17.shape(), np.e))
    mass, _, _ = moments(f)
    assert np.isclose(entropy(f), mass)


def test_norm_is_mass_at_p1_k0():
    rng = np.random.default_rng(7)
    f = Density(G17, rng.random(G17.shape()))
    assert weighted_lp_norm(f, 1, 0.0) == moments(f)[0]


def test_norm_single_node():
    for grid in (G17, G9):
        vals = np.zeros(grid.shape())
        center = (grid.N // 2,) * grid.d
        vals[center] = 1.0
        f = Density(grid, vals)
        for p in (1.0, 2.0, 3.5):
            assert np.isclose(weighted_lp_norm(f, p, 5.0), grid.cell ** (1.0 / p))
        assert weighted_lp_norm(f, np.inf, 5.0) == 1.0
    with pytest.raises(ValueError):
        weighted_lp_norm(f, 0.5, 0.0)


def test_convolve_gamma_zero_is_mass():
    f = gaussian(G65)
    mass, _, _ = moments(f)
    g = convolve_gamma(f, 0.0)
    assert np.allclose(g.values, mass, rtol=1e-13)


@pytest.mark.parametrize("grid", [G17, G9])
def test_convolve_single_node(grid):
    gamma = -0.4
    vals = np.zeros(grid.shape())
    center = (grid.N // 2,) * grid.d
    vals[center] = 1.0
    g = convolve_gamma(Density(grid, vals), gamma)
    sq = np.zeros(grid.shape())
    for c in grid.mesh():
        sq = sq + c ** 2
    r = np.sqrt(sq)
    with np.errstate(divide="ignore"):
        expected = np.where(r > 0, r ** gamma * grid.cell,
                            self_cell_integral(gamma, grid.h, grid.d))
    assert np.allclose(g.values, expected, rtol=1e-12)


def test_convolve_gaussian_radial_oracle():
    gamma = -0.4
    f = gaussian(G65)
    g = convolve_gamma(f, gamma)
    ref, _ = scipy.integrate.quad(
        lambda r: np.exp(-r * r) * r ** gamma * 2 * np.pi * r, 0, G65.R)
    at_origin = g.values[G65.N // 2, G65.N // 2]
    assert abs(at_origin - ref) / ref < 0.01


def test_convolve_self_adjoint():
    rng = np.random.default_rng(3)
    for gamma in (-0.7, 0.0, 1.0):
        f1 = Density(G17, rng.random(G17.shape()))
        f2 = Density(G17, rng.random(G17.shape()))
        lhs = np.sum(convolve_gamma(f1, gamma).values * f2.values)
        rhs = np.sum(f1.values * convolve_gamma(f2, gamma).values)
        assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


def test_convolve_gamma_window():
    f = gaussian(G17)
    with pytest.raises(ValueError):
        convolve_gamma(f, -2.0)
    with pytest.raises(ValueError):
        convolve_gamma(f, 1.5)


def test_hydro_check():
    f = gaussian(G65)
    assert hydro_check(f, HydroBounds(1, 4, 4, 1))
    assert not hydro_check(Density(G65, np.zeros(G65.shape())), HydroBounds(1, 4, 4, 1))
    mass = moments(f)[0]
    heavy = Density(G65, f.values * (10.0 / mass))
    assert not hydro_check(heavy, HydroBounds(1, 4, 4, 1))


def test_sample_reproduces_nodes_and_zero_fills():
    rng = np.random.default_rng(11)
    f = Density(G17, rng.random(G17.shape()))
    pts = G17.points()
    assert np.allclose(sample(f, pts), f.values.ravel(), rtol=1e-13)
    outside = np.array([[G17.R + 0.1, 0.0], [0.0, -G17.R - 5.0]])
    assert np.all(sample(f, outside) == 0.0)
    # midpoint of two neighbouring nodes along an axis is the average
    mid = np.array([[G17.h / 2, 0.0]])
    i0 = G17.N // 2
    expected = 0.5 * (f.values[i0, i0] + f.values[i0 + 1, i0])
    assert np.isclose(sample(f, mid)[0], expected)


@pytest.mark.parametrize("grid", [G17, G9])
def test_serialization_round_trip(tmp_path, grid):
    rng = np.random.default_rng(5)
    f = Density(grid, rng.random(grid.shape()))
    pcsv = tmp_path / "f.csv"
    pbin = tmp_path / "f.bin"
    save_csv(f, pcsv)
    save_binary(f, pbin)
    for back in (load_csv(pcsv), load_binary(pbin)):
        assert back.grid == f.grid
        assert np.array_equal(back.values, f.values)
    with pytest.raises(ValueError):
        pbad = tmp_path / "junk.bin"
        pbad.write_bytes(b"not a density")
        load_binary(pbad)


PARAMS_POOL = [
    exact_params(2, 0, "0.45"),
    exact_params(2, "-0.4", "0.45"),
    exact_params(3, "-0.5", "0.3"),
]


def _random_density(rng, grid):
    vals = rng.random(grid.shape()) * rng.exponential(1.0)
    if rng.random() < 0.3:
        vals = vals * (rng.random(grid.shape()) > 0.5)
    return Density(grid, vals)


def test_interpolation_inequalities_bulk():
    # 10^3 random draws; each draw runs the weighted Holder check and all four
    # moment-interpolation checks. Slack must never dip below -1e-12 relative.
    rng = np.random.default_rng(20260819)
    worst = 0.0
    for i in range(1000):
        params = PARAMS_POOL[i % len(PARAMS_POOL)]
        base = derive_base(params)
        grid = G17 if params.d == 2 else G9
        f = _random_density(rng, grid)
        p = 1 + 5 * rng.random()
        q = p + 5 * rng.random()
        reports = [
            holder_weight_check(f, p, q, rng.random(),
                                rng.uniform(-6, 6), rng.uniform(-6, 6)),
            interp_zero_check(f, rng.uniform(-4, 4), rng.uniform(0.05, 0.95)),
            interp_general_check(f, params,
                                 rng.uniform(1.0, float(base.p0 * base.q0)),
                                 rng.uniform(-4, 4)),
            interp_second_check(f, params, rng.uniform(-4, 4)),
            absorption_split_check(f, params, rng.uniform(-4, 4),
                                   10.0 ** rng.uniform(-2, 2)),
        ]
        for rep in reports:
            worst = min(worst, rep.notes["relative_slack"])
            assert rep.verdict == "pass", (rep.name, rep.notes)
    assert worst >= -1e-12


st_kp = st.floats(min_value=-6, max_value=6)
st_p = st.floats(min_value=1, max_value=8)
st_alpha = st.floats(min_value=0, max_value=1)
st_seed = st.integers(0, 2 ** 31 - 1)


@settings(max_examples=60, deadline=None)
@given(seed=st_seed, p=st_p, q=st_p, alpha=st_alpha, kp=st_kp, kq=st_kp)
def test_holder_weight_property(seed, p, q, alpha, kp, kq):
    rng = np.random.default_rng(seed)
    f = _random_density(rng, G17)
    rep = holder_weight_check(f, p, q, alpha, kp, kq)
    assert rep.verdict == "pass"


@settings(max_examples=60, deadline=None)
@given(seed=st_seed, k3=st_kp, eps=st.floats(min_value=1e-3, max_value=1e3))
def test_absorption_split_property(seed, k3, eps):
    rng = np.random.default_rng(seed)
    f = _random_density(rng, G17)
    rep = absorption_split_check(f, PARAMS_POOL[1], k3, eps)
    assert rep.verdict == "pass"


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
