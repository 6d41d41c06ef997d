import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kernels import spectral as sp
from models.field import PhysicalVecField, SpectralVecField
from models.grid import DealiasRule, GridSpec
from utils.exceptions import GridMismatchError, InvalidFieldError, ParameterError


@pytest.mark.parametrize("n", [7, 9, 6, 15])
def test_grid_rejects_bad_sizes(n):
    with pytest.raises(ParameterError):
        GridSpec(n=n)


def test_band_limits():
    assert GridSpec(n=16).band_limit == 5
    assert GridSpec(n=16, dealias_rule=DealiasRule.ONE_HALF).band_limit == 3
    assert GridSpec.for_exponent(32, 3).dealias_rule is DealiasRule.ONE_HALF
    assert GridSpec.for_exponent(32, 2).dealias_rule is DealiasRule.TWO_THIRDS


def test_random_field_is_admissible(grid):
    u = sp.random_divfree_field(grid, seed=3)
    u.check_invariants()
    assert sp.norm(u) == pytest.approx(1.0, rel=1e-12)


def test_random_field_shares_low_modes_across_resolutions():
    coarse = sp.random_divfree_field(GridSpec(n=16), seed=5, norm_h=None)
    fine = sp.random_divfree_field(GridSpec(n=32), seed=5, norm_h=None)
    for i, j in [(1, 2), (2, 1), (3, 0)]:
        assert np.allclose(coarse.coeffs[:, i, j], fine.coeffs[:, i, j], rtol=1e-13, atol=1e-15)


def test_random_field_gradient_ratio_is_grid_converged():
    ratios = []
    for n in (32, 64):
        u = sp.random_divfree_field(GridSpec(n=n), seed=9, decay_exponent=2.0)
        ratios.append(sp.norm(u, "V") / sp.norm(u, "H"))
    assert np.all(np.isfinite(ratios))
    assert ratios[1] == pytest.approx(ratios[0], rel=0.05)


def test_negative_decay_exponent_rejected(grid):
    with pytest.raises(ParameterError):
        sp.random_divfree_field(grid, seed=0, decay_exponent=-1.0)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_transform_round_trip(seed):
    grid = GridSpec(n=16)
    u = sp.random_divfree_field(grid, seed)
    back = sp.transform(sp.transform(u, "to_physical"), "to_spectral")
    assert np.max(np.abs(back.coeffs - u.coeffs)) <= 1e-13 * np.max(np.abs(u.coeffs))


def test_parseval(grid, make_field):
    u = make_field(grid, 1, norm=2.5)
    physical = sp.quadrature((sp.to_physical(u).samples ** 2).sum(axis=0), grid)
    assert physical == pytest.approx(sp.inner_product(u, u), rel=1e-12)


def test_leray_projection_of_rough_field(grid):
    raw = np.random.default_rng(0).standard_normal((2, grid.n, grid.n))
    u = sp.to_spectral(PhysicalVecField(grid, raw))
    pu = sp.leray_project(u)
    assert pu.divergence_residual() <= 1e-12 * np.max(np.abs(u.coeffs))
    assert pu.mean_residual() == 0.0
    assert np.allclose(sp.leray_project(pu).coeffs, pu.coeffs, rtol=0, atol=1e-15)


def test_dealias_zeroes_out_of_band_modes(grid):
    raw = np.random.default_rng(1).standard_normal((2, grid.n, grid.n))
    u = sp.dealias(sp.to_spectral(PhysicalVecField(grid, raw)))
    assert u.out_of_band_residual() == 0.0


def test_transform_direction_and_grid_errors(grid, cubic_grid, make_field):
    u = make_field(grid, 0)
    with pytest.raises(InvalidFieldError):
        sp.transform(u, "to_spectral")
    with pytest.raises(GridMismatchError):
        sp.transform(u, "to_physical", grid=cubic_grid)
    with pytest.raises(GridMismatchError):
        sp.inner_product(u, make_field(cubic_grid, 0))


def test_unknown_space_and_exponent(grid, make_field):
    u = make_field(grid, 0)
    with pytest.raises(ParameterError):
        sp.inner_product(u, u, "L2")
    with pytest.raises(ParameterError):
        sp.norm(u, "Lr1", r=4)


def test_poincare_and_dual_norms(grid, make_field):
    u = make_field(grid, 2)
    assert sp.norm(u, "V") ** 2 >= grid.lambda1 * sp.norm(u) ** 2
    assert sp.norm(u, "Vprime") ** 2 <= sp.norm(u) ** 2 / grid.lambda1


def test_vorticity_enstrophy(grid, make_field):
    u = make_field(grid, 4)
    enstrophy = sp.quadrature(sp.vorticity(u) ** 2, grid)
    assert enstrophy == pytest.approx(sp.norm(u, "V") ** 2, rel=1e-11)


def test_shear_mode_samples(grid):
    u = sp.shear_mode(grid, amplitude=2.0)
    _, y = grid.coordinates
    samples = sp.to_physical(u).samples
    assert np.allclose(samples[0], 2.0 * np.sin(y), atol=1e-13)
    assert np.allclose(samples[1], 0.0, atol=1e-13)


def test_field_arithmetic_checks_grid(grid, cubic_grid):
    with pytest.raises(GridMismatchError):
        SpectralVecField.zeros(grid) + SpectralVecField.zeros(cubic_grid)
    with pytest.raises(InvalidFieldError):
        SpectralVecField(grid, np.full((2, grid.n, grid.n), np.nan))
