import numpy as np
import pytest

from kernels import spectral as sp
from models.costs import AssimConfig, OptimizerConfig
from models.field import FieldSeries
from services.assimilation_service import AssimilationService
from services.forward_solver_service import all_states, solve_forward
from utils.exceptions import ParameterError

T, DT = 0.05, 0.005


def test_initial_data_gradient_matches_central_difference(cubic_grid, params, make_field):
    service = AssimilationService(params)
    cfg = service.generate_twin_data(make_field(cubic_grid, 0), T, DT, w_enstrophy=0.5)
    base = make_field(cubic_grid, 1)
    grad = service.gradient(cfg, base)
    tau = 1e-4
    for seed in range(100, 110):
        perturb = make_field(cubic_grid, seed)
        exact = sp.inner_product(grad, perturb)
        fd = (service.evaluate_cost(cfg, base + tau * perturb) - service.evaluate_cost(cfg, base - tau * perturb)) / (2 * tau)
        assert fd == pytest.approx(exact, rel=1e-7)


def test_twin_noise_has_requested_size(cubic_grid, params, make_field):
    service = AssimilationService(params)
    truth = make_field(cubic_grid, 3)
    cfg = service.generate_twin_data(truth, T, DT, noise_level=0.1, seed=4)
    traj, _ = solve_forward(truth, params, T=T, dt=DT)
    clean = all_states(traj)
    for noisy, exact in zip(cfg.measurements.coeffs, clean):
        size = np.sqrt(sp.inner_coeffs(exact, exact, cubic_grid))
        gap = np.sqrt(sp.inner_coeffs(noisy - exact, noisy - exact, cubic_grid))
        assert gap == pytest.approx(0.1 * size, rel=1e-10)
    assert cfg.truth is truth


def test_noise_free_recovery(cubic_grid, params, make_field):
    service = AssimilationService(params, opt_cfg=OptimizerConfig(grad_tol=1e-6, max_iters=200))
    truth = make_field(cubic_grid, 5)
    cfg = service.generate_twin_data(truth, T, DT)
    estimate, report = service.assimilate(cfg)
    assert report.final_cost < report.costs[0]
    assert service.recovery_error(estimate, truth) < 0.05


def test_second_order_form_positive_at_truth(cubic_grid, params, make_field):
    service = AssimilationService(params)
    truth = make_field(cubic_grid, 6)
    cfg = service.generate_twin_data(truth, T, DT)
    assert service.second_order_form(cfg, truth, make_field(cubic_grid, 7, norm=1e-2)) > 0


def test_invalid_twin_settings(cubic_grid, params, make_field):
    service = AssimilationService(params)
    with pytest.raises(ParameterError):
        service.generate_twin_data(make_field(cubic_grid, 0), T, DT, noise_level=-0.1)
    with pytest.raises(ParameterError):
        service.generate_twin_data(make_field(cubic_grid, 0), T, DT, w_init=0.0)


def test_assim_config_rejects_negative_weights(cubic_grid, make_field):
    u = make_field(cubic_grid, 0)
    with pytest.raises(ParameterError):
        AssimConfig(FieldSeries.constant(u, 2, DT), u, w_track=-1.0)


def test_twin_data_is_reproducible(cubic_grid, params, make_field):
    service = AssimilationService(params)
    truth = make_field(cubic_grid, 8)
    first = service.generate_twin_data(truth, T, DT, noise_level=0.05, seed=11)
    second = service.generate_twin_data(truth, T, DT, noise_level=0.05, seed=11)
    assert np.array_equal(first.measurements.coeffs, second.measurements.coeffs)


@pytest.mark.slow
def test_recovery_improves_as_noise_drops(cubic_grid, params, make_field):
    service = AssimilationService(params, opt_cfg=OptimizerConfig(grad_tol=1e-6, max_iters=200))
    results = service.noise_sweep(make_field(cubic_grid, 9), T, DT, noise_levels=(1e-1, 1e-2, 0.0), seed=2)
    errors = [error for _, error in results]
    assert errors[0] > errors[1] > errors[2]
