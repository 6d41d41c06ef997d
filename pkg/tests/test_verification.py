import pytest

from models.params import CbfParams
from services.verification_service import VerificationService


@pytest.mark.slow
def test_check_census_passes():
    results = VerificationService(CbfParams(mu=0.1, alpha=0.1, beta=5.0, r=3), n=16, samples=2).run()
    failed = [(c.name, c.margin) for c in results if not c.passed]
    assert failed == []
    names = {c.name for c in results}
    for name in ("parseval", "b_skew_symmetric", "absorption_monotone_r2", "global_monotonicity",
                 "energy_equality", "decay_benchmark", "discrete_duality_r1", "discrete_duality_r2",
                 "discrete_duality_r3", "distributed_gradient_fd", "initial_data_gradient_fd"):
        assert name in names


def test_spectral_checks_pass():
    service = VerificationService(CbfParams(mu=0.1, alpha=0.1, beta=1.0, r=2), n=16, samples=2)
    service.spectral_checks()
    assert len(service.results) == 8
    assert all(c.passed for c in service.results)


def test_operator_checks_pass_for_linear_absorption():
    service = VerificationService(CbfParams(mu=0.5, alpha=0.0, beta=1.0, r=1), n=16, samples=1)
    service.operator_checks()
    failed = [c.name for c in service.results if not c.passed]
    assert failed == []
    detail = next(c.detail for c in service.results if c.name == "global_monotonicity")
    assert "mu=1.0" in detail
