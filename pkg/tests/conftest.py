"""Shared fixtures: models and session-scoped invariant-measure estimates."""

import pytest

from ergodiff import ergodicity
from ergodiff.models import benchmark_fast_slow, ou_model, quartic_model


@pytest.fixture(scope="session")
def ou():
    return ou_model()


@pytest.fixture(scope="session")
def quartic():
    return quartic_model()


@pytest.fixture(scope="session")
def benchmarks():
    return benchmark_fast_slow()


@pytest.fixture(scope="session")
def mu_ou(ou):
    """Moderate-budget invariant estimate (dense spacing)."""
    model, _ = ou
    return ergodicity.estimate_invariant_measure(
        model, burn_in=20.0, n_samples=200_000, thinning_time=0.05,
        seed=424242, dt=0.01)


@pytest.fixture(scope="session")
def mu_ou_wide(ou):
    """Long-total-time estimate with nearly independent samples.

    Centering-sensitive solves need the measure mean accurate to ~1e-3;
    wide spacing buys total time instead of sample count.
    """
    model, _ = ou
    return ergodicity.estimate_invariant_measure(
        model, burn_in=20.0, n_samples=400_000, thinning_time=1.0,
        seed=515151, dt=0.01)
