"""Shipped models against their analytic oracles."""

import math

import numpy as np
import pytest
from scipy import integrate as sint

from ergodiff import ergodicity
from ergodiff.models import (
    benchmark_fast_slow,
    degenerate_alpha,
    degenerate_example_model,
    degenerate_flow_exit_time,
    ou_model,
    quartic_model,
)


def test_ou_oracle_values(ou):
    model, oracle = ou
    assert oracle.invariant_variance == 1.0
    assert float(model._drift_point(np.array([3.0]))[0]) == -3.0
    assert oracle.poisson_solutions["coord"](2.0) == 2.0
    assert oracle.poisson_solutions["square_centered"](2.0) == 1.5
    assert oracle.transition_mean(3.0, 1.0) == pytest.approx(3 * math.exp(-1))


def test_ou_exact_tv_curve(ou):
    _, oracle = ou
    # frozen quadrature values; the curve is monotone decreasing
    assert oracle.tv_exact(3.0, 1.0) == pytest.approx(0.43337, abs=2e-4)
    assert oracle.tv_exact(3.0, 5.0) == pytest.approx(0.00806, abs=2e-4)
    vals = [oracle.tv_exact(3.0, t) for t in (0.5, 1, 2, 3, 4, 5)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_quartic_oracle_by_quadrature(quartic):
    _, oracle = quartic
    z, _ = sint.quad(lambda x: math.exp(-x ** 4 / 4), -np.inf, np.inf)
    m2, _ = sint.quad(lambda x: x * x * math.exp(-x ** 4 / 4), -np.inf, np.inf)
    m4, _ = sint.quad(lambda x: x ** 4 * math.exp(-x ** 4 / 4), -np.inf, np.inf)
    assert oracle.invariant_variance == pytest.approx(m2 / z, abs=1e-10)
    assert oracle.invariant_variance == pytest.approx(0.675978, abs=1e-5)
    # integration by parts gives the fourth moment exactly
    assert m4 / z == pytest.approx(1.0, abs=1e-9)


def test_degenerate_alpha_values():
    assert degenerate_alpha(np.array([0.0, 0.0])) == 0.0
    assert degenerate_alpha(np.array([1.0, 0.0])) == 0.5


def test_degenerate_noise_rank():
    model = degenerate_example_model(0.1)
    for x in (np.array([0.3, -0.7]), np.array([2.0, 1.0])):
        s = model._diffusion_point(x)
        eigs = np.linalg.eigvalsh(s @ s.T)
        al = degenerate_alpha(x)
        assert np.allclose(eigs, [al ** 2, al ** 2])
    s0 = model._diffusion_point(np.zeros(2))
    assert np.allclose(s0, 0.0)


def test_degenerate_recurrence_inner_product():
    model = degenerate_example_model(0.1)
    for r in (1.0, 2.0, 4.0):
        x = np.array([r, 0.0])
        b = model._drift_point(x)
        assert float(b @ x) == pytest.approx(r - r * r, abs=1e-12)


def test_degenerate_flow_exit_time_quadrature():
    delta = 0.1
    # oracle: time along dr/dt = 1 - r until alpha crosses delta
    r_star = math.sqrt(delta / (1 - delta))
    t_quad, _ = sint.quad(lambda r: 1.0 / (1.0 - r), 0.0, r_star)
    assert degenerate_flow_exit_time(delta) == pytest.approx(t_quad, abs=1e-10)
    # noise-free flow from the origin exits {alpha <= delta} before the bound
    x = np.zeros(2)
    dt = 1e-4
    t = 0.0
    while degenerate_alpha(x) <= delta:
        x = x + dt * np.array([1.0 - x[0], -x[1]])
        t += dt
        assert t < 10.0
    bound = t_quad + 0.01
    assert t <= bound


@pytest.mark.parametrize("factory", [
    lambda: ou_model()[0],
    lambda: quartic_model()[0],
    lambda: degenerate_example_model(0.1),
], ids=["ou", "quartic", "degenerate"])
def test_all_models_pass_recurrence_scan(factory):
    model = factory()
    scan = ergodicity.recurrence_scan(model, [1.0, 2.0, 4.0, 8.0], seed=0)
    assert scan.condition_plausible


def test_benchmark_oracles(benchmarks):
    va, vb, oa, ob = benchmarks
    assert float(oa.effective_diffusion(0.0)) == 2.0
    assert float(oa.effective_drift(3.0)) == -3.0
    assert float(ob.effective_drift(1.7)) == 0.0
    assert float(ob.effective_diffusion(2.0)) == pytest.approx(10.0)
    m, v = oa.limit_marginal(0.0, 1.0)
    assert m == 0.0 and v == pytest.approx(1 - math.exp(-2))


def test_benchmark_scaling_oracle():
    _, _, oa2, ob2 = benchmark_fast_slow(scale_g=2.0)
    assert float(oa2.effective_diffusion(0.0)) == 8.0
    assert float(ob2.effective_drift(1.0)) == 3.0  # (c^2 - 1) y


def test_gradient_consistency_enforced(benchmarks):
    va, _, _, _ = benchmarks
    from ergodiff.averaging import FastSlowSystem

    def bad_grad(x, y):
        return np.array([[1.0]])  # G_a does not depend on y

    with pytest.raises(ValueError, match="grad_y_G inconsistent"):
        FastSlowSystem(fast=va.fast, dim_y=1, F=va.F, G=va.G,
                       grad_y_G=bad_grad, vectorized=True)


def test_declared_growth_enforced(benchmarks):
    va, _, _, _ = benchmarks
    from ergodiff.averaging import FastSlowSystem

    with pytest.raises(ValueError, match="growth"):
        FastSlowSystem(fast=va.fast, dim_y=1, F=va.F, G=va.G,
                       grad_y_G=va.grad_y_G, growth_orders=(0.0, 0.0, 0.0),
                       growth_K=0.01, vectorized=True)
