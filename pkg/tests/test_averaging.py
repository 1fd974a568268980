"""Slow-fast simulation, effective coefficients, and convergence checks."""

import math

import numpy as np
import pytest

from ergodiff import averaging, errors, rng, sde, stats
from ergodiff.kernels.specs import NativeFastSlow
from ergodiff.models import benchmark_fast_slow, ou_model


@pytest.fixture(scope="module")
def decoupled():
    """F = -y, G = 0: the slow variable is a plain ODE."""
    fast, _ = ou_model()
    return averaging.FastSlowSystem(
        fast=fast, dim_y=1,
        F=lambda X, Y: -np.atleast_2d(Y),
        G=lambda X, Y: np.zeros_like(np.atleast_2d(Y)),
        grad_y_G=lambda x, y: np.zeros((1, 1)),
        growth_orders=(0.0, 0.0, 0.0), label="decoupled", vectorized=True,
        native_fs=NativeFastSlow.linear(-1.0, 0.0))


def test_decoupled_slow_ode(decoupled):
    ens, _, stiff = averaging.simulate_fast_slow(
        decoupled, [0.0], [1.0], eps=0.5, T=1.0, fast_dt=0.05, n_paths=16,
        seed=1)
    dt_slow = 0.25 * 0.05
    assert stiff == 0.0
    assert np.abs(ens.terminal() - math.exp(-1.0)).max() < 5 * dt_slow


def test_eps_one_matches_manual_coupled_simulation(benchmarks):
    va, _, _, _ = benchmarks
    n, fast_dt, n_steps, seed = 8, 0.05, 20, 314
    ens, xs, _ = averaging.simulate_fast_slow(va, [0.2], [-0.3], eps=1.0,
                                              T=n_steps * fast_dt,
                                              fast_dt=fast_dt, n_paths=n,
                                              seed=seed, target_records=n_steps)
    # mirror of the kernel arithmetic, composed by hand at eps = 1
    sup = rng.EnsembleNoise(seed, n, 1, 0)
    W = sup.block(n_steps)
    x = np.full(n, 0.2)
    y = np.full(n, -0.3)
    sq = math.sqrt(fast_dt)
    for j in range(n_steps):
        t_noise = sq * W[j, :, 0]
        g = 1.0 * x
        t1 = (-1.0 * x + 0.0) * fast_dt
        t2 = math.sqrt(2.0) * t_noise
        t3 = (-1.0 * y) * fast_dt
        t4 = g * fast_dt
        x, y = (x + t1) + t2, (y + t3) + t4
    assert (xs[:, 0] == x).all()
    assert (ens.terminal()[:, 0] == y).all()


def test_benchmark_variance_near_limit(benchmarks):
    va, _, oracle, _ = benchmarks
    ens, _, _ = averaging.simulate_fast_slow(va, [0.0], [0.0], eps=0.1, T=1.0,
                                             fast_dt=0.02, n_paths=4000,
                                             seed=33)
    _, v_limit = oracle.limit_marginal(0.0, 1.0)
    assert abs(ens.terminal().var() - v_limit) < 0.1 * v_limit


def test_fast_dt_cap_enforced(benchmarks):
    va, _, _, _ = benchmarks
    with pytest.raises(ValueError):
        averaging.simulate_fast_slow(va, [0.0], [0.0], eps=0.5, T=1.0,
                                     fast_dt=0.2, n_paths=2, seed=1)


def test_stiffness_warning():
    fast, _ = ou_model()
    wild = averaging.FastSlowSystem(
        fast=fast, dim_y=1,
        F=lambda X, Y: -np.atleast_2d(Y),
        G=lambda X, Y: 50.0 * np.atleast_2d(X),
        grad_y_G=lambda x, y: np.zeros((1, 1)),
        growth_orders=(0.0, 1.0, 0.0), label="wild", vectorized=True,
        native_fs=NativeFastSlow.linear(-1.0, 50.0))
    with pytest.warns(errors.StiffnessWarning):
        averaging.simulate_fast_slow(wild, [1.0], [0.0], eps=1.0, T=2.0,
                                     fast_dt=0.1, n_paths=64, seed=2)


# ---------------------------------------------------------------------------
# corrector solves

def test_gbar_zero_coupling(decoupled, mu_ou_wide):
    out = averaging.estimate_G_bar(decoupled, [1.0], [[0.0], [1.0]],
                                   mu_ou_wide, horizon_N=2.0, n_paths=50,
                                   dt=0.01, seed=3)
    assert (out.solutions[0].u_values == 0.0).all()
    assert out.subtracted_constants[0] == 0.0


def test_gbar_benchmark_identity(benchmarks, mu_ou_wide):
    va, _, _, _ = benchmarks
    out = averaging.estimate_G_bar(va, [0.0], [[-1.0], [0.0], [1.0]],
                                   mu_ou_wide, horizon_N=10.0, n_paths=4000,
                                   dt=0.005, seed=4)
    sol = out.solutions[0]
    for q, u, se in zip(sol.query_points, sol.u_values, sol.stderrs):
        assert abs(u - q[0]) <= max(3 * se, 0.05)


def test_gbar_scales_with_y(benchmarks, mu_ou_wide):
    # G(x, y) = x sqrt(1+y^2): the corrector inherits the y factor
    _, vb, _, _ = benchmarks
    out = averaging.estimate_G_bar(vb, [2.0], [[1.0]], mu_ou_wide,
                                   horizon_N=10.0, n_paths=4000, dt=0.005,
                                   seed=5)
    u, se = out.solutions[0].value_at([1.0])
    assert abs(u - math.sqrt(5.0)) <= max(3 * se, 0.06)


def test_effective_coefficients_variant_a(benchmarks, mu_ou_wide):
    va, _, oracle, _ = benchmarks
    co = averaging.effective_coefficients(va, [2.0], mu_ou_wide, n_mu=256,
                                          n_paths=1024, horizon_N=8.0,
                                          dt=0.01, seed=6)
    assert abs(co.b_bar[0] - oracle.effective_drift(2.0)) <= 0.05 * 3
    assert abs(co.a_bar[0, 0] - 2.0) <= 0.1
    assert co.clip_fraction == 0.0
    assert abs(co.subtracted_constants[0]) < 0.01


def test_effective_coefficients_variant_b(benchmarks, mu_ou_wide):
    _, vb, _, oracle = benchmarks
    co = averaging.effective_coefficients(vb, [2.0], mu_ou_wide, n_mu=256,
                                          n_paths=1024, horizon_N=8.0,
                                          dt=0.01, seed=7)
    assert abs(co.b_bar[0]) <= 0.05 * 3
    assert abs(co.a_bar[0, 0] - 10.0) <= 0.05 * 10.0


def test_effective_zero_coupling_collapses(decoupled, mu_ou_wide):
    co = averaging.effective_coefficients(decoupled, [1.5], mu_ou_wide,
                                          n_mu=32, n_paths=50, horizon_N=2.0,
                                          dt=0.01, seed=8)
    assert co.b_bar[0] == pytest.approx(-1.5, abs=1e-12)
    assert co.a_bar[0, 0] == 0.0


def test_scaling_g_by_c_scales_a_by_c_squared(mu_ou_wide):
    va1, _, _, _ = benchmark_fast_slow(scale_g=1.0)
    va2, _, _, _ = benchmark_fast_slow(scale_g=2.0)
    kw = dict(n_mu=128, n_paths=512, horizon_N=8.0, dt=0.01, seed=9)
    c1 = averaging.effective_coefficients(va1, [1.0], mu_ou_wide, **kw)
    c2 = averaging.effective_coefficients(va2, [1.0], mu_ou_wide, **kw)
    band = 3 * math.hypot(4 * c1.a_stderr[0, 0], c2.a_stderr[0, 0])
    assert abs(c2.a_bar[0, 0] - 4 * c1.a_bar[0, 0]) <= band
    assert c2.F_bar[0] == c1.F_bar[0]  # F untouched by the coupling scale


def test_corrector_derivative_consistency(benchmarks, mu_ou_wide):
    # finite differences of the corrector across y match solves of the
    # derivative coupling (shared seeds cancel most of the noise)
    _, vb, _, _ = benchmarks
    y0, h = 1.0, 0.05
    q = [[-1.0], [0.5], [1.0]]
    kw = dict(mu_hat=mu_ou_wide, horizon_N=8.0, n_paths=3000, dt=0.01, seed=10)
    up = averaging.estimate_G_bar(vb, [y0 + h], q, **kw).solutions[0]
    dn = averaging.estimate_G_bar(vb, [y0 - h], q, **kw).solutions[0]
    fd = (up.u_values - dn.u_values) / (2 * h)
    co = averaging.effective_coefficients(vb, [y0], mu_ou_wide, n_mu=64,
                                          n_paths=512, horizon_N=8.0,
                                          dt=0.01, seed=11)
    # direct solve of the derivative coupling at the same query points
    from ergodiff import poisson as poisson_mod
    from ergodiff.averaging import _component_function
    fdg = _component_function(vb, [y0], 0, "dg:0")
    fdg_c = poisson_mod.center_function(fdg, mu_ou_wide)
    direct = poisson_mod.solve_poisson_mc(vb.fast, fdg_c, q, horizon_N=8.0,
                                          n_paths=3000, dt=0.01, seed=12)
    for i in range(len(q)):
        band = 3 * math.hypot(
            math.hypot(up.stderrs[i], dn.stderrs[i]) / (2 * h),
            direct.stderrs[i])
        assert abs(fd[i] - direct.u_values[i]) <= band


# ---------------------------------------------------------------------------
# Green-Kubo route

def test_green_kubo_zero_coupling(decoupled):
    t = np.arange(1, 2001) * 0.05
    run = sde.Path(t, np.zeros((2000, 1)))
    gk = averaging.green_kubo_diffusion(decoupled, [0.0], run, lag_max=5.0)
    assert gk.a_gk[0, 0] == 0.0


@pytest.fixture(scope="module")
def ou_long_run(ou):
    model, _ = ou
    burn = sde.run_final(model, np.zeros((1, 1)), 0.01, 2000,
                         rng.derive_seed(5, "burn"))
    rec, _ = sde.run_recorded(model, burn, 0.01, 1_000_000, 5,
                              rng.derive_seed(5, "run"))
    return sde.Path(np.arange(1, rec.shape[1] + 1) * 0.05, rec[0])


def test_green_kubo_benchmark(benchmarks, ou_long_run):
    va, _, _, _ = benchmarks
    gk = averaging.green_kubo_diffusion(va, [0.0], ou_long_run, lag_max=10.0)
    assert gk.plateau_found
    assert abs(gk.a_gk[0, 0] - 2.0) <= 3 * gk.stderr[0, 0] + 0.05


def test_green_kubo_agrees_with_direct(benchmarks, mu_ou_wide, ou_long_run):
    va, _, _, _ = benchmarks
    gk = averaging.green_kubo_diffusion(va, [0.0], ou_long_run, lag_max=10.0)
    co = averaging.effective_coefficients(va, [0.0], mu_ou_wide, n_mu=128,
                                          n_paths=1024, horizon_N=8.0,
                                          dt=0.01, seed=13)
    gap = abs(gk.a_gk[0, 0] - co.a_bar[0, 0])
    assert gap <= 3 * math.hypot(gk.stderr[0, 0], co.a_stderr[0, 0])


def test_green_kubo_no_plateau_flag(benchmarks, ou_long_run):
    va, _, _, _ = benchmarks
    gk = averaging.green_kubo_diffusion(va, [0.0], ou_long_run, lag_max=0.5)
    assert not gk.plateau_found
    assert gk.a_gk[0, 0] < 2.0  # partial value reported


# ---------------------------------------------------------------------------
# effective model and the limit diffusion

@pytest.fixture(scope="module")
def eff_a(benchmarks, mu_ou_wide):
    va, _, _, _ = benchmarks
    return averaging.build_effective_model(va, np.array([-5.0, -2.5, 0.0, 2.5, 5.0]),
                                           mu_ou_wide, n_mu=128, n_paths=768,
                                           horizon_N=8.0, dt=0.01, seed=14)


def test_effective_model_tables(eff_a, benchmarks):
    _, _, oracle, _ = benchmarks
    for i, y in enumerate(eff_a.axes[0]):
        assert abs(eff_a.b_bar[i, 0] - oracle.effective_drift(y)) \
            <= 0.05 * (1 + abs(y))
        assert abs(eff_a.a_bar[i, 0, 0] - 2.0) <= 0.15
        assert eff_a.sqrt_a[i, 0, 0] == pytest.approx(
            math.sqrt(eff_a.a_bar[i, 0, 0]), abs=1e-10)


def test_effective_model_interpolation_and_range(eff_a):
    mid = eff_a.drift_at([[1.25]])
    lo = eff_a.drift_at([[0.0]])
    hi = eff_a.drift_at([[2.5]])
    assert mid[0, 0] == pytest.approx(0.5 * (lo[0, 0] + hi[0, 0]), abs=1e-12)
    with pytest.raises(errors.InterpolationRangeError):
        eff_a.drift_at([[6.0]])


def test_effective_model_zero_coupling_root(decoupled, mu_ou_wide):
    eff = averaging.build_effective_model(decoupled, np.array([-1.0, 0.0, 1.0]),
                                          mu_ou_wide, n_mu=16, n_paths=50,
                                          horizon_N=2.0, dt=0.01, seed=15)
    assert (eff.sqrt_a == 0.0).all()
    # zero diffusion: the limit is the deterministic decay flow
    ens = averaging.simulate_limit(eff, [1.0], T=1.0, dt=0.01, n_paths=4,
                                   seed=16)
    assert np.abs(ens.terminal() - math.exp(-1.0)).max() < 0.01


def test_simulate_limit_marginal(eff_a, benchmarks):
    _, _, oracle, _ = benchmarks
    ens = averaging.simulate_limit(eff_a, [0.0], T=1.0, dt=0.01,
                                   n_paths=20_000, seed=17)
    m, v = oracle.limit_marginal(0.0, 1.0)
    term = ens.terminal()[:, 0]
    assert abs(term.mean() - m) < 3 * term.std() / math.sqrt(len(term))
    assert abs(term.var() - v) < 3 * math.sqrt(2.0 / len(term)) + 0.02


def test_simulate_limit_deterministic(eff_a):
    a = averaging.simulate_limit(eff_a, [0.5], T=0.5, dt=0.01, n_paths=8,
                                 seed=18)
    b = averaging.simulate_limit(eff_a, [0.5], T=0.5, dt=0.01, n_paths=8,
                                 seed=18)
    assert (a.states == b.states).all()


# ---------------------------------------------------------------------------
# weak convergence report

def test_same_law_distance_below_noise_floor(benchmarks):
    va, _, oracle, _ = benchmarks
    g1 = rng.stream(21, 0)
    g2 = rng.stream(22, 0)
    n = 4000
    m, v = oracle.limit_marginal(0.0, 1.0)
    a = m + math.sqrt(v) * g1.standard_normal(n)
    b = m + math.sqrt(v) * g2.standard_normal(n)
    assert stats.ks_two_sample(a, b) <= 1.36 * math.sqrt(2.0 / n)


def test_weak_convergence_ladder(benchmarks):
    va, _, oracle, _ = benchmarks
    times = np.array([0.5, 1.0])
    n = 4000
    g = rng.stream(rng.derive_seed(23, "limit"))
    snaps = np.empty((n, len(times), 1))
    for ti, t in enumerate(times):
        m, v = oracle.limit_marginal(0.0, float(t))
        snaps[:, ti, 0] = m + math.sqrt(v) * g.standard_normal(n)
    rep = averaging.weak_convergence_report(va, snaps, [0.0], [0.0],
                                            [0.4, 0.2, 0.1], times,
                                            n_paths=n, fast_dt=0.02, seed=24)
    assert (rep.trend > 0).all()
    assert (np.diff(rep.distances, axis=0) <= 0.01).all()
    assert rep.distances[-1, -1] <= 0.05


def test_weak_convergence_w1_kind(benchmarks):
    va, _, oracle, _ = benchmarks
    times = np.array([1.0])
    n = 1000
    g = rng.stream(25, 0)
    m, v = oracle.limit_marginal(0.0, 1.0)
    snaps = (m + math.sqrt(v) * g.standard_normal(n)).reshape(n, 1, 1)
    rep = averaging.weak_convergence_report(va, snaps, [0.0], [0.0],
                                            [0.4, 0.2], times, n_paths=n,
                                            fast_dt=0.02, seed=26,
                                            distance_kind="w1")
    assert rep.distance_kind == "w1"
    assert (rep.distances >= 0).all()


def test_report_csv_schema(benchmarks, tmp_path):
    va, _, oracle, _ = benchmarks
    times = np.array([0.5])
    g = rng.stream(27, 0)
    m, v = oracle.limit_marginal(0.0, 0.5)
    snaps = (m + math.sqrt(v) * g.standard_normal(500)).reshape(500, 1, 1)
    rep = averaging.weak_convergence_report(va, snaps, [0.0], [0.0],
                                            [0.5, 0.25], times, n_paths=500,
                                            fast_dt=0.05, seed=28)
    c, j = tmp_path / "c.csv", tmp_path / "c.json"
    rep.to_csv(c, j)
    assert c.read_text().splitlines()[0] == "eps,t,distance,trend_stat"
