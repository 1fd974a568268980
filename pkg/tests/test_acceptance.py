"""Acceptance suite: every shipped claim at its stated tolerance.

One test per criterion (split where a criterion has independent clauses);
each prints a PASS/FAIL line.  Budgets follow the stated runtime limits;
tolerances are pinned here, not tuned at run time.

Known red: the exit-probe threshold clause (criterion 10a) asserts
p_min > 0.05 for the linear-drift model at R=1, t0=2, but the exact
Gaussian transition value — the clause's own validation oracle — is
inf_x P_x(|X_2| >= 2) = 0.0435 < 0.05, so the clause fails by
construction.  It is implemented faithfully and left failing; see the
quadrature cross-check in criterion 10b, which passes.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats as sps

from ergodiff import averaging, ergodicity, poisson, rng, runner, sde, stats
from ergodiff.models import (
    benchmark_fast_slow,
    degenerate_example_model,
    f_coord,
    f_square_centered,
    ou_model,
)

TIMINGS = {}


def _report(tag, ok, detail):
    print(f"ACCEPTANCE {tag}: {'PASS' if ok else 'FAIL'} - {detail}")


@pytest.fixture(scope="module")
def ou_acc():
    return ou_model()


@pytest.fixture(scope="module")
def mu_dense(ou_acc):
    """Criterion 1 measure: 10^6 samples along one trajectory."""
    model, _ = ou_acc
    t0 = time.perf_counter()
    mu = ergodicity.estimate_invariant_measure(
        model, burn_in=20.0, n_samples=1_000_000, thinning_time=0.1,
        seed=90_001, dt=0.01)
    TIMINGS["mu_dense"] = time.perf_counter() - t0
    return mu


@pytest.fixture(scope="module")
def mu_wide(ou_acc):
    """Centering-grade measure: 10^6 nearly independent samples.

    The fine step keeps the scheme bias of the second moment (~dt/2)
    below the sampling error; the solves center even functions against
    this measure, so its moment bias would otherwise drift them by
    bias * horizon.
    """
    model, _ = ou_acc
    return ergodicity.estimate_invariant_measure(
        model, burn_in=20.0, n_samples=1_000_000, thinning_time=2.0,
        seed=90_002, dt=0.005)


@pytest.fixture(scope="module")
def solves_c2(ou_acc, mu_wide):
    model, _ = ou_acc
    query = np.array([[-2.0], [-1.0], [0.0], [1.0], [2.0]])
    t0 = time.perf_counter()
    fc = poisson.center_function(f_coord(), mu_wide)
    fq = poisson.center_function(f_square_centered(), mu_wide)
    sol_x = poisson.solve_poisson_mc(model, fc, query, horizon_N=10.0,
                                     n_paths=10_000, dt=1e-3, seed=90_010)
    sol_q = poisson.solve_poisson_mc(model, fq, query, horizon_N=10.0,
                                     n_paths=10_000, dt=1e-3, seed=90_011)
    TIMINGS["c2"] = time.perf_counter() - t0
    return fc, fq, sol_x, sol_q


@pytest.fixture(scope="module")
def effective_tables(mu_wide):
    """Criterion 5 artifacts: both benchmark variants on y = -3..3."""
    va, vb, _, _ = benchmark_fast_slow()
    grid = np.arange(-3.0, 3.0 + 1e-9, 0.5)
    t0 = time.perf_counter()
    eff_a = averaging.build_effective_model(va, grid, mu_wide, n_mu=256,
                                            n_paths=1024, horizon_N=8.0,
                                            dt=0.01, seed=90_050)
    eff_b = averaging.build_effective_model(vb, grid, mu_wide, n_mu=256,
                                            n_paths=1024, horizon_N=8.0,
                                            dt=0.01, seed=90_051)
    TIMINGS["c5"] = time.perf_counter() - t0
    return eff_a, eff_b


def test_c01_invariant_measure(ou_acc, mu_dense):
    """n=10^6: mean within 3 stderr of 0, variance within 2% of 1, <1 min."""
    mean = float(mu_dense.mean()[0])
    se, _ = stats.batch_means_stderr(mu_dense.samples[:, 0])
    var = float(mu_dense.samples[:, 0].var())
    ok_mean = abs(mean) <= 3 * se
    ok_var = abs(var - 1.0) <= 0.02
    ok_time = TIMINGS["mu_dense"] < 60.0
    _report("c01-invariant",
            ok_mean and ok_var and ok_time,
            f"mean={mean:.5f} (3se={3 * se:.5f}), var={var:.5f}, "
            f"time={TIMINGS['mu_dense']:.1f}s")
    assert ok_mean and ok_var and ok_time


def test_c02_poisson_solver_vs_closed_form(solves_c2):
    """u(x)=x and u(x)=(x^2-1)/2 within max(3 stderr, 0.05), <2 min."""
    _, _, sol_x, sol_q = solves_c2
    worst = 0.0
    ok = True
    for q, u, se in zip(sol_x.query_points, sol_x.u_values, sol_x.stderrs):
        err = abs(u - q[0])
        worst = max(worst, err)
        ok &= err <= max(3 * se, 0.05)
    for q, u, se in zip(sol_q.query_points, sol_q.u_values, sol_q.stderrs):
        err = abs(u - (q[0] ** 2 - 1.0) / 2.0)
        worst = max(worst, err)
        ok &= err <= max(3 * se, 0.05)
    ok_time = TIMINGS["c2"] < 120.0
    _report("c02-poisson", ok and ok_time,
            f"worst |error|={worst:.4f}, time={TIMINGS['c2']:.1f}s")
    assert ok and ok_time


def test_c03_integral_equation_residual(ou_acc, mu_wide):
    """Residual of the defining identity at x in {0,1,2}, t=1."""
    model, _ = ou_acc
    fc = poisson.center_function(f_coord(), mu_wide)
    sol = poisson.solve_poisson_mc(model, fc, [[0.0], [1.0], [2.0]],
                                   horizon_N=10.0, n_paths=10_000, dt=1e-3,
                                   seed=90_030)
    res = poisson.poisson_residual(model, sol, fc, t=1.0, n_paths=1024,
                                   seed=90_031)
    ok = True
    for r, se in zip(res.residuals, res.stderrs):
        ok &= abs(r) <= max(3 * se, 0.05)
    worst = float(np.abs(res.residuals).max())
    _report("c03-residual", ok, f"worst |residual|={worst:.4f}, "
            f"stderrs={np.round(res.stderrs, 4).tolist()}")
    assert ok


def test_c04_solution_centering(ou_acc, mu_wide):
    """|mu_hat(u_hat)| <= 0.02 for the f(x)=x solve."""
    model, _ = ou_acc
    fc = poisson.center_function(f_coord(), mu_wide)
    probes = np.array([[-5.0], [-3.0], [3.0], [5.0]])
    sol = poisson.solve_with_mu_samples(model, fc, mu_wide, n_mu=256,
                                        probes=probes, horizon_N=10.0,
                                        n_paths=2000, dt=0.01, seed=90_040)
    out = poisson.centering_and_growth_check(sol, mu_wide, beta=1.0, m=6.0)
    ok = abs(out.mu_u) <= 0.02
    _report("c04-centering", ok,
            f"mu(u)={out.mu_u:.5f} (solve stderr {out.mu_u_stderr:.5f})")
    assert ok


def test_c05_effective_coefficients(effective_tables):
    """Variant A: b=-y +-0.05(1+|y|), a=2 +-0.1; variant B: b=0, a=2(1+y^2) +-5%."""
    eff_a, eff_b = effective_tables
    ys = eff_a.axes[0]
    ok = True
    worst_a = worst_b = 0.0
    for i, y in enumerate(ys):
        da = abs(eff_a.b_bar[i, 0] - (-y))
        ok &= da <= 0.05 * (1 + abs(y))
        va = abs(eff_a.a_bar[i, 0, 0] - 2.0)
        ok &= va <= 0.1
        worst_a = max(worst_a, va)
        db = abs(eff_b.b_bar[i, 0])
        ok &= db <= 0.05 * (1 + abs(y))
        target = 2.0 * (1 + y * y)
        vb_err = abs(eff_b.a_bar[i, 0, 0] - target)
        ok &= vb_err <= 0.05 * target
        worst_b = max(worst_b, vb_err / target)
    ok_time = TIMINGS["c5"] < 600.0
    _report("c05-effective", ok and ok_time,
            f"worst |a_A-2|={worst_a:.4f}, worst rel a_B err={worst_b:.4f}, "
            f"time={TIMINGS['c5']:.1f}s")
    assert ok and ok_time


def test_c06_green_kubo_vs_direct(ou_acc, effective_tables):
    """Autocorrelation route agrees with the direct route, both variants."""
    model, _ = ou_acc
    va, vb, _, _ = benchmark_fast_slow()
    eff_a, eff_b = effective_tables
    burn = sde.run_final(model, np.zeros((1, 1)), 0.01, 2000,
                         rng.derive_seed(90_060, "burn"))
    rec, _ = sde.run_recorded(model, burn, 0.01, 2_000_000, 5,
                              rng.derive_seed(90_060, "run"))
    run = sde.Path(np.arange(1, rec.shape[1] + 1) * 0.05, rec[0])
    ok = True
    details = []
    for system, eff, y in ((va, eff_a, 0.0), (vb, eff_b, 1.0)):
        gk = averaging.green_kubo_diffusion(system, [y], run, lag_max=10.0)
        node = int(np.argmin(np.abs(eff.axes[0] - y)))
        direct = float(eff.a_bar[node, 0, 0])
        d_se = float(eff.a_stderr[node, 0, 0])
        gap = abs(float(gk.a_gk[0, 0]) - direct)
        band = 3 * math.hypot(float(gk.stderr[0, 0]), d_se)
        ok &= gap <= band
        details.append(f"{system.label}: gk={gk.a_gk[0, 0]:.3f} "
                       f"direct={direct:.3f} gap={gap:.3f} band={band:.3f}")
    _report("c06-green-kubo", ok, "; ".join(details))
    assert ok


def test_c07_weak_convergence(ou_acc):
    """KS to the limit marginal decreasing in eps; <=0.05 at eps=0.1."""
    va, _, oracle, _ = benchmark_fast_slow()
    times = np.array([0.25, 0.5, 0.75, 1.0])
    n = 10_000
    t0 = time.perf_counter()
    g = rng.stream(rng.derive_seed(90_070, "limit"))
    snaps = np.empty((n, len(times), 1))
    for ti, t in enumerate(times):
        m, v = oracle.limit_marginal(0.0, float(t))
        snaps[:, ti, 0] = m + math.sqrt(v) * g.standard_normal(n)
    rep = averaging.weak_convergence_report(va, snaps, [0.0], [0.0],
                                            [0.4, 0.2, 0.1], times,
                                            n_paths=n, fast_dt=0.02,
                                            seed=90_071)
    ens, _, _ = averaging.simulate_fast_slow(va, [0.0], [0.0], eps=0.1, T=1.0,
                                             fast_dt=0.02, n_paths=n,
                                             seed=90_072)
    m1, v1 = oracle.limit_marginal(0.0, 1.0)
    ks_exact = stats.ks_against_cdf(
        ens.terminal()[:, 0], lambda x: sps.norm.cdf(x, m1, math.sqrt(v1)))
    elapsed = time.perf_counter() - t0
    ok_trend = bool((rep.trend > 0).all())
    ok_final = ks_exact <= 0.05
    ok_time = elapsed < 600.0
    _report("c07-weak-convergence", ok_trend and ok_final and ok_time,
            f"KS(eps=0.1, t=1) vs exact = {ks_exact:.4f}, "
            f"trend={np.round(rep.trend, 2).tolist()}, time={elapsed:.1f}s")
    assert ok_trend and ok_final and ok_time


def test_c08_mixing_curve(ou_acc, mu_dense):
    """TV from x0=3: <=0.05 at t=5, nonincreasing, rate dominates k+1<=2."""
    model, oracle = ou_acc
    spec = stats.HistogramSpec((-5.0,), (5.0,), (40,))
    times = np.array([0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0])
    rep = ergodicity.tv_decay_curve(model, [3.0], times, mu_dense,
                                    n_paths=20_000, binning=spec, seed=90_080)
    ok_final = rep.tv_estimates[-1] <= 0.05
    ok_mono = all(
        rep.tv_estimates[i + 1] <= rep.tv_estimates[i]
        + 2 * (rep.noise_bands[i] + rep.noise_bands[i + 1])
        for i in range(len(times) - 1))
    ok_rate = rep.fitted_rate[1] >= 2.0
    _report("c08-mixing", ok_final and ok_mono and ok_rate,
            f"tv(5)={rep.tv_estimates[-1]:.4f}, exponent={rep.fitted_rate[1]:.2f}")
    assert ok_final and ok_mono and ok_rate


def test_c09_doeblin_diagnostic(ou_acc):
    """q_hat >= 0.2 for the linear model; positive and seed-consistent for
    the degenerate model."""
    model, _ = ou_acc
    est = ergodicity.doeblin_overlap_estimate(
        model, R=2.0, t_B=1.0, n0=1,
        grid=[[-2.0], [-1.0], [0.0], [1.0], [2.0]], n_chains=1500,
        seed=90_090)
    ok_ou = est.q_hat >= 0.2
    dm = degenerate_example_model(0.1)
    grid2 = [[-1.5, 0.0], [0.0, -1.5], [0.0, 0.0], [1.5, 0.0], [0.0, 1.5]]
    e1 = ergodicity.doeblin_overlap_estimate(dm, R=2.0, t_B=1.0, n0=1,
                                             grid=grid2, n_chains=800,
                                             seed=90_091)
    e2 = ergodicity.doeblin_overlap_estimate(dm, R=2.0, t_B=1.0, n0=1,
                                             grid=grid2, n_chains=800,
                                             seed=90_092)
    gap = abs(e1.q_hat - e2.q_hat)
    band = 3 * math.hypot(e1.q_stderr, e2.q_stderr) + 0.01
    ok_deg = e1.q_hat > 0 and e2.q_hat > 0 and gap <= band
    _report("c09-doeblin", ok_ou and ok_deg,
            f"q_ou={est.q_hat:.3f}, q_deg={e1.q_hat:.4f}/{e2.q_hat:.4f} "
            f"(gap {gap:.4f} vs band {band:.4f})")
    assert ok_ou and ok_deg


def test_c10a_exit_probe_quadrature_and_degenerate(ou_acc):
    """Probe matches the exact Gaussian transition; degenerate p_min > 0."""
    model, _ = ou_acc
    grid = [[-1.0], [-0.5], [0.0], [0.5], [1.0]]
    res = ergodicity.exit_time_probe(model, R=1.0, t0=2.0, grid=grid,
                                     n_paths=20_000, seed=90_100)

    def p_exact(x):
        s = math.sqrt(1 - math.exp(-4.0))
        m = x * math.exp(-2.0)
        return sps.norm.sf((2 - m) / s) + sps.norm.cdf((-2 - m) / s)

    exact = np.array([p_exact(g[0]) for g in grid])
    ok_quad = all(abs(p - e) <= 3 * se + 0.003
                  for p, e, se in zip(res.p_values, exact, res.stderrs))
    dm = degenerate_example_model(0.1)
    dres = ergodicity.exit_time_probe(
        dm, R=1.0, t0=2.0,
        grid=[[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [1.0, 0.0]],
        n_paths=30_000, seed=90_101)
    ok_deg = dres.p_min > 0.0
    _report("c10a-exit-probe", ok_quad and ok_deg,
            f"p_min={res.p_min:.4f} (exact inf {exact.min():.4f}), "
            f"degenerate p_min={dres.p_min:.5f}")
    assert ok_quad and ok_deg


def test_c10b_exit_probe_threshold_as_stated(ou_acc):
    """Stated clause p_min > 0.05: contradicted by its own oracle.

    The exact infimum is 2 Phi-bar(2 / sqrt(1 - e^-4)) = 0.04353, so this
    clause cannot pass while the quadrature cross-check (c10a) holds; see
    the module docstring.  Kept faithful and red.
    """
    model, _ = ou_acc
    res = ergodicity.exit_time_probe(model, R=1.0, t0=2.0,
                                     grid=[[-1.0], [-0.5], [0.0], [0.5], [1.0]],
                                     n_paths=20_000, seed=90_100)
    ok = res.p_min > 0.05
    _report("c10b-exit-threshold", ok,
            f"p_min={res.p_min:.4f} vs required > 0.05 "
            f"(exact infimum 0.0435; known spec defect, see ledger)")
    assert ok, ("stated threshold 0.05 exceeds the exact infimum 0.0435; "
                "criterion unattainable as written")


def test_c11_sup_growth(ou_acc):
    """eps * sup-moment strictly decreasing over the eps ladder."""
    model, _ = ou_acc
    tab = ergodicity.sup_growth_diagnostic(model, p=2.0, T=1.0,
                                           eps_list=[0.4, 0.2, 0.1],
                                           n_paths=2000, seed=90_110)
    ok = bool(tab.values[0] > tab.values[1] > tab.values[2])
    _report("c11-sup-growth", ok,
            f"values={np.round(tab.values, 3).tolist()}")
    assert ok


def test_c12_determinism(tmp_path, monkeypatch):
    """Identical config+seed emits byte-identical CSVs at any thread count."""
    cfg = runner.validate_config({
        "experiment": "invariant", "model": "ou", "seed": 90_120,
        "params": {"burn_in": 5.0, "n_samples": 50_000,
                   "thinning_time": 0.05, "dt": 0.01},
        "tolerances": {"mean_sigmas": 4.0},
    })
    outs = []
    for threads, name in (("1", "a"), ("2", "b"), ("1", "c")):
        monkeypatch.setenv("ERGODIFF_THREADS", threads)
        rep = runner.run_experiment(cfg)
        runner.emit_report(rep, tmp_path / name)
        csvs = sorted((tmp_path / name).glob("*.csv"))
        outs.append({p.name: p.read_bytes() for p in csvs})
    ok = outs[0] == outs[1] == outs[2]
    _report("c12-determinism", ok,
            f"{len(outs[0])} CSV files byte-identical across thread counts")
    assert ok
