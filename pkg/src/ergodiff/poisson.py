"""Monte Carlo solves of the generator equation L u = -f.

For a centered f (zero mean under the invariant measure) the solution is
the time integral of E_x f(X_s), estimated here by trapezoidal integrals
along simulated paths truncated at a horizon.  The module also verifies
the defining integral identity u(x) = E_x u(X_t) + E_x int_0^t f(X_s) ds
by a nested-solve residual, and checks centering and polynomial growth of
the estimated solution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import errors, rng, sde, stats
from .ergodicity import EmpiricalMeasure
from .kernels.specs import NativeScalar


@dataclass(frozen=True)
class CenterableFunction:
    """Scalar observable with declared polynomial growth.

    ``mu_mean`` is None until the function has been centered against an
    empirical invariant measure; the solver refuses uncentered input
    because the truncated integral would drift linearly in the horizon.
    """

    arity: int
    evaluator: Callable[[np.ndarray], float]
    growth_beta: float = 0.0
    mu_mean: Optional[float] = None
    mu_mean_stderr: float = 0.0
    declared_C: Optional[float] = None
    native: Optional[NativeScalar] = None
    vectorized: bool = False
    label: str = ""

    def __post_init__(self):
        if self.declared_C is not None:
            self.spot_check_growth()

    def batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.vectorized:
            vals = np.asarray(self.evaluator(X), dtype=float).ravel()
        else:
            vals = np.array([float(self.evaluator(x)) for x in X])
        if vals.size != X.shape[0]:
            raise ValueError("evaluator returned a wrong-sized batch")
        return vals

    def spot_check_growth(self, n_probes: int = 64, seed: int = 2024) -> None:
        """|f(x)| <= C (1 + |x|^beta) on random probes, for declared C."""
        g = rng.stream(rng.derive_seed(seed, "growthprobe"))
        X = g.standard_normal((n_probes, self.arity)) * 3.0
        vals = np.abs(self.batch(X))
        norms = np.sqrt(np.einsum("nc,nc->n", X, X))
        bound = self.declared_C * (1.0 + norms ** self.growth_beta)
        if (vals > bound + 1e-9).any():
            raise ValueError(
                f"function {self.label!r} violates its declared growth bound")


def from_native(spec: NativeScalar, growth_beta: float, label: str = "",
                declared_C: Optional[float] = None) -> CenterableFunction:
    """CenterableFunction whose evaluator mirrors a native descriptor."""
    from .kernels import pure

    def ev(X):
        return pure._eval_scalar(spec.kind, spec.params, np.atleast_2d(X))

    return CenterableFunction(arity=spec.dim_x, evaluator=ev,
                              growth_beta=growth_beta, native=spec,
                              vectorized=True, label=label, declared_C=declared_C)


@dataclass(frozen=True)
class PoissonSolution:
    """Pointwise solution estimates with uncertainty and truncation info."""

    query_points: np.ndarray
    u_values: np.ndarray
    stderrs: np.ndarray
    horizon_N: float
    tail_bound_estimate: float
    n_paths: int
    dt: float
    mu_sample_count: int = 0
    f_label: str = ""
    seed: int = 0

    def __post_init__(self):
        if (self.stderrs < 0).any():
            raise ValueError("stderrs must be nonnegative")
        if self.tail_bound_estimate < 0:
            raise ValueError("tail bound must be nonnegative")

    def value_at(self, x) -> tuple:
        x = np.asarray(x, dtype=float).ravel()
        idx = np.where((np.abs(self.query_points - x) < 1e-12).all(axis=1))[0]
        if not len(idx):
            raise KeyError(f"{x} is not a query point of this solution")
        i = int(idx[0])
        return float(self.u_values[i]), float(self.stderrs[i])

    def to_csv(self, csv_path, json_path) -> None:
        d = self.query_points.shape[1]
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join([f"x_{c + 1}" for c in range(d)] + ["u", "stderr"]) + "\n")
            for q, u, s in zip(self.query_points, self.u_values, self.stderrs):
                row = [sde.format_float(v) for v in q]
                row += [sde.format_float(u), sde.format_float(s)]
                fh.write(",".join(row) + "\n")
        meta = {"horizon_N": self.horizon_N, "tail_bound_estimate": self.tail_bound_estimate,
                "n_paths": self.n_paths, "dt": self.dt, "seed": self.seed,
                "mu_sample_count": self.mu_sample_count, "f_label": self.f_label}
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------

def center_function(f: CenterableFunction, mu_hat: EmpiricalMeasure) -> CenterableFunction:
    """Subtract the estimated invariant mean; records the constant.

    The returned function evaluates f - mu_hat(f); its ``mu_mean`` field
    holds the subtracted constant and ``mu_mean_stderr`` the batch-means
    error of that estimate.
    """
    vals = f.batch(mu_hat.samples)
    c = float(mu_hat.weights @ vals)
    se, _ = stats.batch_means_stderr(vals)
    base_ev = f.evaluator
    if f.vectorized:
        def ev(X, _c=c, _b=base_ev):
            return np.asarray(_b(X), dtype=float) - _c
    else:
        def ev(x, _c=c, _b=base_ev):
            return float(_b(x)) - _c
    native = f.native.shifted(-c) if f.native is not None else None
    return replace(f, evaluator=ev, mu_mean=c, mu_mean_stderr=se, native=native,
                   declared_C=None)


def _checkpoint_layout(n_steps: int, wanted: int = 10) -> int:
    for k in range(wanted, 0, -1):
        if n_steps % k == 0:
            return k
    return 1


def solve_poisson_mc(model: sde.SdeModel, f: CenterableFunction, query_points,
                     horizon_N: float, n_paths: int, dt: float, seed: int,
                     mu_sample_count: int = 0) -> PoissonSolution:
    """u(x) as the path-average trapezoidal integral of f over [0, N].

    Each query point runs its own path budget on its own stream, so adding
    query points never perturbs existing ones.  The tail estimate
    extrapolates the last checkpoint increments geometrically; it is a
    heuristic quality indicator, not a bound.
    """
    if f.mu_mean is None:
        raise errors.UncenteredInput(
            "solve requires a centered function (apply center_function first)")
    query_points = np.atleast_2d(np.asarray(query_points, dtype=float))
    n_q = query_points.shape[0]
    n_steps = round(horizon_N / dt)
    if n_steps < 1 or abs(n_steps * dt - horizon_N) > 1e-9:
        raise ValueError("horizon_N must be a positive multiple of dt")
    n_ck = _checkpoint_layout(n_steps)
    every = n_steps // n_ck
    u = np.empty(n_q)
    se = np.empty(n_q)
    tails = np.empty(n_q)
    drift_flags = []
    # query points run in groups of stacked per-point streams: identical
    # bits to solving each point alone, but one wide vectorized ensemble
    group_w = max(1, min(n_q, 262144 // max(1, n_paths)))
    for g0 in range(0, n_q, group_w):
        pts = query_points[g0:g0 + group_w]
        gsz = len(pts)
        x0s = np.repeat(pts, n_paths, axis=0)
        sup = rng.GroupedNoise(
            [(rng.derive_seed(seed, "poisson", g0 + k), 0) for k in range(gsz)],
            n_paths, model.dim_noise)
        ckpts, integrals, _ = sde.run_integrals(
            model, f, x0s, dt, n_steps, every, 0, noise_supplier=sup)
        integrals = integrals.reshape(gsz, n_paths)
        ckpts = ckpts.reshape(gsz, n_paths, n_ck)
        for k in range(gsz):
            qi = g0 + k
            u[qi] = float(integrals[k].mean())
            se[qi] = (float(integrals[k].std(ddof=1) / math.sqrt(n_paths))
                      if n_paths > 1 else 0.0)
            tails[qi] = _tail_estimate(ckpts[k], n_paths)
            if n_ck >= 2:
                half = n_ck // 2
                late = (ckpts[k][:, -1] - ckpts[k][:, half - 1]) * (2.0 / horizon_N)
                est = float(late.mean())
                ese = (float(late.std(ddof=1) / math.sqrt(n_paths))
                       if n_paths > 1 else 0.0)
                drift_flags.append((est, ese))
    if drift_flags:
        # pooled over query points: a truncated integral of an uncentered
        # input drifts the late window systematically at every point, while
        # per-point wiggles of the size of the centering error are expected
        est_all = float(np.mean([e for e, _ in drift_flags]))
        se_all = float(np.sqrt(np.sum([s * s for _, s in drift_flags]))
                       / len(drift_flags))
        band = 3.0 * math.hypot(se_all, f.mu_mean_stderr)
        if abs(est_all) > band and abs(est_all) > 1e-12:
            raise errors.UncenteredInput(
                f"late-window mean of f along paths is {est_all:.4g} "
                f"(tolerance {band:.4g}); the input looks uncentered")
    return PoissonSolution(query_points, u, se, horizon_N, float(tails.max()),
                           n_paths, dt, mu_sample_count, f.label, seed)


def _tail_estimate(ckpts: np.ndarray, n_paths: int) -> float:
    """Geometric extrapolation of the remaining integral mass.

    When the last increments are statistically indistinguishable from
    zero, no ratio is meaningful and the last increment magnitude itself
    is reported instead of an extrapolation.
    """
    mean_ck = ckpts.mean(axis=0)
    if mean_ck.size < 3:
        return float(abs(mean_ck[-1] - mean_ck[-2])) if mean_ck.size == 2 else 0.0
    a1 = mean_ck[-2] - mean_ck[-3]
    a2 = mean_ck[-1] - mean_ck[-2]
    inc = ckpts[:, -1] - ckpts[:, -2]
    inc_se = (float(inc.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0)
    if abs(a2) <= 3.0 * inc_se or abs(a1) <= 3.0 * inc_se or abs(a1) < 1e-300:
        return float(abs(a2))
    rho = min(max(a2 / a1, 0.0), 0.95)
    return float(abs(a2) * rho / (1.0 - rho)) if rho > 0 else float(abs(a2))


@dataclass(frozen=True)
class ResidualTable:
    query_points: np.ndarray
    residuals: np.ndarray
    stderrs: np.ndarray
    t: float


def poisson_residual(model: sde.SdeModel, solution: PoissonSolution,
                     f: CenterableFunction, t: float, n_paths: int, seed: int,
                     n_inner: Optional[int] = None) -> ResidualTable:
    """Residual of u(x) - E_x u(X_t) - E_x int_0^t f ds at the solution's points.

    E_x u(X_t) is re-estimated by fresh nested solves at simulated
    endpoints with a reduced budget (default sqrt of the outer budget);
    endpoint integrals and endpoint solves share outer paths, so their
    covariance is captured by the path-level spread.
    """
    if f.mu_mean is None:
        raise errors.UncenteredInput("residual requires the centered function")
    dt = solution.dt
    n_steps_t = round(t / dt)
    if n_steps_t < 1 or abs(n_steps_t * dt - t) > 1e-9:
        raise ValueError("t must be a positive multiple of dt")
    n_inner = n_inner or max(2, round(math.sqrt(n_paths)))
    n_steps_N = round(solution.horizon_N / dt)
    residuals = np.empty(len(solution.query_points))
    stderrs = np.empty(len(solution.query_points))
    for qi, x in enumerate(solution.query_points):
        x0s = np.tile(x, (n_paths, 1))
        _, integrals_t, finals = sde.run_integrals(
            model, f, x0s, dt, n_steps_t, n_steps_t,
            rng.derive_seed(seed, "residual-outer", qi), pooled_stream=0)
        inner_x0 = np.repeat(finals, n_inner, axis=0)
        _, inner_int, _ = sde.run_integrals(
            model, f, inner_x0, dt, n_steps_N, n_steps_N,
            rng.derive_seed(seed, "residual-inner", qi), pooled_stream=0)
        u_end = inner_int.reshape(n_paths, n_inner).mean(axis=1)
        total = u_end + integrals_t
        u_x, se_x = solution.value_at(x)
        residuals[qi] = u_x - float(total.mean())
        se_total = float(total.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
        stderrs[qi] = math.sqrt(se_total ** 2 + se_x ** 2)
    return ResidualTable(solution.query_points, residuals, stderrs, t)


@dataclass(frozen=True)
class CenteringGrowthResult:
    mu_u: float
    mu_u_stderr: float
    growth_sup: float
    growth_exponent: float
    m_inequality_ok: Optional[bool]


def centering_and_growth_check(solution: PoissonSolution, mu_hat: EmpiricalMeasure,
                               beta: Optional[float], m: float) -> CenteringGrowthResult:
    """Invariant-mean of the estimated solution plus a growth-ratio sup.

    The first ``mu_sample_count`` query points must be measure samples
    (see solve_with_mu_samples); the remaining points act as far-field
    probes.  The growth ratio uses beta when declared, else m; the
    moment-order inequality m > beta + 4 is flagged, not enforced.
    """
    k = solution.mu_sample_count
    if k < 1:
        raise ValueError("solution has no measure-sample query points")
    mu_u = float(solution.u_values[:k].mean())
    mu_se = float(np.sqrt(np.sum(solution.stderrs[:k] ** 2)) / k)
    exponent = beta if (beta is not None and beta > 0) else m
    pts = solution.query_points
    norms = np.sqrt(np.einsum("nc,nc->n", pts, pts))
    ratios = np.abs(solution.u_values) / (1.0 + norms ** exponent)
    ok = (m > beta + 4) if beta is not None else None
    return CenteringGrowthResult(mu_u, mu_se, float(ratios.max()),
                                 float(exponent), ok)


def solve_with_mu_samples(model: sde.SdeModel, f: CenterableFunction,
                          mu_hat: EmpiricalMeasure, n_mu: int, probes,
                          horizon_N: float, n_paths: int, dt: float,
                          seed: int) -> PoissonSolution:
    """Solve at a measure subsample plus far-field probes.

    In one dimension the subsample takes empirical quantile midpoints
    (deterministic, low variance for measure averages); in higher
    dimension a seeded uniform subsample is used.
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if mu_hat.dim == 1:
        idx = stats.quantile_stratified_indices(mu_hat.samples[:, 0], n_mu)
    else:
        g = rng.stream(rng.derive_seed(seed, "musub"))
        idx = g.choice(len(mu_hat.samples), size=n_mu, replace=False)
        idx = np.sort(idx)
    mu_points = mu_hat.samples[idx]
    query = np.concatenate([mu_points, probes], axis=0)
    return solve_poisson_mc(model, f, query, horizon_N, n_paths, dt, seed,
                            mu_sample_count=n_mu)
