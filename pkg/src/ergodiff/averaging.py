"""Slow-fast systems, effective coefficients, and weak-convergence checks.

The slow component of

    dX_s = eps^-2 b(X) ds + eps^-1 sigma(X) dB_s
    dY_s/ds = F(X, Y) + eps^-1 G(X, Y)

converges (weakly, as eps -> 0) to a diffusion whose drift and covariance
are invariant-measure integrals of F, G and the corrector solves of G.
This module simulates the coupled system in fast time (which removes the
stiff eps^-1 term from the explicit update), builds the corrector by
Monte Carlo Poisson solves, tabulates the effective coefficients on a
grid, simulates the limiting diffusion, and reports marginal-distribution
distances across an eps ladder.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import errors, poisson, rng, sde, stats
from .ergodicity import EmpiricalMeasure
from .kernels.specs import FS_LIN, NativeFastSlow, NativeScalar


@dataclass(frozen=True)
class FastSlowSystem:
    """Coupled fast diffusion and slow forced variable.

    F, G map (x, y) -> R^ell (pointwise, or batched when ``vectorized``);
    grad_y_G returns the (ell, ell) Jacobian in y.  Consistency of
    grad_y_G with G is spot-checked by central differences at
    construction.  ``growth_orders`` declares the polynomial orders
    (q1, q2, q3) of F, G, grad_y_G in |x|; with ``growth_K`` set, the
    bounds K(1+|y|)(1+|x|^q) are probed at random points.
    """

    fast: sde.SdeModel
    dim_y: int
    F: Callable
    G: Callable
    grad_y_G: Callable
    growth_orders: tuple = (1.0, 1.0, 0.0)
    growth_K: Optional[float] = None
    label: str = ""
    vectorized: bool = False
    native_fs: Optional[NativeFastSlow] = None

    def __post_init__(self):
        self._check_gradient()
        if self.growth_K is not None:
            self._check_growth()

    def batch_F(self, X, Y):
        return self._batch(self.F, X, Y)

    def batch_G(self, X, Y):
        return self._batch(self.G, X, Y)

    def _batch(self, fn, X, Y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if self.vectorized:
            out = np.asarray(fn(X, Y), dtype=float)
        else:
            out = np.stack([np.asarray(fn(x, y), dtype=float).ravel()
                            for x, y in zip(X, Y)])
        return out.reshape(X.shape[0], self.dim_y)

    def grad_at(self, x, y) -> np.ndarray:
        return np.asarray(self.grad_y_G(np.asarray(x, dtype=float),
                                        np.asarray(y, dtype=float)),
                          dtype=float).reshape(self.dim_y, self.dim_y)

    def _check_gradient(self, n_probes: int = 8, step: float = 1e-5,
                        rtol: float = 1e-4) -> None:
        g = rng.stream(rng.derive_seed(7, "gradprobe", self.label))
        for _ in range(n_probes):
            x = g.standard_normal(self.fast.dim_x)
            y = g.standard_normal(self.dim_y)
            jac = self.grad_at(x, y)
            for i in range(self.dim_y):
                e = np.zeros(self.dim_y)
                e[i] = step
                fd = (self._batch(self.G, x[None], (y + e)[None])[0]
                      - self._batch(self.G, x[None], (y - e)[None])[0]) / (2 * step)
                err = np.abs(fd - jac[:, i]) / np.maximum(1.0, np.abs(jac[:, i]))
                if (err > rtol).any():
                    raise ValueError(
                        f"grad_y_G inconsistent with G at probe (x={x}, y={y}): "
                        f"max rel err {err.max():.2e}")

    def _check_growth(self, n_probes: int = 64) -> None:
        g = rng.stream(rng.derive_seed(7, "growthprobe", self.label))
        q1, q2, q3 = self.growth_orders
        K = self.growth_K
        X = 3.0 * g.standard_normal((n_probes, self.fast.dim_x))
        Y = 3.0 * g.standard_normal((n_probes, self.dim_y))
        nx = np.sqrt(np.einsum("nc,nc->n", X, X))
        ny = np.sqrt(np.einsum("nc,nc->n", Y, Y))
        fv = np.abs(self.batch_F(X, Y)).max(axis=1)
        gv = np.abs(self.batch_G(X, Y)).max(axis=1)
        if (fv > K * (1 + ny) * (1 + nx ** q1) + 1e-9).any():
            raise ValueError("F violates its declared growth bound")
        if (gv > K * (1 + ny) * (1 + nx ** q2) + 1e-9).any():
            raise ValueError("G violates its declared growth bound")
        for x, y, nxi in zip(X, Y, nx):
            if np.abs(self.grad_at(x, y)).max() > K * (1 + nxi ** q3) + 1e-9:
                raise ValueError("grad_y_G violates its declared growth bound")


@dataclass(frozen=True)
class EffectiveModel:
    """Tabulated limiting-diffusion coefficients with interpolation.

    ``axes`` holds one strictly increasing node array per slow dimension;
    coefficient arrays have the grid shape followed by (ell,) or
    (ell, ell).  Queries outside the grid raise rather than extrapolate.
    """

    axes: tuple
    b_bar: np.ndarray
    a_bar: np.ndarray
    sqrt_a: np.ndarray
    b_stderr: np.ndarray
    a_stderr: np.ndarray
    clip_fractions: np.ndarray
    label: str = ""

    def __post_init__(self):
        ell = len(self.axes)
        grid_shape = tuple(len(a) for a in self.axes)
        if self.b_bar.shape != grid_shape + (ell,):
            raise ValueError("b_bar has the wrong shape")
        if self.a_bar.shape != grid_shape + (ell, ell):
            raise ValueError("a_bar has the wrong shape")
        asym = np.abs(self.a_bar - np.swapaxes(self.a_bar, -1, -2)).max()
        if asym > 1e-12:
            raise ValueError("a_bar must be symmetric after repair")
        flat_a = self.a_bar.reshape(-1, ell, ell)
        eigs = np.linalg.eigvalsh(flat_a)
        if eigs.min() < -1e-12:
            raise ValueError("repaired a_bar must be PSD")
        recon = np.einsum("nij,nkj->nik", self.sqrt_a.reshape(-1, ell, ell),
                          self.sqrt_a.reshape(-1, ell, ell))
        if np.abs(recon - flat_a).max() > 1e-10:
            raise ValueError("sqrt_a must factor a_bar to 1e-10")

    @property
    def dim_y(self) -> int:
        return len(self.axes)

    def _interp(self, table, Y):
        ell = self.dim_y
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        for c in range(ell):
            lo, hi = self.axes[c][0], self.axes[c][-1]
            if (Y[:, c] < lo - 1e-12).any() or (Y[:, c] > hi + 1e-12).any():
                raise errors.InterpolationRangeError(
                    f"query left the coefficient grid along dimension {c}")
        flat = table.reshape(table.shape[:ell] + (-1,))
        itp = RegularGridInterpolator(self.axes, flat, method="linear",
                                      bounds_error=False, fill_value=None)
        out = itp(np.clip(Y, [a[0] for a in self.axes], [a[-1] for a in self.axes]))
        return out.reshape(Y.shape[0], *table.shape[ell:])

    def drift_at(self, Y) -> np.ndarray:
        return self._interp(self.b_bar, Y)

    def covariance_at(self, Y) -> np.ndarray:
        return self._interp(self.a_bar, Y)

    def root_at(self, Y) -> np.ndarray:
        return self._interp(self.sqrt_a, Y)

    def to_sde_model(self) -> sde.SdeModel:
        ell = self.dim_y
        return sde.SdeModel(
            dim_x=ell, dim_noise=ell,
            drift=lambda Y: self.drift_at(Y),
            diffusion=lambda Y: self.root_at(Y),
            label=f"{self.label}-limit", vectorized=True)

    def to_csv(self, csv_path, json_path) -> None:
        ell = self.dim_y
        nodes = np.stack(np.meshgrid(*self.axes, indexing="ij"),
                         axis=-1).reshape(-1, ell)
        b = self.b_bar.reshape(-1, ell)
        bs = self.b_stderr.reshape(-1, ell)
        a = self.a_bar.reshape(-1, ell, ell)
        asd = self.a_stderr.reshape(-1, ell, ell)
        head = [f"y_{c + 1}" for c in range(ell)]
        head += [f"b_bar_{j + 1}" for j in range(ell)]
        head += [f"b_stderr_{j + 1}" for j in range(ell)]
        head += [f"a_bar_{j + 1}{k + 1}" for j in range(ell) for k in range(ell)]
        head += [f"a_stderr_{j + 1}{k + 1}" for j in range(ell) for k in range(ell)]
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(head) + "\n")
            for i in range(len(nodes)):
                row = ([sde.format_float(v) for v in nodes[i]]
                       + [sde.format_float(v) for v in b[i]]
                       + [sde.format_float(v) for v in bs[i]]
                       + [sde.format_float(v) for v in a[i].ravel()]
                       + [sde.format_float(v) for v in asd[i].ravel()])
                fh.write(",".join(row) + "\n")
        meta = {"label": self.label,
                "axes": [list(map(float, ax)) for ax in self.axes],
                "max_clip_fraction": float(self.clip_fractions.max())}
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass(frozen=True)
class ConvergenceReport:
    eps_list: np.ndarray
    times: np.ndarray
    distances: np.ndarray      # (n_eps, n_times)
    trend: np.ndarray          # per time: Spearman corr of distance vs eps
    distance_kind: str
    actual_times: np.ndarray = None

    def __post_init__(self):
        if (self.distances < 0).any():
            raise ValueError("distances must be nonnegative")
        if self.distance_kind not in ("ks", "w1"):
            raise ValueError("distance_kind must be 'ks' or 'w1'")

    def to_csv(self, csv_path, json_path) -> None:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write("eps,t,distance,trend_stat\n")
            for i, e in enumerate(self.eps_list):
                for j, t in enumerate(self.times):
                    fh.write(f"{sde.format_float(e)},{sde.format_float(t)},"
                             f"{sde.format_float(self.distances[i, j])},"
                             f"{sde.format_float(self.trend[j])}\n")
        meta = {"distance_kind": self.distance_kind,
                "eps_list": list(map(float, self.eps_list)),
                "times": list(map(float, self.times))}
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------

def _pick_record_every(n_steps: int, target_records: int) -> int:
    for k in range(min(target_records, n_steps), 0, -1):
        if n_steps % k == 0:
            return n_steps // k
    return n_steps


def simulate_fast_slow(system: FastSlowSystem, x0, y0, eps: float, T: float,
                       fast_dt: float, n_paths: int, seed: int,
                       target_records: int = 64):
    """Coupled ensemble integrated in fast time; slow-grid output.

    One fast step advances X by an Euler step with ``fast_dt`` and Y by
    the time-changed explicit update

        Y <- Y + (eps^2 fast_dt) F(X, Y) + (eps fast_dt) G(X, Y),

    which is the stiffness-free form of the slow equation.  Returns
    (slow ensemble of Y, terminal X samples, stiff fraction) and warns
    when the nominally O(eps^-1) term moved Y by more than 10% of (1+|Y|)
    on over 1% of steps.
    """
    if not (0 < eps <= 1):
        raise ValueError("eps must lie in (0, 1]")
    if fast_dt > 0.1:
        raise ValueError("fast_dt must be at most 0.1 fast-time units")
    dt_slow = (eps * eps) * fast_dt
    n_steps = round(T / dt_slow)
    if n_steps < 1 or abs(n_steps * dt_slow - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be a multiple of eps^2 * fast_dt")
    record_every = _pick_record_every(n_steps, target_records)
    out_y, xs, ys, stiff_frac = sde.run_fast_slow(
        system, np.asarray(x0, dtype=float), np.asarray(y0, dtype=float),
        n_paths, eps, fast_dt, n_steps, record_every, seed)
    if stiff_frac > 0.01:
        warnings.warn(
            f"fast-slow update exceeded its increment budget on "
            f"{100 * stiff_frac:.1f}% of steps", errors.StiffnessWarning)
    m = out_y.shape[1]
    times = np.concatenate([[0.0], (np.arange(1, m + 1) * record_every) * dt_slow])
    y0r = np.tile(np.asarray(y0, dtype=float), (n_paths, 1, 1))
    states = np.concatenate([y0r, out_y], axis=1)
    cfg = sde.IntegratorConfig(dt=dt_slow, horizon=n_steps * dt_slow, seed=seed,
                               n_paths=n_paths, thinning=record_every)
    ensemble = sde.Ensemble(times, states, cfg, f"{system.label}-slow")
    return ensemble, xs, stiff_frac


def _component_function(system: FastSlowSystem, y, j: int,
                        which: str) -> poisson.CenterableFunction:
    """G_j(., y) or a grad_y_G entry as a scalar observable of x.

    ``which`` is "g" for G_j or "dg:i" for d G_j / d y_i.  Native
    descriptors are attached for the shipped coupling forms so the solves
    stay on the compiled path.
    """
    y = np.asarray(y, dtype=float).reshape(system.dim_y)
    q1, q2, q3 = system.growth_orders
    native = None
    if which == "g":
        if system.native_fs is not None and system.dim_y == 1:
            c_g = system.native_fs.params[1]
            if system.native_fs.kind == FS_LIN:
                coef = c_g
            else:
                coef = c_g * math.sqrt(1.0 + y[0] * y[0])
            native = NativeScalar.affine([coef], 0.0)

        def ev(X, _y=y):
            return system.batch_G(X, np.tile(_y, (np.atleast_2d(X).shape[0], 1)))[:, j]

        return poisson.CenterableFunction(
            arity=system.fast.dim_x, evaluator=ev, growth_beta=q2,
            native=native, vectorized=True, label=f"G_{j}(.,y)")

    i = int(which.split(":")[1])
    if system.native_fs is not None and system.dim_y == 1:
        c_g = system.native_fs.params[1]
        if system.native_fs.kind == FS_LIN:
            native = NativeScalar.affine([0.0], 0.0)
        else:
            coef = c_g * y[0] / math.sqrt(1.0 + y[0] * y[0])
            native = NativeScalar.affine([coef], 0.0)

    def ev(X, _y=y):
        X = np.atleast_2d(X)
        return np.array([system.grad_at(x, _y)[j, i] for x in X])

    return poisson.CenterableFunction(
        arity=system.fast.dim_x, evaluator=ev, growth_beta=q3,
        native=native, vectorized=True, label=f"dG_{j}/dy_{i}(.,y)")


@dataclass(frozen=True)
class GBarResult:
    solutions: list          # one PoissonSolution per slow component
    subtracted_constants: np.ndarray
    y: np.ndarray


def estimate_G_bar(system: FastSlowSystem, y, query_x, mu_hat: EmpiricalMeasure,
                   horizon_N: float, n_paths: int, dt: float, seed: int) -> GBarResult:
    """Corrector solves for every component of the coupling G at fixed y.

    Each component is centered against the invariant estimate first; a
    large subtracted constant signals that the coupling violates the
    zero-mean hypothesis at this y.
    """
    consts = np.empty(system.dim_y)
    sols = []
    for j in range(system.dim_y):
        f = _component_function(system, y, j, "g")
        fc = poisson.center_function(f, mu_hat)
        consts[j] = fc.mu_mean
        sols.append(poisson.solve_poisson_mc(
            system.fast, fc, query_x, horizon_N, n_paths, dt,
            rng.derive_seed(seed, "gbar", j)))
    return GBarResult(sols, consts, np.asarray(y, dtype=float))


@dataclass(frozen=True)
class EffectiveCoefficients:
    y: np.ndarray
    b_bar: np.ndarray
    a_bar: np.ndarray
    b_stderr: np.ndarray
    a_stderr: np.ndarray
    clip_fraction: float
    F_bar: np.ndarray
    subtracted_constants: np.ndarray


def effective_coefficients(system: FastSlowSystem, y, mu_hat: EmpiricalMeasure,
                           n_mu: int = 256, n_paths: int = 1024,
                           horizon_N: float = 8.0, dt: float = 0.01,
                           seed: int = 0) -> EffectiveCoefficients:
    """Limiting drift and covariance at one slow point.

    F integrates directly against the full invariant sample.  The
    corrector terms integrate over a measure subsample (quantile midpoints
    in 1-d) with fresh solves per point:

        b_bar_j = F_bar_j + sum_i int G_i d(G_bar_j)/dy_i dmu
        a_bar_jk = int [G_j Gbar_k + Gbar_j G_k] dmu,

    followed by symmetrization and eigenvalue clipping at zero (clip mass
    reported, warned over 5% of trace).
    """
    y = np.asarray(y, dtype=float).reshape(system.dim_y)
    ell = system.dim_y
    Yrep = np.tile(y, (len(mu_hat.samples), 1))
    Fvals = system.batch_F(mu_hat.samples, Yrep)
    F_bar = mu_hat.weights @ Fvals

    if mu_hat.dim == 1:
        idx = stats.quantile_stratified_indices(mu_hat.samples[:, 0], n_mu)
    else:
        g = rng.stream(rng.derive_seed(seed, "musub"))
        idx = np.sort(g.choice(len(mu_hat.samples), size=n_mu, replace=False))
    xq = mu_hat.samples[idx]
    Yq = np.tile(y, (n_mu, 1))
    Gq = system.batch_G(xq, Yq)          # (n_mu, ell)

    gbar = estimate_G_bar(system, y, xq, mu_hat, horizon_N, n_paths, dt, seed)
    Gbar_q = np.stack([s.u_values for s in gbar.solutions], axis=1)
    Gbar_se = np.stack([s.stderrs for s in gbar.solutions], axis=1)

    # corrector-derivative solves, skipped when the entry is identically 0
    D = np.zeros((n_mu, ell, ell))       # D[:, j, i] ~ bar(dG_j/dy_i)(x_q)
    D_se = np.zeros((n_mu, ell, ell))
    for j in range(ell):
        for i in range(ell):
            fji = _component_function(system, y, j, f"dg:{i}")
            if fji.native is not None and fji.native.is_zero():
                continue
            if np.abs(fji.batch(xq)).max() < 1e-14:
                continue
            fc = poisson.center_function(fji, mu_hat)
            sol = poisson.solve_poisson_mc(
                system.fast, fc, xq, horizon_N, n_paths, dt,
                rng.derive_seed(seed, "dgbar", j, i))
            D[:, j, i] = sol.u_values
            D_se[:, j, i] = sol.stderrs

    stratified = mu_hat.dim == 1

    def _mean_var(vals):
        # variance of the subsample mean along axis 0; quantile-stratified
        # samples use a successive-difference proxy (points are sorted, so
        # neighbor gaps bound the within-cell variability), iid subsamples
        # the usual sample variance over n
        if stratified:
            dd = np.diff(vals, axis=0)
            return np.sum(dd * dd, axis=0) / (2.0 * n_mu ** 2)
        return vals.var(axis=0, ddof=1) / n_mu

    w = np.full(n_mu, 1.0 / n_mu)
    corr = np.einsum("q,qi,qji->j", w, Gq, D)
    b_bar = F_bar + corr
    corr_var = np.einsum("q,qi,qji->j", w ** 2, Gq ** 2, D_se ** 2)
    spread = np.einsum("qi,qji->qj", Gq, D)
    corr_var = corr_var + _mean_var(spread)
    F_se = np.sqrt(np.einsum("n,nj->j", mu_hat.weights ** 2,
                             (Fvals - F_bar) ** 2))
    b_stderr = np.sqrt(F_se ** 2 + corr_var)

    prod = np.einsum("q,qj,qk->jk", w, Gq, Gbar_q)
    a_raw = prod + prod.T
    term = (Gq[:, :, None] * Gbar_q[:, None, :]
            + Gbar_q[:, :, None] * Gq[:, None, :])
    var_solve = np.einsum("q,qjk->jk", w ** 2,
                          (Gq[:, :, None] * Gbar_se[:, None, :]) ** 2
                          + (Gbar_se[:, :, None] * Gq[:, None, :]) ** 2)
    a_stderr = np.sqrt(var_solve + _mean_var(term))

    a_rep, _, clipped = stats.psd_repair(a_raw)
    trace = float(np.trace(a_rep))
    clip_fraction = clipped / trace if trace > 0 else 0.0
    return EffectiveCoefficients(y, b_bar, a_rep, b_stderr, a_stderr,
                                 float(clip_fraction), F_bar,
                                 gbar.subtracted_constants)


@dataclass(frozen=True)
class GreenKuboResult:
    a_gk: np.ndarray
    stderr: np.ndarray
    plateau_lag: float
    plateau_found: bool
    running: np.ndarray
    lags: np.ndarray


def green_kubo_diffusion(system: FastSlowSystem, y, long_run: sde.Path,
                         lag_max: float) -> GreenKuboResult:
    """Effective covariance from stationary autocorrelations of G.

    a_jk = int_0^inf E[G_j(X_0) G_k(X_t) + G_k(X_0) G_j(X_t)] dt along one
    stationary trajectory, truncated at the first plateau of the running
    integral (flagged when no plateau appears before lag_max).  Errors
    come from splitting the run into segments.
    """
    y = np.asarray(y, dtype=float).reshape(system.dim_y)
    t = long_run.times
    dts = float(t[1] - t[0])
    if np.abs(np.diff(t) - dts).max() > 1e-9:
        raise ValueError("the long run must use a uniform time grid")
    L = round(lag_max / dts)
    if L < 2:
        raise ValueError("lag_max must cover at least two grid spacings")
    X = long_run.states
    n = len(X)
    if L >= n // 2:
        raise ValueError("the long run is too short for lag_max")
    ell = system.dim_y
    Gs = system.batch_G(X, np.tile(y, (n, 1)))
    Gs = Gs - Gs.mean(axis=0, keepdims=True)

    def corr_pair(a, b):
        size = 1 << int(np.ceil(np.log2(2 * n - 1)))
        fa = np.fft.rfft(a, size)
        fb = np.fft.rfft(b, size)
        raw = np.fft.irfft(np.conjugate(fa) * fb, size)[: L + 1].real
        return raw / np.arange(n, n - L - 1, -1)

    lags = np.arange(L + 1) * dts
    sym = np.empty((ell, ell, L + 1))
    for j in range(ell):
        for k in range(j, ell):
            c = corr_pair(Gs[:, j], Gs[:, k]) + corr_pair(Gs[:, k], Gs[:, j])
            sym[j, k] = sym[k, j] = c

    running = np.cumsum(0.5 * (sym[..., 1:] + sym[..., :-1]) * dts, axis=-1)
    running = np.concatenate([np.zeros((ell, ell, 1)), running], axis=-1)
    total = np.abs(running).max(axis=(0, 1))
    window = max(2, (L + 1) // 10)
    plateau_idx = None
    scale = max(float(total.max()), 1e-300)
    for k in range(window, L + 1):
        if np.abs(running[..., k] - running[..., k - window]).max() < 5e-3 * scale:
            plateau_idx = k
            break
    found = plateau_idx is not None
    k_star = plateau_idx if found else L
    a_gk = running[..., k_star]

    n_seg = 8
    seg = n // n_seg
    vals = []
    for s in range(n_seg):
        part = Gs[s * seg:(s + 1) * seg]
        if len(part) <= L + 1:
            continue
        m = len(part)

        def corr_seg(a, b):
            size = 1 << int(np.ceil(np.log2(2 * m - 1)))
            fa = np.fft.rfft(a, size)
            fb = np.fft.rfft(b, size)
            raw = np.fft.irfft(np.conjugate(fa) * fb, size)[: L + 1].real
            return raw / np.arange(m, m - L - 1, -1)

        acc = np.empty((ell, ell))
        for j in range(ell):
            for k in range(j, ell):
                c = corr_seg(part[:, j], part[:, k]) + corr_seg(part[:, k], part[:, j])
                acc[j, k] = acc[k, j] = np.trapezoid(c[: k_star + 1], dx=dts)
        vals.append(acc)
    if len(vals) >= 2:
        stack = np.stack(vals)
        stderr = stack.std(axis=0, ddof=1) / math.sqrt(len(vals))
    else:
        stderr = np.zeros((ell, ell))
    return GreenKuboResult(a_gk, stderr, float(lags[k_star]), found,
                           running, lags)


def build_effective_model(system: FastSlowSystem, y_axes, mu_hat: EmpiricalMeasure,
                          n_mu: int = 256, n_paths: int = 1024,
                          horizon_N: float = 8.0, dt: float = 0.01,
                          seed: int = 0) -> EffectiveModel:
    """Tabulate effective coefficients on a grid and attach interpolation."""
    if isinstance(y_axes, np.ndarray) and y_axes.ndim == 1:
        y_axes = (y_axes.astype(float),)
    elif isinstance(y_axes, (list, tuple)) and np.ndim(y_axes[0]) == 0:
        y_axes = (np.asarray(y_axes, dtype=float),)
    else:
        y_axes = tuple(np.asarray(a, dtype=float) for a in y_axes)
    ell = len(y_axes)
    if ell != system.dim_y:
        raise ValueError("grid dimension must match the slow dimension")
    grid_shape = tuple(len(a) for a in y_axes)
    b = np.empty(grid_shape + (ell,))
    bs = np.empty_like(b)
    a = np.empty(grid_shape + (ell, ell))
    asd = np.empty_like(a)
    root = np.empty_like(a)
    clip = np.empty(grid_shape)
    for flat, node_idx in enumerate(np.ndindex(*grid_shape)):
        y = np.array([y_axes[c][node_idx[c]] for c in range(ell)])
        co = effective_coefficients(system, y, mu_hat, n_mu=n_mu,
                                    n_paths=n_paths, horizon_N=horizon_N,
                                    dt=dt, seed=rng.derive_seed(seed, "node", flat))
        b[node_idx] = co.b_bar
        bs[node_idx] = co.b_stderr
        a[node_idx] = co.a_bar
        asd[node_idx] = co.a_stderr
        _, r, _ = stats.psd_repair(co.a_bar)
        root[node_idx] = r
        clip[node_idx] = co.clip_fraction
    return EffectiveModel(y_axes, b, a, root, bs, asd, clip, label=system.label)


def simulate_limit(effective: EffectiveModel, y0, T: float, dt: float,
                   n_paths: int, seed: int, thinning: int = 1) -> sde.Ensemble:
    """Euler-Maruyama ensemble of the tabulated limiting diffusion."""
    cfg = sde.IntegratorConfig(dt=dt, horizon=T, seed=seed, n_paths=n_paths,
                               thinning=thinning)
    return sde.simulate_ensemble(effective.to_sde_model(), y0, cfg)


def weak_convergence_report(system: FastSlowSystem, effective, y0, x0,
                            eps_list, times, n_paths: int, fast_dt: float,
                            seed: int, distance_kind: str = "ks",
                            limit_dt: float = 0.01) -> ConvergenceReport:
    """Marginal-distribution distances between the slow component and the
    limit across an eps ladder.

    ``effective`` may be an EffectiveModel (the limit ensemble is
    simulated from it) or a precomputed (n, n_times, ell) array of limit
    samples at the requested times.  Distances are per-coordinate
    two-sample statistics, maximized over coordinates; the trend column
    holds the Spearman correlation of distance against eps at each time
    (positive means shrinking distance as eps decreases).  Slow-grid
    recording snaps each requested time to the nearest step; actual times
    are reported.
    """
    eps_list = np.asarray(eps_list, dtype=float)
    if (np.diff(eps_list) >= 0).any():
        raise ValueError("eps_list must be strictly decreasing")
    times = np.asarray(times, dtype=float)
    if (times <= 0).any() or (np.diff(times) <= 0).any():
        raise ValueError("times must be positive and increasing")
    T = float(times[-1])
    ell = system.dim_y

    if isinstance(effective, EffectiveModel):
        steps = [round(t / limit_dt) for t in times]
        limit_model = effective.to_sde_model()
        y0s = np.tile(np.asarray(y0, dtype=float), (n_paths, 1))
        limit_snaps = sde.run_snapshots(limit_model, y0s, limit_dt, steps,
                                        rng.derive_seed(seed, "limit"))
    else:
        limit_snaps = np.asarray(effective, dtype=float)
        if limit_snaps.shape[1] != len(times):
            raise ValueError("limit sample array must match the time grid")

    dist = np.empty((len(eps_list), len(times)))
    actual = np.empty((len(eps_list), len(times)))
    for ei, eps in enumerate(eps_list):
        dt_slow = (eps * eps) * fast_dt
        n_steps = max(1, round(T / dt_slow))
        ens, _, _ = simulate_fast_slow(
            system, x0, y0, eps, n_steps * dt_slow, fast_dt, n_paths,
            rng.derive_seed(seed, "ladder", ei),
            target_records=min(n_steps, 512))
        for ti, t in enumerate(times):
            j = int(np.argmin(np.abs(ens.times - t)))
            actual[ei, ti] = ens.times[j]
            dvals = []
            for c in range(ell):
                a = ens.states[:, j, c]
                bvals = limit_snaps[:, ti, c]
                if distance_kind == "ks":
                    dvals.append(stats.ks_two_sample(a, bvals))
                else:
                    dvals.append(stats.wasserstein1(a, bvals))
            dist[ei, ti] = max(dvals)
    trend = np.array([stats.spearman(eps_list, dist[:, ti])
                      for ti in range(len(times))])
    return ConvergenceReport(eps_list, times, dist, trend, distance_kind,
                             actual_times=actual.mean(axis=0))
