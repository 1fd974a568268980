"""Invariant-measure estimation and ergodicity diagnostics.

Provides the empirical stand-ins for the long-run law of a diffusion and a
set of checks a practitioner runs before trusting ergodic averages:

* long-run sampling of the invariant measure,
* moment estimates with batch-means errors,
* a total-variation mixing curve against the estimated invariant measure,
* a drift-recurrence scan (inner products (b(x), x) over spheres),
* an exit-probability probe on a ball (regularity evidence),
* a local overlap diagnostic for the embedded return chain on a ball
  (evidence of irreducibility without ellipticity),
* a scaled sup-norm growth diagnostic over accelerated horizons.

Probability and TV outputs are estimates with quantified sampling noise,
not certified bounds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import errors, kernels, rng, sde, stats


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted sample cloud plus a histogram view on a regular grid."""

    samples: np.ndarray
    weights: np.ndarray
    histogram: np.ndarray
    spec: stats.HistogramSpec
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        w = self.weights
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")
        if (w < 0).any():
            raise ValueError("weights must be nonnegative")
        if abs(float(self.histogram.sum()) - 1.0) > 1e-12:
            raise ValueError("histogram mass must be 1 within 1e-12")

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.samples

    def expectation(self, values: np.ndarray) -> float:
        return float(self.weights @ np.asarray(values, dtype=float))

    def rebin(self, spec: stats.HistogramSpec) -> np.ndarray:
        return stats.histogram(self.samples, spec, weights=self.weights)


def empirical_measure(samples, weights=None, spec=None, provenance=None) -> EmpiricalMeasure:
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n = samples.shape[0]
    if weights is None:
        weights = np.full(n, 1.0 / n)
    else:
        weights = np.asarray(weights, dtype=float)
        weights = weights / weights.sum()
    if spec is None:
        spec = stats.freedman_diaconis_spec(samples)
    hist = stats.histogram(samples, spec, weights=weights)
    hist = hist / hist.sum()
    return EmpiricalMeasure(samples, weights, hist, spec, provenance or {})


@dataclass(frozen=True)
class MixingReport:
    """TV distance to the invariant estimate along a time grid."""

    times: np.ndarray
    tv_estimates: np.ndarray
    fitted_rate: tuple  # (C, exponent) for TV ~ C (1+t)^(-exponent)
    start_point: np.ndarray
    noise_bands: np.ndarray

    def __post_init__(self):
        tv = self.tv_estimates
        if ((tv < 0) | (tv > 1 + 1e-12)).any():
            raise ValueError("TV estimates must lie in [0, 1]")

    def to_csv(self, csv_path, json_path) -> None:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write("t,tv,noise_band\n")
            for t, v, b in zip(self.times, self.tv_estimates, self.noise_bands):
                fh.write(f"{sde.format_float(t)},{sde.format_float(v)},"
                         f"{sde.format_float(b)}\n")
        meta = {"fitted_C": self.fitted_rate[0], "fitted_exponent": self.fitted_rate[1],
                "start_point": list(map(float, self.start_point))}
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass(frozen=True)
class DoeblinEstimate:
    """Minimal pairwise overlap of the embedded chain's smoothed laws."""

    R: float
    t_B: float
    n0: int
    grid_points: np.ndarray
    q_hat: float
    bandwidth: float
    overlap_matrix: np.ndarray
    drop_fraction: float
    q_stderr: float
    caveat: str = ("kernel-smoothed overlap; singular parts of the chain law "
                   "are invisible to this diagnostic")

    def __post_init__(self):
        if not (0.0 <= self.q_hat <= 1.0 + 1e-12):
            raise ValueError("q_hat must lie in [0, 1]")

    def to_csv(self, csv_path, json_path) -> None:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write("i,j,overlap\n")
            m = len(self.grid_points)
            for i in range(m):
                for j in range(m):
                    fh.write(f"{i},{j},{sde.format_float(self.overlap_matrix[i, j])}\n")
        meta = {"R": self.R, "t_B": self.t_B, "n0": self.n0, "q_hat": self.q_hat,
                "bandwidth": self.bandwidth, "drop_fraction": self.drop_fraction,
                "q_stderr": self.q_stderr, "caveat": self.caveat,
                "grid_points": [list(map(float, p)) for p in self.grid_points]}
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------

def estimate_invariant_measure(model: sde.SdeModel, burn_in: float,
                               n_samples: int, thinning_time: float, seed: int,
                               dt: float = 0.01, x0=None,
                               spec: Optional[stats.HistogramSpec] = None
                               ) -> EmpiricalMeasure:
    """Long-run time-average sampling of the invariant law.

    One trajectory: ``burn_in`` time units discarded, then ``n_samples``
    states spaced ``thinning_time`` apart.  A guard-ball exit here is
    itself diagnostic (drift recurrence likely fails or dt is too large).
    """
    if burn_in <= 0 or thinning_time <= 0 or n_samples < 1:
        raise ValueError("burn_in, thinning_time and n_samples must be positive")
    record_every = round(thinning_time / dt)
    if record_every < 1 or abs(record_every * dt - thinning_time) > 1e-9:
        raise ValueError("thinning_time must be a positive multiple of dt")
    x0 = np.zeros(model.dim_x) if x0 is None else np.asarray(x0, dtype=float)
    burn_steps = max(1, round(burn_in / dt))
    x_burned = sde.run_final(model, x0.reshape(1, -1), dt, burn_steps,
                             rng.derive_seed(seed, "burn"))
    recorded, _ = sde.run_recorded(model, x_burned, dt,
                                   n_samples * record_every, record_every,
                                   rng.derive_seed(seed, "sample"))
    samples = recorded[0]
    return empirical_measure(
        samples, spec=spec,
        provenance={"model_label": model.label, "burn_in": burn_in,
                    "thinning_time": thinning_time, "seed": seed, "dt": dt})


def moment_estimate(measure: EmpiricalMeasure, m: float):
    """Weighted average of |x|^m with a batch-means standard error.

    Returns (value, stderr, reliable); ``reliable`` is False when the
    series is too short for at least 10 batches.
    """
    if m <= 0:
        raise ValueError("moment order must be positive")
    norms = np.sqrt(np.einsum("nc,nc->n", measure.samples, measure.samples))
    vals = norms ** m
    value = measure.expectation(vals)
    stderr, reliable = stats.batch_means_stderr(vals)
    return value, stderr, reliable


def tv_decay_curve(model: sde.SdeModel, x0, times, mu_hat: EmpiricalMeasure,
                   n_paths: int, binning: Optional[stats.HistogramSpec] = None,
                   seed: int = 0, dt: float = 0.01) -> MixingReport:
    """TV(law of X_t from x0, invariant estimate) on shared bins.

    Each TV value is half the L1 distance of histograms on the same grid;
    the fitted rate comes from least squares of log TV against log(1+t)
    over the tail half of the grid.
    """
    times = np.asarray(times, dtype=float)
    if (np.diff(times) <= 0).any():
        raise ValueError("times must be strictly increasing")
    spec = binning if binning is not None else mu_hat.spec
    mu_hist = mu_hat.rebin(spec) if binning is not None else mu_hat.histogram
    steps = [round(t / dt) for t in times]
    for t, s in zip(times, steps):
        if abs(s * dt - t) > 1e-9:
            raise ValueError("every time must be a multiple of dt")
    x0 = np.asarray(x0, dtype=float).reshape(model.dim_x)
    x0s = np.tile(x0, (n_paths, 1))
    snaps = sde.run_snapshots(model, x0s, dt, steps,
                              rng.derive_seed(seed, "tvcurve"))
    tv = np.empty(len(times))
    bands = np.empty(len(times))
    for idx in range(len(times)):
        h = stats.histogram(snaps[:, idx, :], spec)
        tv[idx] = stats.tv_between_histograms(h, mu_hist, spec, spec)
        bands[idx] = stats.tv_noise_band(h, n_paths)
    tail = max(2, len(times) // 2)
    tt, vv = times[-tail:], tv[-tail:]
    keep = vv > 0
    if keep.sum() >= 2:
        slope, intercept = np.polyfit(np.log1p(tt[keep]), np.log(vv[keep]), 1)
        fitted = (float(np.exp(intercept)), float(-slope))
    else:
        fitted = (float("nan"), float("nan"))
    return MixingReport(times, tv, fitted, x0, bands)


@dataclass(frozen=True)
class RecurrenceScan:
    radii: np.ndarray
    max_inner: np.ndarray  # max over sampled |x|=R of (b(x), x)
    condition_plausible: bool


def recurrence_scan(model: sde.SdeModel, radii, directions_per_radius: int = 64,
                    seed: int = 0) -> RecurrenceScan:
    """Max of (b(x), x) over direction samples at each radius.

    A drift pushing back to the origin shows a running max diving to
    -infinity; positive or growing values flag the recurrence condition
    as implausible.
    """
    radii = np.asarray(radii, dtype=float)
    if (radii <= 0).any():
        raise ValueError("radii must be positive")
    d = model.dim_x
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
    elif d == 2:
        ang = 2.0 * np.pi * np.arange(directions_per_radius) / directions_per_radius
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        g = rng.stream(rng.derive_seed(seed, "directions"))
        raw = g.standard_normal((directions_per_radius, d))
        dirs = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    max_inner = np.empty(len(radii))
    for i, r in enumerate(radii):
        vals = []
        for u in dirs:
            x = r * u
            b = np.asarray(model._drift_point(x), dtype=float)
            if not np.isfinite(b).all():
                raise errors.NonFiniteEvaluation(f"drift non-finite at |x|={r}")
            vals.append(float(b @ x))
        max_inner[i] = max(vals)
    decreasing = bool((np.diff(max_inner) < 0).all())
    plausible = decreasing and max_inner[-1] < 0
    return RecurrenceScan(radii, max_inner, plausible)


@dataclass(frozen=True)
class ExitProbeResult:
    p_min: float
    p_values: np.ndarray
    stderrs: np.ndarray
    grid: np.ndarray
    R: float
    t0: float


def exit_time_probe(model: sde.SdeModel, R: float, t0: float, grid,
                    n_paths: int, seed: int, dt: float = 0.01) -> ExitProbeResult:
    """Minimum over the grid of P_x(|X_{t0}| >= R + 1).

    A strictly positive minimum is evidence that exit times from the ball
    have uniformly bounded expectation (geometric trials argument).
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[0] < 1:
        raise ValueError("grid must be nonempty")
    norms = np.sqrt(np.einsum("nc,nc->n", grid, grid))
    if (norms > R + 1e-9).any():
        raise ValueError("grid points must lie inside the ball of radius R")
    n_steps = round(t0 / dt)
    if abs(n_steps * dt - t0) > 1e-9:
        raise ValueError("t0 must be a multiple of dt")
    x0s = np.repeat(grid, n_paths, axis=0)
    finals = sde.run_final(model, x0s, dt, n_steps,
                           rng.derive_seed(seed, "exitprobe"), pooled_stream=0)
    r = np.sqrt(np.einsum("nc,nc->n", finals, finals)).reshape(len(grid), n_paths)
    exceed = r >= R + 1.0
    p = exceed.mean(axis=1)
    se = np.sqrt(p * (1 - p) / n_paths)
    i = int(np.argmin(p))
    return ExitProbeResult(float(p[i]), p, se, grid, R, t0)


def doeblin_overlap_estimate(model: sde.SdeModel, R: float, t_B: float, n0: int,
                             grid, n_chains: int, bandwidth: Optional[float] = None,
                             seed: int = 0, dt: float = 0.01,
                             time_cap: Optional[float] = None) -> DoeblinEstimate:
    """Pairwise overlap of the embedded return chain's smoothed laws.

    From each grid point, ``n_chains`` copies of the chain "state at the
    n-th return to the ball after a waiting time of at least t_B" are run
    to step n0.  Each cloud is kernel-smoothed on the ball and the overlap
    integral of min densities is minimized over grid pairs; a positive
    value is evidence (not proof) of a uniform minorization.  Chains that
    fail to return within the cap are dropped and counted.
    """
    if n0 < 1:
        raise ValueError("n0 must be >= 1")
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    norms = np.sqrt(np.einsum("nc,nc->n", grid, grid))
    if (norms > R + 1e-9).any():
        raise ValueError("grid points must lie inside the ball of radius R")
    n_grid, d = grid.shape
    # identical grid points share one chain law: estimate each distinct
    # start once and map back (duplicate pairs then overlap at exactly 1)
    uniq_rows: dict = {}
    point_to_uniq = np.empty(n_grid, dtype=int)
    for i, row in enumerate(grid):
        key = row.tobytes()
        if key not in uniq_rows:
            uniq_rows[key] = len(uniq_rows)
        point_to_uniq[i] = uniq_rows[key]
    uniq = np.array([grid[np.where(point_to_uniq == u)[0][0]]
                     for u in range(len(uniq_rows))])
    n_uniq = len(uniq)
    cap = 100.0 * t_B if time_cap is None else time_cap
    cap_steps = round(cap / dt)
    n_tot = n_uniq * n_chains
    states = np.ascontiguousarray(np.repeat(uniq, n_chains, axis=0))
    noise_sup = rng.PooledNoise(rng.derive_seed(seed, "doeblin"), 0, n_tot,
                                model.dim_noise)

    active = np.ones(n_tot, dtype=bool)
    count = np.zeros(n_tot, dtype=int)
    # the chain starts inside the ball: return 0 happens at time 0
    next_eligible = np.full(n_tot, t_B)
    frozen = np.full((n_tot, d), np.nan)
    guard2 = model.guard_radius ** 2

    block = 128
    step = 0
    while step < cap_steps and active.any():
        L = min(block, cap_steps - step)
        W = noise_sup.block(L)
        snapshot = np.empty((n_tot, L, d))
        kernels.block_advance_record(model, states, W, dt, guard2, 1,
                                     snapshot, 0, 0, step)
        for j in range(L):
            t = (step + j + 1) * dt
            x = snapshot[:, j, :]
            r2 = np.einsum("nc,nc->n", x, x)
            evt = active & (t >= next_eligible - 1e-12) & (r2 <= R * R)
            if evt.any():
                count[evt] += 1
                next_eligible[evt] = t + t_B
                done = evt & (count >= n0)
                if done.any():
                    frozen[done] = x[done]
                    active[done] = False
        step += L

    dropped = active
    drop_fraction = float(dropped.mean())
    ok = ~dropped
    ok_by_point = ok.reshape(n_uniq, n_chains)
    if not ok_by_point.any(axis=1).all():
        bad = int(np.argmin(ok_by_point.any(axis=1)))
        raise errors.ReturnTimeout(
            f"no chain from grid point {bad} completed {n0} returns within the cap")
    uniq_clouds = [frozen.reshape(n_uniq, n_chains, d)[i][ok_by_point[i]]
                   for i in range(n_uniq)]
    clouds = [uniq_clouds[point_to_uniq[i]] for i in range(n_grid)]
    if bandwidth is None:
        bandwidth = stats.silverman_bandwidth(np.concatenate(uniq_clouds, axis=0))

    # quadrature grid on the ball
    if d == 1:
        q = np.linspace(-R, R, 513)
        qpts = 0.5 * (q[:-1] + q[1:])[:, None]
        qw = np.full(len(qpts), (q[1] - q[0]))
    else:
        axes = [np.linspace(-R, R, 65) for _ in range(d)]
        mids = [0.5 * (a[:-1] + a[1:]) for a in axes]
        mesh = np.meshgrid(*mids, indexing="ij")
        qpts = np.stack([mm.ravel() for mm in mesh], axis=1)
        cell = np.prod([a[1] - a[0] for a in axes])
        inside = np.einsum("nc,nc->n", qpts, qpts) <= R * R
        qpts = qpts[inside]
        qw = np.full(len(qpts), cell)

    dens = np.empty((n_grid, len(qpts)))
    for i in range(n_grid):
        raw = stats.gaussian_kde(clouds[i], qpts, bandwidth)
        mass = float(raw @ qw)
        dens[i] = raw / mass  # chain states live on the ball; renormalize leak

    overlap = np.empty((n_grid, n_grid))
    for i in range(n_grid):
        overlap[i, i] = float(np.minimum(dens[i], dens[i]) @ qw)
        for j in range(i + 1, n_grid):
            overlap[i, j] = overlap[j, i] = float(np.minimum(dens[i], dens[j]) @ qw)
    if n_grid >= 2:
        iu = np.triu_indices(n_grid, k=1)
        q_hat = float(overlap[iu].min())
    else:
        q_hat = 1.0

    # spread over chain subgroups as a crude CI for q_hat
    n_groups = 4
    gvals = []
    for g in range(n_groups):
        dg = []
        for i in range(n_grid):
            part = clouds[i][g::n_groups]
            if len(part) < 2:
                break
            raw = stats.gaussian_kde(part, qpts, bandwidth)
            dg.append(raw / float(raw @ qw))
        if len(dg) < n_grid:
            continue
        if n_grid >= 2:
            vals = [float(np.minimum(dg[i], dg[j]) @ qw)
                    for i in range(n_grid) for j in range(i + 1, n_grid)]
            gvals.append(min(vals))
    q_stderr = float(np.std(gvals, ddof=1) / math.sqrt(len(gvals))) if len(gvals) >= 2 else 0.0

    return DoeblinEstimate(R, t_B, n0, grid, min(q_hat, 1.0), float(bandwidth),
                           overlap, drop_fraction, q_stderr)


@dataclass(frozen=True)
class SupGrowthTable:
    eps: np.ndarray
    values: np.ndarray   # eps * mean sup_{t<=T} |X_{t/eps^2}|^p
    stderrs: np.ndarray


def sup_growth_diagnostic(model: sde.SdeModel, p: float, T: float, eps_list,
                          n_paths: int, seed: int, x0=None,
                          dt: float = 0.01) -> SupGrowthTable:
    """Scaled sup-moment over accelerated horizons; should shrink to 0.

    For each eps the horizon is T/eps^2 in model time; the table reports
    eps * E[ sup |X|^p ] over that horizon.
    """
    eps_list = np.asarray(eps_list, dtype=float)
    if ((eps_list <= 0) | (eps_list > 1)).any():
        raise ValueError("eps entries must lie in (0, 1]")
    x0 = np.zeros(model.dim_x) if x0 is None else np.asarray(x0, dtype=float)
    values = np.empty(len(eps_list))
    stderrs = np.empty(len(eps_list))
    for i, eps in enumerate(eps_list):
        n_steps = max(1, round((T / eps ** 2) / dt))
        x0s = np.tile(x0, (n_paths, 1))
        max2, _ = sde.run_supmax(model, x0s, dt, n_steps,
                                 rng.derive_seed(seed, "supgrowth", i),
                                 pooled_stream=0)
        vals = max2 ** (p / 2.0)
        values[i] = eps * float(vals.mean())
        stderrs[i] = eps * float(vals.std(ddof=1) / math.sqrt(n_paths))
    return SupGrowthTable(eps_list, values, stderrs)


def suggest_burn_in(model: sde.SdeModel, x0, seed: int, dt: float = 0.01,
                    threshold: float = 0.05, t_max: float = 50.0,
                    n_paths: int = 2048) -> float:
    """Pilot heuristic: first dyadic time whose ensemble histogram is within
    ``threshold`` TV of the ensemble at t_max (proxy for the long-run law),
    doubled for safety."""
    times = [t for t in np.concatenate([2.0 ** np.arange(-1, 20), [t_max]])
             if t <= t_max]
    times = sorted(set(round(t / dt) for t in times))
    x0 = np.asarray(x0, dtype=float).reshape(model.dim_x)
    snaps = sde.run_snapshots(model, np.tile(x0, (n_paths, 1)), dt, times,
                              rng.derive_seed(seed, "pilot"))
    ref = snaps[:, -1, :]
    fd = stats.freedman_diaconis_spec(ref)
    # coarse bins keep the TV noise floor well under the threshold
    spec = stats.HistogramSpec(fd.lo, fd.hi,
                               tuple(min(n, 12) for n in fd.n_bins))
    href = stats.histogram(ref, spec)
    for idx, s in enumerate(times[:-1]):
        h = stats.histogram(snaps[:, idx, :], spec)
        if stats.tv_between_histograms(h, href, spec, spec) < threshold:
            return 2.0 * s * dt
    return 2.0 * t_max
