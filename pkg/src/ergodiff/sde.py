"""Diffusion models, the Euler-Maruyama integrator, and ensemble drivers.

A model is a drift field b: R^d -> R^d and a diffusion field
sigma: R^d -> R^{d x k}; paths follow

    X_{j+1} = X_j + b(X_j) dt + sigma(X_j) dW_j,   dW_j ~ N(0, dt I_k).

Simulation output is a pure function of (model, x0, config): every path
draws from its own counter-based stream, reductions run in path order,
and thread count never changes a bit of the result.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import errors, rng
from . import kernels
from .kernels.specs import NativeSde

GUARD_RADIUS_DEFAULT = 1.0e6

# noise blocks are capped around this many bytes to bound memory
_BLOCK_TARGET_BYTES = 48 << 20


@dataclass(frozen=True)
class SdeModel:
    """Time-homogeneous diffusion coefficients plus metadata.

    ``vectorized`` marks callables that accept (n, d) batches; pointwise
    callables are looped over (slower).  ``native`` is an optional compiled
    coefficient descriptor for the shipped models.
    """

    dim_x: int
    dim_noise: int
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    label: str = ""
    vectorized: bool = False
    native: Optional[NativeSde] = None
    guard_radius: float = GUARD_RADIUS_DEFAULT

    def __post_init__(self):
        if self.dim_x < 1 or self.dim_noise < 1:
            raise ValueError("dimensions must be positive")
        # probe the fields once: shapes must match and values must be finite
        for x in (np.zeros(self.dim_x), np.ones(self.dim_x)):
            b = np.asarray(self._drift_point(x), dtype=float)
            s = np.asarray(self._diffusion_point(x), dtype=float)
            if b.shape != (self.dim_x,):
                raise ValueError(
                    f"drift returned shape {b.shape}, expected ({self.dim_x},)")
            if s.shape != (self.dim_x, self.dim_noise):
                raise ValueError(
                    f"diffusion returned shape {s.shape}, expected "
                    f"({self.dim_x}, {self.dim_noise})")
            if not (np.isfinite(b).all() and np.isfinite(s).all()):
                raise errors.NonFiniteEvaluation(
                    f"model {self.label!r} evaluates non-finite at x={x}")

    def _drift_point(self, x):
        if self.vectorized:
            return np.asarray(self.drift(x[None, :]))[0]
        return np.asarray(self.drift(x)).reshape(self.dim_x)

    def _diffusion_point(self, x):
        if self.vectorized:
            return np.asarray(self.diffusion(x[None, :]))[0]
        return np.asarray(self.diffusion(x)).reshape(self.dim_x, self.dim_noise)


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    horizon: float
    seed: int
    n_paths: int = 1
    thinning: int = 1

    def __post_init__(self):
        if self.dt <= 0 or self.horizon <= 0:
            raise ValueError("dt and horizon must be positive")
        if self.dt > self.horizon:
            raise ValueError("dt must not exceed horizon")
        if self.n_paths < 1 or self.thinning < 1:
            raise ValueError("n_paths and thinning must be positive integers")
        n = round(self.horizon / self.dt)
        if abs(n * self.dt - self.horizon) > 1e-9 * max(1.0, self.horizon):
            raise ValueError("horizon must be an integer multiple of dt")
        if n % self.thinning:
            raise ValueError("thinning must divide horizon/dt")

    @property
    def n_steps(self) -> int:
        return round(self.horizon / self.dt)


@dataclass(frozen=True)
class Path:
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        if self.times.ndim != 1 or self.states.ndim != 2:
            raise ValueError("times must be 1-d, states 2-d")
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have equal length")
        if not (np.diff(self.times) > 0).all():
            raise ValueError("times must be strictly increasing")
        if not np.isfinite(self.states).all():
            raise errors.NonFiniteEvaluation("path contains non-finite states")


@dataclass(frozen=True)
class Ensemble:
    times: np.ndarray
    states: np.ndarray  # (n_paths, n_times, d)
    config: IntegratorConfig
    model_label: str = ""

    def __post_init__(self):
        if self.states.shape[0] != self.config.n_paths:
            raise ValueError("path count must equal config.n_paths")
        if self.states.shape[1] != len(self.times):
            raise ValueError("all paths must share the time grid")

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    def path(self, i: int) -> Path:
        return Path(self.times, self.states[i])

    def terminal(self) -> np.ndarray:
        return self.states[:, -1, :]


def euler_step(x, model: SdeModel, dt: float, dW) -> np.ndarray:
    """One explicit step x + b(x) dt + sigma(x) dW (dW has variance dt)."""
    x = np.asarray(x, dtype=float).reshape(model.dim_x)
    dW = np.asarray(dW, dtype=float).reshape(model.dim_noise)
    b = np.asarray(model._drift_point(x), dtype=float)
    s = np.asarray(model._diffusion_point(x), dtype=float)
    if not (np.isfinite(b).all() and np.isfinite(s).all()):
        raise errors.NonFiniteEvaluation(f"model fields non-finite at x={x}")
    return (x + b * dt) + s @ dW


# ---------------------------------------------------------------------------
# block-loop drivers
#
# All heavier operations reduce to: advance an ensemble through n_steps in
# noise blocks, with one of {nothing, thinned states, integral checkpoints,
# running sup} recorded.  The drivers own blocking, threading and error
# context; kernels do the arithmetic.

def _block_len(n_paths, k, multiple):
    raw = max(1, _BLOCK_TARGET_BYTES // (8 * max(1, n_paths * k)))
    return max(multiple, (raw // multiple) * multiple)


def _chunks(n_paths, threads):
    if threads <= 1 or n_paths < 2 * threads:
        return [(0, n_paths)]
    size = (n_paths + threads - 1) // threads
    return [(lo, min(lo + size, n_paths)) for lo in range(0, n_paths, size)]


def _run_chunk(kind, model_or_system, states, noise_sup, dt, n_steps, guard2,
               every, outs, path_offset, extra=None):
    """Advance one path chunk through all blocks; writes into out slices."""
    L_max = _block_len(states.shape[0], noise_sup.dim_noise, every)
    done = 0
    rec = 0
    while done < n_steps:
        L = min(L_max, n_steps - done)
        W = noise_sup.block(L)
        if kind == "advance":
            kernels.block_advance(model_or_system, states, W, dt, guard2,
                                  path_offset, done)
        elif kind == "record":
            kernels.block_advance_record(model_or_system, states, W, dt, guard2,
                                         every, outs, rec, path_offset, done)
            rec += L // every
        elif kind == "integrate":
            f, integrals, ckpts = extra
            kernels.block_advance_integrate(model_or_system, f, states, W, dt,
                                            guard2, every, integrals, ckpts, rec,
                                            path_offset, done)
            rec += L // every
        elif kind == "supnorm":
            kernels.block_advance_supnorm(model_or_system, states, W, dt, guard2,
                                          outs, path_offset, done)
        elif kind == "fast_slow":
            xs, eps, out_y, stiff = extra
            kernels.block_advance_fast_slow(model_or_system, xs, states, W, dt,
                                            eps, guard2, every, out_y, stiff, rec,
                                            path_offset, done)
            rec += L // every
        done += L


def _run_threaded(worker, chunks):
    threads = kernels.thread_count()
    if len(chunks) == 1 or threads <= 1:
        for c in chunks:
            worker(c)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(worker, c) for c in chunks]
        errs = [(i, f.exception()) for i, f in enumerate(futures) if f.exception()]
        if errs:
            raise errs[0][1]


def run_recorded(model, x0s, dt, n_steps, record_every, seed, stream_offset=0,
                 pooled_stream=None):
    """Thinned states (n, n_steps//record_every, d) for an ensemble.

    ``pooled_stream`` switches to a single shared stream (no per-path
    replay, used by internal ensembles); otherwise path i draws from the
    (seed, stream_offset+i) stream.
    """
    x0s = np.ascontiguousarray(x0s, dtype=np.float64)
    n, d = x0s.shape
    if n_steps % record_every:
        raise ValueError("record_every must divide n_steps")
    m = n_steps // record_every
    out = np.empty((n, m, d))
    states = x0s.copy()
    guard2 = model.guard_radius ** 2
    if pooled_stream is not None:
        sup = rng.PooledNoise(seed, pooled_stream, n, model.dim_noise)
        _run_chunk("record", model, states, sup, dt, n_steps, guard2,
                   record_every, out, 0)
        return out, states

    def worker(chunk):
        lo, hi = chunk
        sup = rng.EnsembleNoise(seed, hi - lo, model.dim_noise, stream_offset + lo)
        _run_chunk("record", model, states[lo:hi], sup, dt, n_steps, guard2,
                   record_every, out[lo:hi], lo)

    _run_threaded(worker, _chunks(n, kernels.thread_count()))
    return out, states


def run_final(model, x0s, dt, n_steps, seed, stream_offset=0, pooled_stream=None):
    """Terminal states only."""
    x0s = np.ascontiguousarray(x0s, dtype=np.float64)
    n = x0s.shape[0]
    states = x0s.copy()
    guard2 = model.guard_radius ** 2
    if pooled_stream is not None:
        sup = rng.PooledNoise(seed, pooled_stream, n, model.dim_noise)
        _run_chunk("advance", model, states, sup, dt, n_steps, guard2, 1, None, 0)
        return states

    def worker(chunk):
        lo, hi = chunk
        sup = rng.EnsembleNoise(seed, hi - lo, model.dim_noise, stream_offset + lo)
        _run_chunk("advance", model, states[lo:hi], sup, dt, n_steps, guard2,
                   1, None, lo)

    _run_threaded(worker, _chunks(n, kernels.thread_count()))
    return states


def run_integrals(model, f, x0s, dt, n_steps, checkpoint_every, seed,
                  stream_offset=0, pooled_stream=None, noise_supplier=None):
    """Trapezoidal path integrals of f with periodic checkpoints.

    Returns (checkpoints (n, n_steps//checkpoint_every), final integrals (n,),
    final states (n, d)).  ``noise_supplier`` overrides stream construction
    (used for grouped multi-stream batches).
    """
    x0s = np.ascontiguousarray(x0s, dtype=np.float64)
    n, d = x0s.shape
    if n_steps % checkpoint_every:
        raise ValueError("checkpoint_every must divide n_steps")
    mc = n_steps // checkpoint_every
    ckpts = np.empty((n, mc))
    integrals = np.zeros(n)
    states = x0s.copy()
    guard2 = model.guard_radius ** 2
    if noise_supplier is not None:
        _run_chunk("integrate", model, states, noise_supplier, dt, n_steps,
                   guard2, checkpoint_every, None, 0, extra=(f, integrals, ckpts))
        return ckpts, integrals, states
    if pooled_stream is not None:
        sup = rng.PooledNoise(seed, pooled_stream, n, model.dim_noise)
        _run_chunk("integrate", model, states, sup, dt, n_steps, guard2,
                   checkpoint_every, None, 0, extra=(f, integrals, ckpts))
        return ckpts, integrals, states

    def worker(chunk):
        lo, hi = chunk
        sup = rng.EnsembleNoise(seed, hi - lo, model.dim_noise, stream_offset + lo)
        _run_chunk("integrate", model, states[lo:hi], sup, dt, n_steps, guard2,
                   checkpoint_every, None, lo,
                   extra=(f, integrals[lo:hi], ckpts[lo:hi]))

    _run_threaded(worker, _chunks(n, kernels.thread_count()))
    return ckpts, integrals, states


def run_supmax(model, x0s, dt, n_steps, seed, stream_offset=0, pooled_stream=None):
    """Running max of |X|^2 over the whole trajectory, per path."""
    x0s = np.ascontiguousarray(x0s, dtype=np.float64)
    n = x0s.shape[0]
    states = x0s.copy()
    max2 = np.einsum("nc,nc->n", x0s, x0s).copy()
    guard2 = model.guard_radius ** 2
    if pooled_stream is not None:
        sup = rng.PooledNoise(seed, pooled_stream, n, model.dim_noise)
        _run_chunk("supnorm", model, states, sup, dt, n_steps, guard2, 1, max2, 0)
        return max2, states

    def worker(chunk):
        lo, hi = chunk
        sup = rng.EnsembleNoise(seed, hi - lo, model.dim_noise, stream_offset + lo)
        _run_chunk("supnorm", model, states[lo:hi], sup, dt, n_steps, guard2,
                   1, max2[lo:hi], lo)

    _run_threaded(worker, _chunks(n, kernels.thread_count()))
    return max2, states


def run_snapshots(model, x0s, dt, step_counts, seed, stream_offset=0,
                  pooled_stream=None):
    """States at the cumulative step counts in ``step_counts`` (increasing).

    One continuous noise stream per path across all segments; returns
    (n, len(step_counts), d).
    """
    x0s = np.ascontiguousarray(x0s, dtype=np.float64)
    n, d = x0s.shape
    step_counts = list(step_counts)
    if any(b < a for a, b in zip(step_counts, step_counts[1:])) or min(step_counts) < 0:
        raise ValueError("step_counts must be nondecreasing and nonnegative")
    out = np.empty((n, len(step_counts), d))
    guard2 = model.guard_radius ** 2

    def worker(chunk):
        lo, hi = chunk
        if pooled_stream is not None:
            sup = rng.PooledNoise(seed, pooled_stream, hi - lo, model.dim_noise)
        else:
            sup = rng.EnsembleNoise(seed, hi - lo, model.dim_noise,
                                    stream_offset + lo)
        states = x0s[lo:hi].copy()
        done = 0
        for idx, target in enumerate(step_counts):
            if target > done:
                _run_chunk("advance", model, states, sup, dt, target - done,
                           guard2, 1, None, lo)
                done = target
            out[lo:hi, idx, :] = states

    if pooled_stream is not None:
        worker((0, n))
    else:
        _run_threaded(worker, _chunks(n, kernels.thread_count()))
    return out


def run_fast_slow(system, x0, y0, n_paths, eps, fast_dt, n_steps, record_every,
                  seed, stream_offset=0):
    """Coupled fast-slow ensemble; records the slow component.

    Returns (y records (n, m, ell), final x (n, d), final y (n, ell),
    stiff fraction).
    """
    d = system.fast.dim_x
    ell = system.dim_y
    xs = np.ascontiguousarray(np.tile(np.asarray(x0, dtype=np.float64), (n_paths, 1)))
    ys = np.ascontiguousarray(np.tile(np.asarray(y0, dtype=np.float64), (n_paths, 1)))
    if n_steps % record_every:
        raise ValueError("record_every must divide n_steps")
    m = n_steps // record_every
    out_y = np.empty((n_paths, m, ell))
    stiff = np.zeros(n_paths, dtype=np.int64)
    guard2 = system.fast.guard_radius ** 2

    def worker(chunk):
        lo, hi = chunk
        sup = rng.EnsembleNoise(seed, hi - lo, system.fast.dim_noise,
                                stream_offset + lo)
        _run_chunk("fast_slow", system, ys[lo:hi], sup, fast_dt, n_steps, guard2,
                   record_every, None, lo,
                   extra=(xs[lo:hi], eps, out_y[lo:hi], stiff[lo:hi]))

    _run_threaded(worker, _chunks(n_paths, kernels.thread_count()))
    stiff_frac = float(stiff.sum()) / (n_paths * n_steps)
    return out_y, xs, ys, stiff_frac


# ---------------------------------------------------------------------------
# public simulation operations

def simulate_path(model: SdeModel, x0, cfg: IntegratorConfig,
                  stream_index: int = 0) -> Path:
    """One trajectory on the thinned grid; reproducible in isolation.

    The noise stream is keyed by (cfg.seed, stream_index), so path i of an
    ensemble can be regenerated alone by passing stream_index=i.
    """
    x0 = np.asarray(x0, dtype=float).reshape(1, model.dim_x)
    recorded, _ = run_recorded(model, x0, cfg.dt, cfg.n_steps, cfg.thinning,
                               cfg.seed, stream_offset=stream_index)
    m = recorded.shape[1]
    times = np.concatenate([[0.0], (np.arange(1, m + 1) * cfg.thinning) * cfg.dt])
    states = np.concatenate([x0, recorded[0]], axis=0)
    return Path(times, states)


def simulate_ensemble(model: SdeModel, x0, cfg: IntegratorConfig) -> Ensemble:
    """n_paths independent trajectories; path i uses stream index i."""
    x0 = np.asarray(x0, dtype=float).reshape(model.dim_x)
    x0s = np.tile(x0, (cfg.n_paths, 1))
    recorded, _ = run_recorded(model, x0s, cfg.dt, cfg.n_steps, cfg.thinning,
                               cfg.seed)
    m = recorded.shape[1]
    times = np.concatenate([[0.0], (np.arange(1, m + 1) * cfg.thinning) * cfg.dt])
    states = np.concatenate([np.tile(x0, (cfg.n_paths, 1, 1)), recorded], axis=1)
    return Ensemble(times, states, cfg, model.label)


# ---------------------------------------------------------------------------
# serialization

def format_float(x: float) -> str:
    """Shortest round-trip decimal form; byte-stable across runs."""
    return repr(float(x))


def ensemble_to_csv(ensemble: Ensemble, csv_path, json_path) -> None:
    """CSV rows (path_id, t, x_1..x_d) plus a JSON header with the config."""
    d = ensemble.states.shape[2]
    header = ["path_id", "t"] + [f"x_{c + 1}" for c in range(d)]
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(ensemble.n_paths):
            for j, t in enumerate(ensemble.times):
                row = [str(i), format_float(t)]
                row += [format_float(v) for v in ensemble.states[i, j]]
                fh.write(",".join(row) + "\n")
    meta = {
        "model_label": ensemble.model_label,
        "config": {
            "dt": ensemble.config.dt,
            "horizon": ensemble.config.horizon,
            "seed": ensemble.config.seed,
            "n_paths": ensemble.config.n_paths,
            "thinning": ensemble.config.thinning,
        },
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
