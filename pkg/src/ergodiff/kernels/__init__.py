"""Stepping-kernel backends and per-call dispatch.

The compiled extension is preferred for models that carry a native
coefficient descriptor; everything else (and every model when the
extension is unavailable or ``ERGODIFF_BACKEND=pure`` is set) runs on the
pure NumPy/Python backend.  Both produce bit-identical output for native
models, so the choice is purely about speed.
"""

from __future__ import annotations

import os

import numpy as np

from .. import errors
from . import pure, specs

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

_VALID_MODES = ("auto", "native", "pure")


def have_native() -> bool:
    return _core is not None


def backend_mode() -> str:
    mode = os.environ.get("ERGODIFF_BACKEND", "auto")
    if mode not in _VALID_MODES:
        raise errors.ConfigError(
            f"ERGODIFF_BACKEND must be one of {_VALID_MODES}, got {mode!r}")
    return mode


def _use_native(native_spec) -> bool:
    if native_spec is None or _core is None:
        return False
    return backend_mode() != "pure"


def backend_for(model) -> str:
    """Name of the backend a given model's hot loops will run on."""
    return "native" if _use_native(getattr(model, "native", None)) else "pure"


def thread_count() -> int:
    raw = os.environ.get("ERGODIFF_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise errors.ConfigError(f"ERGODIFF_THREADS must be an integer, got {raw!r}")
    return max(1, n)


def _raise(code, i, j, path_offset, step_offset):
    if code == 0:
        return
    path = i + path_offset
    step = j + step_offset
    if code == 2:
        raise errors.NonFiniteEvaluation(
            f"state became NaN on path {path} at step {step}")
    if code == 1:
        raise errors.Blowup(
            f"state left the guard ball on path {path} at step {step}",
            path_index=path, step=step)
    raise MemoryError("kernel allocation failed")


def block_advance(model, states, noise, dt, guard2, path_offset=0, step_offset=0):
    if _use_native(model.native):
        res = _core.advance(model.native.kind, model.native.params, states,
                            noise, dt, guard2)
    elif model.native is not None:
        res = pure.advance(model.native.kind, model.native.params, states,
                           noise, dt, guard2)
    else:
        res = pure.advance_callable(pure.CallableSde(model), states, noise, dt, guard2)
    _raise(*res, path_offset, step_offset)


def block_advance_record(model, states, noise, dt, guard2, record_every, out,
                         rec_offset, path_offset=0, step_offset=0):
    if _use_native(model.native):
        res = _core.advance_record(model.native.kind, model.native.params, states,
                                   noise, dt, guard2, record_every, out, rec_offset)
    elif model.native is not None:
        res = pure.advance_record(model.native.kind, model.native.params, states,
                                  noise, dt, guard2, record_every, out, rec_offset)
    else:
        res = pure.advance_record_callable(pure.CallableSde(model), states, noise,
                                           dt, guard2, record_every, out, rec_offset)
    _raise(*res, path_offset, step_offset)


def block_advance_integrate(model, f, states, noise, dt, guard2, checkpoint_every,
                            integrals, out_checkpoints, ckpt_offset,
                            path_offset=0, step_offset=0):
    f_native = getattr(f, "native", None)
    if _use_native(model.native) and f_native is not None:
        res = _core.advance_integrate(model.native.kind, model.native.params,
                                      f_native.kind, f_native.params, states, noise,
                                      dt, guard2, checkpoint_every, integrals,
                                      out_checkpoints, ckpt_offset)
    elif model.native is not None and f_native is not None:
        res = pure.advance_integrate(model.native.kind, model.native.params,
                                     f_native.kind, f_native.params, states, noise,
                                     dt, guard2, checkpoint_every, integrals,
                                     out_checkpoints, ckpt_offset)
    else:
        if model.native is not None:
            # native model, callable integrand: step natively inside the
            # callable kernel via an exact-evaluating adapter
            ev = _NativeAsCallable(model)
        else:
            ev = pure.CallableSde(model)
        res = pure.advance_integrate_callable(ev, f.batch, states, noise, dt,
                                              guard2, checkpoint_every, integrals,
                                              out_checkpoints, ckpt_offset)
    _raise(*res, path_offset, step_offset)


def block_advance_supnorm(model, states, noise, dt, guard2, max2,
                          path_offset=0, step_offset=0):
    if _use_native(model.native):
        res = _core.advance_supnorm(model.native.kind, model.native.params, states,
                                    noise, dt, guard2, max2)
    elif model.native is not None:
        res = pure.advance_supnorm(model.native.kind, model.native.params, states,
                                   noise, dt, guard2, max2)
    else:
        res = pure.advance_supnorm_callable(pure.CallableSde(model), states, noise,
                                            dt, guard2, max2)
    _raise(*res, path_offset, step_offset)


def block_advance_fast_slow(system, xs, ys, noise, fast_dt, eps, guard2,
                            record_every, out_y, stiff_counts, rec_offset,
                            path_offset=0, step_offset=0):
    fs = system.native_fs
    xnative = system.fast.native
    scalar_fast = xnative is not None and xnative.kind in (
        specs.SDE_LINEAR_1D, specs.SDE_POLY3_1D)
    if fs is not None and scalar_fast and _core is not None and backend_mode() != "pure":
        res = _core.advance_fast_slow(fs.kind, fs.params, xnative.kind,
                                      xnative.params, xs[:, 0], ys[:, 0], noise,
                                      fast_dt, eps, guard2, record_every, out_y,
                                      stiff_counts, rec_offset)
    elif fs is not None and scalar_fast:
        res = pure.advance_fast_slow(fs.kind, fs.params, xnative.kind,
                                     xnative.params, xs[:, 0], ys[:, 0], noise,
                                     fast_dt, eps, guard2, record_every, out_y,
                                     stiff_counts, rec_offset)
    else:
        ev = (pure.CallableSde(system.fast) if system.fast.native is None
              else _NativeAsCallable(system.fast))
        res = pure.advance_fast_slow_callable(ev, system.batch_F, system.batch_G,
                                              xs, ys, noise, fast_dt, eps, guard2,
                                              record_every, out_y, stiff_counts,
                                              rec_offset)
    _raise(*res, path_offset, step_offset)


class _NativeAsCallable:
    """Vectorized exact evaluation of a native model, for mixed cases
    (native dynamics, callable integrand)."""

    def __init__(self, model):
        self.model = model
        self.spec = model.native

    def b(self, X):
        kind, p = self.spec.kind, self.spec.params
        if kind in (specs.SDE_LINEAR_1D, specs.SDE_POLY3_1D):
            return pure._drift_1d(kind, p, X[:, 0]).reshape(-1, 1)
        if kind == specs.SDE_DEGEN_2D:
            out = np.empty_like(X)
            out[:, 0] = 1.0 - X[:, 0]
            out[:, 1] = -X[:, 1]
            return out
        d, A, c, _ = pure._unpack_affine(p)
        out = np.empty_like(X)
        for i in range(d):
            acc = c[i] + A[i, 0] * X[:, 0]
            for j in range(1, d):
                acc = acc + A[i, j] * X[:, j]
            out[:, i] = acc
        return out

    def sig_dot(self, X, T):
        kind, p = self.spec.kind, self.spec.params
        if kind in (specs.SDE_LINEAR_1D, specs.SDE_POLY3_1D):
            return (pure._sigma_1d(kind, p) * T[:, 0]).reshape(-1, 1)
        if kind == specs.SDE_DEGEN_2D:
            r2 = X[:, 0] * X[:, 0] + X[:, 1] * X[:, 1]
            al = r2 / (1.0 + r2)
            return al[:, None] * T
        d, _, _, s = pure._unpack_affine(p)
        return s[None, :] * T
