"""Pure NumPy/Python stepping backend.

Implements the same kernels as the compiled extension.  For native
coefficient kinds every floating-point operation is written in the same
order as the C code, so both backends produce bit-identical states.
Models defined by arbitrary Python callables are handled by the
``*_callable`` variants, which only this backend provides.

All kernels advance explicit Euler steps

    x <- (x + b(x) dt) + sigma(x) (sqrt(dt) w)

over a block of pre-generated standard-normal noise shaped
(block_len, n_paths, dim_noise), mutating the state array in place.
They return ``(code, path, step)`` where code 0 is success, 1 a guard-ball
exit and 2 a NaN state; the dispatcher turns codes into exceptions.
"""

from __future__ import annotations

import math

import numpy as np

from . import specs

OK = (0, -1, -1)


def _scan_bad(r2, guard2, j):
    """First index violating the guard in step j, classified."""
    bad = ~(r2 <= guard2)
    if not bad.any():
        return None
    i = int(np.argmax(bad))
    code = 2 if np.isnan(r2[i]) else 1
    return (code, i, j)


def _unpack_affine(params):
    d = int(params[0])
    A = params[1:1 + d * d].reshape(d, d)
    c = params[1 + d * d:1 + d * d + d]
    s = params[1 + d * d + d:1 + d * d + 2 * d]
    return d, A, c, s


def _drift_1d(kind, p, x):
    if kind == specs.SDE_LINEAR_1D:
        return p[0] * x + p[1]
    if kind == specs.SDE_POLY3_1D:
        x2 = x * x
        return (p[0] + p[1] * x) + p[2] * (x2 * x)
    raise ValueError(f"not a scalar drift kind: {kind}")


def _sigma_1d(kind, p):
    return p[2] if kind == specs.SDE_LINEAR_1D else p[3]


def _step_native(kind, p, X, T, dt):
    """One Euler step for all paths; X mutated in place, T = sqrt(dt)*w."""
    if kind in (specs.SDE_LINEAR_1D, specs.SDE_POLY3_1D):
        x = X[:, 0]
        t1 = _drift_1d(kind, p, x) * dt
        t2 = _sigma_1d(kind, p) * T[:, 0]
        X[:, 0] = (x + t1) + t2
        return X[:, 0] * X[:, 0]
    if kind == specs.SDE_DEGEN_2D:
        x0 = X[:, 0]
        x1 = X[:, 1]
        r2 = x0 * x0 + x1 * x1
        al = r2 / (1.0 + r2)
        b0 = 1.0 - x0
        b1 = -x1
        X[:, 0] = (x0 + b0 * dt) + al * T[:, 0]
        X[:, 1] = (x1 + b1 * dt) + al * T[:, 1]
        return X[:, 0] * X[:, 0] + X[:, 1] * X[:, 1]
    if kind == specs.SDE_AFFINE_DIAG:
        d, A, c, s = _unpack_affine(p)
        B = np.empty_like(X)
        for i in range(d):
            acc = c[i] + A[i, 0] * X[:, 0]
            for jj in range(1, d):
                acc = acc + A[i, jj] * X[:, jj]
            B[:, i] = acc
        r2 = None
        for i in range(d):
            X[:, i] = (X[:, i] + B[:, i] * dt) + s[i] * T[:, i]
            sq = X[:, i] * X[:, i]
            r2 = sq if r2 is None else r2 + sq
        return r2
    raise ValueError(f"unknown sde kind: {kind}")


def _eval_scalar(fkind, fp, X):
    d = int(fp[0])
    if fkind == specs.F_AFFINE:
        a = fp[2:2 + d]
        acc = fp[1] + a[0] * X[:, 0]
        for j in range(1, d):
            acc = acc + a[j] * X[:, j]
        return acc
    if fkind == specs.F_QUAD_DIAG:
        a = fp[2:2 + d]
        q = fp[2 + d:2 + 2 * d]
        acc = fp[1] + a[0] * X[:, 0]
        for j in range(1, d):
            acc = acc + a[j] * X[:, j]
        for j in range(d):
            acc = acc + q[j] * (X[:, j] * X[:, j])
        return acc
    raise ValueError(f"unknown scalar kind: {fkind}")


# ---------------------------------------------------------------------------
# native kernels

def advance(kind, params, states, noise, dt, guard2):
    sq = math.sqrt(dt)
    for j in range(noise.shape[0]):
        r2 = _step_native(kind, params, states, sq * noise[j], dt)
        bad = _scan_bad(r2, guard2, j)
        if bad:
            return bad
    return OK


def advance_record(kind, params, states, noise, dt, guard2, record_every, out, rec_offset):
    L = noise.shape[0]
    if L % record_every:
        raise ValueError("block length must be a multiple of record_every")
    if states.shape[0] == 1 and kind in (specs.SDE_LINEAR_1D, specs.SDE_POLY3_1D):
        return _advance_record_scalar(kind, params, states, noise, dt, guard2,
                                      record_every, out, rec_offset)
    sq = math.sqrt(dt)
    ci = rec_offset
    for j in range(L):
        r2 = _step_native(kind, params, states, sq * noise[j], dt)
        bad = _scan_bad(r2, guard2, j)
        if bad:
            return bad
        if (j + 1) % record_every == 0:
            out[:, ci, :] = states
            ci += 1
    return OK


def _advance_record_scalar(kind, p, states, noise, dt, guard2, record_every, out, rec_offset):
    # Tight float loop for single long trajectories: Python floats follow the
    # same IEEE arithmetic as the C kernel, so parity is preserved.  The
    # guard is only checked at record boundaries; NaN/Inf cannot recover, so
    # detection is merely delayed within one record interval.
    sq = math.sqrt(dt)
    x = float(states[0, 0])
    w_iter = iter(noise[:, 0, 0].tolist())
    ci = rec_offset
    n_rec = noise.shape[0] // record_every
    if kind == specs.SDE_LINEAR_1D:
        a, c, s = p[0], p[1], p[2]
        for _ in range(n_rec):
            for _ in range(record_every):
                w = next(w_iter)
                t1 = (a * x + c) * dt
                t2 = s * (sq * w)
                x = (x + t1) + t2
            if not (x * x <= guard2):
                states[0, 0] = x
                return (2 if x != x else 1, 0, (ci - rec_offset + 1) * record_every - 1)
            out[0, ci, 0] = x
            ci += 1
    else:
        c0, c1, c3, s = p[0], p[1], p[2], p[3]
        for _ in range(n_rec):
            for _ in range(record_every):
                w = next(w_iter)
                x2 = x * x
                t1 = ((c0 + c1 * x) + c3 * (x2 * x)) * dt
                t2 = s * (sq * w)
                x = (x + t1) + t2
            if not (x * x <= guard2):
                states[0, 0] = x
                return (2 if x != x else 1, 0, (ci - rec_offset + 1) * record_every - 1)
            out[0, ci, 0] = x
            ci += 1
    states[0, 0] = x
    return OK


def advance_integrate(kind, params, fkind, fparams, states, noise, dt, guard2,
                      checkpoint_every, integrals, out_checkpoints, ckpt_offset):
    L = noise.shape[0]
    if L % checkpoint_every:
        raise ValueError("block length must be a multiple of checkpoint_every")
    sq = math.sqrt(dt)
    hdt = 0.5 * dt
    fprev = _eval_scalar(fkind, fparams, states)
    ci = ckpt_offset
    for j in range(L):
        r2 = _step_native(kind, params, states, sq * noise[j], dt)
        bad = _scan_bad(r2, guard2, j)
        if bad:
            return bad
        fcur = _eval_scalar(fkind, fparams, states)
        integrals += hdt * (fprev + fcur)
        fprev = fcur
        if (j + 1) % checkpoint_every == 0:
            out_checkpoints[:, ci] = integrals
            ci += 1
    return OK


def advance_supnorm(kind, params, states, noise, dt, guard2, max2):
    sq = math.sqrt(dt)
    for j in range(noise.shape[0]):
        r2 = _step_native(kind, params, states, sq * noise[j], dt)
        bad = _scan_bad(r2, guard2, j)
        if bad:
            return bad
        np.maximum(max2, r2, out=max2)
    return OK


def advance_fast_slow(fskind, fsparams, xkind, xparams, xs, ys, noise, fast_dt,
                      eps, guard2, record_every, out_y, stiff_counts, rec_offset):
    L = noise.shape[0]
    if L % record_every:
        raise ValueError("block length must be a multiple of record_every")
    a_f, c_g = fsparams[0], fsparams[1]
    s_x = _sigma_1d(xkind, xparams)
    sq = math.sqrt(fast_dt)
    dts = (eps * eps) * fast_dt
    efdt = eps * fast_dt
    x = xs
    y = ys
    ci = rec_offset
    for j in range(L):
        T = sq * noise[j, :, 0]
        if fskind == specs.FS_LIN:
            g = c_g * x
        else:
            g = (c_g * x) * np.sqrt(1.0 + y * y)
        stiff_counts += efdt * np.abs(g) > 0.1 * (1.0 + np.abs(y))
        t1 = _drift_1d(xkind, xparams, x) * fast_dt
        t2 = s_x * T
        t3 = (a_f * y) * dts
        t4 = g * efdt
        xn = (x + t1) + t2
        yn = (y + t3) + t4
        x[...] = xn
        y[...] = yn
        bad = _scan_bad(x * x, guard2, j) or _scan_bad(y * y, guard2, j)
        if bad:
            return bad
        if (j + 1) % record_every == 0:
            out_y[:, ci, 0] = y
            ci += 1
    return OK


# ---------------------------------------------------------------------------
# callable-model kernels (pure backend only)

class CallableSde:
    """Batch adapter around a model defined by Python callables.

    ``vectorized`` models receive (n, d) state blocks directly; pointwise
    models are evaluated row by row.  Non-finite coefficient values raise
    immediately, pointing at the offending path.
    """

    def __init__(self, model):
        self.model = model
        self.d = model.dim_x
        self.k = model.dim_noise

    def b(self, X):
        if self.model.vectorized:
            B = np.asarray(self.model.drift(X), dtype=np.float64)
        else:
            B = np.stack([np.asarray(self.model.drift(x), dtype=np.float64).ravel()
                          for x in X])
        B = B.reshape(X.shape[0], self.d)
        if not np.isfinite(B).all():
            i = int(np.argmax(~np.isfinite(B).all(axis=1)))
            raise _NonFinite(i)
        return B

    def sig_dot(self, X, T):
        if self.model.vectorized:
            S = np.asarray(self.model.diffusion(X), dtype=np.float64)
            S = S.reshape(X.shape[0], self.d, self.k)
        else:
            S = np.stack([np.asarray(self.model.diffusion(x), dtype=np.float64)
                          .reshape(self.d, self.k) for x in X])
        if not np.isfinite(S).all():
            i = int(np.argmax(~np.isfinite(S.reshape(X.shape[0], -1)).all(axis=1)))
            raise _NonFinite(i)
        return np.einsum("nck,nk->nc", S, T)


class _NonFinite(Exception):
    def __init__(self, path):
        self.path = path


def _step_callable(ev, X, T, dt):
    B = ev.b(X)
    inc = ev.sig_dot(X, T)
    X[...] = (X + B * dt) + inc
    return np.einsum("nc,nc->n", X, X)


def advance_callable(ev, states, noise, dt, guard2):
    sq = math.sqrt(dt)
    for j in range(noise.shape[0]):
        try:
            r2 = _step_callable(ev, states, sq * noise[j], dt)
        except _NonFinite as e:
            return (2, e.path, j)
        bad = _scan_bad(r2, guard2, j)
        if bad:
            return bad
    return OK


def advance_record_callable(ev, states, noise, dt, guard2, record_every, out, rec_offset):
    sq = math.sqrt(dt)
    ci = rec_offset
    for j in range(noise.shape[0]):
        try:
            r2 = _step_callable(ev, states, sq * noise[j], dt)
        except _NonFinite as e:
            return (2, e.path, j)
        bad = _scan_bad(r2, guard2, j)
        if bad:
            return bad
        if (j + 1) % record_every == 0:
            out[:, ci, :] = states
            ci += 1
    return OK


def advance_integrate_callable(ev, f_batch, states, noise, dt, guard2,
                               checkpoint_every, integrals, out_checkpoints, ckpt_offset):
    sq = math.sqrt(dt)
    hdt = 0.5 * dt
    fprev = f_batch(states)
    ci = ckpt_offset
    for j in range(noise.shape[0]):
        try:
            r2 = _step_callable(ev, states, sq * noise[j], dt)
        except _NonFinite as e:
            return (2, e.path, j)
        bad = _scan_bad(r2, guard2, j)
        if bad:
            return bad
        fcur = f_batch(states)
        integrals += hdt * (fprev + fcur)
        fprev = fcur
        if (j + 1) % checkpoint_every == 0:
            out_checkpoints[:, ci] = integrals
            ci += 1
    return OK


def advance_supnorm_callable(ev, states, noise, dt, guard2, max2):
    sq = math.sqrt(dt)
    for j in range(noise.shape[0]):
        try:
            r2 = _step_callable(ev, states, sq * noise[j], dt)
        except _NonFinite as e:
            return (2, e.path, j)
        bad = _scan_bad(r2, guard2, j)
        if bad:
            return bad
        np.maximum(max2, r2, out=max2)
    return OK


def advance_fast_slow_callable(ev, F_batch, G_batch, xs, ys, noise, fast_dt,
                               eps, guard2, record_every, out_y, stiff_counts, rec_offset):
    """Coupled stepping for callable systems; xs (n, d), ys (n, ell)."""
    sq = math.sqrt(fast_dt)
    dts = (eps * eps) * fast_dt
    efdt = eps * fast_dt
    ci = rec_offset
    for j in range(noise.shape[0]):
        T = sq * noise[j]
        g = G_batch(xs, ys)
        f = F_batch(xs, ys)
        gnorm = np.sqrt(np.einsum("nc,nc->n", g, g))
        ynorm = np.sqrt(np.einsum("nc,nc->n", ys, ys))
        stiff_counts += efdt * gnorm > 0.1 * (1.0 + ynorm)
        yn = (ys + f * dts) + g * efdt
        try:
            r2x = _step_callable(ev, xs, T, fast_dt)
        except _NonFinite as e:
            return (2, e.path, j)
        ys[...] = yn
        bad = _scan_bad(r2x, guard2, j) or _scan_bad(
            np.einsum("nc,nc->n", ys, ys), guard2, j)
        if bad:
            return bad
        if (j + 1) % record_every == 0:
            out_y[:, ci, :] = ys
            ci += 1
    return OK
