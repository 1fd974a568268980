# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled stepping kernels for native coefficient kinds.

Each function mirrors its twin in ``pure.py`` operation-for-operation
(same evaluation order, no FP contraction), so results are bit-identical
across backends.  Loops run without the GIL; the dispatcher may call them
from worker threads on disjoint path chunks.
"""

from libc.math cimport sqrt, fabs
from libc.stdlib cimport malloc, free

cimport cython

# kind ids, kept in sync with specs.py
cdef enum:
    K_LINEAR_1D = 0
    K_POLY3_1D = 1
    K_AFFINE_DIAG = 2
    K_DEGEN_2D = 3

cdef enum:
    F_AFFINE = 0
    F_QUAD_DIAG = 1

cdef enum:
    FS_LIN = 0
    FS_SQRT1PY2 = 1


cdef inline double _drift1(int kind, const double* p, double x) nogil:
    cdef double x2
    if kind == K_LINEAR_1D:
        return p[0] * x + p[1]
    x2 = x * x
    return (p[0] + p[1] * x) + p[2] * (x2 * x)


cdef inline double _sigma1(int kind, const double* p) nogil:
    return p[2] if kind == K_LINEAR_1D else p[3]


cdef inline double _feval(int fkind, const double* fp, const double* x) nogil:
    cdef int d = <int> fp[0]
    cdef int j
    cdef double acc = fp[1] + fp[2] * x[0]
    for j in range(1, d):
        acc = acc + fp[2 + j] * x[j]
    if fkind == F_QUAD_DIAG:
        for j in range(d):
            acc = acc + fp[2 + d + j] * (x[j] * x[j])
    return acc


cdef inline int _classify(double r2) nogil:
    # NaN compares unequal to itself
    return 2 if r2 != r2 else 1


cdef int _step_block(int kind, const double* p, double[:, ::1] X,
                     const double[:, :, ::1] W, double dt, double guard2,
                     Py_ssize_t j0, Py_ssize_t j1,
                     Py_ssize_t* bad_i, Py_ssize_t* bad_j) nogil:
    """Advance steps j0..j1-1 for all paths. Returns 0/1/2 like pure.py."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    cdef Py_ssize_t i, j, c, jj
    cdef double sq = sqrt(dt)
    cdef double x, t1, t2, r2, x0, x1, al, b0, b1, acc
    cdef double* b
    cdef double s
    cdef int code = 0

    if kind == K_LINEAR_1D or kind == K_POLY3_1D:
        s = _sigma1(kind, p)
        for j in range(j0, j1):
            for i in range(n):
                x = X[i, 0]
                t1 = _drift1(kind, p, x) * dt
                t2 = s * (sq * W[j, i, 0])
                x = (x + t1) + t2
                X[i, 0] = x
                r2 = x * x
                if not (r2 <= guard2):
                    bad_i[0] = i; bad_j[0] = j
                    return _classify(r2)
        return 0

    if kind == K_DEGEN_2D:
        for j in range(j0, j1):
            for i in range(n):
                x0 = X[i, 0]
                x1 = X[i, 1]
                r2 = x0 * x0 + x1 * x1
                al = r2 / (1.0 + r2)
                b0 = 1.0 - x0
                b1 = -x1
                x0 = (x0 + b0 * dt) + al * (sq * W[j, i, 0])
                x1 = (x1 + b1 * dt) + al * (sq * W[j, i, 1])
                X[i, 0] = x0
                X[i, 1] = x1
                r2 = x0 * x0 + x1 * x1
                if not (r2 <= guard2):
                    bad_i[0] = i; bad_j[0] = j
                    return _classify(r2)
        return 0

    # K_AFFINE_DIAG: p = [d, A row-major, c, s]
    b = <double*> malloc(d * sizeof(double))
    if b == NULL:
        bad_i[0] = -1; bad_j[0] = -1
        return 3
    for j in range(j0, j1):
        if code:
            break
        for i in range(n):
            for c in range(d):
                acc = p[1 + d * d + c] + p[1 + c * d] * X[i, 0]
                for jj in range(1, d):
                    acc = acc + p[1 + c * d + jj] * X[i, jj]
                b[c] = acc
            r2 = 0.0
            for c in range(d):
                x = (X[i, c] + b[c] * dt) + p[1 + d * d + d + c] * (sq * W[j, i, c])
                X[i, c] = x
                r2 = r2 + x * x
            if not (r2 <= guard2):
                bad_i[0] = i; bad_j[0] = j
                code = _classify(r2)
                break
    free(b)
    return code


def advance(int kind, const double[::1] params, double[:, ::1] states,
            const double[:, :, ::1] noise, double dt, double guard2):
    cdef Py_ssize_t bi = -1, bj = -1
    cdef int code
    cdef const double* p = NULL
    if params.shape[0] > 0:
        p = &params[0]
    with nogil:
        code = _step_block(kind, p, states, noise, dt, guard2,
                           0, noise.shape[0], &bi, &bj)
    return (code, bi, bj)


def advance_record(int kind, const double[::1] params, double[:, ::1] states,
                   const double[:, :, ::1] noise, double dt, double guard2,
                   Py_ssize_t record_every, double[:, :, ::1] out,
                   Py_ssize_t rec_offset):
    cdef Py_ssize_t L = noise.shape[0]
    cdef Py_ssize_t n = states.shape[0]
    cdef Py_ssize_t d = states.shape[1]
    cdef Py_ssize_t bi = -1, bj = -1
    cdef Py_ssize_t ci, j, i, c
    cdef int code = 0
    if L % record_every:
        raise ValueError("block length must be a multiple of record_every")
    cdef const double* p = NULL
    if params.shape[0] > 0:
        p = &params[0]
    with nogil:
        ci = rec_offset
        j = 0
        while j < L:
            code = _step_block(kind, p, states, noise, dt, guard2,
                               j, j + record_every, &bi, &bj)
            if code:
                break
            for i in range(n):
                for c in range(d):
                    out[i, ci, c] = states[i, c]
            ci += 1
            j += record_every
    return (code, bi, bj)


def advance_integrate(int kind, const double[::1] params, int fkind, const double[::1] fparams,
                      double[:, ::1] states, const double[:, :, ::1] noise, double dt,
                      double guard2, Py_ssize_t checkpoint_every,
                      double[::1] integrals, double[:, ::1] out_checkpoints,
                      Py_ssize_t ckpt_offset):
    cdef Py_ssize_t L = noise.shape[0]
    cdef Py_ssize_t n = states.shape[0]
    cdef Py_ssize_t bi = -1, bj = -1
    cdef Py_ssize_t ci, j, i
    cdef int code = 0
    cdef double hdt = 0.5 * dt
    cdef double fcur
    cdef double* fprev
    if L % checkpoint_every:
        raise ValueError("block length must be a multiple of checkpoint_every")
    cdef const double* p = NULL
    if params.shape[0] > 0:
        p = &params[0]
    cdef const double* fp = &fparams[0]
    fprev = <double*> malloc(n * sizeof(double))
    if fprev == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                fprev[i] = _feval(fkind, fp, &states[i, 0])
            ci = ckpt_offset
            for j in range(L):
                code = _step_block(kind, p, states, noise, dt, guard2,
                                   j, j + 1, &bi, &bj)
                if code:
                    break
                for i in range(n):
                    fcur = _feval(fkind, fp, &states[i, 0])
                    integrals[i] = integrals[i] + hdt * (fprev[i] + fcur)
                    fprev[i] = fcur
                if (j + 1) % checkpoint_every == 0:
                    for i in range(n):
                        out_checkpoints[i, ci] = integrals[i]
                    ci += 1
    finally:
        free(fprev)
    return (code, bi, bj)


def advance_supnorm(int kind, const double[::1] params, double[:, ::1] states,
                    const double[:, :, ::1] noise, double dt, double guard2,
                    double[::1] max2):
    cdef Py_ssize_t L = noise.shape[0]
    cdef Py_ssize_t n = states.shape[0]
    cdef Py_ssize_t d = states.shape[1]
    cdef Py_ssize_t bi = -1, bj = -1
    cdef Py_ssize_t j, i, c
    cdef int code = 0
    cdef double r2
    cdef const double* p = NULL
    if params.shape[0] > 0:
        p = &params[0]
    with nogil:
        for j in range(L):
            code = _step_block(kind, p, states, noise, dt, guard2,
                               j, j + 1, &bi, &bj)
            if code:
                break
            for i in range(n):
                r2 = 0.0
                for c in range(d):
                    r2 = r2 + states[i, c] * states[i, c]
                if r2 > max2[i]:
                    max2[i] = r2
    return (code, bi, bj)


def advance_fast_slow(int fskind, const double[::1] fsparams, int xkind, const double[::1] xparams,
                      double[::1] xs, double[::1] ys, const double[:, :, ::1] noise,
                      double fast_dt, double eps, double guard2,
                      Py_ssize_t record_every, double[:, :, ::1] out_y,
                      long[::1] stiff_counts, Py_ssize_t rec_offset):
    cdef Py_ssize_t L = noise.shape[0]
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t bi = -1, bj = -1
    cdef Py_ssize_t ci, j, i
    cdef int code = 0
    cdef double a_f = fsparams[0]
    cdef double c_g = fsparams[1]
    cdef double s_x = _sigma1(xkind, &xparams[0])
    cdef double sq = sqrt(fast_dt)
    cdef double dts = (eps * eps) * fast_dt
    cdef double efdt = eps * fast_dt
    cdef double x, y, g, t1, t2, t3, t4, xn, yn, r2
    if L % record_every:
        raise ValueError("block length must be a multiple of record_every")
    with nogil:
        ci = rec_offset
        for j in range(L):
            for i in range(n):
                x = xs[i]
                y = ys[i]
                if fskind == FS_LIN:
                    g = c_g * x
                else:
                    g = (c_g * x) * sqrt(1.0 + y * y)
                if efdt * fabs(g) > 0.1 * (1.0 + fabs(y)):
                    stiff_counts[i] += 1
                t1 = _drift1(xkind, &xparams[0], x) * fast_dt
                t2 = s_x * (sq * noise[j, i, 0])
                t3 = (a_f * y) * dts
                t4 = g * efdt
                xn = (x + t1) + t2
                yn = (y + t3) + t4
                xs[i] = xn
                ys[i] = yn
            if not code:
                for i in range(n):
                    r2 = xs[i] * xs[i]
                    if not (r2 <= guard2):
                        code = _classify(r2); bi = i; bj = j
                        break
            if not code:
                for i in range(n):
                    r2 = ys[i] * ys[i]
                    if not (r2 <= guard2):
                        code = _classify(r2); bi = i; bj = j
                        break
            if code:
                break
            if (j + 1) % record_every == 0:
                for i in range(n):
                    out_y[i, ci, 0] = ys[i]
                ci += 1
    return (code, bi, bj)
