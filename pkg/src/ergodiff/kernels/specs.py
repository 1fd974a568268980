"""Native coefficient descriptors understood by the compiled stepping core.

Models shipped with the package attach one of these descriptors so their
hot loops can run in the compiled extension.  User models built from
arbitrary Python callables simply have no descriptor and run on the pure
backend.  Both backends implement each kind with the *same floating-point
operation order*, so switching backends never changes a single bit of the
output; the parity tests rely on that.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# SDE kinds
SDE_LINEAR_1D = 0     # b = a*x + c, sigma = s;          params [a, c, s]
SDE_POLY3_1D = 1      # b = c0 + c1*x + c3*x^3, sigma=s; params [c0, c1, c3, s]
SDE_AFFINE_DIAG = 2   # b = A x + c, sigma = diag(s);    params [d, A row-major, c, s]
SDE_DEGEN_2D = 3      # b = (1 - x0, -x1), sigma = alpha(x) I2, alpha = |x|^2/(1+|x|^2)

# scalar observable kinds (integrands along paths)
F_AFFINE = 0          # f = c + a.x;                     params [d, c, a_1..a_d]
F_QUAD_DIAG = 1       # f = c + a.x + sum q_i x_i^2;     params [d, c, a.., q..]

# coupled fast-slow kinds (1-d fast, 1-d slow)
FS_LIN = 0            # F = aF*y, G = cG*x;              params [aF, cG]
FS_SQRT1PY2 = 1       # F = aF*y, G = cG*x*sqrt(1+y^2);  params [aF, cG]


def _frozen(arr) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(arr, dtype=np.float64).ravel())
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class NativeSde:
    kind: int
    params: np.ndarray = field(repr=False)
    dim_x: int = 1
    dim_noise: int = 1

    @staticmethod
    def linear_1d(a: float, c: float, s: float) -> "NativeSde":
        return NativeSde(SDE_LINEAR_1D, _frozen([a, c, s]))

    @staticmethod
    def poly3_1d(c0: float, c1: float, c3: float, s: float) -> "NativeSde":
        return NativeSde(SDE_POLY3_1D, _frozen([c0, c1, c3, s]))

    @staticmethod
    def affine_diag(A, c, s) -> "NativeSde":
        A = np.asarray(A, dtype=np.float64)
        c = np.asarray(c, dtype=np.float64).ravel()
        s = np.asarray(s, dtype=np.float64).ravel()
        d = c.size
        if A.shape != (d, d) or s.size != d:
            raise ValueError("affine_diag expects square A and matching c, s")
        params = np.concatenate([[float(d)], A.ravel(), c, s])
        return NativeSde(SDE_AFFINE_DIAG, _frozen(params), dim_x=d, dim_noise=d)

    @staticmethod
    def degenerate_2d() -> "NativeSde":
        return NativeSde(SDE_DEGEN_2D, _frozen([]), dim_x=2, dim_noise=2)


@dataclass(frozen=True)
class NativeScalar:
    """Descriptor of a scalar function of the state, f: R^d -> R."""

    kind: int
    params: np.ndarray = field(repr=False)
    dim_x: int = 1

    @staticmethod
    def affine(a, c: float) -> "NativeScalar":
        a = np.asarray(a, dtype=np.float64).ravel()
        return NativeScalar(F_AFFINE, _frozen(np.concatenate([[float(a.size), c], a])),
                            dim_x=a.size)

    @staticmethod
    def quad_diag(q, a, c: float) -> "NativeScalar":
        q = np.asarray(q, dtype=np.float64).ravel()
        a = np.asarray(a, dtype=np.float64).ravel()
        if q.size != a.size:
            raise ValueError("quad_diag expects len(q) == len(a)")
        params = np.concatenate([[float(a.size), c], a, q])
        return NativeScalar(F_QUAD_DIAG, _frozen(params), dim_x=a.size)

    def shifted(self, delta_c: float) -> "NativeScalar":
        """Same function with the constant term shifted by ``delta_c``."""
        params = np.array(self.params)
        params[1] += delta_c
        return NativeScalar(self.kind, _frozen(params), dim_x=self.dim_x)

    def is_zero(self) -> bool:
        if self.kind == F_AFFINE:
            return bool(np.all(self.params[1:] == 0.0))
        if self.kind == F_QUAD_DIAG:
            return bool(np.all(self.params[1:] == 0.0))
        return False


@dataclass(frozen=True)
class NativeFastSlow:
    kind: int
    params: np.ndarray = field(repr=False)

    @staticmethod
    def linear(a_f: float, c_g: float) -> "NativeFastSlow":
        return NativeFastSlow(FS_LIN, _frozen([a_f, c_g]))

    @staticmethod
    def sqrt1py2(a_f: float, c_g: float) -> "NativeFastSlow":
        return NativeFastSlow(FS_SQRT1PY2, _frozen([a_f, c_g]))
