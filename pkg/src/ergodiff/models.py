"""Concrete models shipped with the package, with analytic oracles.

These are the systems the tests and acceptance runs exercise: a 1-d
linear-drift diffusion with full closed-form structure, a quartic-drift
diffusion whose invariant law is known by quadrature, a 2-d model whose
noise amplitude vanishes at the origin (drift still pushes through the
degenerate set), and two coupled fast-slow benchmark systems with
closed-form effective coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate as sint
from scipy import stats as sps

from . import sde
from .averaging import FastSlowSystem
from .kernels.specs import NativeFastSlow, NativeScalar, NativeSde
from .poisson import CenterableFunction, from_native

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class AnalyticOracle:
    """Closed-form reference values for a shipped model."""

    label: str
    invariant_mean: Optional[float] = None
    invariant_variance: Optional[float] = None
    invariant_density: Optional[Callable] = None
    transition_mean: Optional[Callable] = None       # (x0, t) -> E_x X_t
    transition_variance: Optional[Callable] = None   # t -> Var_x X_t
    poisson_solutions: dict = field(default_factory=dict)
    effective_drift: Optional[Callable] = None       # y -> b_bar
    effective_diffusion: Optional[Callable] = None   # y -> a_bar
    limit_marginal: Optional[Callable] = None        # (y0, T) -> (mean, var)

    def tv_exact(self, x0: float, t: float) -> float:
        """Exact TV between the time-t law from x0 and the invariant law
        (1-d, by quadrature)."""
        m = self.transition_mean(x0, t)
        v = self.transition_variance(t)
        if v <= 0:
            return 1.0
        s = math.sqrt(v)

        def integrand(x):
            return abs(sps.norm.pdf(x, m, s) - self.invariant_density(x))

        lo = min(m - 10 * s, -10.0)
        hi = max(m + 10 * s, 10.0)
        val, _ = sint.quad(integrand, lo, hi, limit=300)
        return 0.5 * val


def ou_model():
    """1-d linear drift -x with constant noise sqrt(2); invariant law N(0,1).

    Ships every closed form the verification suite needs: transition
    moments, two exact generator-equation solutions, and the exact TV
    mixing curve by quadrature.
    """
    model = sde.SdeModel(
        dim_x=1, dim_noise=1,
        drift=lambda X: -np.atleast_2d(X),
        diffusion=lambda X: np.full((np.atleast_2d(X).shape[0], 1, 1), SQRT2),
        label="ou", vectorized=True,
        native=NativeSde.linear_1d(-1.0, 0.0, SQRT2))
    oracle = AnalyticOracle(
        label="ou",
        invariant_mean=0.0,
        invariant_variance=1.0,
        invariant_density=lambda x: sps.norm.pdf(x),
        transition_mean=lambda x0, t: x0 * math.exp(-t),
        transition_variance=lambda t: 1.0 - math.exp(-2.0 * t),
        poisson_solutions={
            "coord": lambda x: x,                 # for f(x) = x
            "square_centered": lambda x: (x * x - 1.0) / 2.0,  # for f = x^2 - 1
        },
    )
    return model, oracle


def quartic_model():
    """1-d drift -x^3 with noise sqrt(2); invariant density ~ exp(-x^4/4).

    The stationary law follows from zero flux: density proportional to
    exp(2 integral b / sigma^2) = exp(-x^4/4).  Moments come from
    quadrature (the fourth moment is exactly 1 by parts).
    """
    model = sde.SdeModel(
        dim_x=1, dim_noise=1,
        drift=lambda X: -np.atleast_2d(X) ** 3,
        diffusion=lambda X: np.full((np.atleast_2d(X).shape[0], 1, 1), SQRT2),
        label="quartic", vectorized=True,
        native=NativeSde.poly3_1d(0.0, 0.0, -1.0, SQRT2))
    z, _ = sint.quad(lambda x: math.exp(-x ** 4 / 4.0), -np.inf, np.inf)
    m2, _ = sint.quad(lambda x: x * x * math.exp(-x ** 4 / 4.0), -np.inf, np.inf)
    oracle = AnalyticOracle(
        label="quartic",
        invariant_mean=0.0,
        invariant_variance=m2 / z,
        invariant_density=lambda x, _z=z: np.exp(-np.asarray(x) ** 4 / 4.0) / _z,
    )
    return model, oracle


def degenerate_alpha(x) -> np.ndarray:
    """Noise amplitude |x|^2 / (1 + |x|^2): zero exactly at the origin."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    r2 = np.einsum("nc,nc->n", X, X)
    out = r2 / (1.0 + r2)
    return out if np.ndim(x) > 1 else float(out[0])


def degenerate_example_model(delta: float = 0.1) -> sde.SdeModel:
    """2-d model with drift e1 - x and noise alpha(x) I2.

    The noise vanishes at the origin only; the deterministic flow
    dx/dt = e1 - x leaves the low-noise region {alpha <= delta} in finite
    time (it converges to e1 where alpha = 1/2), and (b(x), x) =
    x1 - |x|^2 -> -infinity, so the recurrence diagnostic passes.  Valid
    for delta in (0, 1/2).
    """
    if not (0.0 < delta < 0.5):
        raise ValueError("delta must lie in (0, 1/2)")

    def drift(X):
        X = np.atleast_2d(X)
        out = np.empty_like(X)
        out[:, 0] = 1.0 - X[:, 0]
        out[:, 1] = -X[:, 1]
        return out

    def diffusion(X):
        X = np.atleast_2d(X)
        al = degenerate_alpha(X)
        out = np.zeros((X.shape[0], 2, 2))
        out[:, 0, 0] = al
        out[:, 1, 1] = al
        return out

    return sde.SdeModel(dim_x=2, dim_noise=2, drift=drift, diffusion=diffusion,
                        label=f"degenerate(delta={delta})", vectorized=True,
                        native=NativeSde.degenerate_2d())


def degenerate_flow_exit_time(delta: float) -> float:
    """Time for the flow from the origin to leave {alpha <= delta}.

    Along the flow line x(t) = (1 - e^-t) e1 the radius solves dr/dt=1-r,
    and alpha <= delta up to r* = sqrt(delta/(1-delta)).
    """
    r_star = math.sqrt(delta / (1.0 - delta))
    return -math.log(1.0 - r_star)


def benchmark_fast_slow(scale_g: float = 1.0):
    """Two coupled benchmark systems on the 1-d linear-drift fast model.

    Variant A: F = -y, G = c x.  The corrector is c x, its y-derivative
    vanishes, so b_bar(y) = -y and a_bar = 2 c^2; the limit marginal from
    y0 at time T is N(y0 e^-T, (a_bar/2)(1 - e^-2T)).

    Variant B: F = -y, G = c x sqrt(1+y^2).  The corrector picks up the
    same y-factor, the drift correction c^2 y E[x^2] = c^2 y cancels -y
    at c=1, and a_bar(y) = 2 c^2 (1 + y^2).

    Returns (variant_a, variant_b, oracle_a, oracle_b).
    """
    fast, _ = ou_model()
    c = float(scale_g)

    def F(X, Y):
        return -np.atleast_2d(Y)

    def G_a(X, Y):
        return c * np.atleast_2d(X)

    def dG_a(x, y):
        return np.zeros((1, 1))

    def G_b(X, Y):
        Y = np.atleast_2d(Y)
        return c * np.atleast_2d(X) * np.sqrt(1.0 + Y * Y)

    def dG_b(x, y):
        y = np.asarray(y, dtype=float).ravel()[0]
        x = np.asarray(x, dtype=float).ravel()[0]
        return np.array([[c * x * y / math.sqrt(1.0 + y * y)]])

    variant_a = FastSlowSystem(
        fast=fast, dim_y=1, F=F, G=G_a, grad_y_G=dG_a,
        growth_orders=(0.0, 1.0, 0.0), growth_K=max(1.0, abs(c)),
        label="benchmark-a", vectorized=True,
        native_fs=NativeFastSlow.linear(-1.0, c))
    variant_b = FastSlowSystem(
        fast=fast, dim_y=1, F=F, G=G_b, grad_y_G=dG_b,
        growth_orders=(0.0, 1.0, 1.0), growth_K=max(1.0, abs(c)),
        label="benchmark-b", vectorized=True,
        native_fs=NativeFastSlow.sqrt1py2(-1.0, c))

    oracle_a = AnalyticOracle(
        label="benchmark-a",
        effective_drift=lambda y: -np.asarray(y, dtype=float),
        effective_diffusion=lambda y: 2.0 * c * c * np.ones_like(np.asarray(y, dtype=float)),
        limit_marginal=lambda y0, T: (y0 * math.exp(-T),
                                      c * c * (1.0 - math.exp(-2.0 * T))),
    )
    oracle_b = AnalyticOracle(
        label="benchmark-b",
        effective_drift=lambda y: (c * c - 1.0) * np.asarray(y, dtype=float),
        effective_diffusion=lambda y: 2.0 * c * c * (1.0 + np.asarray(y, dtype=float) ** 2),
    )
    return variant_a, variant_b, oracle_a, oracle_b


# ---------------------------------------------------------------------------
# registries used by the command-line runner

def f_coord() -> CenterableFunction:
    """f(x) = x (first coordinate)."""
    return from_native(NativeScalar.affine([1.0], 0.0), growth_beta=1.0,
                       label="coord")


def f_square_centered() -> CenterableFunction:
    """f(x) = x^2 - 1."""
    return from_native(NativeScalar.quad_diag([1.0], [0.0], -1.0),
                       growth_beta=2.0, label="square_centered")


MODEL_REGISTRY = {
    "ou": lambda params: ou_model()[0],
    "quartic": lambda params: quartic_model()[0],
    "degenerate": lambda params: degenerate_example_model(
        float(params.get("delta", 0.1))),
}

SYSTEM_REGISTRY = {
    "benchmark-a": lambda params: benchmark_fast_slow(
        float(params.get("scale_g", 1.0)))[0],
    "benchmark-b": lambda params: benchmark_fast_slow(
        float(params.get("scale_g", 1.0)))[1],
}

FUNCTION_REGISTRY = {
    "coord": f_coord,
    "square_centered": f_square_centered,
}


def oracle_for(label: str) -> Optional[AnalyticOracle]:
    if label == "ou":
        return ou_model()[1]
    if label == "quartic":
        return quartic_model()[1]
    if label == "benchmark-a":
        return benchmark_fast_slow()[2]
    if label == "benchmark-b":
        return benchmark_fast_slow()[3]
    return None
