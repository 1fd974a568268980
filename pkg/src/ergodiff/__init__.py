"""Monte Carlo toolkit for ergodic diffusions.

Simulation of possibly degenerate diffusions with reproducible
counter-based noise streams, invariant-measure and mixing diagnostics,
probabilistic solves of the generator equation L u = -f, and the
slow-fast averaging pipeline that estimates the effective limiting
diffusion and checks weak convergence empirically.
"""

__version__ = "0.1.0"

from .errors import (
    Blowup,
    BinningMismatch,
    ConfigError,
    ErgodiffError,
    InterpolationRangeError,
    IOFailure,
    NonFiniteEvaluation,
    PSDRepairWarning,
    ReturnTimeout,
    StiffnessWarning,
    UncenteredInput,
)
from .sde import (
    Ensemble,
    IntegratorConfig,
    Path,
    SdeModel,
    ensemble_to_csv,
    euler_step,
    simulate_ensemble,
    simulate_path,
)

__all__ = [
    "__version__",
    "Blowup", "BinningMismatch", "ConfigError", "ErgodiffError",
    "InterpolationRangeError", "IOFailure", "NonFiniteEvaluation",
    "PSDRepairWarning", "ReturnTimeout", "StiffnessWarning", "UncenteredInput",
    "Ensemble", "IntegratorConfig", "Path", "SdeModel",
    "ensemble_to_csv", "euler_step", "simulate_ensemble", "simulate_path",
]
