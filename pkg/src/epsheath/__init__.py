"""Quasineutral limit and sheath boundary layers for isothermal Euler-Poisson plasmas."""

from .core import Grid1D, Parameters, PlasmaState, Regime, build_grid, classify_regime
from .errors import ConfigError, EpsheathError, SolverError

__version__ = "0.1.0"

__all__ = [
    "Grid1D",
    "Parameters",
    "PlasmaState",
    "Regime",
    "build_grid",
    "classify_regime",
    "ConfigError",
    "EpsheathError",
    "SolverError",
    "__version__",
]
