"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`EpsheathError`,
so callers (the CLI in particular) can separate configuration problems from
solver failures.
"""


class EpsheathError(Exception):
    """Base class for all package errors."""


class ConfigError(EpsheathError, ValueError):
    """Invalid or missing configuration."""


class SolverError(EpsheathError, RuntimeError):
    """A numerical procedure failed or left its domain of validity."""


# core
class MarginViolation(ConfigError):
    """A trace velocity sits within the tolerance of a sonic threshold."""


class InvalidMesh(ConfigError):
    """The requested mesh cannot satisfy the grid invariants."""


class InvalidParameters(ConfigError):
    """Physical or asymptotic parameters violate their invariants."""


class NonPositiveDensity(SolverError):
    """A density field is not strictly positive."""


# sheath
class DomainError(SolverError):
    """Argument outside the domain of a profile function."""


class OutOfRange(DomainError):
    """Potential below the minimum of the algebraic map, so no inverse exists."""


class BohmViolation(SolverError):
    """The trace velocity does not satisfy the Bohm condition."""


class InadmissibleBoundaryValue(SolverError):
    """Boundary potential outside the admissible window of the layer ODE."""


class NonPositiveV(SolverError):
    """The layer potential energy vanishes before the orbit reaches zero."""


class CoercivityLoss(SolverError):
    """The linearized layer operator is not uniformly coercive."""


class QuadratureTail(SolverError):
    """The stretched domain is too short for tail integrals to converge."""


# expansion
class SupersonicLost(SolverError):
    """The background flow leaves the supersonic regime at the wall."""


# epsolve
class NewtonDivergence(SolverError):
    """Newton iteration for the Poisson equation failed to converge."""


class BohmLost(SolverError):
    """The wall trace enters the sonic margin during a run."""


class NegativeDensity(NonPositiveDensity):
    """A time step produced a non-positive density."""


class RegimeMismatch(SolverError):
    """Trace speeds contradict the declared boundary regime."""


# diagnostics
class NonPositiveSymmetrizer(SolverError):
    """The potential coefficient of the weighted energy is not positive."""


class WindowTooNoisy(SolverError):
    """Exponential fit rejected because ln|f| is not linear on the window."""


# harness
class FitFailure(SolverError):
    """A convergence-rate fit could not be performed."""
