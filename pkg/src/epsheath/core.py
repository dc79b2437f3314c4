"""Parameters, meshes, plasma states and boundary-regime detection."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidMesh, InvalidParameters, MarginViolation, NonPositiveDensity

DEFAULT_SONIC_MARGIN = 1e-3


@dataclass(frozen=True)
class Parameters:
    """Physical and asymptotic constants of one Euler-Poisson configuration.

    ``phi_c`` is the (y-uniform) perturbation of the wall potential, so that
    the Dirichlet value is ``phi_b = phi_c - ln(n_ref)``.  ``bl_amplitude`` and
    ``weight_mu`` parametrize the exponential weight used by the energy
    diagnostics and must satisfy ``bl_amplitude / weight_mu**2 <= 0.1``.
    """

    ion_temperature: float = 1.0
    epsilon: float = 0.01
    n_ref: float = 1.0
    w_ref: float = -2.0
    phi_c: float = 0.0
    bl_amplitude: float = 0.05
    weight_mu: float = 0.75
    gamma0: float = 0.8
    expansion_order: int = 1
    final_time: float = 0.1

    def __post_init__(self):
        if not self.ion_temperature > 0:
            raise InvalidParameters(f"ion_temperature must be > 0, got {self.ion_temperature}")
        if not 0 < self.epsilon <= 1:
            raise InvalidParameters(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if not self.n_ref > 0:
            raise InvalidParameters(f"n_ref must be > 0, got {self.n_ref}")
        if not self.w_ref < 0:
            raise InvalidParameters(f"w_ref must be < 0, got {self.w_ref}")
        if not math.isfinite(self.phi_c):
            raise InvalidParameters("phi_c must be finite")
        if self.bl_amplitude < 0:
            raise InvalidParameters("bl_amplitude must be >= 0")
        if not self.weight_mu > 0:
            raise InvalidParameters("weight_mu must be > 0")
        if self.bl_amplitude / self.weight_mu**2 > 0.1:
            raise InvalidParameters(
                "weight not admissible: bl_amplitude / weight_mu**2 = "
                f"{self.bl_amplitude / self.weight_mu**2:.4g} > 0.1"
            )
        if not self.gamma0 > 0:
            raise InvalidParameters("gamma0 must be > 0")
        if self.expansion_order not in (0, 1):
            raise InvalidParameters("expansion_order must be 0 or 1")
        if not self.final_time > 0:
            raise InvalidParameters("final_time must be > 0")

    @property
    def phi_ref(self) -> float:
        return -math.log(self.n_ref)

    @property
    def phi_b(self) -> float:
        return self.phi_c + self.phi_ref

    @property
    def sound_speed(self) -> float:
        """Isothermal ion sound speed sqrt(Ti)."""
        return math.sqrt(self.ion_temperature)

    @property
    def bohm_speed(self) -> float:
        """Quasineutral sound speed sqrt(Ti + 1)."""
        return math.sqrt(self.ion_temperature + 1.0)

    def with_epsilon(self, eps: float) -> "Parameters":
        return replace(self, epsilon=eps)


class Regime(enum.Enum):
    SUPERSONIC = "supersonic"
    INTERMEDIATE = "intermediate"
    SUBSONIC_OR_CHARACTERISTIC = "subsonic_or_characteristic"


def classify_speeds(trace_u3: float, c_iso: float, c_bohm: float, margin: float) -> Regime:
    """Classify a wall trace velocity against the two sonic thresholds.

    ``c_iso`` is sqrt(Ti) and ``c_bohm`` is sqrt(Ti + 1).  Raises
    :class:`MarginViolation` when ``trace_u3`` lies within ``margin`` of
    ``-c_bohm`` or ``-c_iso``.
    """
    if not margin > 0:
        raise ValueError("margin must be > 0")
    if not 0 < c_iso < c_bohm:
        raise ValueError("need 0 < c_iso < c_bohm")
    for threshold in (-c_bohm, -c_iso):
        if abs(trace_u3 - threshold) < margin:
            raise MarginViolation(
                f"trace velocity {trace_u3:.6g} within {margin:g} of sonic threshold {threshold:.6g}"
            )
    if trace_u3 + c_bohm <= -margin:
        return Regime.SUPERSONIC
    if -c_bohm + margin <= trace_u3 <= -c_iso - margin:
        return Regime.INTERMEDIATE
    return Regime.SUBSONIC_OR_CHARACTERISTIC


def classify_regime(trace_u3: float, Ti: float, margin: float = DEFAULT_SONIC_MARGIN) -> Regime:
    """Outflow regime of a wall trace velocity for ion temperature ``Ti``."""
    if not Ti > 0:
        raise ValueError("Ti must be > 0")
    return classify_speeds(trace_u3, math.sqrt(Ti), math.sqrt(Ti + 1.0), margin)


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Cell-centred mesh of the truncated half-line [0, L]."""

    cell_centers: np.ndarray
    cell_widths: np.ndarray
    layer_resolution: float
    layer_width: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.cell_centers, dtype=float)
        w = np.asarray(self.cell_widths, dtype=float)
        if x.ndim != 1 or x.shape != w.shape or x.size < 3:
            raise InvalidMesh("centers and widths must be 1-D arrays of equal length >= 3")
        if np.any(w <= 0):
            raise InvalidMesh("cell widths must be positive")
        if np.any(np.diff(x) <= 0):
            raise InvalidMesh("cell centers must be strictly increasing")
        x.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "cell_centers", x)
        object.__setattr__(self, "cell_widths", w)

    @property
    def size(self) -> int:
        return self.cell_centers.size

    @property
    def length(self) -> float:
        return float(self.faces[-1])

    @property
    def faces(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.cell_widths)))

    @property
    def spacing(self) -> np.ndarray:
        """Centre-to-centre distances, with the half cells at both walls prepended/appended."""
        x = self.cell_centers
        return np.concatenate(([x[0]], np.diff(x), [self.length - x[-1]]))

    @classmethod
    def uniform(cls, L: float, n_cells: int) -> "Grid1D":
        dx = L / n_cells
        return cls((np.arange(n_cells) + 0.5) * dx, np.full(n_cells, dx), layer_resolution=dx)

    @classmethod
    def from_widths(cls, widths, layer_width: float = 0.0) -> "Grid1D":
        widths = np.asarray(widths, dtype=float)
        faces = np.concatenate(([0.0], np.cumsum(widths)))
        centers = 0.5 * (faces[1:] + faces[:-1])
        inside = centers <= layer_width if layer_width > 0 else np.ones_like(centers, bool)
        return cls(centers, widths, layer_resolution=float(widths[inside].max()), layer_width=layer_width)


def build_grid(
    L: float,
    eps: float,
    gamma0: float,
    bulk_dx: float,
    fine_fraction: float = 0.1,
    growth: float = 1.1,
) -> Grid1D:
    """Two-zone mesh resolving a boundary layer of thickness ``eps / gamma0``.

    The fine zone ``[0, 10 eps / gamma0]`` is uniform with widths at most
    ``min(fine_fraction * eps, bulk_dx)``.  Widths then grow geometrically by ``growth`` up to
    ``bulk_dx``, and the remainder of ``[0, L]`` is uniform.
    """
    if min(L, eps, gamma0, bulk_dx) <= 0:
        raise InvalidMesh("L, eps, gamma0 and bulk_dx must be positive")
    if not growth > 1:
        raise InvalidMesh("growth must be > 1")
    zone = 10.0 * eps / gamma0
    if zone >= L:
        raise InvalidMesh(f"layer zone {zone:.4g} does not fit in domain length {L:.4g}")
    n_fine = math.ceil(zone / min(fine_fraction * eps, bulk_dx) - 1e-9)
    dx_f = zone / n_fine
    widths = [np.full(n_fine, dx_f)]
    x = zone
    w = dx_f
    ramp = []
    while w * growth < bulk_dx and x + w * growth < L:
        w *= growth
        ramp.append(w)
        x += w
    widths.append(np.array(ramp))
    rest = L - x
    if rest > 0:
        n_bulk = max(1, round(rest / max(bulk_dx, w)))
        widths.append(np.full(n_bulk, rest / n_bulk))
    elif rest < -1e-12 * L:
        raise InvalidMesh("transition zone overshoots L")
    return Grid1D.from_widths(np.concatenate(widths), layer_width=zone)


@dataclass(frozen=True, eq=False)
class PlasmaState:
    """Ion density, velocity and potential on a grid at one time."""

    grid: Grid1D
    n: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    phi: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        m = self.grid.size
        for name in ("n", "u1", "u2", "u3", "phi"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (m,):
                raise ValueError(f"field {name} has shape {arr.shape}, expected ({m},)")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"field {name} has non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.n <= 0):
            raise NonPositiveDensity(f"density minimum {self.n.min():.3g} is not positive")

    @classmethod
    def uniform(cls, grid: Grid1D, n: float, u3: float, phi: float | None = None, time: float = 0.0):
        m = grid.size
        phi = -math.log(n) if phi is None else phi
        return cls(grid, np.full(m, n), np.zeros(m), np.zeros(m), np.full(m, u3), np.full(m, phi), time)

    def replace(self, **changes) -> "PlasmaState":
        return replace(self, **changes)

    @property
    def x(self) -> np.ndarray:
        return self.grid.cell_centers


__all__ = [
    "DEFAULT_SONIC_MARGIN",
    "Parameters",
    "Regime",
    "classify_speeds",
    "classify_regime",
    "Grid1D",
    "build_grid",
    "PlasmaState",
]
