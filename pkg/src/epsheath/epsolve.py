"""Finite-volume time integration of the Euler-Poisson system and its quasineutral limits.

Conservative variables ``(n, n u3, n u1, n u2)`` on a cell-centred mesh of
[0, L], Rusanov fluxes with optional minmod reconstruction of the primitive
variables, SSP-RK2 in time.  The potential is recomputed after every stage
by a Newton solve of the Poisson-Boltzmann equation.  The quasineutral limit
uses the sound speed sqrt(Ti + 1), no electric source and ``phi = -ln n``.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .core import Grid1D, Parameters, PlasmaState, Regime, classify_regime
from .errors import (
    BohmLost,
    ConfigError,
    MarginViolation,
    NegativeDensity,
    NewtonDivergence,
    NonPositiveDensity,
    RegimeMismatch,
)

log = logging.getLogger(__name__)


class FarFieldBC(enum.Enum):
    QUASINEUTRAL_DIRICHLET = "quasineutral_dirichlet"
    REFERENCE_STATE = "reference_state"


class Reconstruction(enum.Enum):
    FIRST_ORDER = "first_order"
    MUSCL_MINMOD = "muscl_minmod"


@dataclass(frozen=True)
class SolverConfig:
    cfl: float = 0.4
    newton_tol: float = 1e-11
    newton_max_iter: int = 20
    far_field_bc: FarFieldBC = FarFieldBC.QUASINEUTRAL_DIRICHLET
    reconstruction: Reconstruction = Reconstruction.MUSCL_MINMOD
    sonic_margin: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "far_field_bc", FarFieldBC(self.far_field_bc))
        object.__setattr__(self, "reconstruction", Reconstruction(self.reconstruction))
        if not 0 < self.cfl <= 0.5:
            raise ConfigError(f"cfl must lie in (0, 0.5], got {self.cfl}")
        if not 0 < self.newton_tol <= 1e-10:
            raise ConfigError(f"newton_tol must lie in (0, 1e-10], got {self.newton_tol}")
        if self.newton_max_iter < 1:
            raise ConfigError("newton_max_iter must be >= 1")
        if not self.sonic_margin > 0:
            raise ConfigError("sonic_margin must be > 0")


@dataclass
class SolverStats:
    """Counters accumulated while stepping."""

    steps: int = 0
    newton_solves: int = 0
    newton_iterations_max: int = 0
    newton_iterations_total: int = 0
    wall_mass_outflow: float = 0.0
    far_mass_inflow: float = 0.0

    def record_newton(self, its: int) -> None:
        self.newton_solves += 1
        self.newton_iterations_total += its
        self.newton_iterations_max = max(self.newton_iterations_max, its)


# -- Poisson-Boltzmann ------------------------------------------------------


def _laplacian_bands(grid: Grid1D):
    """Tridiagonal D2 on cell centres with Dirichlet data on the two end faces.

    Returns ``(lower, diag, upper, left_coef, right_coef)`` such that
    ``D2 phi = lower*phi[i-1] + diag*phi[i] + upper*phi[i+1]``, with the
    boundary values entering through ``left_coef * phi_left`` in the first row
    and ``right_coef * phi_right`` in the last.
    """
    h = grid.spacing
    w = grid.cell_widths
    cl = 1.0 / (h[:-1] * w)
    cr = 1.0 / (h[1:] * w)
    return cl, -(cl + cr), cr, cl[0], cr[-1]


def _far_potential(n: np.ndarray, params: Parameters, cfg: SolverConfig) -> float:
    if cfg.far_field_bc is FarFieldBC.QUASINEUTRAL_DIRICHLET:
        return -math.log(n[-1])
    return params.phi_ref


def poisson_residual(phi, n, phi_b, phi_far, eps, grid) -> np.ndarray:
    """eps^2 D2 phi + exp(-phi) - n on cell centres."""
    cl, cd, cr, _, _ = _laplacian_bands(grid)
    ext = np.concatenate(([phi_b], phi, [phi_far]))
    lap = cl * ext[:-2] + cd * phi + cr * ext[2:]
    return eps**2 * lap + np.exp(-phi) - n


def newton_poisson(
    n,
    phi_b: float,
    eps: float,
    grid: Grid1D,
    cfg: SolverConfig,
    phi_far: float | None = None,
    guess=None,
    stats: SolverStats | None = None,
    return_iterations: bool = False,
):
    """Solve eps^2 D2 phi + exp(-phi) = n with phi(0) = phi_b.

    The far-field value defaults to ``-ln n`` in the last cell
    (quasineutral Dirichlet).  Newton iterations with the negative definite
    tridiagonal Jacobian ``eps^2 D2 - diag(exp(-phi))`` stop once the
    max-norm residual is below ``cfg.newton_tol``.
    """
    n = np.asarray(n, dtype=float)
    if np.any(n <= 0):
        raise NonPositiveDensity("Poisson solve needs n > 0")
    if phi_far is None:
        phi_far = -math.log(n[-1])
    phi = -np.log(n) if guess is None else np.array(guess, dtype=float)
    cl, cd, cr, _, _ = _laplacian_bands(grid)
    e2 = eps**2
    ab = np.zeros((3, n.size))
    ab[0, 1:] = e2 * cr[:-1]
    ab[2, :-1] = e2 * cl[1:]
    r = poisson_residual(phi, n, phi_b, phi_far, eps, grid)
    its = 0
    while np.max(np.abs(r)) >= cfg.newton_tol:
        if its >= cfg.newton_max_iter:
            raise NewtonDivergence(
                f"Poisson-Boltzmann Newton did not converge in {its} iterations "
                f"(residual {np.max(np.abs(r)):.3e})"
            )
        ab[1] = e2 * cd - np.exp(-phi)
        delta = solve_banded((1, 1), ab, -r, check_finite=False)
        phi = phi + delta
        r = poisson_residual(phi, n, phi_b, phi_far, eps, grid)
        its += 1
    if stats is not None:
        stats.record_newton(its)
    return (phi, its) if return_iterations else phi


# -- hyperbolic part --------------------------------------------------------


class WallBC(enum.Enum):
    EXTRAPOLATE = "extrapolate"
    PINNED_DENSITY = "pinned_density"


class FarBC(enum.Enum):
    INFLOW = "inflow"
    CHARACTERISTIC = "characteristic"


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _ghost_positions(grid: Grid1D):
    x = grid.cell_centers
    L = grid.length
    return np.concatenate(([-x[1], -x[0]], x, [2 * L - x[-1], 2 * L - x[-2]]))


def _extend(prim, grid, c, wall_bc, far_bc, wall_density, far_state):
    """Primitive variables with two ghost cells on each side."""
    x = grid.cell_centers
    xg = _ghost_positions(grid)
    m = x.size
    ext = np.empty((4, m + 4))
    ext[:, 2:-2] = prim
    slope = (prim[:, 1] - prim[:, 0]) / (x[1] - x[0])
    for k, xk in ((0, xg[0]), (1, xg[1])):
        ext[:, k] = prim[:, 0] + slope * (xk - x[0])
    if np.any(ext[0, :2] <= 0.5 * prim[0, 0]):
        ext[:, :2] = prim[:, :1]
    if wall_bc is WallBC.PINNED_DENSITY:
        # outgoing family carries u - c ln n to the wall, density is imposed
        r_minus = ext[1, :2] - c * np.log(ext[0, :2])
        ext[0, :2] = wall_density
        ext[1, :2] = r_minus + c * math.log(wall_density)
    n_far, u_far = far_state
    if far_bc is FarBC.INFLOW:
        ext[0, -2:] = n_far
        ext[1, -2:] = u_far
        ext[2:, -2:] = 0.0
    else:
        slope = (prim[:, -1] - prim[:, -2]) / (x[-1] - x[-2])
        for k in (-2, -1):
            ext[:, k] = prim[:, -1] + slope * (xg[k] - x[-1])
        if np.any(ext[0, -2:] <= 0.5 * prim[0, -1]):
            ext[:, -2:] = prim[:, -1:]
        r_plus = ext[1, -2:] + c * np.log(ext[0, -2:])
        r_minus = u_far - c * math.log(n_far)
        ext[1, -2:] = 0.5 * (r_plus + r_minus)
        ext[0, -2:] = np.exp((r_plus - r_minus) / (2 * c))
    return ext, xg


def _face_states(ext, xg, faces, recon: Reconstruction):
    """Left/right primitive states at the m + 1 faces."""
    if recon is Reconstruction.FIRST_ORDER:
        return ext[:, 1:-2], ext[:, 2:-1]
    d = np.diff(ext, axis=1) / np.diff(xg)
    sig = _minmod(d[:, :-1], d[:, 1:])  # slopes of cells -1 .. m
    xc = xg[1:-1]
    left = ext[:, 1:-2] + sig[:, :-1] * (faces - xc[:-1])
    right = ext[:, 2:-1] + sig[:, 1:] * (faces - xc[1:])
    return left, right


def _flux(q, Ti):
    n, u, u1, u2 = q
    mass = n * u
    return np.array([mass, mass * u + Ti * n, mass * u1, mass * u2])


def _cons(q):
    n, u, u1, u2 = q
    return np.array([n, n * u, n * u1, n * u2])


def _prim(U):
    n = U[0]
    return np.array([n, U[1] / n, U[2] / n, U[3] / n])


def _rusanov(qL, qR, Ti, c_wave):
    s = np.maximum(np.abs(qL[1]), np.abs(qR[1])) + c_wave
    return 0.5 * (_flux(qL, Ti) + _flux(qR, Ti)) - 0.5 * s * (_cons(qR) - _cons(qL))


def centered_gradient(f, grid: Grid1D, left_value: float, right_value: float) -> np.ndarray:
    """Second-order three-point derivative on cell centres, end values at the two faces."""
    x = grid.cell_centers
    xe = np.concatenate(([0.0], x, [grid.length]))
    fe = np.concatenate(([left_value], f, [right_value]))
    hm = xe[1:-1] - xe[:-2]
    hp = xe[2:] - xe[1:-1]
    return (-hp / (hm * (hm + hp)) * fe[:-2] + (hp - hm) / (hm * hp) * fe[1:-1] + hm / (hp * (hm + hp)) * fe[2:])


@dataclass
class _Model:
    """Closure of one PDE system for the shared stepper."""

    params: Parameters
    cfg: SolverConfig
    electric: bool
    wall_bc: WallBC
    far_bc: FarBC
    far_state: tuple
    stats: SolverStats = field(default_factory=SolverStats)

    @property
    def pressure(self) -> float:
        Ti = self.params.ion_temperature
        return Ti if self.electric else Ti + 1.0

    @property
    def wall_density(self) -> float:
        return math.exp(-self.params.phi_b)

    def potential(self, n, guess, grid):
        if not self.electric:
            return -np.log(n)
        return newton_poisson(
            n,
            self.params.phi_b,
            self.params.epsilon,
            grid,
            self.cfg,
            phi_far=_far_potential(n, self.params, self.cfg),
            guess=guess,
            stats=self.stats,
        )

    def rhs(self, U, grid, phi):
        q = _prim(U)
        c = math.sqrt(self.pressure)
        ext, xg = _extend(q, grid, c, self.wall_bc, self.far_bc, self.wall_density, self.far_state)
        qL, qR = _face_states(ext, xg, grid.faces, self.cfg.reconstruction)
        F = _rusanov(qL, qR, self.pressure, c)
        dU = -(F[:, 1:] - F[:, :-1]) / grid.cell_widths
        if self.electric:
            phi_far = _far_potential(q[0], self.params, self.cfg)
            dU[1] += q[0] * centered_gradient(phi, grid, self.params.phi_b, phi_far)
        return dU, F[0, 0], F[0, -1]


def _stage_density_check(U):
    if np.any(U[0] <= 0) or not np.all(np.isfinite(U)):
        raise NegativeDensity(f"density minimum {np.nanmin(U[0]):.3g} after stage")


def _check_trace(model: _Model, u0: float, regime: Regime | None):
    Ti = model.params.ion_temperature
    margin = model.cfg.sonic_margin
    if model.electric:
        if u0 + math.sqrt(Ti) > -margin:
            raise BohmLost(f"wall trace u3 = {u0:.6g} no longer supersonic for the ion sound speed")
        return
    try:
        found = classify_regime(u0, Ti, margin)
    except MarginViolation as exc:
        raise RegimeMismatch(str(exc)) from exc
    if regime is not None and found is not regime:
        raise RegimeMismatch(f"wall trace u3 = {u0:.6g} is {found.value}, expected {regime.value}")


def stable_dt(state: PlasmaState, params: Parameters, cfl: float) -> float:
    """cfl * min(dx) / (max|u3| + sqrt(Ti + 1))."""
    return cfl * float(np.min(state.grid.cell_widths)) / (float(np.max(np.abs(state.u3))) + params.bohm_speed)


def _advance(state: PlasmaState, model: _Model, dt: float, regime: Regime | None):
    grid = state.grid
    _check_trace(model, float(state.u3[0]), regime)
    U0 = _cons(np.array([state.n, state.u3, state.u1, state.u2]))
    k1, w1, f1 = model.rhs(U0, grid, state.phi)
    U1 = U0 + dt * k1
    _stage_density_check(U1)
    phi1 = model.potential(U1[0], state.phi, grid)
    k2, w2, f2 = model.rhs(U1, grid, phi1)
    U2 = 0.5 * (U0 + U1 + dt * k2)
    _stage_density_check(U2)
    phi2 = model.potential(U2[0], phi1, grid)
    q = _prim(U2)
    model.stats.steps += 1
    model.stats.wall_mass_outflow += -0.5 * dt * (w1 + w2)
    model.stats.far_mass_inflow += -0.5 * dt * (f1 + f2)
    return PlasmaState(grid, q[0], q[2], q[3], q[1], phi2, state.time + dt)


def _model_for(params, cfg, electric, regime, far_state):
    far = far_state if far_state is not None else (params.n_ref, params.w_ref)
    if electric:
        return _Model(params, cfg, True, WallBC.EXTRAPOLATE, FarBC.INFLOW, far)
    if regime is Regime.INTERMEDIATE:
        return _Model(params, cfg, False, WallBC.PINNED_DENSITY, FarBC.CHARACTERISTIC, far)
    if regime is Regime.SUPERSONIC:
        return _Model(params, cfg, False, WallBC.EXTRAPOLATE, FarBC.INFLOW, far)
    raise ConfigError(f"limit solver supports supersonic and intermediate regimes, got {regime}")


def ep_step(
    state: PlasmaState,
    params: Parameters,
    cfg: SolverConfig,
    dt: float | None = None,
    far_state: tuple | None = None,
    stats: SolverStats | None = None,
) -> PlasmaState:
    """One SSP-RK2 step of the Euler-Poisson system.

    ``state.phi`` must be the potential of ``state.n`` (it is used for the
    first-stage source).  The wall boundary is a pure outflow; the far end
    receives ``far_state = (n, u3)``, by default the reference state.
    """
    model = _model_for(params, cfg, True, None, far_state)
    if stats is not None:
        model.stats = stats
    if dt is None:
        dt = stable_dt(state, params, cfg.cfl)
    return _advance(state, model, dt, None)


def euler_limit_step(
    state: PlasmaState,
    params: Parameters,
    regime: Regime,
    cfg: SolverConfig,
    dt: float | None = None,
    far_state: tuple | None = None,
    stats: SolverStats | None = None,
) -> PlasmaState:
    """One SSP-RK2 step of the quasineutral isothermal Euler system.

    Supersonic: pure outflow at the wall.  Intermediate: the wall density is
    pinned to ``exp(-phi_b)`` through the ghost state, the outgoing Riemann
    invariant being extrapolated.  The returned potential is ``-ln n``.
    """
    regime = Regime(regime)
    model = _model_for(params, cfg, False, regime, far_state)
    if stats is not None:
        model.stats = stats
    if dt is None:
        dt = stable_dt(state, params, cfg.cfl)
    return _advance(state, model, dt, regime)


# -- driver -----------------------------------------------------------------


@dataclass
class Trajectory:
    """Outcome of :func:`run`."""

    initial: PlasmaState
    final: PlasmaState
    stats: SolverStats
    snapshots: list = field(default_factory=list)

    def write_csv(self, path) -> None:
        write_snapshots_csv(path, self.snapshots or [self.initial, self.final])


Observer = Callable[[PlasmaState], None]


def run(
    initial: PlasmaState,
    params: Parameters,
    cfg: SolverConfig,
    T: float,
    observers: Sequence[Observer] = (),
    *,
    model: str = "ep",
    regime: Regime = Regime.SUPERSONIC,
    observe_every: float | None = None,
    far_state: tuple | None = None,
    keep_snapshots: bool = False,
    dt_scale: float = 1.0,
    fixed_dt: float | None = None,
) -> Trajectory:
    """Advance ``initial`` to time ``T``.

    ``model`` is ``"ep"`` (Euler-Poisson at ``params.epsilon``) or ``"limit"``
    (quasineutral Euler in ``regime``).  Observers are called with immutable
    snapshots at t = 0, every ``observe_every`` and at ``T``; steps are clipped
    to land on these times.  ``fixed_dt`` replaces the adaptive step, so that
    runs from nearby data share one time mesh; it must respect CFL 0.5.  For the Euler-Poisson model the initial potential
    is recomputed from the initial density.
    """
    if T < 0 or T > params.final_time * (1 + 1e-12):
        raise ConfigError(f"T = {T} must lie in [0, final_time = {params.final_time}]")
    electric = model == "ep"
    if model not in ("ep", "limit"):
        raise ConfigError(f"unknown model {model!r}")
    m = _model_for(params, cfg, electric, None if electric else Regime(regime), far_state)
    state = initial
    if electric:
        state = state.replace(phi=m.potential(state.n, state.phi, initial.grid))
    else:
        state = state.replace(phi=-np.log(state.n))
    snaps = []

    def notify(s):
        if keep_snapshots:
            snaps.append(s)
        for obs in observers:
            obs(s)

    notify(state)
    t0 = state.time
    stops = []
    if observe_every:
        k = 1
        while k * observe_every < T - 1e-14:
            stops.append(t0 + k * observe_every)
            k += 1
    stops.append(t0 + T)
    for stop in stops:
        while state.time < stop - 1e-14 * max(1.0, abs(stop)):
            if fixed_dt is None:
                dt = dt_scale * stable_dt(state, params, cfg.cfl)
            else:
                dt = fixed_dt
                if dt > stable_dt(state, params, 0.5):
                    raise ConfigError(f"fixed_dt = {dt:.3g} exceeds the CFL 0.5 step")
            dt = min(dt, stop - state.time)
            state = _advance(state, m, dt, None if electric else Regime(regime))
        state = state.replace(time=stop)
        if stop > t0 or T == 0:
            notify(state)
    log.debug("run finished: %d steps, max Newton iterations %d", m.stats.steps, m.stats.newton_iterations_max)
    return Trajectory(initial, state, m.stats, snaps)


def write_snapshots_csv(path, states: Sequence[PlasmaState]) -> None:
    """Columns t, x3, n, u1, u2, u3, phi with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x3", "n", "u1", "u2", "u3", "phi"])
        for s in states:
            for row in zip(s.x, s.n, s.u1, s.u2, s.u3, s.phi):
                w.writerow([f"{s.time:.17g}"] + [f"{v:.17g}" for v in row])


__all__ = [
    "FarFieldBC",
    "Reconstruction",
    "SolverConfig",
    "SolverStats",
    "poisson_residual",
    "newton_poisson",
    "centered_gradient",
    "stable_dt",
    "ep_step",
    "euler_limit_step",
    "Trajectory",
    "run",
    "write_snapshots_csv",
]
