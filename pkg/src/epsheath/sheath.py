"""Boundary-layer (sheath) profiles in the stretched variable z = x3 / eps.

The leading-order layer potential solves the autonomous problem

    Phi'' = X(Phi),   Phi(0) = Phi0,   Phi(z) -> 0 as z -> oo,

with ``X(Phi) = n0 * (Finv(Phi) - exp(-Phi))`` and ``F`` the algebraic map
relating the relative layer density to the potential.  Density and normal
velocity follow algebraically.  The first-order correction solves a linear
two-point problem driven by sources built from the leading-order layer and
the traces of the regular (quasineutral) solution.

All functions take a :class:`LayerContext` holding the frozen wall traces.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, optimize
from scipy.linalg import solve_banded

from .diagnostics import measure_decay
from .errors import (
    BohmViolation,
    CoercivityLoss,
    DomainError,
    InadmissibleBoundaryValue,
    NonPositiveV,
    OutOfRange,
    QuadratureTail,
    SolverError,
)

DEFAULT_ALPHA = 1e-3
TAIL_TOL = 1e-8


@dataclass(frozen=True)
class LayerContext:
    """Wall traces of the regular solution that parametrize the layer ODE."""

    n0_trace: float
    u3_trace: float
    Ti: float
    phi0_boundary_value: float = 0.0

    def __post_init__(self):
        if not self.n0_trace > 0:
            raise DomainError("n0_trace must be > 0")
        if not self.Ti > 0:
            raise DomainError("Ti must be > 0")
        if not (self.u3_trace < 0 and self.u3_trace**2 > self.Ti + 1):
            raise BohmViolation(
                f"u3_trace={self.u3_trace:.6g} violates the Bohm condition for Ti={self.Ti:g}"
            )

    @classmethod
    def from_traces(cls, n0: float, u3: float, Ti: float, phi_b: float) -> "LayerContext":
        """Context whose boundary value closes the Dirichlet condition ``phi0(0) + Phi0(0) = phi_b``."""
        return cls(n0, u3, Ti, phi_b + math.log(n0))

    @property
    def N_F(self) -> float:
        """Right end of the monotonicity interval of F."""
        return abs(self.u3_trace) / math.sqrt(self.Ti)

    @property
    def Phi_F(self) -> float:
        """Minimum of F; the inverse is defined on (Phi_F, oo)."""
        return float(eval_F(self, self.N_F))

    @property
    def gamma(self) -> float:
        """Decay rate of the normalized layer ODE."""
        return decay_rate(self.Ti, self.u3_trace)

    @property
    def decay(self) -> float:
        """Decay rate in z of the prefactored ODE, sqrt(n0) * gamma."""
        return math.sqrt(self.n0_trace) * self.gamma

    def with_boundary_value(self, phi0: float) -> "LayerContext":
        return replace(self, phi0_boundary_value=phi0)


def decay_rate(Ti: float, u3_trace: float) -> float:
    """sqrt((Ti + 1 - u^2) / (Ti - u^2)); zero at marginal Bohm."""
    u2 = u3_trace * u3_trace
    if math.isclose(u2, Ti + 1.0, rel_tol=1e-14, abs_tol=0.0):
        return 0.0
    if u2 < Ti + 1.0:
        raise BohmViolation(f"u^2 = {u2:.6g} <= Ti + 1 = {Ti + 1:.6g}")
    return math.sqrt((Ti + 1.0 - u2) / (Ti - u2))


# -- algebraic map F and its inverse ---------------------------------------


def _m_minus_log1p(m):
    """m - log(1 + m) without cancellation near m = 0."""
    m = np.asarray(m, dtype=float)
    out = m - np.log1p(m)
    small = np.abs(m) < 1e-2
    if np.any(small):
        ms = m[small]
        acc = np.zeros_like(ms)
        term = ms.copy()
        for k in range(2, 14):
            term = term * -ms
            acc -= term / k
        out[small] = acc
    return out


def _expm1_plus(phi):
    """exp(-phi) - 1 + phi without cancellation near phi = 0."""
    phi = np.asarray(phi, dtype=float)
    out = np.expm1(-phi) + phi
    small = np.abs(phi) < 1e-2
    if np.any(small):
        p = phi[small]
        acc = np.zeros_like(p)
        term = np.ones_like(p)
        for k in range(1, 14):
            term = term * (-p) / k
            if k >= 2:
                acc += term
        out[small] = acc
    return out


def _F_of_m(u2: float, Ti: float, m):
    return -u2 * m * (2.0 + m) / (2.0 * (1.0 + m) ** 2) + Ti * np.log1p(m)


def eval_F(ctx: LayerContext, N):
    """u^2 / (2 N^2) + Ti ln N - u^2 / 2 (vectorized)."""
    N = np.asarray(N, dtype=float)
    if np.any(N <= 0):
        raise DomainError("F is defined for N > 0 only")
    out = _F_of_m(ctx.u3_trace**2, ctx.Ti, N - 1.0)
    return out if out.ndim else float(out)


def eval_dF(ctx: LayerContext, N):
    """Derivative of F with respect to N."""
    N = np.asarray(N, dtype=float)
    out = -(ctx.u3_trace**2) / N**3 + ctx.Ti / N
    return out if out.ndim else float(out)


def _invert_m(ctx: LayerContext, phi: np.ndarray) -> np.ndarray:
    """m = Finv(phi) - 1 by Newton iterations safeguarded with a shrinking bracket.

    Working in m keeps full relative accuracy of F(1 + m) near m = 0.
    """
    u2, Ti = ctx.u3_trace**2, ctx.Ti
    NF = ctx.N_F
    if np.any(~np.isfinite(phi)):
        raise DomainError("non-finite potential")
    if np.any(phi <= ctx.Phi_F):
        raise OutOfRange(f"potential below Phi_F = {ctx.Phi_F:.12g}; inverse undefined")
    # F(1 + m) - phi is decreasing in m; bracket [lo, hi] with f(lo) > 0 >= f(hi)
    hi = np.full(phi.shape, NF - 1.0)
    lo = np.full(phi.shape, 0.5 * NF - 1.0)
    need = _F_of_m(u2, Ti, lo) <= phi
    while np.any(need):
        lo[need] = 0.5 * (1.0 + lo[need]) - 1.0
        need = _F_of_m(u2, Ti, lo) <= phi
    m = np.clip(phi / (Ti - u2), lo, hi)
    for _ in range(200):
        f = _F_of_m(u2, Ti, m) - phi
        lo = np.where(f > 0, m, lo)
        hi = np.where(f > 0, hi, m)
        N = 1.0 + m
        dF = -u2 / N**3 + Ti / N
        with np.errstate(divide="ignore", invalid="ignore"):
            trial = m - f / dF
        bad = ~np.isfinite(trial) | (trial < lo) | (trial > hi)
        m_new = np.where(bad, 0.5 * (lo + hi), trial)
        done = np.all((np.abs(m_new - m) <= 4e-16 * np.abs(m)) | (f == 0) | (hi - lo <= 4e-16 * np.abs(m)))
        m = m_new
        if done:
            break
    return m


def invert_F(ctx: LayerContext, Phi):
    """Decreasing inverse of F on (Phi_F, oo) with values in (0, N_F)."""
    phi = np.asarray(Phi, dtype=float)
    N = 1.0 + _invert_m(ctx, np.atleast_1d(phi)).reshape(phi.shape)
    return N if N.ndim else float(N)


def eval_X(ctx: LayerContext, Phi, normalized: bool = False):
    """Right-hand side X(Phi) = n0 (Finv(Phi) - exp(-Phi)) of the layer ODE."""
    phi = np.asarray(Phi, dtype=float)
    m = _invert_m(ctx, np.atleast_1d(phi)).reshape(phi.shape)
    out = m - np.expm1(-phi)
    if not normalized:
        out = ctx.n0_trace * out
    return out if out.ndim else float(out)


def eval_dX(ctx: LayerContext, Phi, normalized: bool = False):
    """dX/dPhi = n0 (1 / F'(Finv(Phi)) + exp(-Phi))."""
    phi = np.asarray(Phi, dtype=float)
    N = 1.0 + _invert_m(ctx, np.atleast_1d(phi)).reshape(phi.shape)
    out = 1.0 / eval_dF(ctx, N) + np.exp(-phi)
    if not normalized:
        out = ctx.n0_trace * out
    return out if np.ndim(out) else float(out)


def eval_V(ctx: LayerContext, Phi: float, normalized: bool = False) -> float:
    """Potential energy V(Phi) = integral of X from 0 to Phi, by adaptive quadrature."""
    Phi = float(Phi)
    if Phi == 0.0:
        return 0.0
    if Phi <= ctx.Phi_F:
        raise OutOfRange(f"potential below Phi_F = {ctx.Phi_F:.12g}")
    val, _ = integrate.quad(
        lambda s: eval_X(ctx, s, normalized=normalized), 0.0, Phi, epsabs=1e-14, epsrel=1e-13, limit=200
    )
    return val


def potential_energy(ctx: LayerContext, Phi, normalized: bool = False):
    """Closed-form V(Phi), accurate to full relative precision near Phi = 0.

    With N = Finv(Phi) = 1 + m the antiderivative of X dF is explicit:
    V / n0 = Ti (m - ln(1+m)) - u^2 m^2 / (2 (1+m)^2) + (exp(-Phi) - 1 + Phi).
    """
    phi = np.atleast_1d(np.asarray(Phi, dtype=float))
    m = _invert_m(ctx, phi)
    u2 = ctx.u3_trace**2
    v = ctx.Ti * _m_minus_log1p(m) - u2 * m * m / (2.0 * (1.0 + m) ** 2) + _expm1_plus(phi)
    if not normalized:
        v = ctx.n0_trace * v
    v = v.reshape(np.shape(Phi))
    return v if v.ndim else float(v)


# -- admissible window ------------------------------------------------------


def admissible_window(ctx: LayerContext, alpha: float = DEFAULT_ALPHA, normalized: bool = False):
    """Interval of boundary values for which the layer problems are solvable.

    ``hi`` is the first positive potential where X' drops below ``alpha``;
    ``lo`` is the first negative one where X' drops below ``alpha`` or V stops
    being positive.  Returns ``(0.0, 0.0)`` when X'(0) < alpha.
    """
    if eval_dX(ctx, 0.0, normalized) < alpha:
        return 0.0, 0.0

    def dx_minus_alpha(p):
        return eval_dX(ctx, p, normalized) - alpha

    # upward scan; X' < 0 for large Phi so this terminates
    step, top = 0.01, 0.0
    hi = None
    while hi is None:
        grid = top + step * np.arange(1, 2001)
        vals = eval_dX(ctx, grid, normalized) - alpha
        bad = np.flatnonzero(vals < 0)
        if bad.size:
            k = bad[0]
            left = grid[k - 1] if k > 0 else top
            hi = optimize.brentq(dx_minus_alpha, left, grid[k], xtol=1e-14) if left > 0 else 0.0
        else:
            top = grid[-1]
            if top > 1e4:
                raise SolverError("X' stays above alpha; window upper bound not found")

    # downward scan towards Phi_F, where 1/F' -> -oo
    phiF = ctx.Phi_F
    grid = np.linspace(0.0, phiF, 4001)[1:-1]
    vals = eval_dX(ctx, grid, normalized) - alpha
    V = potential_energy(ctx, grid, normalized)
    bad = np.flatnonzero((vals < 0) | (V <= 0))
    if bad.size == 0:
        lo = grid[-1]
    else:
        k = bad[0]
        left = grid[k - 1] if k > 0 else 0.0
        if vals[k] < 0:
            lo = optimize.brentq(dx_minus_alpha, grid[k], left, xtol=1e-14) if left < 0 else 0.0
        else:
            lo = left
    return float(lo), float(hi)


# -- profiles ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SheathProfile:
    """Tabulated layer profiles on a uniform grid of the stretched variable."""

    ctx: LayerContext
    z: np.ndarray
    Phi0: np.ndarray
    dPhi0: np.ndarray
    N0: np.ndarray
    U03: np.ndarray
    Phi1: np.ndarray | None = None
    N1: np.ndarray | None = None
    U13: np.ndarray | None = None
    measured_decay_rate: float = float("nan")
    gamma_formula: float = float("nan")
    tail_start: float = float("inf")
    extras: dict = field(default_factory=dict)

    @property
    def dz(self) -> float:
        return float(self.z[1] - self.z[0])

    @property
    def z_max(self) -> float:
        return float(self.z[-1])

    def with_first_order(self, Phi1, N1, U13, **extras) -> "SheathProfile":
        return replace(self, Phi1=Phi1, N1=N1, U13=U13, extras={**self.extras, **extras})

    def to_csv(self, path) -> None:
        """Write columns z, Phi0, N0, U03, Phi1 with 17 significant digits."""
        phi1 = self.Phi1 if self.Phi1 is not None else np.full_like(self.z, np.nan)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["z", "Phi0", "N0", "U03", "Phi1"])
            for row in zip(self.z, self.Phi0, self.N0, self.U03, phi1):
                w.writerow([f"{v:.17g}" for v in row])


def _check_boundary_value(ctx, phi0, alpha, require_coercive):
    if phi0 <= ctx.Phi_F:
        raise InadmissibleBoundaryValue(
            f"Phi0 = {phi0:.6g} is below Phi_F = {ctx.Phi_F:.6g}, outside the domain of Finv"
        )
    if require_coercive:
        lo, hi = admissible_window(ctx, alpha)
        if not lo <= phi0 <= hi:
            raise InadmissibleBoundaryValue(f"Phi0 = {phi0:.6g} outside admissible window [{lo:.6g}, {hi:.6g}]")
    # the connecting orbit needs V > 0 strictly between Phi0 and 0
    probe = phi0 * np.linspace(1.0, 0.0, 2001)[:-1]
    if np.any(potential_energy(ctx, probe) <= 0):
        raise NonPositiveV(f"V vanishes between Phi0 = {phi0:.6g} and 0: no connecting orbit")


def solve_phi0(
    ctx: LayerContext,
    z_max: float,
    tol: float = TAIL_TOL,
    dz: float = 0.02,
    alpha: float = DEFAULT_ALPHA,
    require_coercive: bool = True,
) -> SheathProfile:
    """Monotone connecting orbit of Phi'' = X(Phi) from ``ctx.phi0_boundary_value`` to 0.

    Integrates the stable-manifold branch Phi' = -sign(Phi) sqrt(2 V(Phi)) until
    |Phi| < ``tol``, then continues with the linear tail exp(-sqrt(X'(0)) z).
    With ``require_coercive`` the boundary value must lie in
    :func:`admissible_window`; otherwise only the existence conditions of the
    orbit are enforced.
    """
    phi0 = float(ctx.phi0_boundary_value)
    n_nodes = int(round(z_max / dz)) + 1
    z = np.linspace(0.0, (n_nodes - 1) * dz, n_nodes)
    kappa = math.sqrt(eval_dX(ctx, 0.0))
    if z[-1] < 30.0 / kappa - 1e-12:
        raise QuadratureTail(f"z_max = {z[-1]:.4g} below 30 / decay rate = {30 / kappa:.4g}")
    gamma = ctx.gamma
    if phi0 == 0.0:
        zeros = np.zeros_like(z)
        return SheathProfile(ctx, z, zeros, zeros.copy(), zeros.copy(), zeros.copy(), gamma_formula=gamma)
    _check_boundary_value(ctx, phi0, alpha, require_coercive)

    sgn = math.copysign(1.0, phi0)

    # integrate y = ln|Phi| so the relative accuracy is uniform down to the tail
    def rhs(_, y):
        phi = sgn * math.exp(y[0])
        v = potential_energy(ctx, phi)
        return [-math.sqrt(max(2.0 * v, 0.0)) / abs(phi)]

    log_tol = math.log(tol)

    def reached_tail(_, y):
        return y[0] - log_tol

    reached_tail.terminal = True

    if abs(phi0) <= tol:
        z_tail, phi_tail = 0.0, phi0
        head = np.zeros(0, dtype=bool)
        Phi = np.empty_like(z)
    else:
        sol = integrate.solve_ivp(
            rhs,
            (0.0, z[-1]),
            [math.log(abs(phi0))],
            method="DOP853",
            rtol=1e-13,
            atol=1e-13,
            dense_output=True,
            events=reached_tail,
        )
        if not sol.success:
            raise SolverError(f"layer ODE integration failed: {sol.message}")
        if sol.t_events[0].size == 0:
            raise QuadratureTail("layer potential did not reach the tail tolerance before z_max")
        z_tail = float(sol.t_events[0][0])
        phi_tail = sgn * math.exp(float(sol.y_events[0][0][0]))
        head = z <= z_tail
        Phi = np.empty_like(z)
        Phi[head] = sgn * np.exp(sol.sol(z[head])[0])
    tail = ~head if head.size else np.ones_like(z, dtype=bool)
    Phi[tail] = phi_tail * np.exp(-kappa * (z[tail] - z_tail))
    Phi[0] = phi0

    dPhi = -sgn * np.sqrt(np.maximum(2.0 * potential_energy(ctx, Phi), 0.0))
    dPhi[tail] = -kappa * Phi[tail]
    N0, U03 = build_layer_fields(ctx, Phi)

    window = (z >= 5.0 / kappa) & (z <= 15.0 / kappa)
    rate = measure_decay(Phi[window], z[window])
    return SheathProfile(
        ctx, z, Phi, dPhi, N0, U03, measured_decay_rate=rate, gamma_formula=gamma, tail_start=z_tail
    )


def build_layer_fields(ctx: LayerContext, Phi0):
    """Layer density N0 and normal velocity U03 from the layer potential.

    The relative density ``1 + N0 / n0`` is Finv(Phi0) and the mass flux
    ``(n0 + N0)(u + U03)`` equals ``n0 u`` at every node.
    """
    phi = np.asarray(Phi0, dtype=float)
    m = _invert_m(ctx, np.atleast_1d(phi)).reshape(phi.shape)
    N0 = ctx.n0_trace * m
    U03 = -ctx.u3_trace * m / (1.0 + m)
    return N0, U03


# -- first-order correction -------------------------------------------------


def solve_phi1(
    ctx: LayerContext,
    Phi0,
    F6,
    boundary_value: float,
    z_max: float | None = None,
    z=None,
    alpha: float = DEFAULT_ALPHA,
):
    """Solve Phi'' = X'(Phi0) Phi + F6 with Phi(0) = boundary_value, Phi(z_max) = 0.

    ``Phi0`` is either a :class:`SheathProfile` (which supplies the uniform z
    grid) or an array sampled on ``z``.  Second-order three-point scheme,
    tridiagonal elimination.
    """
    if isinstance(Phi0, SheathProfile):
        z = Phi0.z
        Phi0 = Phi0.Phi0
    z = np.asarray(z, dtype=float)
    Phi0 = np.asarray(Phi0, dtype=float)
    F6 = np.asarray(F6, dtype=float)
    if z_max is not None and not math.isclose(z[-1], z_max, rel_tol=1e-9):
        raise ValueError("z_max does not match the profile grid")
    h = z[1] - z[0]
    if not np.allclose(np.diff(z), h, rtol=1e-9, atol=0):
        raise ValueError("solve_phi1 needs a uniform z grid")
    coef = eval_dX(ctx, Phi0)
    if np.min(coef) < alpha:
        k = int(np.argmin(coef))
        raise CoercivityLoss(f"X'(Phi0) = {coef[k]:.4g} < alpha = {alpha:g} at z = {z[k]:.4g}")
    M = z.size
    inner = slice(1, M - 1)
    diag = -2.0 / h**2 - coef[inner]
    off = np.full(M - 3, 1.0 / h**2)
    rhs = F6[inner].copy()
    rhs[0] -= boundary_value / h**2
    ab = np.zeros((3, M - 2))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    sol = np.empty(M)
    sol[0] = boundary_value
    sol[-1] = 0.0
    sol[inner] = solve_banded((1, 1), ab, rhs)
    resid = (sol[2:] - 2 * sol[1:-1] + sol[:-2]) / h**2 - coef[inner] * sol[inner] - F6[inner]
    scale = max(1.0, np.max(np.abs(F6)), np.max(np.abs(sol)) / h**2)
    if np.max(np.abs(resid)) > 1e-10 * scale:
        raise SolverError(f"Phi1 residual {np.max(np.abs(resid)):.3g} too large")
    return sol


@dataclass(frozen=True)
class RegularTraces:
    """Wall traces of the first regular corrector and of normal derivatives of the leading order."""

    n1: float = 0.0
    u13: float = 0.0
    phi1: float = 0.0
    dn0: float = 0.0
    du0: float = 0.0
    dphi0: float = 0.0


@dataclass(frozen=True, eq=False)
class LayerSources:
    F2: np.ndarray
    F4: np.ndarray
    F5: np.ndarray
    F6: np.ndarray
    dN0dt: np.ndarray
    dU0dt: np.ndarray


def _tail_integral(f: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Integral of f from z to z_max for every node (composite Simpson)."""
    rev = integrate.cumulative_simpson(f[::-1], x=-z[::-1], initial=0.0)
    return rev[::-1]


def layer_sources(
    profile: SheathProfile,
    traces: RegularTraces,
    profile_minus: SheathProfile | None = None,
    profile_plus: SheathProfile | None = None,
    dt: float | None = None,
) -> LayerSources:
    """Source chain of the first-order layer problem in the y-uniform reduction.

    Time derivatives of the leading-order layer are centred differences of the
    profiles built at ``t - dt`` and ``t + dt``; without them the context is
    treated as frozen in time.  Tail integrals run from ``z_max`` downward.
    """
    ctx = profile.ctx
    z = profile.z
    a, w, Ti = ctx.n0_trace, ctx.u3_trace, ctx.Ti
    N0, U0, Phi0 = profile.N0, profile.U03, profile.Phi0
    if profile_minus is not None and profile_plus is not None:
        if dt is None or dt <= 0:
            raise ValueError("dt must be positive when neighbouring profiles are given")
        dN0dt = (profile_plus.N0 - profile_minus.N0) / (2.0 * dt)
        dU0dt = (profile_plus.U03 - profile_minus.U03) / (2.0 * dt)
    else:
        dN0dt = np.zeros_like(z)
        dU0dt = np.zeros_like(z)

    g_mass = z * traces.dn0 * U0 + z * traces.du0 * N0
    A = a + N0
    g_mom = z * traces.du0 * U0 + Ti * (z * traces.dn0 / A - z * traces.dn0 / a)
    scale = max(1.0, np.max(np.abs(g_mass)), np.max(np.abs(g_mom)))
    for name, f in (("mass", g_mass), ("momentum", g_mom), ("dN0/dt", dN0dt), ("dU0/dt", dU0dt)):
        if abs(f[-1]) > 1e-8 * scale:
            raise QuadratureTail(f"{name} term {abs(f[-1]):.3g} has not decayed at z_max = {z[-1]:.4g}")

    F2 = -g_mass + _tail_integral(dN0dt, z) + traces.n1 * w + a * traces.u13
    int_F3 = -g_mom + _tail_integral(dU0dt, z)
    F4 = int_F3 + w * traces.u13 + Ti * traces.n1 / a
    F5 = F4 - (a * w / A**2) * F2
    dF = eval_dF(ctx, A / a)
    F6 = a * F5 / dF + a * np.expm1(-Phi0) * z * traces.dphi0 + a * np.exp(-Phi0) * traces.phi1
    return LayerSources(F2, F4, F5, F6, dN0dt, dU0dt)


def assemble_F6(
    profile: SheathProfile,
    traces: RegularTraces,
    profile_minus: SheathProfile | None = None,
    profile_plus: SheathProfile | None = None,
    dt: float | None = None,
) -> np.ndarray:
    """Right-hand side F6 of the first-order layer equation."""
    return layer_sources(profile, traces, profile_minus, profile_plus, dt).F6


def first_order_layer(
    profile: SheathProfile,
    traces: RegularTraces,
    profile_minus: SheathProfile | None = None,
    profile_plus: SheathProfile | None = None,
    dt: float | None = None,
    alpha: float = DEFAULT_ALPHA,
) -> SheathProfile:
    """Attach (Phi1, N1, U13) to a leading-order profile."""
    ctx = profile.ctx
    src = layer_sources(profile, traces, profile_minus, profile_plus, dt)
    Phi1 = solve_phi1(ctx, profile, src.F6, -traces.phi1, alpha=alpha)
    a, w = ctx.n0_trace, ctx.u3_trace
    A = a + profile.N0
    W = w + profile.U03
    nu = a * (Phi1 + src.F5) / eval_dF(ctx, A / a)
    N1 = nu - traces.n1
    U13 = (src.F2 - nu * W) / A - traces.u13
    return profile.with_first_order(Phi1, N1, U13, F6=src.F6)


__all__ = [
    "LayerContext",
    "SheathProfile",
    "RegularTraces",
    "LayerSources",
    "decay_rate",
    "eval_F",
    "eval_dF",
    "invert_F",
    "eval_X",
    "eval_dX",
    "eval_V",
    "potential_energy",
    "admissible_window",
    "solve_phi0",
    "build_layer_fields",
    "solve_phi1",
    "layer_sources",
    "assemble_F6",
    "first_order_layer",
]
