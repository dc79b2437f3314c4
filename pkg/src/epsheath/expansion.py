"""Approximate solutions: regular (quasineutral) part plus stretched layer part.

The assembled fields at order K are

    n_a = sum_{i<=K} eps^i (n^i(x3) + N^i(x3 / eps))

and likewise for u3 and phi.  Regular parts come from a background solution
of the quasineutral Euler system (analytic or tabulated) and, at order one,
from a linearized corrector.  Layer parts are :class:`SheathProfile`
objects sampled by monotone cubic interpolation.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.interpolate import PchipInterpolator

from .core import Grid1D, Parameters, PlasmaState, Regime, classify_regime
from .errors import SupersonicLost
from .sheath import (
    LayerContext,
    RegularTraces,
    SheathProfile,
    first_order_layer,
    solve_phi0,
)

log = logging.getLogger(__name__)

RESIDUAL_DT = 1e-4


class Background(Protocol):
    """Smooth quasineutral solution evaluated pointwise."""

    def fields(self, t: float, x) -> tuple:
        """Return ``(n, u3, dn/dx, du3/dx)`` at time ``t`` and positions ``x``."""


@dataclass(frozen=True)
class SimpleWave:
    """Smooth simple wave of the quasineutral isothermal Euler system.

    Initially ``ln n = ln n_ref + amplitude * g(x)`` with a Gaussian bump
    ``g``.  With ``family = "+"`` the invariant ``u - c ln n`` is uniform and
    the bump rides the ``u + c`` characteristics; with ``family = "-"`` the
    roles are swapped.  ``c = sqrt(Ti + 1)``.  Valid up to the first
    crossing of characteristics, far beyond the horizons used here.
    """

    Ti: float = 1.0
    n_ref: float = 1.0
    w_ref: float = -2.0
    amplitude: float = 0.05
    center: float = 0.3
    width: float = 0.15
    family: str = "+"

    def __post_init__(self):
        if self.family not in ("+", "-"):
            raise ValueError("family must be '+' or '-'")

    @property
    def c(self) -> float:
        return math.sqrt(self.Ti + 1.0)

    @property
    def _sign(self) -> float:
        return 1.0 if self.family == "+" else -1.0

    def _g(self, xi):
        s = (xi - self.center) / self.width
        return np.exp(-s * s)

    def _dg(self, xi):
        s = (xi - self.center) / self.width
        return -2.0 * s / self.width * np.exp(-s * s)

    def foot(self, t: float, x) -> np.ndarray:
        """Initial position of the characteristic through ``(t, x)``."""
        x = np.asarray(x, dtype=float)
        c, A, sg = self.c, self.amplitude, self._sign
        base = self.w_ref + sg * c
        xi = x - t * base
        for _ in range(60):
            lam = base + sg * c * A * self._g(xi)
            f = xi + t * lam - x
            df = 1.0 + t * sg * c * A * self._dg(xi)
            step = f / df
            xi = xi - step
            if np.max(np.abs(step)) < 1e-15 * max(1.0, float(np.max(np.abs(x)))):
                break
        return xi

    def fields(self, t: float, x):
        c, A, sg = self.c, self.amplitude, self._sign
        xi = self.foot(t, x)
        g, dg = self._g(xi), self._dg(xi)
        jac = 1.0 + t * sg * c * A * dg
        n = self.n_ref * np.exp(A * g)
        u = self.w_ref + sg * c * A * g
        dlnn = A * dg / jac
        return n, u, n * dlnn, sg * c * dlnn

    def state(self, grid: Grid1D, t: float) -> PlasmaState:
        n, u, _, _ = self.fields(t, grid.cell_centers)
        z = np.zeros_like(n)
        return PlasmaState(grid, n, z, z.copy(), u, -np.log(n), t)


@dataclass(frozen=True)
class TabulatedBackground:
    """Background from a quasineutral state sampled on a mesh (time-frozen)."""

    x: np.ndarray
    n: np.ndarray
    u3: np.ndarray

    def fields(self, t: float, x):
        pn = PchipInterpolator(self.x, self.n, extrapolate=True)
        pu = PchipInterpolator(self.x, self.u3, extrapolate=True)
        return pn(x), pu(x), pn.derivative()(x), pu.derivative()(x)


# -- regular corrector ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RegularCoefficient:
    """One regular coefficient ``(n^i, u^i, phi^i)`` tabulated on cell centres."""

    x: np.ndarray
    n: np.ndarray
    u3: np.ndarray
    phi: np.ndarray

    @classmethod
    def zero(cls, x) -> "RegularCoefficient":
        z = np.zeros_like(np.asarray(x, dtype=float))
        return cls(np.asarray(x, dtype=float), z, z.copy(), z.copy())

    def at(self, x):
        if not (np.any(self.n) or np.any(self.u3) or np.any(self.phi)):
            z = np.zeros_like(np.asarray(x, dtype=float))
            return z, z.copy(), z.copy()
        out = []
        for f in (self.n, self.u3, self.phi):
            out.append(PchipInterpolator(self.x, f, extrapolate=True)(x))
        return tuple(out)

    def derivative_at(self, x):
        out = []
        for f in (self.n, self.u3, self.phi):
            if not np.any(f):
                out.append(np.zeros_like(np.asarray(x, dtype=float)))
            else:
                out.append(PchipInterpolator(self.x, f, extrapolate=True).derivative()(x))
        return tuple(out)


def solve_regular_corrector(
    background: Background,
    sources,
    T: float,
    grid: Grid1D,
    Ti: float,
    cfl: float = 0.4,
    t0: float = 0.0,
    margin: float = 1e-3,
) -> RegularCoefficient:
    """Linearized quasineutral system for a regular corrector, zero initial data.

    ``sources(t, x)`` returns ``(f_n, f_u, f_phi)``.  Unknowns ``(n^i, u^i)``
    obey the linearization of the isothermal Euler system around the
    background, with ``phi^i = -(n^i + f_phi) / exp(-phi^0)`` eliminated
    through the quasineutral relation.  First-order upwinding with a local
    Lax-Friedrichs flux; the wall takes extrapolated ghosts and the far end
    takes the zero state.
    """
    x = grid.cell_centers
    w = grid.cell_widths
    faces = grid.faces
    c2 = Ti + 1.0
    N = np.zeros_like(x)
    U = np.zeros_like(x)
    t = t0

    def rhs(t, N, U):
        n0f, u0f, _, _ = background.fields(t, faces)
        n0c, u0c, _, _ = background.fields(t, x)
        fn, fu, fphi = sources(t, x)
        Ne = np.concatenate(([N[0]], N, [0.0]))
        Ue = np.concatenate(([U[0]], U, [0.0]))
        n0e = np.concatenate(([n0c[0]], n0c, [n0f[-1]]))
        u0e = np.concatenate(([u0c[0]], u0c, [u0f[-1]]))
        _, _, fphi_e = sources(t, np.concatenate(([x[0]], x, [faces[-1]])))

        def flux(k):
            n0, u0, Nk, Uk, fp = n0e[k], u0e[k], Ne[k], Ue[k], fphi_e[k]
            return n0 * Uk + Nk * u0, u0 * Uk + c2 * Nk / n0 + fp / n0

        fmL, fuL = flux(np.arange(0, x.size + 1))
        fmR, fuR = flux(np.arange(1, x.size + 2))
        s = np.abs(u0f) + math.sqrt(c2)
        Fm = 0.5 * (fmL + fmR) - 0.5 * s * (Ne[1:] - Ne[:-1])
        Fu = 0.5 * (fuL + fuR) - 0.5 * s * (Ue[1:] - Ue[:-1])
        return -(Fm[1:] - Fm[:-1]) / w + fn, -(Fu[1:] - Fu[:-1]) / w + fu

    def check(t):
        _, u0, _, _ = background.fields(t, np.array([0.0]))
        if classify_regime(float(u0[0]), Ti, margin) is not Regime.SUPERSONIC:
            raise SupersonicLost(f"background wall trace {float(u0[0]):.6g} not supersonic at t = {t:.4g}")

    t_end = t0 + T
    while t < t_end - 1e-14:
        check(t)
        _, u0, _, _ = background.fields(t, x)
        dt = min(cfl * float(np.min(w)) / (float(np.max(np.abs(u0))) + math.sqrt(c2)), t_end - t)
        k1n, k1u = rhs(t, N, U)
        N1, U1 = N + dt * k1n, U + dt * k1u
        k2n, k2u = rhs(t + dt, N1, U1)
        N = 0.5 * (N + N1 + dt * k2n)
        U = 0.5 * (U + U1 + dt * k2u)
        t += dt
    check(t_end)
    n0c, _, _, _ = background.fields(t_end, x)
    _, _, fphi = sources(t_end, x)
    phi = -(N + fphi) * n0c
    return RegularCoefficient(x.copy(), N, U, phi)


# -- assembly ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Expansion:
    """Approximate solution at one time: regular coefficients plus layer profiles."""

    params: Parameters
    order: int
    time: float
    grid: Grid1D
    background: Background
    regular: list = field(default_factory=list)
    layer: list = field(default_factory=list)

    def evaluate(self, x):
        """Assembled ``(n, u1, u2, u3, phi)`` at arbitrary positions ``x >= 0``."""
        return assemble(self.params, self.background, self.time, self.regular, self.layer, x)

    def state(self) -> PlasmaState:
        n, u1, u2, u3, phi = self.evaluate(self.grid.cell_centers)
        return PlasmaState(self.grid, n, u1, u2, u3, phi, self.time)

    def wall_potential(self) -> float:
        return float(self.evaluate(np.array([0.0]))[4][0])

    def to_csv(self, path) -> None:
        """Columns x3, n_a, u1_a, u2_a, u3_a, phi_a."""
        x = self.grid.cell_centers
        cols = self.evaluate(x)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x3", "n_a", "u1_a", "u2_a", "u3_a", "phi_a"])
            for row in zip(x, *cols):
                w.writerow([f"{v:.17g}" for v in row])


def _sample(profile: SheathProfile, values, z):
    """Monotone cubic sampling of a layer field; zero beyond the tabulated range."""
    out = np.zeros_like(z)
    inside = z <= profile.z_max
    if np.any(inside):
        out[inside] = PchipInterpolator(profile.z, values)(z[inside])
    return out


def assemble(params: Parameters, background: Background, t: float, regular, layer, x):
    """Sum regular and layer coefficients with the powers of eps.

    ``regular[0]`` is ignored in favour of ``background`` (the leading regular
    part is the quasineutral solution itself, with ``phi^0 = -ln n^0``).
    """
    x = np.asarray(x, dtype=float)
    eps = params.epsilon
    n0, u0, _, _ = background.fields(t, x)
    n = np.array(n0, dtype=float)
    u3 = np.array(u0, dtype=float)
    phi = -np.log(n0)
    z = x / eps
    if layer:
        prof = layer[0]
        n = n + _sample(prof, prof.N0, z)
        u3 = u3 + _sample(prof, prof.U03, z)
        phi = phi + _sample(prof, prof.Phi0, z)
    for i in range(1, len(regular)):
        ni, ui, pi = regular[i].at(x)
        n, u3, phi = n + eps**i * ni, u3 + eps**i * ui, phi + eps**i * pi
    if len(regular) > 1 and layer and layer[0].Phi1 is not None:
        prof = layer[0]
        n = n + eps * _sample(prof, prof.N1, z)
        u3 = u3 + eps * _sample(prof, prof.U13, z)
        phi = phi + eps * _sample(prof, prof.Phi1, z)
    zero = np.zeros_like(n)
    return n, zero, zero.copy(), u3, phi


def layer_z_max(ctx: LayerContext, L: float, eps: float, dz: float = 0.02) -> float:
    """Tabulation range: long enough for the layer to decay to round-off, at most L / eps."""
    zm = min(max(40.0 / ctx.decay, 30.0 / ctx.decay + 1.0), L / eps)
    return dz * math.floor(zm / dz)


def build_expansion(
    params: Parameters,
    background: Background,
    t: float,
    order: int,
    grid: Grid1D,
    correctors=None,
    dz: float = 0.02,
    dt_fd: float = RESIDUAL_DT,
) -> Expansion:
    """Construct the order-``order`` expansion at time ``t``.

    ``correctors`` optionally supplies the first regular coefficient (by
    default the zero corrector, which is exact for zero sources and zero
    data).  The first-order layer uses centred time differences of the
    leading layer over ``+-dt_fd``.
    """
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    Ti = params.ion_temperature
    eps = params.epsilon
    L = grid.length

    def context(tt):
        n0, u0, dn, du = background.fields(tt, np.array([0.0]))
        return LayerContext.from_traces(float(n0[0]), float(u0[0]), Ti, params.phi_b), float(dn[0]), float(du[0])

    ctx, dn, du = context(t)
    zmax = layer_z_max(ctx, L, eps, dz)
    prof = solve_phi0(ctx, zmax, dz=dz, require_coercive=False)
    regular = [None]
    if order == 1:
        corr = correctors if correctors is not None else RegularCoefficient.zero(grid.cell_centers)
        regular.append(corr)
        n1, u1, p1 = (float(v[0]) for v in corr.at(np.array([0.0])))
        traces = RegularTraces(n1=n1, u13=u1, phi1=p1, dn0=dn, du0=du, dphi0=-dn / ctx.n0_trace)
        pm = solve_phi0(context(t - dt_fd)[0], zmax, dz=dz, require_coercive=False)
        pp = solve_phi0(context(t + dt_fd)[0], zmax, dz=dz, require_coercive=False)
        prof = first_order_layer(prof, traces, pm, pp, dt_fd)
    return Expansion(params, order, t, grid, background, regular, [prof])


# -- residual ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Residual:
    """Pointwise residuals of the Euler-Poisson equations on an approximate solution."""

    x: np.ndarray
    R_n: np.ndarray
    R_u: np.ndarray
    R_phi: np.ndarray
    order: int
    eps: float
    norms: dict = field(default_factory=dict)

    @property
    def total_L2(self) -> float:
        return math.sqrt(self.norms["R_n"]["L2"] ** 2 + self.norms["R_u"]["L2"] ** 2 + self.norms["R_phi"]["L2"] ** 2)

    @property
    def scaled(self) -> dict:
        """L2 norms divided by eps^K (mass, momentum) and eps^(K+1) (Poisson)."""
        k = self.order
        return {
            "R_n": self.norms["R_n"]["L2"] / self.eps**k,
            "R_u": self.norms["R_u"]["L2"] / self.eps**k,
            "R_phi": self.norms["R_phi"]["L2"] / self.eps ** (k + 1),
        }

    def derivative_L2(self) -> float:
        """L2 norm of the x3-derivative of (R_n, R_u, R_phi)."""
        h = self.x[1] - self.x[0]
        tot = 0.0
        for f in (self.R_n, self.R_u, self.R_phi):
            d = np.gradient(f, h, edge_order=2)
            tot += float(np.sum(d * d)) * h
        return math.sqrt(tot)


def _d1(f, h):
    return (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)


def _d2(f, h):
    return (-f[:-4] + 16 * f[1:-3] - 30 * f[2:-2] + 16 * f[3:-1] - f[4:]) / (12 * h * h)


def residual(params: Parameters, expansion_builder, t: float, x_max: float | None = None, h: float | None = None, dt: float = RESIDUAL_DT) -> Residual:
    """Residuals of the three Euler-Poisson equations on an assembled expansion.

    ``expansion_builder(t)`` returns the :class:`Expansion` at time ``t``
    (called at ``t`` and ``t +- dt``).  Space derivatives are fourth-order
    centred differences on a uniform grid of spacing ``h`` (default eps/20).
    """
    eps = params.epsilon
    Ti = params.ion_temperature
    mid = expansion_builder(t)
    if x_max is None:
        x_max = mid.grid.length
    if h is None:
        h = eps / 20.0
    m = int(math.floor(x_max / h))
    xs = h * np.arange(m + 1)
    x_in = xs[2:-2]
    n, _, _, u, phi = mid.evaluate(xs)
    nm, _, _, um, _ = expansion_builder(t - dt).evaluate(x_in)
    npl, _, _, upl, _ = expansion_builder(t + dt).evaluate(x_in)
    dn_dt = (npl - nm) / (2 * dt)
    du_dt = (upl - um) / (2 * dt)
    R_n = dn_dt + _d1(n * u, h)
    R_u = du_dt + u[2:-2] * _d1(u, h) + Ti * _d1(np.log(n), h) - _d1(phi, h)
    R_phi = eps**2 * _d2(phi, h) + np.exp(-phi[2:-2]) - n[2:-2]
    norms = {}
    for name, f in (("R_n", R_n), ("R_u", R_u), ("R_phi", R_phi)):
        norms[name] = {"L2": math.sqrt(float(np.sum(f * f)) * h), "Linf": float(np.max(np.abs(f)))}
    return Residual(x_in, R_n, R_u, R_phi, mid.order, eps, norms)


__all__ = [
    "Background",
    "SimpleWave",
    "TabulatedBackground",
    "RegularCoefficient",
    "solve_regular_corrector",
    "Expansion",
    "assemble",
    "layer_z_max",
    "build_expansion",
    "Residual",
    "residual",
    "RESIDUAL_DT",
]
