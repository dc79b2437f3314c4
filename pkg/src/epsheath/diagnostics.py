"""Computable stability certificates.

Exponential wall weight, the symmetric matrices whose positivity drives the
weighted energy estimates, their leading principal minors, the weighted
energy functional itself, eps-scaled Sobolev norms and decay-rate fits.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .errors import NonPositiveSymmetrizer, WindowTooNoisy

H0_SERIES_CUTOFF = 1e-6


@dataclass(frozen=True)
class WeightFn:
    """eta(x3) = exp((delta / mu^2) (1 - exp(-mu x3 / eps)))."""

    delta: float
    mu: float
    eps: float

    def __post_init__(self):
        if self.delta < 0 or not self.mu > 0 or not self.eps > 0:
            raise ValueError("need delta >= 0, mu > 0, eps > 0")

    @property
    def sup(self) -> float:
        """Limit of eta at infinity, which is also its supremum."""
        return math.exp(self.delta / self.mu**2)


def eval_weight(w: WeightFn, x3):
    """Return ``(eta, eta_prime)`` at ``x3 >= 0`` (scalar or array)."""
    x = np.asarray(x3, dtype=float)
    if np.any(x < 0):
        raise ValueError("weight is defined for x3 >= 0")
    decay = np.exp(-w.mu * x / w.eps)
    eta = np.exp(w.delta / w.mu**2 * -np.expm1(-w.mu * x / w.eps))
    eta_p = w.delta / (w.mu * w.eps) * decay * eta
    if eta.ndim == 0:
        return float(eta), float(eta_p)
    return eta, eta_p


def eval_weight_second(w: WeightFn, x3):
    """Second derivative of the weight."""
    x = np.asarray(x3, dtype=float)
    eta, eta_p = eval_weight(w, x)
    return eta_p * (-w.mu / w.eps + w.delta / (w.mu * w.eps) * np.exp(-w.mu * x / w.eps))


# -- quadratic forms --------------------------------------------------------


@dataclass(frozen=True)
class Trace:
    """Pointwise data entering the stability matrices.

    ``electron_factor`` is the linearized electron density ``exp(-phi_a)(1 + h)``.
    """

    n: float
    u3: float
    Ti: float
    electron_factor: float = 1.0

    def __post_init__(self):
        if not self.n > 0:
            raise ValueError("n must be > 0")
        if not self.u3 < 0:
            raise ValueError("u3 must be < 0")
        if not self.Ti > 0:
            raise ValueError("Ti must be > 0")


def _as_trace(trace) -> Trace:
    if isinstance(trace, Trace):
        return trace
    return Trace(**trace)


def leading_minors(M) -> np.ndarray:
    """Leading principal minors by fraction-free (Bareiss) elimination.

    Without pivoting the k-th Bareiss pivot equals the k-th leading minor.  A
    vanishing pivot makes the recursion undefined, and the remaining minors are
    then taken from determinants of the leading blocks.
    """
    A = np.array(M, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("square matrix required")
    minors = np.empty(n)
    prev = 1.0
    B = A.copy()
    for k in range(n):
        minors[k] = B[k, k]
        if B[k, k] == 0.0:
            for j in range(k + 1, n):
                minors[j] = np.linalg.det(A[: j + 1, : j + 1])
            break
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                B[i, j] = (B[i, j] * B[k, k] - B[i, k] * B[k, j]) / prev
        prev = B[k, k]
    return minors


def leading_minors_exact(M) -> list[Fraction]:
    """Bareiss minors in exact rational arithmetic (used as an oracle)."""
    B = [[Fraction(x) for x in row] for row in np.asarray(M, dtype=float)]
    n = len(B)
    out = []
    prev = Fraction(1)
    for k in range(n):
        out.append(B[k][k])
        if B[k][k] == 0:
            raise ZeroDivisionError("zero leading minor")
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                B[i][j] = (B[i][j] * B[k][k] - B[i][k] * B[k][j]) / prev
        prev = B[k][k]
    return out


def matrix_MA(trace) -> np.ndarray:
    """5x5 matrix of the basic weighted L2 estimate, unknowns (n, u1, u2, u3, phi)."""
    t = _as_trace(trace)
    a = abs(t.u3)
    M = np.zeros((5, 5))
    M[0, 0] = t.Ti * a / t.n
    M[0, 3] = M[3, 0] = -t.Ti
    M[1, 1] = M[2, 2] = M[3, 3] = t.n * a
    M[3, 4] = M[4, 3] = t.n
    M[4, 4] = t.electron_factor * a
    return M


def matrix_Q0(trace) -> np.ndarray:
    """4x4 boundary/transport form, unknowns (n, u1, u2, u3)."""
    t = _as_trace(trace)
    a = abs(t.u3)
    M = np.zeros((4, 4))
    M[0, 0] = t.Ti * a / t.n
    M[0, 3] = M[3, 0] = -t.Ti
    M[1:, 1:] = t.n * a * np.eye(3)
    return M


def matrix_M1B(trace) -> np.ndarray:
    t = _as_trace(trace)
    a = abs(t.u3)
    M = np.zeros((4, 4))
    M[0, 0] = t.Ti * a / t.n
    M[0, 3] = M[3, 0] = -t.Ti
    e = np.array([0.0, 0.0, 1.0])
    M[1:, 1:] = t.n * (a * np.eye(3) - np.outer(e, e) / a)
    return M


def matrix_M2B(trace) -> np.ndarray:
    """Uses exp(phi_a) / (1 + h) = 1 / electron_factor."""
    t = _as_trace(trace)
    a = abs(t.u3)
    g = 1.0 / t.electron_factor
    M = np.zeros((4, 4))
    M[0, 0] = g * t.n * a
    M[0, 3] = M[3, 0] = -t.Ti * g
    M[1:, 1:] = t.Ti * g * a / t.n * np.eye(3)
    return M


def matrix_MC(trace) -> np.ndarray:
    t = _as_trace(trace)
    a = abs(t.u3)
    I3 = np.eye(3)
    return np.block([[t.Ti * a / t.n**2 * I3, -t.Ti / t.n * I3], [-t.Ti / t.n * I3, a * I3]])


def printed_minors_MA(trace) -> np.ndarray:
    """Closed-form minors of the basic estimate in their published form.

    They coincide with the exact leading minors of :func:`matrix_MA` when
    ``n = 1`` and ``electron_factor = n``.
    """
    t = _as_trace(trace)
    a = abs(t.u3)
    return np.array(
        [
            t.Ti * a / t.n,
            t.Ti * a**2 / t.n,
            t.Ti * a**3 / t.n,
            t.Ti * t.n**2 * a**2 * (a**2 - t.Ti),
            t.Ti * a**3 * t.n**2 * (t.electron_factor / t.n * a**2 - (t.Ti + 1.0)),
        ]
    )


@dataclass
class QuadraticFormReport:
    """Sylvester certificate of one symmetric matrix."""

    matrix: str
    minors: np.ndarray
    positive: bool
    mu_critical: float
    min_eigenvalue: float
    worst_location: dict | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["minors"] = [float(v) for v in self.minors]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _report(name: str, M: np.ndarray, mu: float, C: float, location=None) -> QuadraticFormReport:
    lam_min = float(np.linalg.eigvalsh(M)[0])
    shifted = M - mu * C * np.eye(M.shape[0])
    minors = leading_minors(shifted)
    return QuadraticFormReport(
        matrix=name,
        minors=minors,
        positive=bool(np.all(minors > 0)),
        mu_critical=max(lam_min, 0.0) / C,
        min_eigenvalue=float(np.linalg.eigvalsh(shifted)[0]),
        worst_location=location,
    )


def minors_MA(trace, mu: float = 0.0, C: float = 1.0) -> QuadraticFormReport:
    """Leading minors of the basic-estimate matrix minus ``mu * C * Id``.

    ``mu_critical`` is the shift at which positivity is lost.
    """
    return _report("M_A", matrix_MA(trace), mu, C)


def minors_other(trace, mu: float = 0.0, C: float = 1.0) -> dict[str, QuadraticFormReport]:
    """Certificates for the transport form and the two higher-order estimates."""
    builders = {"Q0": matrix_Q0, "M1_B": matrix_M1B, "M2_B": matrix_M2B, "M_C": matrix_MC}
    return {name: _report(name, build(trace), mu, C) for name, build in builders.items()}


def scan_certificates(n, u3, Ti: float, electron_factor, x3, t: float = 0.0, mu: float = 0.0, C: float = 1.0):
    """Evaluate all certificates along a profile and keep the worst point of each.

    Returns a dict of reports, each carrying ``worst_location = {t, x3}`` at
    the node with the smallest shifted eigenvalue.
    """
    builders = {
        "M_A": matrix_MA,
        "Q0": matrix_Q0,
        "M1_B": matrix_M1B,
        "M2_B": matrix_M2B,
        "M_C": matrix_MC,
    }
    n, u3, ef, x3 = np.broadcast_arrays(*(np.asarray(v, float) for v in (n, u3, electron_factor, x3)))
    out = {}
    for name, build in builders.items():
        worst = None
        for k in range(n.size):
            tr = Trace(float(n.flat[k]), float(u3.flat[k]), Ti, float(ef.flat[k]))
            rep = _report(name, build(tr), mu, C, {"t": float(t), "x3": float(x3.flat[k])})
            if worst is None or rep.min_eigenvalue < worst.min_eigenvalue:
                worst = rep
        out[name] = worst
    return out


# -- weighted energy --------------------------------------------------------


class HChoice(enum.Enum):
    H0 = "h0"
    H1 = "h1"


def h0(phi):
    """-(exp(-phi) - 1 + phi) / phi, continued by its Taylor series near 0."""
    p = np.asarray(phi, dtype=float)
    small = np.abs(p) < H0_SERIES_CUTOFF
    safe = np.where(small, 1.0, p)
    out = -(np.expm1(-safe) + safe) / safe
    series = -(p / 2 - p**2 / 6 + p**3 / 24 - p**4 / 120)
    out = np.where(small, series, out)
    return out if out.ndim else float(out)


def h1(phi):
    """exp(-phi) - 1."""
    out = np.expm1(-np.asarray(phi, dtype=float))
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class Perturbation:
    """Perturbation fields (may take either sign) on a grid."""

    n: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    phi: np.ndarray

    @classmethod
    def difference(cls, a, b) -> "Perturbation":
        """Fieldwise ``a - b`` of two plasma states on the same grid."""
        return cls(a.n - b.n, a.u1 - b.u1, a.u2 - b.u2, a.u3 - b.u3, a.phi - b.phi)


def weighted_energy_A(pert: Perturbation, background, params, w: WeightFn, h_choice=HChoice.H0) -> float:
    """Weighted energy of a perturbation around a background state.

    Integrand ``eta [n |u'|^2 / 2 + Ti n'^2 / (2 n) + eps^2 |d3 phi'|^2 / 2
    + exp(-phi_a)(1 + h(phi')) phi'^2 / 2]`` with ``n`` the perturbed total
    density, summed with midpoint weights over the background grid.
    """
    grid = background.grid
    x = grid.cell_centers
    h = h0 if HChoice(h_choice) is HChoice.H0 else h1
    n_tot = background.n + pert.n
    if np.any(n_tot <= 0):
        raise NonPositiveSymmetrizer("perturbed density is not positive")
    sym = np.exp(-background.phi) * (1.0 + h(pert.phi))
    if np.any(sym <= 0):
        raise NonPositiveSymmetrizer("exp(-phi_a)(1 + h) is not positive")
    eta, _ = eval_weight(w, x)
    dphi = np.gradient(pert.phi, x, edge_order=2)
    u2 = pert.u1**2 + pert.u2**2 + pert.u3**2
    dens = (
        n_tot * u2 / 2
        + params.ion_temperature * pert.n**2 / (2 * n_tot)
        + params.epsilon**2 * dphi**2 / 2
        + sym * pert.phi**2 / 2
    )
    return float(np.sum(grid.cell_widths * eta * dens))


def hm_eps_norm(f, x, eps: float, m: int, widths=None) -> float:
    """sum_{k <= m} eps^k ||d^k f||_{L2} with finite-difference derivatives.

    ``x`` are sample points (uniform or not); ``widths`` are the quadrature
    weights, by default the midpoint control volumes.
    """
    if not 0 <= m <= 3:
        raise ValueError("m must lie in 0..3")
    f = np.asarray(f, dtype=float)
    x = np.asarray(x, dtype=float)
    if widths is None:
        mid = 0.5 * (x[1:] + x[:-1])
        edges = np.concatenate(([x[0] - (mid[0] - x[0])], mid, [x[-1] + (x[-1] - mid[-1])]))
        widths = np.diff(edges)
    total = 0.0
    d = f
    for k in range(m + 1):
        if k:
            d = np.gradient(d, x, edge_order=2)
        total += eps**k * math.sqrt(float(np.sum(widths * d * d)))
    return total


def measure_decay(samples, z, max_residual: float = 0.1) -> float:
    """Exponential decay rate from a least-squares fit of ln|samples| against z.

    The fit quality is ``1 - R^2``; above ``max_residual`` (or for a window
    without variation) :class:`WindowTooNoisy` is raised.
    """
    s = np.abs(np.asarray(samples, dtype=float))
    z = np.asarray(z, dtype=float)
    if s.size < 2 or s.shape != z.shape:
        raise ValueError("need at least two samples matching z")
    if np.any(s <= 0):
        raise ValueError("samples must have nonzero magnitude in the window")
    y = np.log(s)
    slope, icpt = np.polyfit(z, y, 1)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - (slope * z + icpt)) ** 2))
    if ss_tot <= 1e-24 * max(1.0, float(np.sum(y * y))):
        raise WindowTooNoisy("log-magnitude does not vary over the window")
    if ss_res / ss_tot > max_residual:
        raise WindowTooNoisy(f"fit residual {ss_res / ss_tot:.3g} exceeds {max_residual}")
    return float(-slope)


__all__ = [
    "WeightFn",
    "eval_weight",
    "eval_weight_second",
    "Trace",
    "leading_minors",
    "leading_minors_exact",
    "matrix_MA",
    "matrix_Q0",
    "matrix_M1B",
    "matrix_M2B",
    "matrix_MC",
    "printed_minors_MA",
    "QuadraticFormReport",
    "minors_MA",
    "minors_other",
    "scan_certificates",
    "HChoice",
    "h0",
    "h1",
    "Perturbation",
    "weighted_energy_A",
    "hm_eps_norm",
    "measure_decay",
]
