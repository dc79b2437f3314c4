"""Configuration, epsilon-sweep convergence experiments and reports."""

from __future__ import annotations

import configparser
import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.stats import linregress

from .core import Grid1D, Parameters, Regime, build_grid, classify_regime
from .diagnostics import Perturbation, WeightFn, weighted_energy_A
from .epsolve import Reconstruction, SolverConfig, run, stable_dt
from .errors import ConfigError, FitFailure
from .expansion import SimpleWave, build_expansion, residual

log = logging.getLogger(__name__)

EXPERIMENTS = ("profile", "solve", "limit", "converge", "stability", "classify", "residual")
DEFAULT_SWEEP = (0.02, 0.01, 0.005, 0.0025)
R2_FLAG = 0.98

# acceptance windows used by ``--check``
SUPERSONIC_L2_SLOPE = (0.35, 0.65)
INTERMEDIATE_L2_SLOPE = (0.8, 1.2)
INTERMEDIATE_LINF_MIN_SLOPE = 0.5
LADDER_FACTOR = (1.5, 3.0)
DERIVATIVE_GROWTH_FACTOR = 2.0


@dataclass(frozen=True)
class WaveSpec:
    """Gaussian simple wave used as the quasineutral background."""

    amplitude: float = 0.05
    center: float = 0.3
    width: float = 0.15
    family: str = "+"

    def build(self, params: Parameters) -> SimpleWave:
        return SimpleWave(
            Ti=params.ion_temperature,
            n_ref=params.n_ref,
            w_ref=params.w_ref,
            amplitude=self.amplitude,
            center=self.center,
            width=self.width,
            family=self.family,
        )


@dataclass(frozen=True)
class GridSpec:
    """Mesh controls shared by every run of an experiment.

    With ``refine_layer`` the fine-zone width fraction shrinks like
    ``sqrt(eps / eps_max)`` across a sweep, so that the discretization error
    of the layer (second order in ``dx / eps``) decays like ``eps``.
    """

    length: float = 1.2
    bulk_dx: float = 5e-4
    fine_fraction: float = 0.1
    growth: float = 1.1
    refine_layer: bool = True

    def build(self, eps: float, gamma0: float, eps_max: float | None = None) -> Grid1D:
        frac = self.fine_fraction
        if self.refine_layer and eps_max is not None and eps < eps_max:
            frac *= math.sqrt(eps / eps_max)
        return build_grid(self.length, eps, gamma0, self.bulk_dx, fine_fraction=frac, growth=self.growth)

    def common(self) -> Grid1D:
        """Uniform bulk mesh on which all runs of a sweep are compared."""
        return Grid1D.uniform(self.length, max(3, round(self.length / self.bulk_dx)))


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment.  No randomness is involved."""

    experiment: str = "converge"
    regime: Regime = Regime.SUPERSONIC
    params: Parameters = field(default_factory=Parameters)
    eps_sweep: tuple = DEFAULT_SWEEP
    grid: GridSpec = field(default_factory=GridSpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    wave: WaveSpec = field(default_factory=WaveSpec)
    output_dir: str = "epsheath-out"
    residual_time: float = 0.05
    observe_every: float = 0.0
    jobs: int = 1
    figures: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        sweep = tuple(float(e) for e in self.eps_sweep)
        object.__setattr__(self, "eps_sweep", sweep)
        if any(not 0 < e <= 1 for e in sweep):
            raise ConfigError("eps_sweep entries must lie in (0, 1]")
        if any(b >= a for a, b in zip(sweep, sweep[1:])):
            raise ConfigError("eps_sweep must be strictly decreasing")
        if self.experiment in ("converge", "residual") and len(sweep) < (3 if self.experiment == "converge" else 2):
            raise ConfigError(f"{self.experiment} needs more eps_sweep entries, got {len(sweep)}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @classmethod
    def default(cls, regime: Regime | str = Regime.SUPERSONIC, **changes) -> "ExperimentConfig":
        """Reference setup of each regime: supersonic ``w_ref = -2``, intermediate ``w_ref = -1.25``.

        The intermediate wave starts far from the wall, so the wall trace is
        the constant reference state and the data satisfy ``n(0) = exp(-phi_b)``.
        """
        regime = Regime(regime)
        if regime is Regime.INTERMEDIATE:
            base = cls(
                regime=regime,
                params=Parameters(w_ref=-1.25),
                wave=WaveSpec(center=0.6, width=0.1),
                grid=GridSpec(bulk_dx=2.5e-4, refine_layer=False),
            )
        else:
            base = cls(regime=regime)
        return replace(base, **changes) if changes else base

    def with_params(self, **changes) -> "ExperimentConfig":
        return replace(self, params=replace(self.params, **changes))

    @classmethod
    def from_file(cls, path, experiment: str | None = None) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        return cls.from_parser(parser, experiment)

    @classmethod
    def from_text(cls, text: str, experiment: str | None = None) -> "ExperimentConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        return cls.from_parser(parser, experiment)

    @classmethod
    def from_parser(cls, parser: configparser.ConfigParser, experiment: str | None = None) -> "ExperimentConfig":
        unknown = set(parser.sections()) - {"params", "grid", "solver", "experiment"}
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        ex = parser["experiment"] if parser.has_section("experiment") else {}
        try:
            regime = Regime(ex.get("regime", Regime.SUPERSONIC.value))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        base = cls.default(regime)
        try:
            params = _update(base.params, parser, "params")
            grid = _update(base.grid, parser, "grid")
            solver = _update_solver(base.solver, parser)
            wave = WaveSpec(
                amplitude=float(ex.get("wave_amplitude", base.wave.amplitude)),
                center=float(ex.get("wave_center", base.wave.center)),
                width=float(ex.get("wave_width", base.wave.width)),
                family=ex.get("wave_family", base.wave.family),
            )
            sweep = ex.get("eps_sweep")
            sweep = tuple(float(s) for s in sweep.replace(",", " ").split()) if sweep else base.eps_sweep
            return cls(
                experiment=experiment or ex.get("name", base.experiment),
                regime=regime,
                params=params,
                eps_sweep=sweep,
                grid=grid,
                solver=solver,
                wave=wave,
                output_dir=ex.get("output_dir", base.output_dir),
                residual_time=float(ex.get("residual_time", base.residual_time)),
                observe_every=float(ex.get("observe_every", base.observe_every)),
                jobs=int(ex.get("jobs", base.jobs)),
                figures=_as_bool(ex.get("figures", "false")),
            )
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid config value: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "regime": self.regime.value,
            "params": asdict(self.params),
            "eps_sweep": list(self.eps_sweep),
            "grid": asdict(self.grid),
            "solver": {k: getattr(v, "value", v) for k, v in asdict(self.solver).items()},
            "wave": asdict(self.wave),
            "residual_time": self.residual_time,
            "observe_every": self.observe_every,
        }


def _as_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _update(obj, parser, section):
    if not parser.has_section(section):
        return obj
    known = {f.name: f for f in fields(obj)}
    changes = {}
    for key, raw in parser[section].items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        current = getattr(obj, key)
        if isinstance(current, bool):
            changes[key] = _as_bool(raw)
        elif isinstance(current, int):
            changes[key] = int(raw)
        else:
            changes[key] = float(raw)
    return replace(obj, **changes)


def _update_solver(cfg: SolverConfig, parser) -> SolverConfig:
    if not parser.has_section("solver"):
        return cfg
    sec = dict(parser["solver"])
    changes = {}
    if "reconstruction" in sec:
        changes["reconstruction"] = Reconstruction(sec.pop("reconstruction"))
    for key in ("cfl", "newton_tol", "sonic_margin"):
        if key in sec:
            changes[key] = float(sec.pop(key))
    if "newton_max_iter" in sec:
        changes["newton_max_iter"] = int(sec.pop("newton_max_iter"))
    if sec:
        raise ConfigError(f"unknown keys {sorted(sec)} in [solver]")
    return replace(cfg, **changes)


# -- rate fits ----------------------------------------------------------------


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares fit of ``log(error) = slope * log(eps) + intercept``."""

    slope: float
    stderr: float
    intercept: float
    r2: float
    residuals: tuple

    @property
    def flagged(self) -> bool:
        return self.r2 < R2_FLAG

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "stderr": self.stderr,
            "intercept": self.intercept,
            "r2": self.r2,
            "residuals": list(self.residuals),
            "flagged": self.flagged,
        }


def fit_rate(eps, errors) -> SlopeFit:
    """Fit a power law through every sweep point."""
    eps = np.asarray(eps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if eps.shape != errors.shape or eps.size < 2:
        raise FitFailure("need at least two (eps, error) pairs of equal length")
    if not (np.all(np.isfinite(errors)) and np.all(errors > 0)):
        raise FitFailure(f"errors must be positive and finite, got {errors.tolist()}")
    lx, ly = np.log(eps), np.log(errors)
    if eps.size == 2:
        slope = float((ly[1] - ly[0]) / (lx[1] - lx[0]))
        return SlopeFit(slope, float("nan"), float(ly[0] - slope * lx[0]), 1.0, (0.0, 0.0))
    fit = linregress(lx, ly)
    res = ly - (fit.intercept + fit.slope * lx)
    r2 = float(fit.rvalue**2) if np.ptp(ly) > 0 else 0.0
    return SlopeFit(float(fit.slope), float(fit.stderr), float(fit.intercept), r2, tuple(float(r) for r in res))


@dataclass(frozen=True)
class RateReport:
    """Errors of one epsilon sweep and their fitted slopes."""

    regime: Regime
    eps: tuple
    err_L2_n: tuple
    err_L2_u: tuple
    err_Linf_raw: tuple
    err_Linf_corrected: tuple
    layer_corrected: bool = True
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("err_L2_n", "err_L2_u", "err_Linf_raw", "err_Linf_corrected"):
            vals = getattr(self, name)
            if len(vals) != len(self.eps):
                raise FitFailure(f"{name} has {len(vals)} entries for {len(self.eps)} eps values")
            if not all(v > 0 and math.isfinite(v) for v in vals):
                raise FitFailure(f"{name} must be positive and finite, got {list(vals)}")

    @property
    def slopes(self) -> dict:
        return {
            "L2_n": fit_rate(self.eps, self.err_L2_n),
            "L2_u": fit_rate(self.eps, self.err_L2_u),
            "Linf_raw": fit_rate(self.eps, self.err_Linf_raw),
            "Linf_corrected": fit_rate(self.eps, self.err_Linf_corrected),
        }

    @property
    def flags(self) -> list:
        return [f"fit {k} has R^2 = {v.r2:.4f} < {R2_FLAG}" for k, v in self.slopes.items() if v.flagged]

    def checks(self) -> dict:
        """Pass/fail of the rate claims for this regime."""
        s = self.slopes
        if self.regime is Regime.SUPERSONIC:
            raw = np.array(self.err_Linf_raw)
            cor = np.array(self.err_Linf_corrected)
            return {
                "L2 slope in [0.35, 0.65]": SUPERSONIC_L2_SLOPE[0] <= s["L2_n"].slope <= SUPERSONIC_L2_SLOPE[1],
                "raw Linf non-vanishing": bool(raw.min() >= 0.5 * raw.max()),
                "corrected Linf strictly decreasing": bool(np.all(np.diff(cor) < 0)),
            }
        return {
            "L2 slope in [0.8, 1.2]": INTERMEDIATE_L2_SLOPE[0] <= s["L2_n"].slope <= INTERMEDIATE_L2_SLOPE[1],
            "Linf slope > 0.5": s["Linf_raw"].slope > INTERMEDIATE_LINF_MIN_SLOPE,
        }

    @property
    def passed(self) -> bool:
        return all(self.checks().values())

    def to_dict(self) -> dict:
        return {
            "regime": self.regime.value,
            "eps": list(self.eps),
            "err_L2_n": list(self.err_L2_n),
            "err_L2_u": list(self.err_L2_u),
            "err_Linf_raw": list(self.err_Linf_raw),
            "err_Linf_corrected": list(self.err_Linf_corrected),
            "layer_corrected": self.layer_corrected,
            "slopes": {k: v.to_dict() for k, v in self.slopes.items()},
            "flags": self.flags,
            "checks": self.checks(),
            "extras": self.extras,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eps", "err_L2_n", "err_L2_u", "err_Linf_raw", "err_Linf_corrected"])
            for row in zip(self.eps, self.err_L2_n, self.err_L2_u, self.err_Linf_raw, self.err_Linf_corrected):
                w.writerow([f"{v:.17g}" for v in row])


# -- error measurement --------------------------------------------------------


def restrict(grid: Grid1D, values, target: Grid1D) -> np.ndarray:
    """Conservative restriction of cell averages onto another mesh of the same interval."""
    cum = np.concatenate(([0.0], np.cumsum(np.asarray(values) * grid.cell_widths)))
    faces = grid.faces
    tf = np.clip(target.faces, 0.0, faces[-1])
    return np.diff(np.interp(tf, faces, cum)) / target.cell_widths


def l2_norm(f, widths) -> float:
    return math.sqrt(float(np.sum(np.asarray(widths) * np.asarray(f) ** 2)))


def supersonic_parameters(cfg: ExperimentConfig, eps: float) -> Parameters:
    """Parameters whose wall potential gives the boundary mismatch ``bl_amplitude``.

    The mismatch is ``phi_b + ln n0(0, 0)`` with ``n0`` the background.
    """
    p = cfg.params.with_epsilon(eps)
    wave = cfg.wave.build(p)
    n00 = float(wave.fields(0.0, np.array([0.0]))[0][0])
    return replace(p, phi_c=p.bl_amplitude - math.log(n00 / p.n_ref))


def intermediate_parameters(cfg: ExperimentConfig, eps: float) -> Parameters:
    """Parameters whose wall potential matches the initial wall density."""
    p = cfg.params.with_epsilon(eps)
    wave = cfg.wave.build(p)
    n00 = float(wave.fields(0.0, np.array([0.0]))[0][0])
    return replace(p, phi_c=math.log(p.n_ref / n00))


def parameters_for(cfg: ExperimentConfig, eps: float) -> Parameters:
    if cfg.regime is Regime.SUPERSONIC:
        return supersonic_parameters(cfg, eps)
    if cfg.regime is Regime.INTERMEDIATE:
        return intermediate_parameters(cfg, eps)
    raise ConfigError(f"experiments support supersonic and intermediate regimes, got {cfg.regime.value}")


def initial_state(cfg: ExperimentConfig, params: Parameters, grid: Grid1D):
    """Initial data of the eps-runs.

    Supersonic: the assembled expansion at t = 0.  Intermediate: the
    quasineutral data themselves (no layer is present).
    """
    wave = cfg.wave.build(params)
    if cfg.regime is Regime.SUPERSONIC:
        return build_expansion(params, wave, 0.0, params.expansion_order, grid).state()
    return wave.state(grid, 0.0)


def limit_solution(cfg: ExperimentConfig):
    """Quasineutral solution at ``final_time`` on the common mesh."""
    params = parameters_for(cfg, cfg.eps_sweep[0])
    common = cfg.grid.common()
    wave = cfg.wave.build(params)
    traj = run(wave.state(common, 0.0), params, cfg.solver, params.final_time, model="limit", regime=cfg.regime)
    return traj.final


def _sweep_point(cfg: ExperimentConfig, eps: float, limit_final) -> dict:
    t0 = time.perf_counter()
    params = parameters_for(cfg, eps)
    T = params.final_time
    grid = cfg.grid.build(eps, params.gamma0, cfg.eps_sweep[0])
    traj = run(initial_state(cfg, params, grid), params, cfg.solver, T)
    f = traj.final
    common = limit_final.grid
    n_r = restrict(grid, f.n, common)
    u_r = restrict(grid, f.n * f.u3, common) / n_r
    w = common.cell_widths
    err_n = l2_norm(n_r - limit_final.n, w)
    err_u = l2_norm(u_r - limit_final.u3, w)
    n_lim = PchipInterpolator(common.cell_centers, limit_final.n, extrapolate=True)(f.x)
    raw = f.n - n_lim
    if cfg.regime is Regime.SUPERSONIC:
        # layer part of the leading-order expansion at the final time
        wave = cfg.wave.build(params)
        ex0 = build_expansion(params, wave, T, 0, grid)
        layer = ex0.evaluate(f.x)[0] - wave.fields(T, f.x)[0]
        fine = f.x <= grid.layer_width
        corrected = float(np.max(np.abs(raw - layer)[fine]))
    else:
        corrected = float(np.max(np.abs(raw)))
    out = {
        "eps": eps,
        "err_L2_n": err_n,
        "err_L2_u": err_u,
        "err_Linf_raw": float(np.max(np.abs(raw))),
        "err_Linf_corrected": corrected,
        "cells": grid.size,
        "steps": traj.stats.steps,
        "newton_max": traj.stats.newton_iterations_max,
        "seconds": time.perf_counter() - t0,
    }
    log.info("eps=%g: L2(n)=%.4g Linf raw=%.4g corrected=%.4g (%d cells, %.1fs)", eps, err_n, out["err_Linf_raw"], corrected, grid.size, out["seconds"])
    return out


def _converge(cfg: ExperimentConfig) -> RateReport:
    limit_final = limit_solution(cfg)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            points = list(pool.map(_sweep_point, [cfg] * len(cfg.eps_sweep), cfg.eps_sweep, [limit_final] * len(cfg.eps_sweep)))
    else:
        points = [_sweep_point(cfg, e, limit_final) for e in cfg.eps_sweep]
    col = lambda k: tuple(p[k] for p in points)  # noqa: E731
    extras = {
        "cells": list(col("cells")),
        "steps": list(col("steps")),
        "newton_max": list(col("newton_max")),
        "final_time": cfg.params.final_time,
    }
    return RateReport(
        cfg.regime,
        col("eps"),
        col("err_L2_n"),
        col("err_L2_u"),
        col("err_Linf_raw"),
        col("err_Linf_corrected"),
        layer_corrected=cfg.regime is Regime.SUPERSONIC,
        extras=extras,
    )


def converge_supersonic(cfg: ExperimentConfig) -> RateReport:
    """Euler-Poisson versus quasineutral errors across the sweep, supersonic outflow.

    The corrected sup-norm error subtracts the leading layer profile and is
    sampled on the fine zone only.
    """
    if cfg.regime is not Regime.SUPERSONIC:
        cfg = replace(cfg, regime=Regime.SUPERSONIC)
    return _converge(cfg)


def converge_intermediate(cfg: ExperimentConfig) -> RateReport:
    """Same sweep in the intermediate regime; the limit pins ``n(0) = exp(-phi_b)``.

    No layer is present, so the corrected sup-norm error equals the raw one.
    """
    if cfg.regime is not Regime.INTERMEDIATE:
        cfg = replace(cfg, regime=Regime.INTERMEDIATE)
    return _converge(cfg)


# -- residual ladder ----------------------------------------------------------


@dataclass(frozen=True)
class LadderReport:
    """Residual norms of the order-0 and order-1 expansions across a sweep."""

    eps: tuple
    total_L2: dict
    derivative_ratio: dict

    def ratios(self) -> list:
        """``|R(K=1)| / |R(K=0)|`` per eps."""
        return [self.total_L2[1][i] / self.total_L2[0][i] for i in range(len(self.eps))]

    def checks(self) -> dict:
        r = self.ratios()
        steps = [r[i] / r[i + 1] for i in range(len(r) - 1)]
        d = self.derivative_ratio[1]
        growth = [d[i + 1] / d[i] for i in range(len(d) - 1)]
        return {
            "ladder factor in [1.5, 3.0]": all(LADDER_FACTOR[0] <= s <= LADDER_FACTOR[1] for s in steps),
            "eps |dR|/|R| within factor 2": all(
                1.0 / DERIVATIVE_GROWTH_FACTOR <= g <= DERIVATIVE_GROWTH_FACTOR for g in growth
            ),
        }

    def to_dict(self) -> dict:
        r = self.ratios()
        return {
            "eps": list(self.eps),
            "total_L2": {str(k): v for k, v in self.total_L2.items()},
            "eps_derivative_ratio": {str(k): v for k, v in self.derivative_ratio.items()},
            "ratio_K1_K0": r,
            "ladder_factors": [r[i] / r[i + 1] for i in range(len(r) - 1)],
            "checks": self.checks(),
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eps", "order", "residual_L2", "eps_dR_over_R"])
            for k in (0, 1):
                for e, v, d in zip(self.eps, self.total_L2[k], self.derivative_ratio[k]):
                    w.writerow([f"{e:.17g}", k, f"{v:.17g}", f"{d:.17g}"])


def residual_ladder(cfg: ExperimentConfig) -> LadderReport:
    """Residuals of the assembled supersonic expansion at ``residual_time``."""
    totals = {0: [], 1: []}
    dratio = {0: [], 1: []}
    for eps in cfg.eps_sweep:
        p = supersonic_parameters(cfg, eps)
        wave = cfg.wave.build(p)
        grid = cfg.grid.build(eps, p.gamma0)
        for K in (0, 1):
            r = residual(p, lambda t, K=K: build_expansion(p, wave, t, K, grid), cfg.residual_time)
            totals[K].append(r.total_L2)
            dratio[K].append(eps * r.derivative_L2() / r.total_L2)
            log.info("eps=%g K=%d residual L2 %.4g", eps, K, r.total_L2)
    return LadderReport(tuple(cfg.eps_sweep), totals, dratio)


# -- perturbation energy ------------------------------------------------------


ENERGY_RATE_SPREAD = 1.0


@dataclass(frozen=True)
class EnergyReport:
    """Weighted energy of the difference of two nearby Euler-Poisson runs, per eps."""

    eps: tuple
    times: tuple
    energies: tuple
    seed: int

    def rates(self) -> list:
        """Smallest ``C`` with ``E(t) <= exp(C t) E(0)`` at every sampled time, per eps."""
        t = np.asarray(self.times)
        out = []
        for E in self.energies:
            E = np.asarray(E)
            out.append(float(np.max(np.log(E[1:] / E[0]) / t[1:])))
        return out

    @property
    def fitted_rate(self) -> float:
        """One rate valid across the whole sweep."""
        return max(self.rates())

    def checks(self) -> dict:
        C = self.fitted_rate
        t = np.asarray(self.times)
        bounded = all(np.all(np.asarray(E) <= np.exp(C * t) * E[0] * (1 + 1e-12)) for E in self.energies)
        r = self.rates()
        return {
            "E(t) <= exp(C t) E(0) for one C across the sweep": bool(bounded),
            f"per-eps rates spread <= {ENERGY_RATE_SPREAD}": max(r) - min(r) <= ENERGY_RATE_SPREAD,
        }

    def to_dict(self) -> dict:
        return {
            "eps": list(self.eps),
            "times": list(self.times),
            "energies": [list(E) for E in self.energies],
            "rates": self.rates(),
            "fitted_rate": self.fitted_rate,
            "seed": self.seed,
            "checks": self.checks(),
        }


def seeded_perturbation(x, L: float, eps: float, seed: int):
    """Unit-amplitude perturbation of ``(n, u3)``: random bulk sine modes plus a layer-scale part.

    The bulk part is tapered to zero on the last fifth of ``[0, L]``, away
    from the inflow boundary.
    """
    rng = np.random.default_rng(seed)
    k = np.arange(1, 9)
    amp = rng.standard_normal((2, k.size)) / k
    phase = rng.uniform(0.0, 2 * np.pi, (2, k.size))
    taper = np.cos(0.5 * np.pi * np.clip((x - 0.8 * L) / (0.1 * L), 0.0, 1.0)) ** 2
    out = []
    for a, ph in zip(amp, phase):
        f = np.sum(a[:, None] * np.sin(np.pi * k[:, None] * x[None, :] / L + ph[:, None]), axis=0)
        out.append(taper * f / np.max(np.abs(f)))
    layer = rng.standard_normal(2)
    envelope = np.exp(-x / (2 * eps))
    out[0] = out[0] + layer[0] * envelope * np.cos(x / eps)
    out[1] = out[1] + layer[1] * envelope * np.sin(x / eps)
    return out[0], out[1]


def perturbation_energy(
    cfg: ExperimentConfig,
    seed: int = 0,
    relative_amplitude: float = 1e-6,
    observe_every: float = 0.005,
) -> EnergyReport:
    """Evolve the order-K expansion and a seeded perturbation of it (amplitude ``relative_amplitude * eps``).

    Both runs share one fixed time step and a tight Newton tolerance, so that
    their difference is the perturbation and not solver noise.
    """
    solver = replace(cfg.solver, newton_tol=min(cfg.solver.newton_tol, 1e-13))
    energies = []
    times = None
    for eps in cfg.eps_sweep:
        p = supersonic_parameters(cfg, eps)
        grid = cfg.grid.build(eps, p.gamma0, cfg.eps_sweep[0])
        base = build_expansion(p, cfg.wave.build(p), 0.0, p.expansion_order, grid).state()
        dn, du = seeded_perturbation(grid.cell_centers, grid.length, eps, seed)
        amp = relative_amplitude * eps
        pert = base.replace(n=base.n + amp * dn, u3=base.u3 + amp * du)
        dt = 0.9 * stable_dt(base, p, solver.cfl)
        sa, sb = [], []
        run(base, p, solver, p.final_time, [sa.append], observe_every=observe_every, fixed_dt=dt)
        run(pert, p, solver, p.final_time, [sb.append], observe_every=observe_every, fixed_dt=dt)
        w = WeightFn(p.bl_amplitude, p.weight_mu, eps)
        E = tuple(weighted_energy_A(Perturbation.difference(b, a), a, p, w) for a, b in zip(sa, sb))
        energies.append(E)
        times = tuple(a.time for a in sa)
        log.info("eps=%g: E(T)/E(0) = %.4f", eps, E[-1] / E[0])
    return EnergyReport(tuple(cfg.eps_sweep), times, tuple(energies), seed)


# -- regime table -------------------------------------------------------------


CLASSIFICATION = (
    {
        "case": "characteristic",
        "condition": "u.n = 0",
        "ep_bc": "u.n = 0 and phi = phi_b",
        "limit_bc": "u.n = 0",
        "layer": "Density and Potential",
        "supported": False,
    },
    {
        "case": "subsonic",
        "condition": "u.n = u_bar < 0, |u_bar| < sqrt(Ti)",
        "ep_bc": "u.n = u_bar and phi = phi_b",
        "limit_bc": "u.n = u_bar",
        "layer": "Density and Potential",
        "supported": False,
    },
    {
        "case": "intermediate",
        "condition": "-sqrt(Ti+1) < u3(0) < -sqrt(Ti)",
        "ep_bc": "phi = phi_b",
        "limit_bc": "n = exp(-phi_b)",
        "layer": "No boundary layer",
        "supported": True,
    },
    {
        "case": "supersonic",
        "condition": "u3(0) < -sqrt(Ti+1)",
        "ep_bc": "phi = phi_b",
        "limit_bc": "None",
        "layer": "Density, Potential and Velocity",
        "supported": True,
    },
)


def classify_report(cfg: ExperimentConfig | None = None) -> dict:
    """Outflow boundary-condition classification, plus the regime of the configured trace."""
    rows = [dict(r) for r in CLASSIFICATION]
    out = {"rows": rows}
    if cfg is not None:
        p = cfg.params
        try:
            out["configured_trace"] = {
                "u3": p.w_ref,
                "Ti": p.ion_temperature,
                "regime": classify_regime(p.w_ref, p.ion_temperature, cfg.solver.sonic_margin).value,
            }
        except ConfigError as exc:
            out["configured_trace"] = {"u3": p.w_ref, "Ti": p.ion_temperature, "error": str(exc)}
    return out


def format_table(report: dict) -> str:
    cols = ("case", "ep_bc", "limit_bc", "layer", "supported")
    rows = [[str(r[c]) for c in cols] for r in report["rows"]]
    widths = [max(len(c), *(len(r[i]) for r in rows)) for i, c in enumerate(cols)]
    line = lambda vals: "  ".join(v.ljust(w) for v, w in zip(vals, widths)).rstrip()  # noqa: E731
    return "\n".join([line(cols), line(["-" * w for w in widths])] + [line(r) for r in rows])


# -- output -------------------------------------------------------------------


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "value") and not isinstance(obj, (str, int)):
        return obj.value
    return obj


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p


__all__ = [
    "EXPERIMENTS",
    "DEFAULT_SWEEP",
    "WaveSpec",
    "GridSpec",
    "ExperimentConfig",
    "SlopeFit",
    "fit_rate",
    "RateReport",
    "restrict",
    "l2_norm",
    "supersonic_parameters",
    "intermediate_parameters",
    "parameters_for",
    "initial_state",
    "limit_solution",
    "converge_supersonic",
    "converge_intermediate",
    "EnergyReport",
    "seeded_perturbation",
    "perturbation_energy",
    "LadderReport",
    "residual_ladder",
    "CLASSIFICATION",
    "classify_report",
    "format_table",
    "write_json",
    "ensure_dir",
]
