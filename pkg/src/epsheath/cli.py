"""Command line entry point: ``epsheath <subcommand> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .core import Regime
from .diagnostics import Trace, minors_MA, minors_other
from .epsolve import run, write_snapshots_csv
from .errors import ConfigError, EpsheathError, SolverError
from .harness import (
    EXPERIMENTS,
    ExperimentConfig,
    classify_report,
    converge_intermediate,
    converge_supersonic,
    ensure_dir,
    format_table,
    initial_state,
    parameters_for,
    perturbation_energy,
    residual_ladder,
    write_json,
)
from .sheath import LayerContext, admissible_window, decay_rate, solve_phi0

log = logging.getLogger("epsheath")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="epsheath", description="Plasma sheath boundary layers and quasineutral limits.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI file with [params] [grid] [solver] [experiment] sections")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--check", action="store_true", help="exit 4 when an acceptance check fails")
        sp.add_argument("--figures", action="store_true", help="also render PNG figures (needs matplotlib)")
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("profile", help="leading-order sheath profile and its decay rate")
    common(sp)
    sp.add_argument("--Ti", type=float, default=1.0)
    sp.add_argument("--u3", type=float, default=-2.0)
    sp.add_argument("--n0", type=float, default=1.0)
    sp.add_argument("--phi0", type=float, default=0.05, help="boundary value of the layer potential")
    sp.add_argument("--zmax", type=float, default=None)
    sp.add_argument("--dz", type=float, default=0.02)

    for name, text in (("solve", "run the Euler-Poisson solver at params.epsilon"), ("limit", "run the quasineutral limit solver")):
        sp = sub.add_parser(name, help=text)
        common(sp)
        sp.add_argument("--regime", choices=[Regime.SUPERSONIC.value, Regime.INTERMEDIATE.value])
        sp.add_argument("--eps", type=float, default=None)

    sp = sub.add_parser("converge", help="epsilon sweep and rate fit")
    common(sp)
    sp.add_argument("--regime", choices=[Regime.SUPERSONIC.value, Regime.INTERMEDIATE.value])
    sp.add_argument("--jobs", type=int, default=None)

    sp = sub.add_parser("stability", help="Sylvester minors of the energy quadratic forms at a trace")
    common(sp)
    sp.add_argument("--n", type=float, default=None, help="trace density (default n_ref)")
    sp.add_argument("--u3", type=float, default=None, help="trace velocity (default w_ref)")
    sp.add_argument("--mu", type=float, default=0.0)
    sp.add_argument("--energy", action="store_true", help="also run the seeded perturbation-energy sweep")
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("classify", help="outflow boundary-condition classification table")
    common(sp)

    sp = sub.add_parser("residual", help="residual ladder of the order-0 and order-1 expansions")
    common(sp)
    return p


def _load(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_file(args.config, experiment=args.command)
    else:
        regime = getattr(args, "regime", None) or Regime.SUPERSONIC.value
        cfg = ExperimentConfig.default(regime, experiment=args.command)
    regime = getattr(args, "regime", None)
    if regime and Regime(regime) is not cfg.regime:
        base = ExperimentConfig.default(regime)
        cfg = replace(cfg, regime=base.regime, params=replace(cfg.params, w_ref=base.params.w_ref), wave=base.wave)
    if args.out:
        cfg = replace(cfg, output_dir=args.out)
    if args.figures:
        cfg = replace(cfg, figures=True)
    if getattr(args, "jobs", None):
        cfg = replace(cfg, jobs=args.jobs)
    if getattr(args, "eps", None):
        cfg = cfg.with_params(epsilon=args.eps)
    return cfg


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _report_checks(checks: dict) -> bool:
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return all(checks.values())


def cmd_profile(args, cfg) -> int:
    out = ensure_dir(cfg.output_dir)
    ctx = LayerContext(args.n0, args.u3, args.Ti, args.phi0)
    zmax = args.zmax if args.zmax is not None else max(40.0 / ctx.decay, 30.0 / ctx.decay + 1.0)
    prof = solve_phi0(ctx, zmax, dz=args.dz)
    prof.to_csv(out / "profile.csv")
    lo, hi = admissible_window(ctx)
    rel = abs(prof.measured_decay_rate - prof.gamma_formula) / prof.gamma_formula
    report = {
        "Ti": args.Ti,
        "u3": args.u3,
        "n0": args.n0,
        "phi0": args.phi0,
        "gamma_normalized": decay_rate(args.Ti, args.u3),
        "gamma_formula": prof.gamma_formula,
        "gamma_measured": prof.measured_decay_rate,
        "gamma_relative_difference": rel,
        "admissible_window": [lo, hi],
        "z_max": prof.z_max,
    }
    write_json(out / "report.json", report)
    print(f"gamma formula {prof.gamma_formula:.6f}  measured {prof.measured_decay_rate:.6f}  rel diff {rel:.2e}")
    if cfg.figures:
        plt = _pyplot()
        fig, ax = plt.subplots(figsize=(6, 4))
        for name, vals in (("Phi0", prof.Phi0), ("N0", prof.N0), ("U03", prof.U03)):
            ax.plot(prof.z, vals, label=name)
        ax.set_xlabel("z = x3 / eps")
        ax.set_xlim(0, min(prof.z_max, 12.0 / ctx.decay))
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / "profile.png", dpi=120)
        plt.close(fig)
    if args.check:
        return EXIT_OK if _report_checks({"decay rate within 3%": rel <= 0.03}) else EXIT_CHECK
    return EXIT_OK


def _run_model(args, cfg, model: str) -> int:
    out = ensure_dir(cfg.output_dir)
    params = parameters_for(cfg, cfg.params.epsilon)
    if model == "ep":
        grid = cfg.grid.build(params.epsilon, params.gamma0)
    else:
        grid = cfg.grid.common()
    traj = run(
        initial_state(cfg, params, grid) if model == "ep" else cfg.wave.build(params).state(grid, 0.0),
        params,
        cfg.solver,
        params.final_time,
        model=model,
        regime=cfg.regime,
        observe_every=cfg.observe_every or None,
        keep_snapshots=True,
    )
    write_snapshots_csv(out / "snapshots.csv", traj.snapshots)
    f = traj.final
    report = {
        "model": model,
        "regime": cfg.regime.value,
        "epsilon": params.epsilon if model == "ep" else 0.0,
        "phi_b": params.phi_b,
        "final_time": f.time,
        "cells": grid.size,
        "steps": traj.stats.steps,
        "newton_iterations_max": traj.stats.newton_iterations_max,
        "wall_mass_outflow": traj.stats.wall_mass_outflow,
        "far_mass_inflow": traj.stats.far_mass_inflow,
        "mass_change": float(np.sum((f.n - traj.initial.n) * grid.cell_widths)),
        "wall_trace": {"n": float(f.n[0]), "u3": float(f.u3[0]), "phi": float(f.phi[0])},
        "config": cfg.to_dict(),
    }
    write_json(out / "report.json", report)
    print(f"{model}: t = {f.time:.4g}, {traj.stats.steps} steps, wall trace n = {f.n[0]:.6g}, u3 = {f.u3[0]:.6g}")
    if cfg.figures:
        plt = _pyplot()
        fig, axes = plt.subplots(3, 1, figsize=(6, 7), sharex=True)
        for ax, name in zip(axes, ("n", "u3", "phi")):
            ax.plot(traj.initial.x, getattr(traj.initial, name), "--", label="t = 0")
            ax.plot(f.x, getattr(f, name), label=f"t = {f.time:.3g}")
            ax.set_ylabel(name)
        axes[0].legend()
        axes[-1].set_xlabel("x3")
        fig.tight_layout()
        fig.savefig(out / "state.png", dpi=120)
        plt.close(fig)
    if args.check:
        checks = {"Newton iterations <= 6": traj.stats.newton_iterations_max <= 6} if model == "ep" else {"completed": True}
        return EXIT_OK if _report_checks(checks) else EXIT_CHECK
    return EXIT_OK


def cmd_converge(args, cfg) -> int:
    out = ensure_dir(cfg.output_dir)
    if cfg.regime is Regime.INTERMEDIATE:
        report = converge_intermediate(cfg)
    else:
        report = converge_supersonic(cfg)
    report.write_csv(out / "rates.csv")
    payload = report.to_dict()
    payload["config"] = cfg.to_dict()
    write_json(out / "report.json", payload)
    for name, fit in report.slopes.items():
        print(f"slope {name:15s} {fit.slope:8.4f} +- {fit.stderr:.4f}  R^2 {fit.r2:.4f}")
    for flag in report.flags:
        log.warning(flag)
    if cfg.figures:
        plt = _pyplot()
        fig, ax = plt.subplots(figsize=(5, 4))
        eps = np.array(report.eps)
        for name in ("err_L2_n", "err_L2_u", "err_Linf_raw", "err_Linf_corrected"):
            ax.loglog(eps, getattr(report, name), "o-", label=name)
        ax.set_xlabel("eps")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / "rates.png", dpi=120)
        plt.close(fig)
    if args.check:
        return EXIT_OK if _report_checks(report.checks()) else EXIT_CHECK
    return EXIT_OK


def cmd_stability(args, cfg) -> int:
    out = ensure_dir(cfg.output_dir)
    p = cfg.params
    n = args.n if args.n is not None else p.n_ref
    u3 = args.u3 if args.u3 is not None else p.w_ref
    trace = Trace(n, u3, p.ion_temperature)
    rep = minors_MA(trace, mu=args.mu)
    others = minors_other(trace, mu=args.mu)
    payload = {"trace": {"n": n, "u3": u3, "Ti": p.ion_temperature}, "M_A": rep.to_dict()}
    payload.update({k: v.to_dict() for k, v in others.items()})
    checks = {"M_A positive iff Bohm holds": rep.positive == (u3 * u3 > p.ion_temperature + 1.0)}
    if args.energy:
        energy = perturbation_energy(cfg, seed=args.seed)
        payload["energy"] = energy.to_dict()
        checks.update(energy.checks())
        print(f"perturbation energy: fitted rate C = {energy.fitted_rate:.4f}")
    write_json(out / "report.json", payload)
    print("M_A minors", " ".join(f"{m:.6g}" for m in rep.minors), "positive" if rep.positive else "not positive")
    for k, v in others.items():
        print(f"{k} minors", " ".join(f"{m:.6g}" for m in v.minors), "positive" if v.positive else "not positive")
    if args.check:
        return EXIT_OK if _report_checks(checks) else EXIT_CHECK
    return EXIT_OK


def cmd_classify(args, cfg) -> int:
    out = ensure_dir(cfg.output_dir)
    report = classify_report(cfg)
    write_json(out / "report.json", report)
    print(format_table(report))
    if "configured_trace" in report:
        tr = report["configured_trace"]
        print(f"configured trace u3 = {tr['u3']:g}, Ti = {tr['Ti']:g}: {tr.get('regime', tr.get('error'))}")
    return EXIT_OK


def cmd_residual(args, cfg) -> int:
    out = ensure_dir(cfg.output_dir)
    rep = residual_ladder(cfg)
    rep.write_csv(out / "residual.csv")
    payload = rep.to_dict()
    write_json(out / "report.json", payload)
    for e, r in zip(rep.eps, rep.ratios()):
        print(f"eps {e:g}: |R(K=1)| / |R(K=0)| = {r:.4g}")
    if args.check:
        return EXIT_OK if _report_checks(rep.checks()) else EXIT_CHECK
    return EXIT_OK


COMMANDS = {
    "profile": cmd_profile,
    "solve": lambda a, c: _run_model(a, c, "ep"),
    "limit": lambda a, c: _run_model(a, c, "limit"),
    "converge": cmd_converge,
    "stability": cmd_stability,
    "classify": cmd_classify,
    "residual": cmd_residual,
}
assert set(COMMANDS) == set(EXPERIMENTS)


def cli_main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except EpsheathError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
