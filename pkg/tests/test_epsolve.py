import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from epsheath.core import Grid1D, Parameters, PlasmaState, Regime, build_grid
from epsheath.epsolve import (
    Reconstruction,
    SolverConfig,
    SolverStats,
    centered_gradient,
    ep_step,
    euler_limit_step,
    newton_poisson,
    poisson_residual,
    run,
    stable_dt,
)
from epsheath.errors import BohmLost, ConfigError, NonPositiveDensity, RegimeMismatch
from epsheath.expansion import SimpleWave

CFG = SolverConfig()


def manufactured(L, m, eps):
    """phi* = 0.3 cos(2x) + 0.2 x; n := eps^2 phi*'' + exp(-phi*)."""
    g = Grid1D.uniform(L, m)
    x = g.cell_centers
    phi = 0.3 * np.cos(2 * x) + 0.2 * x
    n = eps**2 * (-1.2 * np.cos(2 * x)) + np.exp(-phi)
    return g, phi, n, 0.3, 0.3 * math.cos(2 * L) + 0.2 * L


class TestConfig:
    @pytest.mark.parametrize(
        "kw", [{"cfl": 0.6}, {"cfl": 0.0}, {"newton_tol": 1e-8}, {"newton_max_iter": 0}, {"sonic_margin": 0.0}]
    )
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            SolverConfig(**kw)

    def test_enum_coercion(self):
        assert SolverConfig(reconstruction="first_order").reconstruction is Reconstruction.FIRST_ORDER


class TestPoisson:
    def test_constant_state_exact(self):
        g = Grid1D.uniform(1.0, 64)
        phi_b = 0.37
        n = np.full(g.size, math.exp(-phi_b))
        phi = newton_poisson(n, phi_b, 0.01, g, CFG, phi_far=phi_b)
        assert np.max(np.abs(phi - phi_b)) < 1e-12
        assert np.max(np.abs(poisson_residual(phi, n, phi_b, phi_b, 0.01, g))) < 1e-12

    def test_manufactured_second_order(self):
        errs = []
        for m in (50, 100, 200):
            g, exact, n, left, right = manufactured(1.0, m, 0.2)
            phi = newton_poisson(n, left, 0.2, g, CFG, phi_far=right)
            errs.append(np.max(np.abs(phi - exact)))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(np.abs(orders - 2.0) < 0.2), orders

    def test_newton_warm_start_iterations(self):
        g, exact, n, left, right = manufactured(1.0, 200, 0.05)
        _, its = newton_poisson(n, left, 0.05, g, CFG, phi_far=right, return_iterations=True)
        assert its <= 6
        stats = SolverStats()
        _, its = newton_poisson(n * 1.001, left, 0.05, g, CFG, phi_far=right, guess=exact, stats=stats, return_iterations=True)
        assert its <= 3 and stats.newton_solves == 1

    def test_quasineutral_limit(self):
        eps = 1e-3
        g = build_grid(1.0, eps, 0.8, 2e-3)
        x = g.cell_centers
        n = 1.0 + 0.2 * np.sin(3 * x)
        phi = newton_poisson(n, 0.3, eps, g, CFG)
        away = x > 10 * eps * abs(math.log(eps))
        assert np.max(np.abs(phi[away] + np.log(n[away]))) < 1e-3

    def test_rejects_nonpositive_density(self):
        g = Grid1D.uniform(1.0, 4)
        with pytest.raises(NonPositiveDensity):
            newton_poisson(np.array([1.0, 0.0, 1.0, 1.0]), 0.0, 0.1, g, CFG)

    @given(a=st.floats(-2, 2), b=st.floats(-2, 2))
    def test_gradient_exact_on_quadratics(self, a, b):
        g = build_grid(1.0, 0.01, 0.8, 0.02)
        x = g.cell_centers
        f = a * x**2 + b * x
        d = centered_gradient(f, g, 0.0, a + b)
        assert np.allclose(d, 2 * a * x + b, atol=1e-9)


def uniform_state(grid, params):
    return PlasmaState.uniform(grid, params.n_ref, params.w_ref)


class TestSteps:
    def test_ep_fixed_point(self):
        p = Parameters(epsilon=0.01, n_ref=1.5, phi_c=0.0)
        g = build_grid(1.0, p.epsilon, 0.8, 0.01)
        s = uniform_state(g, p)
        out = ep_step(s, p, CFG)
        for a, b in ((out.n, s.n), (out.u3, s.u3), (out.phi, s.phi)):
            assert np.max(np.abs(a - b)) < 1e-13

    @pytest.mark.parametrize("regime, w", [(Regime.SUPERSONIC, -2.0), (Regime.INTERMEDIATE, -1.25)])
    def test_limit_fixed_point(self, regime, w):
        p = Parameters(w_ref=w)
        g = Grid1D.uniform(1.0, 100)
        s = uniform_state(g, p)
        out = euler_limit_step(s, p, regime, CFG)
        assert np.max(np.abs(out.n - s.n)) < 1e-14
        assert np.max(np.abs(out.u3 - s.u3)) < 1e-14

    def test_mass_telescoping(self):
        p = Parameters(epsilon=0.02, phi_c=0.05)
        g = build_grid(1.0, p.epsilon, 0.8, 0.01)
        s = SimpleWave(center=0.5, width=0.1).state(g, 0.0)
        s = s.replace(phi=newton_poisson(s.n, p.phi_b, p.epsilon, g, CFG))
        stats = SolverStats()
        out = s
        for _ in range(5):
            out = ep_step(out, p, CFG, stats=stats)
        mass = lambda st: float(np.sum(st.n * g.cell_widths))  # noqa: E731
        change = mass(out) - mass(s)
        assert change == pytest.approx(stats.far_mass_inflow - stats.wall_mass_outflow, abs=1e-14)
        assert stats.steps == 5 and stats.newton_iterations_max <= 6

    def test_poisson_residual_after_step(self):
        p = Parameters(epsilon=0.01, phi_c=0.05)
        g = build_grid(1.0, p.epsilon, 0.8, 0.01)
        s = uniform_state(g, p)
        out = ep_step(s.replace(phi=newton_poisson(s.n, p.phi_b, p.epsilon, g, CFG)), p, CFG)
        r = poisson_residual(out.phi, out.n, p.phi_b, -math.log(out.n[-1]), p.epsilon, g)
        assert np.max(np.abs(r)) < CFG.newton_tol

    def test_bohm_lost(self):
        p = Parameters(w_ref=-0.5)
        g = Grid1D.uniform(1.0, 10)
        with pytest.raises(BohmLost):
            ep_step(uniform_state(g, p), p, CFG)

    def test_regime_mismatch(self):
        p = Parameters(w_ref=-1.25)
        g = Grid1D.uniform(1.0, 10)
        with pytest.raises(RegimeMismatch):
            euler_limit_step(uniform_state(g, p), p, Regime.SUPERSONIC, CFG)
        with pytest.raises(ConfigError):
            euler_limit_step(uniform_state(g, p), p, Regime.SUBSONIC_OR_CHARACTERISTIC, CFG)

    def test_stable_dt(self):
        p = Parameters()
        g = Grid1D.uniform(1.0, 100)
        assert stable_dt(uniform_state(g, p), p, 0.4) == pytest.approx(0.4 * 0.01 / (2 + math.sqrt(2)))


class TestRun:
    def test_zero_horizon(self):
        p = Parameters()
        g = Grid1D.uniform(1.0, 20)
        s = uniform_state(g, p)
        traj = run(s, p, CFG, 0.0, model="limit")
        assert traj.final.time == 0.0 and np.array_equal(traj.final.n, s.n)

    def test_horizon_checked(self):
        p = Parameters(final_time=0.05)
        g = Grid1D.uniform(1.0, 20)
        with pytest.raises(ConfigError):
            run(uniform_state(g, p), p, CFG, 0.1)
        with pytest.raises(ConfigError):
            run(uniform_state(g, p), p, CFG, 0.01, model="other")

    def test_observers_and_deterministic_csv(self, tmp_path):
        p = Parameters(epsilon=0.02, phi_c=0.05, final_time=0.02)
        g = build_grid(1.0, p.epsilon, 0.8, 0.01)
        s = SimpleWave(center=0.5, width=0.1).state(g, 0.0)
        seen = []
        paths = []
        for k in range(2):
            traj = run(s, p, CFG, 0.02, [lambda st: seen.append(st.time)], observe_every=0.01, keep_snapshots=True)
            paths.append(tmp_path / f"run{k}.csv")
            traj.write_csv(paths[-1])
        assert seen[:3] == pytest.approx([0.0, 0.01, 0.02])
        assert paths[0].read_bytes() == paths[1].read_bytes()
        header = paths[0].read_text().splitlines()[0]
        assert header == "t,x3,n,u1,u2,u3,phi"

    def test_fixed_dt_respects_cfl(self):
        p = Parameters(final_time=0.01)
        g = Grid1D.uniform(1.0, 100)
        with pytest.raises(ConfigError):
            run(uniform_state(g, p), p, CFG, 0.01, model="limit", fixed_dt=0.01)

    def test_intermediate_wall_relaxation(self):
        p = Parameters(w_ref=-1.25, phi_c=0.05)
        g = Grid1D.uniform(1.0, 400)
        s = uniform_state(g, p)
        traj = run(s, p, CFG, 0.1, model="limit", regime=Regime.INTERMEDIATE)
        target = math.exp(-p.phi_b)
        assert abs(traj.final.n[0] - target) < 0.01 * abs(s.n[0] - target) + 1e-3
        assert abs(traj.final.n[0] - target) < abs(s.n[0] - target)

    def test_limit_simple_wave_convergence(self):
        wave = SimpleWave(center=0.5, width=0.1)
        p = Parameters(final_time=0.05)
        errs = []
        for m in (200, 400, 800):
            g = Grid1D.uniform(1.0, m)
            traj = run(wave.state(g, 0.0), p, CFG, 0.05, model="limit")
            exact = wave.fields(0.05, g.cell_centers)[0]
            errs.append(math.sqrt(np.sum((traj.final.n - exact) ** 2) / m))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders > 1.3), orders

    def test_time_step_self_convergence(self):
        wave = SimpleWave(center=0.5, width=0.1)
        p = Parameters(final_time=0.02)
        g = Grid1D.uniform(1.0, 400)
        s = wave.state(g, 0.0)
        base = stable_dt(s, p, 0.2)
        finals = [run(s, p, CFG, 0.02, model="limit", fixed_dt=base / k).final.n for k in (1, 2, 4)]
        d1 = np.linalg.norm(finals[0] - finals[1])
        d2 = np.linalg.norm(finals[1] - finals[2])
        assert d1 / d2 > 3.0

    def test_acoustic_speed_approaches_limit(self):
        # small pulse on the u + c family; its centroid moves at about u + sqrt(Ti + 1)
        wave = SimpleWave(amplitude=1e-3, center=0.6, width=0.08)
        T = 0.1
        shifts = []
        for eps in (0.02, 0.005):
            p = Parameters(epsilon=eps, phi_c=0.0)
            g = Grid1D.uniform(1.2, 600)
            traj = run(wave.state(g, 0.0), p, CFG, T)
            pert = traj.final.n - 1.0
            shifts.append(np.sum(g.cell_centers * pert) / np.sum(pert) - 0.6)
        expected = (-2.0 + math.sqrt(2.0)) * T
        assert abs(shifts[1] - expected) < abs(shifts[0] - expected) + 1e-6
        assert shifts[1] == pytest.approx(expected, rel=0.05)
