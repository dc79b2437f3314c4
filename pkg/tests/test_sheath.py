import dataclasses
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize

from epsheath.errors import (
    BohmViolation,
    CoercivityLoss,
    DomainError,
    InadmissibleBoundaryValue,
    OutOfRange,
    QuadratureTail,
)
from epsheath.sheath import (
    LayerContext,
    RegularTraces,
    admissible_window,
    assemble_F6,
    build_layer_fields,
    decay_rate,
    eval_dX,
    eval_F,
    eval_V,
    eval_X,
    first_order_layer,
    invert_F,
    layer_sources,
    potential_energy,
    solve_phi0,
    solve_phi1,
)


def mp_F(Ti, u, N):
    """High-precision oracle for the algebraic map."""
    with mpmath.workdps(40):
        Ti, u, N = mpmath.mpf(Ti), mpmath.mpf(u), mpmath.mpf(N)
        return float(u**2 / (2 * N**2) + Ti * mpmath.log(N) - u**2 / 2)


def fd6_derivative(f, h):
    """Sixth-order central first derivative at interior nodes [3:-3]."""
    c = np.array([-1, 9, -45, 0, 45, -9, 1]) / 60.0
    out = np.zeros(f.size - 6)
    for k, ck in enumerate(c):
        out += ck * f[k : k + f.size - 6]
    return out / h


ctx_strategy = st.builds(
    lambda Ti, excess, n0: LayerContext(n0, -math.sqrt(Ti + 1 + excess), Ti, 0.0),
    Ti=st.floats(0.2, 3.0),
    excess=st.floats(0.2, 4.0),
    n0=st.floats(0.3, 3.0),
)


class TestContext:
    def test_bohm_required(self):
        with pytest.raises(BohmViolation):
            LayerContext(1.0, -1.2, 1.0)
        with pytest.raises(BohmViolation):
            LayerContext(1.0, 2.0, 1.0)

    def test_domain(self):
        with pytest.raises(DomainError):
            LayerContext(0.0, -2.0, 1.0)
        with pytest.raises(DomainError):
            LayerContext(1.0, -2.0, -1.0)

    def test_from_traces_closes_dirichlet(self):
        ctx = LayerContext.from_traces(2.0, -2.0, 1.0, 0.3)
        assert ctx.phi0_boundary_value - math.log(2.0) == pytest.approx(0.3)

    def test_monotonicity_interval_contains_one(self, canonical_ctx):
        assert canonical_ctx.N_F == pytest.approx(2.0)
        assert canonical_ctx.Phi_F == pytest.approx(mp_F(1, -2, 2), abs=1e-14)


class TestMapF:
    @pytest.mark.parametrize("N, expected", [(1.0, 0.0), (2.0, -0.80685), (0.5, 5.30685)])
    def test_examples(self, canonical_ctx, N, expected):
        assert eval_F(canonical_ctx, N) == pytest.approx(expected, abs=5e-6)

    @pytest.mark.parametrize("N", [0.05, 0.5, 0.999, 1.0, 1.001, 1.7, 2.0, 3.5])
    def test_against_high_precision(self, canonical_ctx, N):
        assert eval_F(canonical_ctx, N) == pytest.approx(mp_F(1, -2, N), rel=1e-13, abs=1e-15)

    def test_inverse_examples(self, canonical_ctx):
        assert invert_F(canonical_ctx, 0.0) == 1.0
        target = mp_F(1, -2, 0.5)
        assert invert_F(canonical_ctx, target) == pytest.approx(0.5, rel=1e-12)

    def test_inverse_out_of_range(self, canonical_ctx):
        with pytest.raises(OutOfRange):
            invert_F(canonical_ctx, canonical_ctx.Phi_F)
        with pytest.raises(OutOfRange):
            invert_F(canonical_ctx, canonical_ctx.Phi_F - 0.1)

    def test_inverse_against_bracketing_oracle(self, canonical_ctx):
        for phi in (-0.5, -0.1, 0.2, 1.0, 3.0):
            ref = optimize.brentq(lambda N: mp_F(1, -2, N) - phi, 1e-6, 2.0, xtol=1e-15)
            assert invert_F(canonical_ctx, phi) == pytest.approx(ref, rel=1e-11)

    def test_inverse_decreasing(self, canonical_ctx):
        phi = np.linspace(canonical_ctx.Phi_F + 1e-3, 10.0, 100)
        assert np.all(np.diff(invert_F(canonical_ctx, phi)) < 0)

    @given(ctx=ctx_strategy, frac=st.floats(1e-3, 1.0), top=st.floats(0.0, 20.0))
    def test_round_trip(self, ctx, frac, top):
        phi = ctx.Phi_F * (1 - frac) if frac < 1.0 else top
        N = invert_F(ctx, phi)
        assert 0 < N < ctx.N_F
        assert eval_F(ctx, N) == pytest.approx(phi, abs=1e-10)


class TestLayerForce:
    def test_fixed_point(self, canonical_ctx):
        assert eval_X(canonical_ctx, 0.0) == 0.0

    def test_first_order_example(self, canonical_ctx):
        # linearization of the inverse: 1 - Phi / (u^2 - Ti)
        val = eval_X(canonical_ctx, 0.1, normalized=True)
        assert val == pytest.approx(1 - 0.1 / 3 - math.exp(-0.1), abs=2e-3)
        exact = optimize.brentq(lambda N: mp_F(1, -2, N) - 0.1, 0.5, 2.0, xtol=1e-15) - math.exp(-0.1)
        assert val == pytest.approx(exact, rel=1e-10)

    def test_slope_at_zero(self, canonical_ctx):
        h = 1e-4
        fd = (eval_X(canonical_ctx, h, True) - eval_X(canonical_ctx, -h, True)) / (2 * h)
        assert fd == pytest.approx(2.0 / 3.0, abs=1e-7)
        assert eval_dX(canonical_ctx, 0.0, True) == pytest.approx(2.0 / 3.0, rel=1e-14)

    @pytest.mark.parametrize("n0", [0.5, 1.0, 2.5])
    def test_prefactor(self, n0):
        ctx = LayerContext(n0, -2.0, 1.0)
        assert eval_X(ctx, 0.3) == pytest.approx(n0 * eval_X(ctx, 0.3, normalized=True), rel=1e-14)
        assert ctx.decay == pytest.approx(math.sqrt(n0) * math.sqrt(2 / 3), rel=1e-14)


class TestPotential:
    def test_zero(self, canonical_ctx):
        assert eval_V(canonical_ctx, 0.0) == 0.0
        assert potential_energy(canonical_ctx, 0.0) == 0.0

    def test_derivatives_at_zero(self, canonical_ctx):
        # Richardson-extrapolated second difference
        def d2(h):
            return 2 * (potential_energy(canonical_ctx, h, True) + potential_energy(canonical_ctx, -h, True)) / (
                2 * h * h
            )

        rich = (4 * d2(5e-3) - d2(1e-2)) / 3
        assert rich == pytest.approx(2.0 / 3.0, abs=1e-6)
        h = 1e-4
        d1 = (potential_energy(canonical_ctx, h) - potential_energy(canonical_ctx, -h)) / (2 * h)
        assert abs(d1) < 1e-6

    @pytest.mark.parametrize("phi", [-0.4, -0.05, 1e-5, 0.1, 0.7, 2.0])
    def test_closed_form_matches_quadrature(self, canonical_ctx, phi):
        assert potential_energy(canonical_ctx, phi) == pytest.approx(eval_V(canonical_ctx, phi), rel=1e-9, abs=1e-15)

    def test_positive_on_orbit_interval(self, canonical_ctx):
        lo, _ = admissible_window(canonical_ctx)
        phi = np.concatenate([np.linspace(lo, -1e-6, 200), np.linspace(1e-6, 1.0, 200)])
        assert np.all(potential_energy(canonical_ctx, phi) > 0)
        assert all(eval_V(canonical_ctx, p) > 0 for p in phi[::20])

    def test_out_of_range(self, canonical_ctx):
        with pytest.raises(OutOfRange):
            eval_V(canonical_ctx, canonical_ctx.Phi_F - 0.01)


class TestDecayRate:
    @pytest.mark.parametrize(
        "Ti, u, expected",
        [(1.0, -2.0, 0.816497), (1.0, -math.sqrt(2.0), 0.0), (1.0, -3.0, 0.935414)],
    )
    def test_examples(self, Ti, u, expected):
        assert decay_rate(Ti, u) == pytest.approx(expected, abs=1e-6)

    def test_subsonic_rejected(self):
        with pytest.raises(BohmViolation):
            decay_rate(1.0, -1.2)

    @given(ctx=ctx_strategy)
    def test_matches_slope_of_force(self, ctx):
        assert ctx.gamma**2 == pytest.approx(eval_dX(ctx, 0.0, normalized=True), rel=1e-12)


class TestWindow:
    def test_canonical(self, canonical_ctx):
        lo, hi = admissible_window(canonical_ctx)
        assert lo < 0 < hi
        # independent sign scan with centred differences of X
        phi = np.linspace(lo, hi, 400)
        h = 1e-6
        fd = (eval_X(canonical_ctx, phi + h) - eval_X(canonical_ctx, phi - h)) / (2 * h)
        assert np.all(fd >= 1e-3 - 1e-6)

    def test_shrinks_toward_marginal_bohm(self):
        widths = []
        for excess in (1.0, 0.1, 1e-2, 1e-3):
            lo, hi = admissible_window(LayerContext(1.0, -math.sqrt(2.0 + excess), 1.0))
            widths.append(hi - lo)
        assert all(a > b for a, b in zip(widths, widths[1:]))
        assert widths[-1] < 0.05 * widths[0]


class TestSolvePhi0:
    def test_zero_profile(self, canonical_ctx):
        prof = solve_phi0(canonical_ctx.with_boundary_value(0.0), 50.0)
        assert not np.any(prof.Phi0) and not np.any(prof.N0) and not np.any(prof.U03)

    def test_canonical_profile(self, canonical_profile, canonical_ctx):
        p = canonical_profile
        assert p.Phi0[0] == 0.1
        assert np.all(np.diff(p.Phi0) < 0)
        assert abs(p.Phi0[-1]) < 1e-8
        assert p.measured_decay_rate == pytest.approx(0.8165, rel=0.03)
        assert p.gamma_formula == pytest.approx(math.sqrt(2 / 3), rel=1e-14)

    def test_hamiltonian_identity(self, canonical_profile):
        p = canonical_profile
        dphi = fd6_derivative(p.Phi0, p.dz)
        V = np.array([eval_V(p.ctx, v) for v in p.Phi0[3:-3:25]])
        lhs = dphi[::25] ** 2
        keep = np.abs(p.Phi0[3:-3:25]) > 1e-7
        assert np.allclose(lhs[keep], 2 * V[keep], rtol=1e-8, atol=0)
        # the returned derivative obeys the identity at every node
        assert np.allclose(p.dPhi0**2, 2 * potential_energy(p.ctx, p.Phi0), rtol=1e-8, atol=1e-30)

    @pytest.mark.parametrize("phi0", [-0.1, 0.05, 0.3])
    def test_negative_and_other_values(self, canonical_ctx, phi0):
        ctx = canonical_ctx.with_boundary_value(phi0)
        p = solve_phi0(ctx, 40.0 / ctx.decay)
        d = np.diff(p.Phi0)
        assert np.all(d > 0) if phi0 < 0 else np.all(d < 0)
        assert p.measured_decay_rate == pytest.approx(ctx.decay, rel=0.03)

    @pytest.mark.parametrize("n0", [0.5, 2.0])
    def test_prefactored_decay(self, n0):
        ctx = LayerContext(n0, -2.0, 1.0, 0.1)
        p = solve_phi0(ctx, 40.0 / ctx.decay)
        assert p.measured_decay_rate == pytest.approx(math.sqrt(n0) * math.sqrt(2 / 3), rel=0.03)

    def test_amplitude_scaling(self, canonical_ctx):
        # |Phi0| <= C delta exp(-gamma z) with C independent of delta
        consts = []
        for delta in (0.01, 0.05, 0.1):
            p = solve_phi0(canonical_ctx.with_boundary_value(delta), 50.0)
            consts.append(np.max(np.abs(p.Phi0) / (delta * np.exp(-p.gamma_formula * p.z))))
        assert max(consts) < 2.0 and min(consts) >= 1.0 - 1e-12

    def test_inadmissible(self, canonical_ctx):
        with pytest.raises(InadmissibleBoundaryValue):
            solve_phi0(canonical_ctx.with_boundary_value(canonical_ctx.Phi_F - 0.1), 50.0)
        _, hi = admissible_window(canonical_ctx)
        with pytest.raises(InadmissibleBoundaryValue):
            solve_phi0(canonical_ctx.with_boundary_value(hi + 0.1), 50.0)

    def test_short_domain(self, canonical_ctx):
        with pytest.raises(QuadratureTail):
            solve_phi0(canonical_ctx, 10.0)

    def test_csv(self, canonical_profile, tmp_path):
        path = tmp_path / "profile.csv"
        canonical_profile.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "z,Phi0,N0,U03,Phi1"
        assert len(lines) == canonical_profile.z.size + 1
        assert float(lines[1].split(",")[1]) == 0.1


class TestLayerFields:
    def test_zero(self, canonical_ctx):
        N0, U0 = build_layer_fields(canonical_ctx, np.zeros(5))
        assert not np.any(N0) and not np.any(U0)

    def test_example(self, canonical_ctx):
        N0, _ = build_layer_fields(canonical_ctx, np.array([0.1]))
        assert N0[0] == pytest.approx(-0.0333, abs=2e-3)

    @given(ctx=ctx_strategy, scale=st.floats(-1.0, 1.0))
    def test_flux_identity(self, ctx, scale):
        lo, hi = admissible_window(ctx)
        phi = np.linspace(0, hi if scale > 0 else lo, 50) * abs(scale)
        N0, U0 = build_layer_fields(ctx, phi)
        a, w = ctx.n0_trace, ctx.u3_trace
        assert np.allclose((a + N0) * (w + U0), a * w, rtol=1e-10, atol=0)


class TestSolvePhi1:
    def test_trivial(self, canonical_profile):
        sol = solve_phi1(canonical_profile.ctx, canonical_profile, np.zeros_like(canonical_profile.z), 0.0)
        assert not np.any(sol)

    def test_manufactured_second_order(self, canonical_ctx):
        zmax = 40.0 / canonical_ctx.decay
        errors = []
        for dz in (0.04, 0.02, 0.01):
            p = solve_phi0(canonical_ctx, zmax, dz=dz)
            z = p.z
            exact = (1 + z) * np.exp(-z) * np.cos(z)
            d2 = _second_derivative(z)
            F6 = d2 - eval_dX(canonical_ctx, p.Phi0) * exact
            sol = solve_phi1(canonical_ctx, p, F6, 1.0)
            errors.append(np.max(np.abs(sol - exact)))
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all(np.abs(orders - 2.0) < 0.2), orders

    def test_coercivity_loss(self, canonical_ctx):
        _, hi = admissible_window(canonical_ctx)
        z = np.linspace(0, 60, 3001)
        forced = (hi + 0.2) * np.exp(-z)
        with pytest.raises(CoercivityLoss):
            solve_phi1(canonical_ctx, forced, np.zeros_like(z), 0.0, z=z)

    def test_grid_checks(self, canonical_profile):
        with pytest.raises(ValueError):
            solve_phi1(canonical_profile.ctx, canonical_profile, np.zeros_like(canonical_profile.z), 0.0, z_max=1.0)


def _second_derivative(z):
    # d2/dz2 of (1 + z) e^{-z} cos z
    return 2.0 * np.exp(-z) * (z * np.sin(z) - np.cos(z))


class TestSources:
    def test_no_layer_no_correctors(self, canonical_ctx):
        p = solve_phi0(canonical_ctx.with_boundary_value(0.0), 50.0)
        traces = RegularTraces(dn0=0.3, du0=-0.2, dphi0=0.1)
        assert not np.any(assemble_F6(p, traces))

    def test_frozen_mass_source(self, canonical_profile):
        traces = RegularTraces(dn0=0.3, du0=-0.2)
        src = layer_sources(canonical_profile, traces)
        z, N0, U0 = canonical_profile.z, canonical_profile.N0, canonical_profile.U03
        # F2 is minus the antiderivative of F1, i.e. the bracket itself
        expected = -(z * 0.3 * U0 + z * -0.2 * N0)
        assert np.allclose(src.F2, expected, atol=1e-15)
        assert not np.any(src.dN0dt)

    def test_centred_time_derivative(self, canonical_ctx):
        dt = 1e-3
        profs = [solve_phi0(canonical_ctx.with_boundary_value(v), 50.0) for v in (0.1 - 1e-4, 0.1, 0.1 + 1e-4)]
        src = layer_sources(profs[1], RegularTraces(), profs[0], profs[2], dt)
        assert np.allclose(src.dN0dt, (profs[2].N0 - profs[0].N0) / (2 * dt))
        with pytest.raises(ValueError):
            layer_sources(profs[1], RegularTraces(), profs[0], profs[2], None)

    def test_tail(self, canonical_ctx):
        p = solve_phi0(canonical_ctx, 40.0 / canonical_ctx.decay)
        # first-order neutrality of the regular part: phi1 = -n1 / n0
        traces = RegularTraces(n1=0.1, u13=-0.05, phi1=-0.1, dn0=0.3, du0=-0.2, dphi0=0.1)
        F6 = assemble_F6(p, traces)
        assert abs(F6[-1]) < 1e-8

    def test_short_tail_detected(self, canonical_profile):
        p = canonical_profile
        cut = slice(0, 400)
        short = dataclasses.replace(p, z=p.z[cut], Phi0=p.Phi0[cut], dPhi0=p.dPhi0[cut], N0=p.N0[cut], U03=p.U03[cut])
        with pytest.raises(QuadratureTail):
            layer_sources(short, RegularTraces(dn0=0.3))

    def test_first_order_layer_closes_dirichlet(self, canonical_profile):
        traces = RegularTraces(n1=0.1, u13=-0.05, phi1=-0.1, dn0=0.3, du0=-0.2, dphi0=0.1)
        p = first_order_layer(canonical_profile, traces)
        assert p.Phi1[0] == pytest.approx(0.1, abs=1e-15)
        assert abs(p.Phi1[-1]) < 1e-12
        assert np.max(np.abs(p.N1[-50:])) < 1e-8
        assert np.max(np.abs(p.U13[-50:])) < 1e-8
