import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dispersion_lab.errors import BackwardHeat, MaxIter, NoContraction, NonFinite
from dispersion_lab.field import field_from_modes, random_band_field, sobolev_norm
from dispersion_lab.multipliers import DispersionSymbol
from dispersion_lab.nonlinearity import Nonlinearity, p_functional, parse_nonlinearity
from dispersion_lab.solver import (
    Equation,
    bona_smith,
    config_hash,
    convergence_family,
    etd_coefficients,
    evolve,
    linear_propagator,
    mean_linearization,
    picard_solve,
    run_metadata,
    smoothing_metrics,
    tail_energy,
    time_reversed,
    trajectory_csv,
)

from conftest import KDV5, N1, POROUS3, assert_conjugate_symmetric

QUINTIC = DispersionSymbol.pure(2)
ZERO = Nonlinearity(())


def richardson(eq, phi, T, dts, s=4):
    u = [evolve(eq, phi, T, dt, stride=10**9).final for dt in dts]
    return math.log2(sobolev_norm(u[0] - u[1], s) / sobolev_norm(u[1] - u[2], s))


class TestEquation:
    def test_eps_range(self):
        for bad in (-1e-9, 1.5, float("nan")):
            with pytest.raises(ValueError):
                Equation(QUINTIC, ZERO, bad)

    def test_time_reversed(self):
        eq = Equation(DispersionSymbol(2, (1, 2, 3)), parse_nonlinearity(KDV5), 0.0)
        rev = time_reversed(eq)
        assert rev.sym.gammas == tuple(-g for g in eq.sym.gammas)
        assert rev.N == eq.N.scaled(-1)
        assert time_reversed(rev) == eq


class TestLinearPropagator:
    f = random_band_field(0, 3.0, 1.0, 32, mean_value=0.4)

    def test_identity(self):
        assert linear_propagator(Equation(QUINTIC, ZERO, 0.3), 0.0, self.f) == self.f

    def test_isometry(self):
        g = linear_propagator(Equation(QUINTIC, ZERO, 0.0), 0.77, self.f)
        np.testing.assert_allclose(np.abs(g.coeffs), np.abs(self.f.coeffs), rtol=1e-14)
        for s in (0, 4, 8):
            assert sobolev_norm(g, s) == pytest.approx(sobolev_norm(self.f, s), rel=1e-12)

    def test_heat_factor(self):
        g = linear_propagator(Equation(QUINTIC, ZERO, 1.0), 0.1, field_from_modes([(2, 1.0)], 8))
        assert abs(g.mode(2)) == pytest.approx(math.exp(-1.6), rel=1e-14)

    def test_dissipation_direction(self):
        g = linear_propagator(Equation(QUINTIC, ZERO, 0.2), 0.05, self.f)
        assert np.all(np.abs(g.coeffs) <= np.abs(self.f.coeffs))

    def test_phase_convention(self):
        # u_t + u_xxxxx = 0 moves cos x to cos(x - t)
        g = linear_propagator(Equation(QUINTIC, ZERO, 0.0), 0.3, field_from_modes([(1, 0.5)], 8))
        assert g.mode(1) == pytest.approx(0.5 * np.exp(-0.3j), abs=1e-15)

    def test_backward_heat(self):
        with pytest.raises(BackwardHeat):
            linear_propagator(Equation(QUINTIC, ZERO, 0.1), -0.1, self.f)
        linear_propagator(Equation(QUINTIC, ZERO, 0.0), -0.1, self.f)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0, 1), st.floats(0, 2), st.floats(0, 2))
    def test_semigroup(self, eps, t1, t2):
        eq = Equation(QUINTIC, ZERO, eps)
        a = linear_propagator(eq, t1, linear_propagator(eq, t2, self.f))
        b = linear_propagator(eq, t1 + t2, self.f)
        np.testing.assert_allclose(a.coeffs, b.coeffs, atol=1e-13)


class TestETDCoefficients:
    @staticmethod
    def series(z):
        # Taylor series of the four weight functions
        fact = [math.factorial(n) for n in range(50)]
        q = sum((z / 2) ** n / fact[n + 1] for n in range(40)) / 2
        f1 = sum(z**n * (n + 1) ** 2 / fact[n + 3] for n in range(40))
        f2 = sum(z**n * (n + 1) / fact[n + 3] for n in range(40))
        f3 = sum(z**n * (1 - n) / fact[n + 3] for n in range(40))
        return q, f1, f2, f3

    @pytest.mark.parametrize("z", [1e-9, -3e-4j, 0.2 + 0.1j, 0.45j, -0.49, 0.55j, 1 - 1j, -2.0])
    def test_against_series(self, z):
        for got, want in zip(etd_coefficients(np.array([z])), self.series(complex(z))):
            assert abs(got[0] - want) <= 1e-13 * abs(want)

    def test_large_z_closed_form(self):
        z = np.array([-50.0, 30j, -1e4 + 5e5j])
        Q, f1, f2, f3 = etd_coefficients(z)
        np.testing.assert_allclose(Q, (np.exp(z / 2) - 1) / z, rtol=1e-14)
        np.testing.assert_allclose(f2, (2 + z + np.exp(z) * (z - 2)) / z**3, rtol=1e-14)

    def test_real_axis_stays_real(self):
        for c in etd_coefficients(np.array([-0.3, 0.0, 0.2])):
            assert np.all(c.imag == 0)


class TestMeanLinearization:
    def test_porous(self):
        # 3 u^2 u_xx + 6 u u_x^2 about u = 2: 12 (ik)^2, the u_x^2 term is quadratic
        A = mean_linearization(parse_nonlinearity(POROUS3), 2.0, 4)
        np.testing.assert_allclose(A, -12.0 * np.arange(5) ** 2)

    def test_pure_power(self):
        A = mean_linearization(parse_nonlinearity("u0^3"), 2.0, 2)
        np.testing.assert_allclose(A, [12.0, 12.0, 12.0])

    def test_zero_mean_kdv(self):
        assert not np.any(mean_linearization(parse_nonlinearity(KDV5), 0.0, 8))

    def test_does_not_change_solution(self):
        # the two splittings differ only by time-discretization error
        eq = Equation(QUINTIC, parse_nonlinearity(KDV5), 0.0)
        phi = random_band_field(2, 8.0, 0.05, 16, mean_value=0.3)

        def gap(dt):
            a = evolve(eq, phi, 0.002, dt, stride=10**9).final
            b = evolve(eq, phi, 0.002, dt, stride=10**9, linearize=False).final
            return sobolev_norm(a - b, 4)

        coarse, fine = gap(1e-5), gap(1e-6)
        assert fine < 1e-7 and fine < coarse / 10


class TestEvolve:
    def test_single_mode(self):
        eq = Equation(QUINTIC, ZERO, 0.0)
        tr = evolve(eq, field_from_modes([(1, 0.5)], 8), 0.3, 1e-2)
        x = 2 * np.pi * np.arange(64) / 64
        for t, u in tr.frames:
            assert abs(u.mode(1)) == pytest.approx(0.5, rel=1e-14)
            np.testing.assert_allclose(u.values(64), np.cos(x - t), atol=1e-13)

    def test_frames_and_diagnostics(self):
        eq = Equation(QUINTIC, parse_nonlinearity(KDV5), 0.0)
        tr = evolve(eq, random_band_field(1, 8.0, 0.05, 16), 0.01, 1e-3, stride=3)
        assert np.allclose(tr.times, [0, 0.003, 0.006, 0.009, 0.01])
        assert tr.times[-1] == 0.01
        assert np.all(np.diff(tr.times) > 0)
        assert set(tr.diagnostics[0]) == {"sob_4", "sob_8", "p_value", "mean", "tail_energy"}
        for _, u in tr.frames:
            assert u.K_grid == 16
            assert_conjugate_symmetric(u)

    def test_mean_conservation(self):
        eq = Equation(QUINTIC, parse_nonlinearity(KDV5), 0.0)
        phi = field_from_modes([(0, 0.2), (1, 0.005)], 32)
        tr = evolve(eq, phi, 1.0, 1e-3, stride=100)
        drift = max(abs(d["mean"] - 0.2) for d in tr.diagnostics)
        assert drift <= 1e-10

    def test_mean_evolves_when_not_conserved(self):
        eq = Equation(QUINTIC, parse_nonlinearity("u0^2"), 0.0)
        tr = evolve(eq, field_from_modes([(0, 0.1), (1, 0.1)], 8), 0.1, 1e-3)
        assert tr.diagnostics[-1]["mean"] > 0.1

    def test_richardson_order(self):
        eq = Equation(QUINTIC, parse_nonlinearity(KDV5), 0.0)
        phi = field_from_modes([(1, 0.005)], 64)
        assert richardson(eq, phi, 0.1, [0.1 / 64, 0.1 / 128, 0.1 / 256]) >= 3.5
        assert richardson(eq, phi, 0.1, [0.1 / 64, 0.1 / 128, 0.1 / 256], s=0) >= 3.5

    def test_richardson_order_regularized(self):
        eq = Equation(QUINTIC, parse_nonlinearity(KDV5), 0.1)
        phi = random_band_field(3, 6.0, 0.5, 64)
        assert richardson(eq, phi, 0.1, [0.1 / 32, 0.1 / 64, 0.1 / 128]) >= 3.5

    def test_ifrk4_agrees(self):
        eq = Equation(QUINTIC, parse_nonlinearity(KDV5), 0.0)
        phi = field_from_modes([(1, 0.005)], 32)
        a = evolve(eq, phi, 0.05, 0.05 / 256, scheme="IFRK4", stride=10**9).final
        b = evolve(eq, phi, 0.05, 0.05 / 256, stride=10**9).final
        assert sobolev_norm(a - b, 4) < 1e-10

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            evolve(Equation(QUINTIC, ZERO), field_from_modes([(1, 0.5)], 8), 0.1, 1e-2, scheme="RK45")

    def test_retry_on_nonfinite(self):
        # explicit k^3 terms make IFRK4 unstable above dt ~ 5e-4 here
        eq = Equation(QUINTIC, parse_nonlinearity(KDV5), 0.0)
        phi = random_band_field(3, 6.0, 0.05, 32)
        tr = evolve(eq, phi, 0.1, 0.1 / 64, scheme="IFRK4", stride=10**9, blowup=math.inf)
        assert tr.meta["retries"] == 2 and tr.meta["dt"] == 0.1 / 256
        assert np.all(np.isfinite(tr.final.coeffs))

    def test_nonfinite_after_retries(self):
        eq = Equation(QUINTIC, parse_nonlinearity(KDV5), 0.0)
        with pytest.raises(NonFinite):
            evolve(eq, random_band_field(3, 6.0, 0.5, 64), 0.1, 4e-3, scheme="IFRK4", blowup=math.inf)

    def test_blowup_stops_run(self):
        eq = Equation(QUINTIC, parse_nonlinearity(KDV5), 0.0)
        tr = evolve(eq, random_band_field(3, 6.0, 0.5, 16), 0.1, 1e-3, blowup=0.01)
        assert tr.blew_up and tr.status == "BlowUpSuspected"
        assert tr.times[-1] < 0.1 and sobolev_norm(tr.final, 4) > 0.01

    def test_backward_heat_rejected(self):
        with pytest.raises(BackwardHeat):
            evolve(Equation(QUINTIC, ZERO, 0.1), field_from_modes([(1, 0.5)], 8), -0.1, 1e-2)

    def test_backward_is_reversed_forward(self):
        eq = Equation(DispersionSymbol(2, (1, 2, 0)), parse_nonlinearity(KDV5), 0.0)
        phi = random_band_field(5, 8.0, 0.05, 16)
        back = evolve(eq, phi, -0.01, 1e-4, stride=10)
        fwd = evolve(time_reversed(eq), phi, 0.01, 1e-4, stride=10)
        assert np.allclose(back.times, -fwd.times[::-1])
        assert back.frames[-1][1] == phi
        assert back.frames[0][1] == fwd.final

    def test_forward_then_backward_returns(self):
        eq = Equation(QUINTIC, parse_nonlinearity(KDV5), 0.0)
        phi = field_from_modes([(1, 0.005), (2, 0.002j)], 32)
        uT = evolve(eq, phi, 0.02, 1e-4, stride=10**9).final
        back = evolve(eq, uT, -0.02, 1e-4, stride=10**9)
        assert sobolev_norm(back.frames[0][1] - phi, 4) < 1e-12


class TestPicard:
    def test_linear_one_iteration(self):
        eq = Equation(QUINTIC, ZERO, 0.5)
        phi = random_band_field(0, 6.0, 0.1, 16)
        tr = picard_solve(eq, phi, 0.01)
        assert tr.meta["iterations"] == 1
        np.testing.assert_allclose(tr.final.coeffs, linear_propagator(eq, 0.01, phi).coeffs, rtol=1e-14, atol=0)

    def test_matches_etdrk4(self):
        eq = Equation(QUINTIC, parse_nonlinearity(N1), 0.5)
        phi = random_band_field(4, 6.0, 1e-3, 32)
        pic = picard_solve(eq, phi, 0.01, n_quad=65)
        etd = evolve(eq, phi, 0.01, 0.01 / 64)
        sup = max(sobolev_norm(a - b, 4) for (_, a), (_, b) in zip(pic.frames, etd.frames))
        assert sup <= 1e-6
        assert 0 <= pic.meta["contraction_ratio"] < 1

    def test_contraction_improves_for_shorter_time(self):
        eq = Equation(QUINTIC, parse_nonlinearity(N1), 0.5)
        phi = random_band_field(4, 6.0, 1.0, 32)
        r = [np.mean(picard_solve(eq, phi, T, n_quad=33).meta["ratios"][:3]) for T in (0.02, 0.01, 0.005)]
        assert r[0] > r[2]

    def test_no_contraction(self):
        eq = Equation(QUINTIC, parse_nonlinearity(N1), 0.5)
        with pytest.raises(NoContraction):
            picard_solve(eq, random_band_field(1, 6.0, 10.0, 32), 0.5, n_quad=33)

    def test_max_iter(self):
        eq = Equation(QUINTIC, parse_nonlinearity(N1), 0.5)
        with pytest.raises(MaxIter):
            picard_solve(eq, random_band_field(4, 6.0, 0.1, 16), 0.01, max_iter=2)

    def test_needs_eps(self):
        with pytest.raises(ValueError):
            picard_solve(Equation(QUINTIC, ZERO, 0.0), field_from_modes([(1, 0.5)], 8), 0.01)


class TestBonaSmith:
    f = random_band_field(6, 5.0, 1.0, 64, mean_value=0.2)

    def test_single_mode(self):
        g = bona_smith(field_from_modes([(3, 0.5)], 8), 0.01, 4.0)
        assert g.mode(3) == pytest.approx(0.5 * math.exp(-0.01 * 10.0**2), rel=1e-15)

    def test_limit_monotone(self):
        # H^8 data measured in H^5: the defect decays at least like eta^(3/5)
        f = random_band_field(6, 8.0, 1.0, 64)
        etas = [2.0**-n for n in range(1, 13)]
        d = [sobolev_norm(bona_smith(f, e, 5.0) - f, 5.0) for e in etas]
        assert all(b < a for a, b in zip(d, d[1:]))
        assert d[-1] <= 2 * d[0] * (etas[-1] / etas[0]) ** 0.6

    def test_reality(self):
        assert_conjugate_symmetric(bona_smith(self.f, 0.3, 5.0))

    def test_eta_range(self):
        for bad in (0.0, 1.5):
            with pytest.raises(ValueError):
                bona_smith(self.f, bad, 5.0)

    @pytest.mark.parametrize("l", [1, 4])
    def test_smoothing_constant_stable(self, l):
        s = 5.0
        etas = [2.0**-n for n in range(1, 13)]

        def fit(K):
            f = random_band_field(6, s, 1.0, K)
            return max(sobolev_norm(bona_smith(f, e, s), s + l) * e ** (l / s) / sobolev_norm(f, s) for e in etas)

        c64, c128 = fit(64), fit(128)
        assert np.isfinite(c64) and c128 <= 1.05 * c64


class TestFamily:
    eq = Equation(QUINTIC, parse_nonlinearity(KDV5), 0.0)
    phi = random_band_field(11, 13.0, 0.05, 32)
    etas = [2.0**-8, 2.0**-9, 2.0**-10, 2.0**-11]

    def test_kdv5_converging(self):
        rep = convergence_family(self.eq, self.phi, 13.0, self.etas, 0.05, 1e-3, s_prime=4.0, stride=10)
        assert rep.verdict == "Converging", rep
        assert all(r >= 1.3 for r in rep.ratios)

    def test_workers_do_not_change_report(self):
        a = convergence_family(self.eq, self.phi, 13.0, self.etas[:3], 0.02, 1e-3, s_prime=4.0, stride=5)
        b = convergence_family(self.eq, self.phi, 13.0, self.etas[:3], 0.02, 1e-3, s_prime=4.0, stride=5,
                               workers=3)
        assert a == b

    def test_member_blowup_blocks_converging(self):
        rep = convergence_family(self.eq, self.phi, 13.0, self.etas, 0.02, 1e-3, blowup=1e-6)
        assert rep.verdict != "Converging"
        assert rep.blowups == [0, 1, 2, 3]

    def test_etas_validated(self):
        for bad in ([0.5], [0.25, 0.5], [0.5, 0.5]):
            with pytest.raises(ValueError):
                convergence_family(self.eq, self.phi, 13.0, bad, 0.01, 1e-3)


class TestSmoothingMetrics:
    phi = random_band_field(2, 3.0, 0.3, 32)

    def test_heat_tail_decreases(self):
        tr = evolve(Equation(QUINTIC, ZERO, 0.1), self.phi, 0.01, 1e-3)
        tails = [m["tail_energy"] for m in smoothing_metrics(tr, 8.0, 16)]
        assert all(b < a for a, b in zip(tails, tails[1:]))

    def test_dispersive_tail_constant(self):
        tr = evolve(Equation(QUINTIC, ZERO, 0.0), self.phi, 0.01, 1e-3)
        tails = np.array([m["tail_energy"] for m in smoothing_metrics(tr, 8.0, 16)])
        np.testing.assert_allclose(tails, tails[0], rtol=1e-12)

    def test_tail_energy_definition(self):
        u = field_from_modes([(2, 1.0), (5, 0.5j)], 8)
        assert tail_energy(u, 1.0, 3) == pytest.approx(2 * 26 * 0.25)

    def test_porous_flag_on_initial_segment(self):
        N = parse_nonlinearity(POROUS3)
        phi = random_band_field(7, 2.0, 0.2, 64, mean_value=1.0)
        assert p_functional(N, phi) > 0
        tr = evolve(Equation(QUINTIC, N, 0.0), phi, 0.01, 5e-5, stride=20)
        m = smoothing_metrics(tr, 8.0, 32)
        assert m[0]["p_flag"] and all(x["p_flag"] for x in m)


class TestExport:
    eq = Equation(QUINTIC, parse_nonlinearity(KDV5), 0.0)
    phi = random_band_field(1, 8.0, 0.05, 16)

    def test_csv(self):
        tr = evolve(self.eq, self.phi, 0.002, 1e-3)
        lines = trajectory_csv(tr, 6.0).splitlines()
        assert lines[0] == "t,sob_4,sob_8,sob_s,p_value,mean,tail_energy"
        assert len(lines) == 4
        row = [float(x) for x in lines[1].split(",")]
        assert row[3] == sobolev_norm(self.phi, 6.0)

    def test_reproducible(self):
        a = trajectory_csv(evolve(self.eq, self.phi, 0.005, 1e-3), 8.0)
        b = trajectory_csv(evolve(self.eq, self.phi, 0.005, 1e-3), 8.0)
        assert a == b

    def test_metadata(self):
        tr = evolve(self.eq, self.phi, 0.002, 1e-3)
        m1, m2 = run_metadata(tr, seed=3), run_metadata(tr, seed=3)
        assert m1 == m2 and len(m1["config_hash"]) == 16
        assert run_metadata(tr, seed=4)["config_hash"] != m1["config_hash"]
        assert m1["equation"]["eps"] == 0.0 and m1["scheme"] == "ETDRK4" and m1["K_grid"] == 16
        assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
