import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dispersion_lab.errors import DegreeTooLow, JetOverflow, ParseError
from dispersion_lab.field import Field, derivative, field_from_modes, pointwise_product, random_band_field, sobolev_norm
from dispersion_lab.nonlinearity import (
    DiffPolynomial,
    Monomial,
    Nonlinearity,
    ResonanceType,
    classify,
    conserves_mean,
    euler_operator,
    evaluate,
    j1_functional,
    p_density,
    p_functional,
    parse_nonlinearity,
    total_derivative,
)
from dispersion_lab.solver import Equation, evolve

from conftest import KDV5, N1, N2, POROUS3

w = DiffPolynomial.monomial
NP, PA = ResonanceType.NON_PARABOLIC, ResonanceType.PARABOLIC


def fine(f, m=512):
    x = 2 * np.pi * np.arange(m) / m
    return x, [f.values(m, order=i) for i in range(4)]


class TestParse:
    def test_n1(self):
        (m,) = parse_nonlinearity("2*u2*u1^2").monomials
        assert (m.lam, m.a, m.b, m.c, m.d) == (2, 0, 1, 2, 0)

    def test_n2(self):
        (m,) = parse_nonlinearity("u2^2*u0").monomials
        assert (m.lam, m.a, m.b, m.c, m.d) == (1, 0, 2, 0, 1)

    def test_cancellation(self):
        N = parse_nonlinearity("u1*u0 + (-1)*u1*u0 + u0^2")
        assert [m.powers for m in N] == [(0, 0, 0, 2)]

    def test_rationals_and_signs(self):
        N = parse_nonlinearity("-1/2*u0*u3 - u0^2*u3 + 0.25*u1^3")
        lams = {m.powers: m.lam for m in N}
        assert lams == {(1, 0, 0, 1): Fraction(-1, 2), (1, 0, 0, 2): -1, (0, 0, 3, 0): Fraction(1, 4)}

    def test_repeated_factor_merges_powers(self):
        assert parse_nonlinearity("u1*u1*u0") == parse_nonlinearity("u1^2*u0")

    def test_zero(self):
        assert len(parse_nonlinearity("0")) == 0

    @pytest.mark.parametrize("text", ["", "2*", "u4^2", "u1^^2", "2*u1 +", "x*u0^2", "1/0*u0^2"])
    def test_parse_error(self, text):
        with pytest.raises(ParseError):
            parse_nonlinearity(text)

    @pytest.mark.parametrize("text", ["u1", "3*u0", "u0^2 + u2"])
    def test_degree_too_low(self, text):
        with pytest.raises(DegreeTooLow):
            parse_nonlinearity(text)

    def test_monomial_invariant(self):
        with pytest.raises(DegreeTooLow):
            Monomial(1, 0, 0, 1, 0)

    def test_json_round_trip(self):
        N = parse_nonlinearity(KDV5)
        blob = json.dumps(N.to_json())
        assert Nonlinearity.from_json(json.loads(blob)) == N
        assert json.loads(blob)[0]["lambda"] == [-10, 1]

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.fractions(-5, 5, max_denominator=6), st.integers(0, 2), st.integers(0, 2),
                              st.integers(0, 2), st.integers(0, 3)).filter(lambda t: sum(t[1:]) >= 2),
                    min_size=1, max_size=5))
    def test_str_round_trip(self, terms):
        N = Nonlinearity.from_terms(terms)
        assert parse_nonlinearity(str(N)) == N


class TestEvaluate:
    def test_zero_field(self):
        assert not np.any(evaluate(parse_nonlinearity(KDV5), Field.zeros(16)).coeffs)

    def test_square_of_cos(self):
        out = evaluate(parse_nonlinearity("u0^2"), field_from_modes([(1, 0.5)], 8))
        np.testing.assert_allclose(out.coeffs, field_from_modes([(0, 0.5), (2, 0.25)], 8).coeffs, atol=1e-16)

    def test_n1_pointwise_oracle(self):
        f = field_from_modes([(1, 0.5)], 16)
        x = 2 * np.pi * np.arange(256) / 256
        np.testing.assert_allclose(evaluate(parse_nonlinearity(N1), f).values(256), -2 * np.cos(x) * np.sin(x) ** 2,
                                   atol=1e-14)

    def test_against_sampled_product(self):
        # alias-free evaluation equals the band projection of the exact pointwise polynomial
        f = random_band_field(3, 1.0, 0.3, 12, mean_value=0.2)
        N = parse_nonlinearity(POROUS3 + " + u3*u2*u1")
        _, (u0, u1, u2, u3) = fine(f, 512)
        exact = 3 * u0**2 * u2 + 6 * u0 * u1**2 + u3 * u2 * u1
        ref = Field.from_values(exact, 12)
        np.testing.assert_allclose(evaluate(N, f).coeffs, ref.coeffs, atol=1e-13)


class TestDensity:
    def test_n1(self):
        assert p_density(parse_nonlinearity(N1)) == w(2, w1=2)

    def test_n2(self):
        assert p_density(parse_nonlinearity(N2)) == w(2, w0=1, w2=1)

    def test_no_second_derivative(self):
        assert p_density(parse_nonlinearity("u1*u0")).is_zero()

    def test_n1_cos_value(self):
        assert p_functional(parse_nonlinearity(N1), field_from_modes([(1, 0.5)], 16)) == pytest.approx(1.0, rel=1e-14)

    def test_n1_plus_n2_vanishes(self):
        f = random_band_field(8, 3.0, 1.0, 32, mean_value=0.5)
        assert abs(p_functional(parse_nonlinearity(N1 + " + " + N2), f)) < 1e-13

    def test_quartic_flux_density(self):
        N = parse_nonlinearity("4*u1^3*u2")
        assert abs(p_functional(N, field_from_modes([(1, 0.5)], 16))) < 1e-15
        # f = cos x + sin 2x: mean(4 f'^3) = 4 * 3 * mean(sin^2 x * 2 cos 2x) = -6
        f = field_from_modes([(1, 0.5), (2, -0.5j)], 16)
        _, (_, u1, _, _) = fine(f)
        assert np.mean(4 * u1**3) == pytest.approx(-6.0, rel=1e-13)
        assert p_functional(N, f) == pytest.approx(-6.0, rel=1e-13)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.5, 3.0))
    def test_quadrature_matches_mode_space(self, seed, s):
        # zero mode of the density assembled from alias-free products of Fields
        f = random_band_field(seed, s, 0.7, 12, mean_value=0.4).with_K_grid(48)
        N = parse_nonlinearity("3*u0^2*u2 + 2*u2*u1^2 + u3*u2^2*u0")
        total = 0.0
        for exps, coef in p_density(N).terms.items():
            acc = field_from_modes([(0, 1.0)], 48)
            for i, e in enumerate(exps):
                for _ in range(e):
                    acc = pointwise_product(acc, derivative(f, i))
            total += float(coef) * acc.coeffs[0].real
        assert p_functional(N, f) == pytest.approx(total, rel=1e-12)


class TestJetCalculus:
    def test_total_derivative_examples(self):
        assert total_derivative(w(1, w0=1)) == w(1, w1=1)
        assert total_derivative(w(1, w0=1, w1=1)) == w(1, w1=2) + w(1, w0=1, w2=1)
        assert total_derivative(w(1, w1=3)) == w(3, w1=2, w2=1)

    def test_overflow(self):
        with pytest.raises(JetOverflow):
            total_derivative(w(1, w6=1))

    def test_euler_examples(self):
        assert euler_operator(w(1, w2=1)).is_zero()
        assert euler_operator(w(1, w1=2)) == w(-2, w2=1)
        assert euler_operator(w(2, w1=2) + w(2, w0=1, w2=1)).is_zero()

    @settings(max_examples=80, deadline=None)
    @given(st.dictionaries(st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 2)),
                           st.fractions(-7, 7, max_denominator=5), min_size=1, max_size=6))
    def test_euler_kills_total_derivatives(self, terms):
        L = DiffPolynomial(terms)
        assert euler_operator(total_derivative(L)).is_zero()

    @settings(max_examples=40, deadline=None)
    @given(st.dictionaries(st.tuples(st.integers(0, 3), st.integers(0, 2), st.integers(0, 2)),
                           st.fractions(-7, 7, max_denominator=5), min_size=1, max_size=4),
           st.integers(0, 2**31))
    def test_vanishing_integral_matches_quadrature(self, terms, seed):
        # when E(L) = 0 and there is no constant, int L = 0 on every field
        L = DiffPolynomial(terms)
        f = random_band_field(seed, 4.0, 0.5, 16, mean_value=0.3)
        _, jets = fine(f, 256)
        vals = L.evaluate(jets + [np.zeros(256)] * 3)
        if euler_operator(L).is_zero() and L.constant_term() == 0:
            assert abs(np.mean(vals)) < 1e-12 * (1 + np.mean(np.abs(vals)))


class TestClassify:
    @pytest.mark.parametrize("expr", [KDV5, "u0*u3 + 2*u1*u2", N1 + " + " + N2])
    def test_non_parabolic(self, expr):
        assert classify(parse_nonlinearity(expr)) is NP

    @pytest.mark.parametrize("expr", [N1, N2, POROUS3, "2*u0*u2 + 2*u1^2", "4*u1^3*u2"])
    def test_parabolic(self, expr):
        assert classify(parse_nonlinearity(expr)) is PA

    def test_porous_density(self):
        L = p_density(parse_nonlinearity(POROUS3))
        assert L == w(3, w0=2)
        assert euler_operator(L) == w(6, w0=1)

    @settings(max_examples=30, deadline=None)
    @given(st.sampled_from([KDV5, N1, N2, POROUS3, N1 + " + " + N2]),
           st.fractions(-20, 20, max_denominator=9).filter(lambda c: c != 0))
    def test_scaling_invariance(self, expr, c):
        N = parse_nonlinearity(expr)
        assert classify(N.scaled(c)) is classify(N)

    @pytest.mark.parametrize("expr", [KDV5, "u0*u3 + 2*u1*u2", N1 + " + " + N2,
                                      "-10*u1^3 - 40*u0*u1*u2 - 10*u0^2*u3 - 30*u0^4*u1"])
    def test_numerical_shadow(self, expr):
        N = parse_nonlinearity(expr)
        rng = np.random.default_rng(5)
        for _ in range(100):
            f = random_band_field(int(rng.integers(2**31)), rng.uniform(2, 6), 10 ** rng.uniform(-1, 0.5), 32,
                                  mean_value=rng.normal())
            bound = 1e-10 * (1 + sobolev_norm(f, 4)) ** N.p_max
            assert abs(p_functional(N, f)) <= bound


class TestConservesMean:
    def test_kdv5(self):
        assert conserves_mean(parse_nonlinearity(KDV5))

    def test_square(self):
        assert not conserves_mean(parse_nonlinearity("u0^2"))

    def test_half_derivative_of_square(self):
        assert conserves_mean(parse_nonlinearity("u1*u0"))

    def test_mean_of_n_vanishes_numerically(self):
        f = random_band_field(2, 3.0, 0.8, 32, mean_value=0.3)
        assert abs(evaluate(parse_nonlinearity(KDV5), f).coeffs[0]) < 1e-14


class TestJ1:
    def test_zero_data(self, quintic):
        assert j1_functional(parse_nonlinearity(N1), Field.zeros(32), quintic) == 0.0

    def test_no_b(self, quintic):
        f = random_band_field(1, 6.0, 0.5, 32)
        assert j1_functional(parse_nonlinearity("u0*u3 + u1^2*u0"), f, quintic) == 0.0

    def test_n1_cos_hand_value(self, quintic):
        # mean(4 u1 d_x N1(u)) = -8 mean(cos^2 sin^2) = -1; the linear part contributes 0
        f = field_from_modes([(1, 0.5)], 32)
        assert j1_functional(parse_nonlinearity(N1), f, quintic) == pytest.approx(-1.0, rel=1e-13)

    @pytest.mark.parametrize("eps", [0.0, 0.3])
    def test_finite_difference_oracle(self, quintic, eps):
        N = parse_nonlinearity(N1)
        phi = field_from_modes([(1, 0.5), (2, 0.2 - 0.1j), (3, 0.05j)], 32)
        eq = Equation(quintic, N, eps)
        h = 1e-5
        # central difference about t = h on a forward run, so the regularized flow is never reversed
        fwd = evolve(eq, phi, 2 * h, h / 20, stride=20)
        (_, u0), (_, u1), (_, u2) = fwd.frames
        fd = (p_functional(N, u2) - p_functional(N, u0)) / (2 * h)
        assert fd == pytest.approx(j1_functional(N, u1, quintic, eps), rel=1e-4)

    def test_backward_run_agrees(self, quintic):
        N = parse_nonlinearity(N1)
        phi = field_from_modes([(1, 0.5)], 32)
        eq = Equation(quintic, N, 0.0)
        h = 1e-3
        fwd = evolve(eq, phi, h, h / 50, stride=50)
        back = evolve(eq, phi, -h, h / 50, stride=50)
        fd = (p_functional(N, fwd.final) - p_functional(N, back.frames[0][1])) / (2 * h)
        assert fd == pytest.approx(j1_functional(N, phi, quintic, 0.0), rel=1e-4)
