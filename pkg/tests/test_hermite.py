"""Hermite machinery: exact moments, exponents, teacher/student signals."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tilted_sim.hermite import (
    ExponentReport,
    gaussian_moment,
    generative_exponent,
    hermite_coefficient,
    hermite_coefficient_quadrature,
    hermite_polynomial,
    information_exponent,
    student_signal,
    teacher_signal,
    teacher_signal_leading_constant,
)
from tilted_sim.links import PRESETS, PolynomialLink, hermite_basis_coeffs


class TestHermitePolynomials:
    def test_he0_is_one(self):
        assert hermite_polynomial(0).coeffs == (1,)

    def test_he2(self):
        assert hermite_polynomial(2).coeffs == (-1, 0, 1)

    def test_he4_by_hand_recurrence(self):
        # He_3 = u^3 - 3u; He_4 = u He_3 - 3 He_2 = u^4 - 6u^2 + 3
        assert hermite_polynomial(4).coeffs == (3, 0, -6, 0, 1)

    def test_cap_exceeded(self):
        with pytest.raises(ValueError, match="cap"):
            hermite_basis_coeffs(65)

    def test_cap_is_at_least_32(self):
        assert hermite_polynomial(32).degree == 32


class TestGaussianMoments:
    def test_double_factorials(self):
        assert [gaussian_moment(k) for k in range(7)] == [1, 0, 1, 0, 3, 0, 15]


class TestHermiteCoefficients:
    def test_linear_minus_square(self):
        # E[(2g - g^2) g] = 2 E g^2 - E g^3 = 2
        assert hermite_coefficient(PolynomialLink((0, 2, -1)), 1) == 2

    def test_quartic(self):
        # E[(-g^4 + 2g^2)(g^2 - 1)] = -15 + 3 + 6 - 2 = -8
        assert hermite_coefficient(PolynomialLink((0, 0, 2, 0, -1)), 2) == -8

    def test_even_poly_odd_index_vanishes(self):
        even = PolynomialLink((1, 0, -2, 0, -3))
        for i in (1, 3, 5):
            assert hermite_coefficient(even, i) == 0

    def test_exact_orthogonality_integers(self):
        for i in range(13):
            for j in range(13):
                expected = math.factorial(i) if i == j else 0
                assert hermite_coefficient(hermite_basis_coeffs(i), j) == expected

    def test_quadrature_matches_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            deg = int(rng.integers(1, 11))
            coeffs = tuple(rng.uniform(-3, 3, deg + 1))
            f = PolynomialLink(coeffs)
            for i in range(0, 11):
                exact = hermite_coefficient(f, i)
                quad = hermite_coefficient_quadrature(f, i)
                assert abs(quad - exact) <= 1e-10 * (1 + abs(exact) + math.sqrt(math.factorial(i)))


class TestInformationExponent:
    def test_shifted_quad(self):
        assert information_exponent(PolynomialLink((0, 2, -1))) == 1

    def test_neg_he4_orthogonality(self):
        assert information_exponent(PRESETS["neg-he4"]) == 4

    def test_neg_square_parity(self):
        assert information_exponent(PolynomialLink((0, 0, -1))) == 2


class TestGenerativeExponent:
    def test_neg_square_all_powers_even(self):
        rep = generative_exponent(PRESETS["quad-down"], i_max=4)
        assert (rep.ge, rep.i_star) == (2, 1)

    def test_neg_he4_power_two(self):
        # He_4^2 = He_8 + 16 He_6 + 72 He_4 + 96 He_2 + 24, so the squared
        # link exposes a degree-2 coefficient of 192
        rep = generative_exponent(PRESETS["neg-he4"], i_max=4)
        assert (rep.ge, rep.i_star) == (2, 2)
        assert hermite_coefficient(PRESETS["neg-he4"].power(2), 2) == 192

    def test_already_order_one(self):
        rep = generative_exponent(PRESETS["shifted-quad"], i_max=2)
        assert (rep.ge, rep.i_star) == (1, 1)

    def test_search_bound_recorded(self):
        rep = generative_exponent(PRESETS["double-well"], i_max=6)
        assert rep.search_bound == 6

    def test_bad_i_max(self):
        with pytest.raises(ValueError):
            generative_exponent(PRESETS["quad-down"], i_max=0)

    def test_report_rejects_ge_above_ie(self):
        with pytest.raises(ValueError):
            ExponentReport(ie=2, ge=3, i_star=1, search_bound=4)

    @given(st.lists(st.integers(-4, 4), min_size=2, max_size=7))
    @settings(max_examples=60, deadline=None)
    def test_ge_never_exceeds_ie(self, coeffs):
        # force a valid upper-bounded link: even degree, negative leading
        coeffs = coeffs + [0] * (len(coeffs) % 2)
        coeffs[-1] = -max(1, abs(coeffs[-1]))
        if all(c == 0 for c in coeffs[1:-1]) and coeffs[0] == 0:
            coeffs[2 % (len(coeffs) - 1)] = 1
        try:
            link = PolynomialLink(tuple(coeffs), upper_bounded=True)
        except ValueError:
            return
        rep = generative_exponent(link, i_max=6)
        assert rep.ge <= rep.ie


class TestTeacherSignal:
    def test_low_degree_vanishes_for_presets(self):
        # signals below the generative exponent vanish for every temperature
        for name in ("quad-down", "neg-he4", "double-well"):
            link = PRESETS[name]
            for beta1 in (1.0, 10.0, 100.0):
                for tau in (0.0, 0.5):
                    assert abs(teacher_signal(1, beta1, link, tau)) < 1e-8

    def test_even_link_odd_index_zero_noiseless(self):
        assert teacher_signal(3, 5.0, PRESETS["double-well"], 0.0) == pytest.approx(0.0, abs=1e-10)

    def test_quartic_limit_constant(self):
        # U_2(beta1) * beta1 approaches H_2[(sigma*)^2] / 1! = 192; the first
        # correction decays like 1/beta1, so the limit is read off at 1e5
        val = teacher_signal(2, 1e5, PRESETS["neg-he4"]) * 1e5
        assert val == pytest.approx(192.0, rel=1e-3)
        rep = generative_exponent(PRESETS["neg-he4"])
        assert teacher_signal_leading_constant(PRESETS["neg-he4"], rep) == 192.0

    def test_rate_exponent_in_asymptotic_range(self):
        # |U_p(beta1)| ~ beta1^{-(I*-1)} holds once beta1 clears the link's
        # correction scale; the slope is clean on [1e4, 1e6]
        for name, target in (("quad-down", 0.0), ("neg-he4", -1.0), ("double-well", 0.0)):
            link = PRESETS[name]
            p = int(generative_exponent(link).ge)
            betas = np.geomspace(1e4, 1e6, 5)
            us = [abs(teacher_signal(p, float(b), link)) for b in betas]
            slope = np.polyfit(np.log(betas), np.log(us), 1)[0]
            assert slope == pytest.approx(target, abs=0.05), name

    def test_requires_upper_bounded(self):
        with pytest.raises(ValueError):
            teacher_signal(1, 1.0, PolynomialLink((0, 1)))

    def test_quad_down_closed_form(self):
        # for sigma* = -u^2 and tau = 0:
        # U_2(b) = s^3 (1 - 3 s^2) with s^2 = b / (b + 2)
        for beta1 in (3.0, 10.0, 100.0):
            s2 = beta1 / (beta1 + 2.0)
            expected = s2 ** 1.5 * (1 - 3 * s2)
            assert teacher_signal(2, beta1, PRESETS["quad-down"]) == pytest.approx(
                expected, abs=1e-12)


class TestStudentSignal:
    def test_neg_square(self):
        # sigma' = -2h, V_1 = E[-2 h^2] = -2
        assert student_signal(2, PolynomialLink((0, 0, -1))) == -2

    def test_parity_zero(self):
        # even activation => odd derivative => V_{i-1} = 0 for even i-1 > 0
        assert student_signal(4, PolynomialLink((0, 0, -1))) == 0

    def test_degree_four(self):
        # sigma = u - u^4: V_0 = E[1 - 4h^3] = 1
        assert student_signal(1, PolynomialLink((0, 1, 0, 0, -1))) == 1

    def test_ibp_identity(self):
        # V_{i-1} = E[sigma' He_{i-1}] equals H_i[sigma] by Gaussian parts
        rng = np.random.default_rng(3)
        for _ in range(10):
            coeffs = tuple(rng.integers(-3, 4, 6))
            if all(c == 0 for c in coeffs[1:]):
                continue
            f = PolynomialLink(coeffs)
            for i in range(1, 6):
                assert student_signal(i, f) == hermite_coefficient(f, i)
