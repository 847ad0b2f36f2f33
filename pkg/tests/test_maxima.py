"""Maximizer structure of upper-bounded links, checked against hand Taylor
expansions and a numerical reconstruction property."""
import math

import numpy as np
import pytest

from tilted_sim.links import PRESETS, PolynomialLink, validate_link
from tilted_sim.maxima import MaximaError, analyze_maxima, sup_abs_on_ball


class TestValidateLink:
    def test_neg_square_ok(self):
        assert validate_link(PRESETS["quad-down"])

    def test_cubic_rejected(self):
        bad = PolynomialLink((0, 0, 0, 1))
        bad = PolynomialLink(bad.coeffs)  # unflagged builds fine
        check = validate_link(PolynomialLink((0, 0, 0, 1)))
        assert check  # unflagged: nonconstant suffices
        with pytest.raises(ValueError, match="odd degree"):
            PolynomialLink((0, 0, 0, 1), upper_bounded=True)

    def test_neg_he4_ok(self):
        ok = validate_link(PRESETS["neg-he4"])
        assert ok and ok.reason == "ok"

    def test_positive_leading_diagnosed(self):
        link = PolynomialLink((0, 0, 1))
        result = validate_link(PolynomialLink((0, 0, 1)))
        assert result  # unflagged
        with pytest.raises(ValueError, match="not negative"):
            PolynomialLink(link.coeffs, upper_bounded=True)


class TestAnalyzeMaxima:
    def test_neg_square(self):
        rep = analyze_maxima(PRESETS["quad-down"])
        assert rep.b_star == pytest.approx(0.0, abs=1e-12)
        (m,) = rep.maximizers
        assert m.location == pytest.approx(0.0, abs=1e-9)
        assert m.order == 1
        assert m.curvature == pytest.approx(1.0)
        assert rep.p_max == 1 and rep.kappa == pytest.approx(0.5)
        # A = phi(0) * Gamma(1/2) = phi(0) sqrt(pi)
        assert rep.a_weights[0] == pytest.approx(
            math.sqrt(math.pi) / math.sqrt(2 * math.pi), rel=1e-12)
        assert rep.w_weights == (1.0,)

    def test_double_well(self):
        rep = analyze_maxima(PRESETS["double-well"])
        locs = sorted(m.location for m in rep.maximizers)
        assert locs == pytest.approx([-1.0, 1.0], abs=1e-9)
        for m in rep.maximizers:
            # f(1 + t) = -4 t^2 + O(t^3)
            assert m.order == 1
            assert m.curvature == pytest.approx(4.0, rel=1e-8)
        assert rep.w_weights == pytest.approx((0.5, 0.5))

    def test_neg_he4(self):
        rep = analyze_maxima(PRESETS["neg-he4"])
        locs = sorted(m.location for m in rep.maximizers)
        assert locs == pytest.approx([-math.sqrt(3), math.sqrt(3)], abs=1e-9)
        for m in rep.maximizers:
            # f'' at +-sqrt(3) is -24, so c = 24 / 2! = 12
            assert m.order == 1
            assert m.curvature == pytest.approx(12.0, rel=1e-8)
        assert rep.b_star == pytest.approx(6.0, abs=1e-9)

    def test_quartic_order(self):
        # f = -u^4 has a single order-2 maximizer at 0 with c = 1
        rep = analyze_maxima(PolynomialLink((0, 0, 0, 0, -1), upper_bounded=True))
        (m,) = rep.maximizers
        assert (m.order, m.curvature) == (2, pytest.approx(1.0))
        assert rep.kappa == pytest.approx(0.25)

    def test_mixed_orders_kappa(self):
        # f = -u^2 (u - 2)^2 (u + 2)^4 / 16: maxima at 0, 2, -2 with orders
        # p = 1, 1, 2; kappa = min(1/4, 1/2 - 1/4) = 1/4
        base = np.polynomial.polynomial.polyfromroots([0, 0, 2, 2, -2, -2, -2, -2])
        link = PolynomialLink(tuple(-base / 16.0), upper_bounded=True)
        rep = analyze_maxima(link)
        orders = {round(m.location): m.order for m in rep.maximizers}
        assert orders == {0: 1, 2: 1, -2: 2}
        assert rep.p_max == 2
        assert rep.kappa == pytest.approx(0.25)
        assert rep.dominant == tuple(i for i, m in enumerate(rep.maximizers)
                                     if round(m.location) == -2)

    def test_reconstruction_property(self):
        # link(u_i + t) - (B* - c_i t^{2 p_i}) = o(t^{2 p_i})
        for name in PRESETS:
            rep = analyze_maxima(PRESETS[name])
            f = PRESETS[name]
            for m in rep.maximizers:
                ratios = []
                for t in (1e-2, 1e-3, 1e-4):
                    lead = m.curvature * t ** (2 * m.order)
                    resid = f.evaluate(m.location + t) - (rep.b_star - lead)
                    ratios.append(abs(resid) / lead)
                assert ratios[2] < ratios[0] + 1e-9
                assert ratios[2] < 0.02

    def test_requires_upper_bounded_flag(self):
        with pytest.raises(MaximaError):
            analyze_maxima(PolynomialLink((0, 2, -1)))


class TestSupAbsOnBall:
    def test_neg_he4(self):
        # |(-He_4)| on [-3, 3]: max(|6|, |He_4(3)|) = max(6, 30) = 30
        assert sup_abs_on_ball(PRESETS["neg-he4"], 3.0) == pytest.approx(30.0)

    def test_interior_max(self):
        assert sup_abs_on_ball(PRESETS["shifted-quad"], 0.5) == pytest.approx(
            abs(2 * -0.5 - 0.25))
