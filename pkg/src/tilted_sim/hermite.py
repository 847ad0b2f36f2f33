"""Hermite analysis of polynomial links.

Two evaluation paths coexist on purpose. Pure polynomial functionals (Hermite
coefficients, information/generative exponents, student-side signals) are
computed from exact Gaussian monomial moments, in Python integer arithmetic
whenever the inputs are integers. The exponentially weighted teacher signal
has no polynomial closed form and goes through tensor quadrature with a
node-doubling accuracy contract.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as npoly

from .links import Number, PolynomialLink, hermite_basis_coeffs, hermite_link, poly_mul, poly_pow
from .quadrature import (
    GAUSS_HERMITE_CAP,
    converge_by_doubling,
    gauss_hermite_standard,
    gauss_legendre,
)

INFINITE_EXPONENT = math.inf

# |value| <= ZERO_RTOL * (1 + sum |coeffs|) counts as a structural zero when
# coefficients are floats; integer inputs are decided exactly.
ZERO_RTOL = 1e-12


@lru_cache(maxsize=256)
def gaussian_moment(k: int) -> int:
    """E[G^k] for G ~ N(0,1): zero for odd k, double factorial for even k."""
    if k < 0:
        raise ValueError("moment order must be >= 0")
    if k % 2 == 1:
        return 0
    out = 1
    for j in range(k - 1, 0, -2):
        out *= j
    return out


def hermite_polynomial(i: int) -> PolynomialLink:
    """He_i in the monomial basis via the three-term recurrence."""
    return hermite_link(i)


def gaussian_expectation(coeffs) -> Number:
    """E[f(G)] for a polynomial in the monomial basis, by exact moments."""
    return sum(c * gaussian_moment(k) for k, c in enumerate(coeffs) if c != 0)


def _coeffs_of(f) -> tuple[Number, ...]:
    return f.coeffs if isinstance(f, PolynomialLink) else tuple(f)


def hermite_coefficient(f, i: int) -> Number:
    """H_i[f] = E[f(G) He_i(G)] via exact Gaussian monomial moments."""
    coeffs = _coeffs_of(f)
    return gaussian_expectation(poly_mul(coeffs, hermite_basis_coeffs(i)))


def hermite_coefficient_quadrature(f, i: int, nodes: int = 200) -> float:
    """Quadrature cross-check of H_i[f] (used by the agreement property)."""
    coeffs = np.asarray(_coeffs_of(f), dtype=float)
    he = np.asarray(hermite_basis_coeffs(i), dtype=float)
    z, w = gauss_hermite_standard(nodes)
    return float(np.sum(w * npoly.polyval(z, coeffs) * npoly.polyval(z, he)))


def _is_structural_zero(value: Number, coeffs: tuple[Number, ...]) -> bool:
    if isinstance(value, int):
        return value == 0
    scale = 1.0 + float(sum(abs(c) for c in coeffs))
    return abs(value) <= ZERO_RTOL * scale


def information_exponent(f) -> int | float:
    """Smallest i >= 1 with H_i[f] != 0; INFINITE_EXPONENT if none exists.

    For a nonconstant polynomial the exponent never exceeds the degree (the
    top Hermite coefficient equals leading * degree!), so the scan is finite.
    """
    coeffs = _coeffs_of(f)
    degree = len(coeffs) - 1
    if degree < 1:
        raise ValueError("information exponent needs a nonconstant polynomial")
    for i in range(1, degree + 1):
        if not _is_structural_zero(hermite_coefficient(coeffs, i), coeffs):
            return i
    return INFINITE_EXPONENT


@dataclass(frozen=True)
class ExponentReport:
    """Information/generative exponents with the searched power range.

    ``ge`` is certified as the minimum of IE(f^I) over I in 1..search_bound;
    the true generative exponent could in principle be attained only by a
    larger power, hence the recorded bound.
    """

    ie: int | float
    ge: int | float
    i_star: int
    search_bound: int

    def __post_init__(self) -> None:
        if self.ge > self.ie:
            raise ValueError("generative exponent cannot exceed information exponent")


def generative_exponent(f: PolynomialLink, i_max: int = 8) -> ExponentReport:
    """Minimise IE(f^I) over power transforms I = 1..i_max.

    Requires the upper-bounded flag: power maps of unbounded links leave the
    L2 label-transform class used to define the generative exponent.
    """
    if i_max < 1:
        raise ValueError("i_max must be >= 1")
    if not f.upper_bounded:
        raise ValueError("generative exponent is computed for upper-bounded links")
    ie = information_exponent(f)
    best: int | float = INFINITE_EXPONENT
    i_star = 1
    power: tuple[Number, ...] = (1,)
    for ii in range(1, i_max + 1):
        power = poly_mul(power, f.coeffs)
        cand = information_exponent(power)
        if cand < best:
            best = cand
            i_star = ii
        if best == 1:
            break
    return ExponentReport(ie=ie, ge=best, i_star=i_star, search_bound=i_max)


def student_signal(i: int, activation: PolynomialLink) -> Number:
    """V_{i-1} = E[sigma'(h) He_{i-1}(h)] by exact moments."""
    if i < 1:
        raise ValueError("student signal index must be >= 1")
    deriv = activation.derivative().coeffs
    return gaussian_expectation(poly_mul(deriv, hermite_basis_coeffs(i - 1)))


def _teacher_integrand_value(link_coeffs: np.ndarray, he: np.ndarray, beta1: float,
                             tau: float, n_g: int, n_z: int) -> float:
    g, wg = gauss_hermite_standard(n_g)
    s = npoly.polyval(g, link_coeffs)
    he_vals = npoly.polyval(g, he)
    if tau == 0.0:
        inner = s * np.exp(s / beta1)
    else:
        z, wz = gauss_legendre(-tau, tau, n_z)
        wz = wz / (2.0 * tau)  # uniform density on [-tau, tau]
        y = s[:, None] + z[None, :]
        inner = np.exp(y / beta1) * y @ wz
    return float(np.sum(wg * inner * he_vals))


def teacher_signal(i: int, beta1: float, link: PolynomialLink, tau: float = 0.0,
                   abs_tol: float = 1e-10, start_nodes: int = 200,
                   zeta_nodes: int = 64) -> float:
    """Reward-weighted teacher coefficient E_g[G(sigma*(g)) He_i(g)].

    G(u) = E_zeta[(u + zeta) e^{(u+zeta)/beta1}] with zeta uniform on
    [-tau, tau]. Evaluated by Gauss-Hermite (g) x Gauss-Legendre (zeta)
    tensor quadrature, doubling the Hermite order until two refinements agree
    to ``abs_tol`` (relative to the finer value).
    """
    if beta1 <= 0:
        raise ValueError("beta1 must be positive")
    if tau < 0:
        raise ValueError("tau must be >= 0")
    if not link.upper_bounded:
        raise ValueError("teacher signal requires an upper-bounded link")
    coeffs = np.asarray(link.coeffs, dtype=float)
    he = np.asarray(hermite_basis_coeffs(i), dtype=float)

    def evaluate(n: int) -> float:
        return _teacher_integrand_value(coeffs, he, beta1, tau, n, zeta_nodes)

    return converge_by_doubling(evaluate, start_nodes, GAUSS_HERMITE_CAP, abs_tol,
                                what=f"teacher signal U_{i}(beta1={beta1})")


def teacher_signal_leading_constant(link: PolynomialLink, report: ExponentReport) -> float:
    """Limit of U_{p}(beta1) * beta1^{I*-1}: H_p[(sigma*)^{I*}] / (I*-1)!."""
    powered = poly_pow(link.coeffs, report.i_star)
    return float(hermite_coefficient(powered, int(report.ge))) / math.factorial(report.i_star - 1)
