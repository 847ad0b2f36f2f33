"""Structural analysis of the global maximizers of an upper-bounded link.

Every low-temperature formula in the pipeline (Laplace normalizer, variance
law, truncation tails, lambda schedules) is driven by the maximizer locations
u_i, their local orders p_i, the curvature coefficients c_i and the Laplace
weights A_i. Critical points come from companion-matrix roots of f' refined
by Newton; orders and curvatures are read off exact derivative evaluations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .links import PolynomialLink, poly_derivative

MAX_MATCH_RTOL = 1e-9       # |f(u) - B*| <= rtol * (1 + |B*|) marks a global max
DERIV_ZERO_RTOL = 1e-8      # Taylor coefficients below this scale count as zero


class MaximaError(RuntimeError):
    pass


@dataclass(frozen=True)
class Maximizer:
    location: float     # u_i
    order: int          # p_i (first nonzero Taylor order is 2 p_i)
    curvature: float    # c_i > 0 in f(u_i + t) = B* - c_i t^{2 p_i} + o(t^{2 p_i})


@dataclass(frozen=True)
class MaximaReport:
    b_star: float
    maximizers: tuple[Maximizer, ...]
    p_max: int
    kappa: float
    a_weights: tuple[float, ...]     # Laplace weight A_i per maximizer
    w_weights: tuple[float, ...]     # normalized over dominant maximizers, else 0
    dominant: tuple[int, ...]        # indices with p_i == p_max

    @property
    def sum_dominant_a(self) -> float:
        return float(sum(self.a_weights[i] for i in self.dominant))

    @property
    def max_dominant_abs_location(self) -> float:
        return max(abs(self.maximizers[i].location) for i in self.dominant)

    @property
    def alpha(self) -> float:
        """Laplace normalizer exponent 1/(2 p_max)."""
        return 1.0 / (2.0 * self.p_max)


def _phi(u: float) -> float:
    return math.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)


def _laplace_weight(u: float, p: int, c: float) -> float:
    """A = phi(u) * integral of exp(-c s^{2p}) ds = phi(u) Gamma(1/(2p)) c^{-1/(2p)} / p."""
    return _phi(u) * math.gamma(1.0 / (2 * p)) * c ** (-1.0 / (2 * p)) / p


def _real_critical_points(coeffs: np.ndarray) -> np.ndarray:
    deriv = npoly.polyder(coeffs)
    roots = npoly.polyroots(deriv)
    if roots.size == 0:
        raise MaximaError("link derivative has no roots")
    # multiple roots of f' scatter companion eigenvalues off the axis by
    # O(eps^{1/m}); keep anything plausibly real and let Newton + the
    # residual filter decide
    near_real = roots[np.abs(roots.imag) <= 1e-3 * (1.0 + np.abs(roots.real))].real
    if near_real.size == 0:
        raise MaximaError("no real critical points found")
    d2 = npoly.polyder(deriv)
    x = near_real.copy()
    for _ in range(200):  # linear convergence at multiple roots needs room
        fp = npoly.polyval(x, deriv)
        fpp = npoly.polyval(x, d2)
        step = np.where(np.abs(fpp) > 0, fp / np.where(fpp == 0, 1.0, fpp), 0.0)
        x_new = x - np.clip(step, -1.0, 1.0)
        if np.max(np.abs(x_new - x)) < 1e-15 * (1.0 + np.max(np.abs(x))):
            x = x_new
            break
        x = x_new
    scale = float(np.sum(np.abs(deriv))) * np.maximum(1.0, np.abs(x)) ** (len(deriv) - 1)
    x = x[np.abs(npoly.polyval(x, deriv)) <= 1e-7 * (1.0 + scale)]
    if x.size == 0:
        raise MaximaError("critical-point refinement failed to converge")
    # multiple roots stall Newton at the float-noise floor ~eps^{1/m}; merge
    # such clusters (order-aware re-polishing later restores full precision)
    x = np.sort(x)
    keep = [x[0]]
    for v in x[1:]:
        if abs(v - keep[-1]) > 1e-4 * (1.0 + abs(v)):
            keep.append(v)
    return np.asarray(keep)


def _polish_maximizer(coeffs: tuple, u: float, order: int) -> float:
    """Refine a local maximizer of order 2p as a simple root of f^(2p-1)."""
    deriv = list(coeffs)
    for _ in range(order - 1):
        deriv = list(poly_derivative(deriv))
    g = np.asarray(deriv, dtype=float)
    gp = npoly.polyder(g)
    x = u
    for _ in range(80):
        val = float(npoly.polyval(x, g))
        slope = float(npoly.polyval(x, gp))
        if slope == 0.0:
            break
        x_new = x - val / slope
        if abs(x_new - x) <= 1e-15 * (1.0 + abs(x)):
            return x_new
        x = x_new
    return x


def _taylor_order(coeffs: tuple, u: float) -> tuple[int, float]:
    """First nonzero Taylor order (>= 2) of f(u + t) - f(u) and its coefficient."""
    deriv = list(coeffs)
    order = 0
    scale_base = sum(abs(float(c)) for c in coeffs) * max(1.0, abs(u)) ** (len(coeffs) - 1)
    while True:
        deriv = list(poly_derivative(deriv))
        order += 1
        if len(deriv) == 1 and deriv[0] == 0:
            raise MaximaError(f"no nonzero Taylor coefficient at u={u}")
        if order < 2:
            continue
        val = float(npoly.polyval(u, np.asarray(deriv, dtype=float)))
        coeff = val / math.factorial(order)
        if abs(coeff) > DERIV_ZERO_RTOL * (1.0 + scale_base):
            return order, coeff


def analyze_maxima(link: PolynomialLink) -> MaximaReport:
    """Locate all global maximizers of an upper-bounded link.

    Returns locations, local orders p_i, curvatures c_i, the dominant set
    (largest p_i), kappa = min(1/(2 p_max), min over non-dominant of
    1/(2 p_i) - 1/(2 p_max)), and Laplace weights A_i with their normalized
    version w_i on the dominant set.
    """
    if not link.upper_bounded:
        raise MaximaError("maxima analysis requires an upper-bounded link")
    coeffs = np.asarray(link.coeffs, dtype=float)
    crit = _real_critical_points(coeffs)
    values = npoly.polyval(crit, coeffs)
    b_star = float(values.max())
    mask = np.abs(values - b_star) <= MAX_MATCH_RTOL * (1.0 + abs(b_star))
    points = crit[mask]

    maxima: list[Maximizer] = []
    for u in points:
        order, coeff = _taylor_order(link.coeffs, float(u))
        if order % 2 != 0 or coeff > 0:
            # a saddle/inflection numerically tied with the max; skip it
            continue
        maxima.append(Maximizer(location=float(u), order=order // 2, curvature=-coeff))
    if not maxima:
        raise MaximaError("no genuine local maximum found at the global level")

    p_max = max(m.order for m in maxima)
    dominant = tuple(i for i, m in enumerate(maxima) if m.order == p_max)
    non_dominant_gaps = [
        1.0 / (2 * m.order) - 1.0 / (2 * p_max)
        for i, m in enumerate(maxima) if i not in dominant
    ]
    kappa = min([1.0 / (2 * p_max)] + non_dominant_gaps)

    a_weights = tuple(_laplace_weight(m.location, m.order, m.curvature) for m in maxima)
    total = sum(a_weights[i] for i in dominant)
    w_weights = tuple(
        a_weights[i] / total if i in dominant else 0.0 for i in range(len(maxima))
    )
    return MaximaReport(
        b_star=b_star,
        maximizers=tuple(maxima),
        p_max=p_max,
        kappa=kappa,
        a_weights=a_weights,
        w_weights=w_weights,
        dominant=dominant,
    )


def sup_abs_on_ball(link: PolynomialLink, radius: float) -> float:
    """M_R = sup_{|u| <= R} |link(u)| (attained at an endpoint or critical point)."""
    coeffs = np.asarray(link.coeffs, dtype=float)
    candidates = [-radius, radius]
    try:
        crit = _real_critical_points(coeffs)
        candidates.extend(float(u) for u in crit if abs(u) <= radius)
    except MaximaError:
        pass
    return float(max(abs(npoly.polyval(np.asarray(candidates), coeffs))))
