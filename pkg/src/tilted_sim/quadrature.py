"""Quadrature rules and the node-doubling convergence contract.

Gauss-Hermite rules are rescaled so that ``sum(w * f(z))`` approximates
``E[f(Z)]`` for ``Z ~ N(0,1)``; Gauss-Legendre rules are affine-mapped to the
target interval. Rules are cached because callers evaluate them repeatedly
inside doubling loops.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_hermite, roots_legendre

GAUSS_HERMITE_CAP = 4096


class QuadratureError(RuntimeError):
    """Node-doubling failed to converge; carries both refinement values."""

    def __init__(self, message: str, coarse: float, fine: float):
        super().__init__(f"{message} (coarse={coarse!r}, fine={fine!r})")
        self.coarse = coarse
        self.fine = fine


@lru_cache(maxsize=64)
def gauss_hermite_standard(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights (z, w) with sum(w f(z)) ~ E_{N(0,1)}[f]."""
    if n < 2:
        raise ValueError("need at least 2 nodes")
    if n > GAUSS_HERMITE_CAP:
        raise ValueError(f"Gauss-Hermite order {n} exceeds cap {GAUSS_HERMITE_CAP}")
    x, w = roots_hermite(n)
    return np.sqrt(2.0) * x, w / np.sqrt(np.pi)


@lru_cache(maxsize=64)
def _legendre_unit(n: int) -> tuple[np.ndarray, np.ndarray]:
    return roots_legendre(n)


def gauss_legendre(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights on [a, b] for plain dx integration."""
    x, w = _legendre_unit(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def converge_by_doubling(evaluate, n0: int, n_cap: int, abs_tol: float,
                         what: str = "integral") -> float:
    """Evaluate ``evaluate(n)`` with doubling n until successive values agree.

    Agreement means |v(2n) - v(n)| <= abs_tol * (1 + |v(2n)|). Raises
    QuadratureError carrying both values when the cap is hit first.
    """
    n = n0
    prev = evaluate(n)
    while 2 * n <= n_cap:
        n *= 2
        cur = evaluate(n)
        if abs(cur - prev) <= abs_tol * (1.0 + abs(cur)):
            return cur
        prev = cur
    final = evaluate(n_cap) if n < n_cap else prev
    raise QuadratureError(f"{what} did not converge by node doubling", prev, final)
