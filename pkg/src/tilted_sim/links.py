"""Polynomial link functions and their small exact-arithmetic toolbox.

Links are stored in the monomial basis (``coeffs[k]`` multiplies ``u**k``).
Coefficient arithmetic deliberately runs on Python scalars so that integer
inputs stay exact; callers that need fast vectorised evaluation go through
:func:`PolynomialLink.evaluate`, which uses numpy's Horner scheme.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

Number = int | float


def trim_coeffs(coeffs: Sequence[Number]) -> tuple[Number, ...]:
    """Drop trailing zero coefficients (but keep at least one entry)."""
    out = list(coeffs)
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return tuple(out)


def poly_mul(a: Sequence[Number], b: Sequence[Number]) -> tuple[Number, ...]:
    out: list[Number] = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            out[i + j] += ai * bj
    return trim_coeffs(out)


def poly_pow(a: Sequence[Number], n: int) -> tuple[Number, ...]:
    if n < 0:
        raise ValueError("negative power")
    out: tuple[Number, ...] = (1,)
    for _ in range(n):
        out = poly_mul(out, a)
    return out


def poly_derivative(a: Sequence[Number]) -> tuple[Number, ...]:
    if len(a) <= 1:
        return (0,)
    return trim_coeffs([k * a[k] for k in range(1, len(a))])


@dataclass(frozen=True)
class PolynomialLink:
    """A univariate polynomial, optionally flagged as bounded above on R.

    The ``upper_bounded`` flag is a validity claim: when set, the degree must
    be even (>= 2) and the leading coefficient strictly negative, so that
    ``sup_R f`` is finite.
    """

    coeffs: tuple[Number, ...]
    upper_bounded: bool = False
    name: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", trim_coeffs(self.coeffs))
        # constants are representable (He_0 lives here) but never validate as
        # links; validate_link and the analysis operations enforce degree >= 1
        if self.upper_bounded:
            ok, reason = _upper_bounded_check(self.coeffs)
            if not ok:
                raise ValueError(f"not upper-bounded: {reason}")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def leading(self) -> Number:
        return self.coeffs[-1]

    def evaluate(self, u):
        """Evaluate at a scalar or ndarray using Horner's scheme."""
        return npoly.polyval(u, np.asarray(self.coeffs, dtype=float))

    __call__ = evaluate

    def derivative(self) -> "PolynomialLink":
        d = poly_derivative(self.coeffs)
        if len(d) == 1 and d[0] == 0:
            raise ValueError("derivative of a linear link is constant")
        return PolynomialLink(d)

    def power(self, n: int) -> "PolynomialLink":
        return PolynomialLink(poly_pow(self.coeffs, n))

    def abs_coeff_sum(self) -> float:
        return float(sum(abs(c) for c in self.coeffs))


def _upper_bounded_check(coeffs: tuple[Number, ...]) -> tuple[bool, str]:
    degree = len(coeffs) - 1
    if degree < 2:
        return False, f"degree {degree} < 2"
    if degree % 2 != 0:
        return False, f"odd degree {degree} is unbounded above"
    if not coeffs[-1] < 0:
        return False, f"leading coefficient {coeffs[-1]} is not negative"
    return True, "ok"


@dataclass(frozen=True)
class LinkValidation:
    ok: bool
    reason: str

    def __bool__(self) -> bool:
        return self.ok


def validate_link(link: PolynomialLink) -> LinkValidation:
    """Check boundedness structure; unflagged links only need to be nonconstant.

    Upper-bounded links (reward targets) must have even degree >= 2 and a
    strictly negative leading coefficient. Student activations used without
    the flag are accepted whenever they are nonconstant.
    """
    if link.degree < 1:
        return LinkValidation(False, "constant polynomial")
    if not link.upper_bounded:
        return LinkValidation(True, "nonconstant (unflagged)")
    ok, reason = _upper_bounded_check(link.coeffs)
    return LinkValidation(ok, reason)


def hermite_basis_coeffs(i: int) -> tuple[int, ...]:
    """Monomial coefficients of the probabilists' Hermite polynomial He_i.

    Built from He_{i+1}(u) = u He_i(u) - i He_{i-1}(u) in integer arithmetic.
    """
    if i < 0:
        raise ValueError("index must be >= 0")
    if i > HERMITE_CAP:
        raise ValueError(f"Hermite index {i} exceeds cap {HERMITE_CAP}")
    prev: tuple[int, ...] = (1,)
    if i == 0:
        return prev
    cur: tuple[int, ...] = (0, 1)
    for k in range(1, i):
        shifted = (0,) + cur
        nxt = [shifted[j] - (k * prev[j] if j < len(prev) else 0) for j in range(len(shifted))]
        prev, cur = cur, trim_coeffs(nxt)
    return tuple(int(c) for c in cur)


HERMITE_CAP = 64


def hermite_link(i: int, scale: Number = 1) -> PolynomialLink:
    """He_i as a PolynomialLink, optionally scaled (scale < 0 flips sign)."""
    coeffs = tuple(scale * c for c in hermite_basis_coeffs(i))
    return PolynomialLink(coeffs)


# Shipped link presets. Coefficients are integers so that the exact Hermite
# path stays exact.
PRESETS: dict[str, PolynomialLink] = {
    "quad-down": PolynomialLink((0, 0, -1), upper_bounded=True, name="quad-down"),
    "shifted-quad": PolynomialLink((0, 2, -1), upper_bounded=True, name="shifted-quad"),
    "neg-he4": PolynomialLink((-3, 0, 6, 0, -1), upper_bounded=True, name="neg-he4"),
    "double-well": PolynomialLink((-1, 0, 2, 0, -1), upper_bounded=True, name="double-well"),
}

# Default student activation for each target preset, chosen so that the
# student-side coefficient V_{p_gen - 1} is nonzero (neg-He4 itself has
# V_1 = 0 and cannot be its own activation).
DEFAULT_ACTIVATIONS: dict[str, str] = {
    "quad-down": "quad-down",
    "shifted-quad": "shifted-quad",
    "neg-he4": "double-well",
    "double-well": "double-well",
}


def resolve_link(spec, upper_bounded: bool = True) -> PolynomialLink:
    """Resolve a preset name or raw coefficient list into a PolynomialLink."""
    if isinstance(spec, PolynomialLink):
        return spec
    if isinstance(spec, str):
        try:
            return PRESETS[spec]
        except KeyError:
            raise KeyError(
                f"unknown link preset {spec!r}; available: {sorted(PRESETS)}"
            ) from None
    return PolynomialLink(tuple(spec), upper_bounded=upper_bounded)
