"""Coverage functionals, surrogate constants, and admissible temperatures.

The coverage functional integrates, over the interpolation path between the
target tilted policy and the learned one, the L2(nu) norm of the density
ratio against the weighted regression measure nu. All normalizers reduce to
reference-measure expectations of exponential tilts over the d_S-dimensional
projected Gaussian, evaluated on one common Monte Carlo sample so every point
of the t-grid sees the same randomness.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
import scipy.optimize

from .quadrature import gauss_legendre
from .ridge import ProjectedTruncation


class CoverageError(RuntimeError):
    pass


@dataclass(frozen=True)
class CoverageEstimate:
    d_value: float
    t_grid: tuple[float, ...]
    per_t_norms: tuple[float, ...]
    se: float
    ess: float


def _log_mean_exp(log_terms: np.ndarray, axis=None) -> np.ndarray:
    shift = np.max(log_terms, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    out = np.log(np.mean(np.exp(log_terms - shift), axis=axis)) + np.squeeze(shift, axis=axis)
    return out


def coverage_D(scheme: str, reward_fn: Callable, true_fn: Callable, beta2: float,
               trunc: ProjectedTruncation, rng: np.random.Generator,
               surrogate_fn: Callable | None = None, n_mc: int = 100_000,
               t_points: int = 17, n_bootstrap: int = 48,
               min_ess: float = 30.0) -> CoverageEstimate:
    """Estimate D_{w,R} = integral over t of |d pi_t / d nu|_{L2(nu)}.

    pi_t tilts by r* + t (r_hat - r*); nu tilts by r* (label scheme) or by the
    frozen surrogate reward (surrogate scheme). ``reward_fn``, ``true_fn`` and
    ``surrogate_fn`` all act on S-coordinates. Norms are evaluated on a
    Gauss-Legendre t-grid with common random numbers; the returned SE is a
    seeded bootstrap over the shared sample.
    """
    if scheme not in ("label", "surrogate"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if scheme == "surrogate" and surrogate_fn is None:
        raise ValueError("surrogate scheme needs the frozen surrogate reward")
    z = rng.standard_normal((n_mc, trunc.d_s))
    inside = np.einsum("ij,ij->i", z, z) <= trunc.radius ** 2
    if not inside.any():
        raise CoverageError("no samples inside the truncation ball")
    r_true = np.asarray(true_fn(z), dtype=float)
    delta = np.asarray(reward_fn(z), dtype=float) - r_true
    r_nu = r_true if scheme == "label" else np.asarray(surrogate_fn(z), dtype=float)

    log_in = np.where(inside, 0.0, -np.inf)
    log_nu = r_nu / beta2 + log_in
    # ESS of the nu-weights guards the whole computation
    shift = np.max(log_nu[inside])
    w_nu = np.exp(log_nu - shift)
    ess = float(w_nu.sum() ** 2 / np.sum(w_nu * w_nu))
    if ess < min_ess:
        raise CoverageError(
            f"effective sample size {ess:.1f} too small for the nu-weights; "
            "increase n_mc or use a larger beta2")

    t_nodes, t_weights = gauss_legendre(0.0, 1.0, t_points)

    def norms_for(idx: np.ndarray | None) -> np.ndarray:
        sel = slice(None) if idx is None else idx
        lt = r_true[sel][:, None] + np.outer(delta[sel], t_nodes)   # (n, T)
        li = log_in[sel][:, None]
        log_zt = _log_mean_exp(lt / beta2 + li, axis=0)
        log_num = _log_mean_exp((2.0 * lt - r_nu[sel][:, None]) / beta2 + li, axis=0)
        log_znu = _log_mean_exp(log_nu[sel], axis=0)
        return np.exp(0.5 * (log_znu + log_num) - log_zt)

    norms = norms_for(None)
    d_value = float(np.sum(t_weights * norms))
    boots = np.empty(n_bootstrap)
    for b in range(n_bootstrap):
        idx = rng.integers(0, n_mc, size=n_mc)
        boots[b] = float(np.sum(t_weights * norms_for(idx)))
    se = float(np.std(boots, ddof=1))
    return CoverageEstimate(d_value=d_value, t_grid=tuple(t_nodes),
                            per_t_norms=tuple(norms), se=se, ess=ess)


@dataclass(frozen=True)
class ShiftedL2Error:
    """inf over constants c of |r_hat - r* - c| in L2 of the weighted measure."""

    value: float
    se: float
    shift: float   # the minimizing c (weighted mean of the error)
    ess: float


def shifted_l2_error(reward_fn: Callable, true_fn: Callable, weight_fn: Callable,
                     beta2: float, trunc: ProjectedTruncation,
                     rng: np.random.Generator, n_mc: int = 100_000,
                     n_bootstrap: int = 48) -> ShiftedL2Error:
    """Monte Carlo estimate of inf_c |r_hat - r* - c|_{L2(nu)}.

    nu tilts the truncated reference measure by e^{weight_fn(z)/beta2}; the
    optimal shift is the nu-mean of the error (an L2 projection onto
    constants), evaluated with self-normalized weights.
    """
    z = rng.standard_normal((n_mc, trunc.d_s))
    inside = np.einsum("ij,ij->i", z, z) <= trunc.radius ** 2
    if not inside.any():
        raise CoverageError("no samples inside the truncation ball")
    err = np.asarray(reward_fn(z), dtype=float) - np.asarray(true_fn(z), dtype=float)
    log_w = np.where(inside, np.asarray(weight_fn(z), dtype=float) / beta2, -np.inf)
    shift_max = np.max(log_w[inside])
    w = np.exp(log_w - shift_max)
    wsum = float(w.sum())
    ess = wsum * wsum / float(np.sum(w * w))
    c = float(np.sum(w * err) / wsum)
    second = float(np.sum(w * (err - c) ** 2) / wsum)
    value = math.sqrt(max(second, 0.0))
    boots = np.empty(n_bootstrap)
    for b in range(n_bootstrap):
        idx = rng.integers(0, n_mc, size=n_mc)
        wi, ei = w[idx], err[idx]
        ws = float(wi.sum())
        if ws == 0:
            boots[b] = value
            continue
        ci = float(np.sum(wi * ei) / ws)
        boots[b] = math.sqrt(max(float(np.sum(wi * (ei - ci) ** 2) / ws), 0.0))
    return ShiftedL2Error(value=value, se=float(np.std(boots, ddof=1)),
                          shift=c, ess=ess)


@dataclass(frozen=True)
class SurrogateConstant:
    c_value: float      # C_{0,R}(beta2) = e^{M_{0,R}/beta2} / Z^{a0}_{beta2,R}
    m0_r: float         # sup of the surrogate reward over the ball
    z_scaled: float     # integral of e^{(f0 - M)/beta2} over the ball (gamma measure)
    argmax: np.ndarray


def _maximize_on_ball(f: Callable, d_s: int, radius: float,
                      rng: np.random.Generator, n_starts: int = 64) -> tuple[float, np.ndarray]:
    """Multi-start ascent of f over the Euclidean ball |z| <= radius."""
    starts = [np.zeros(d_s)]
    raw = rng.standard_normal((n_starts - 1, d_s))
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    radii = radius * rng.uniform(0, 1, size=n_starts - 1) ** (1.0 / d_s)
    starts.extend(raw * radii[:, None])
    # include boundary starts: the max of a polynomial often sits on the shell
    starts.extend(radius * 0.999 * raw[: max(4, n_starts // 8)])

    best_val, best_z = -np.inf, np.zeros(d_s)
    cons = ({"type": "ineq", "fun": lambda zz: radius ** 2 - float(zz @ zz)},)
    n_ok = 0
    for z0 in starts:
        res = scipy.optimize.minimize(
            lambda zz: -float(f(zz[None, :])[0]), z0, method="SLSQP",
            constraints=cons, options={"maxiter": 200, "ftol": 1e-10})
        if not (res.success or res.status == 0):
            continue
        n_ok += 1
        val = -float(res.fun)
        if val > best_val:
            best_val, best_z = val, res.x
    if n_ok == 0:
        raise CoverageError("surrogate maximization failed from every start")
    return best_val, best_z


def surrogate_constant(surrogate_fn: Callable, beta2: float, trunc: ProjectedTruncation,
                       rng: np.random.Generator, n_mc: int = 200_000,
                       n_starts: int = 64) -> SurrogateConstant:
    """Peak-to-mass ratio of the frozen surrogate's tilt on the projected ball.

    The mass integral uses a mixture importance-sampling proposal: half
    reference Gaussian, half a Gaussian of width ~ sqrt(beta2) centred at the
    maximizer, which keeps the estimator alive when the tilt concentrates.
    """
    if beta2 <= 0:
        raise ValueError("beta2 must be positive")
    d_s = trunc.d_s
    radius = trunc.radius
    m0, z_star = _maximize_on_ball(surrogate_fn, d_s, radius, rng, n_starts)
    sigma = min(1.0, max(1e-3, math.sqrt(beta2)))
    n_half = n_mc // 2
    z_ref = rng.standard_normal((n_half, d_s))
    z_loc = z_star[None, :] + sigma * rng.standard_normal((n_mc - n_half, d_s))
    z = np.vstack([z_ref, z_loc])
    inside = np.einsum("ij,ij->i", z, z) <= radius * radius
    log_phi = -0.5 * np.einsum("ij,ij->i", z, z) - 0.5 * d_s * math.log(2 * math.pi)
    diff = z - z_star[None, :]
    log_loc = (-0.5 * np.einsum("ij,ij->i", diff, diff) / sigma ** 2
               - 0.5 * d_s * math.log(2 * math.pi * sigma ** 2))
    log_q = np.logaddexp(log_phi, log_loc) - math.log(2.0)
    f_vals = np.asarray(surrogate_fn(z), dtype=float)
    integrand = np.where(inside, np.exp((f_vals - m0) / beta2 + log_phi - log_q), 0.0)
    z_scaled = float(np.mean(integrand))
    if z_scaled <= 0:
        raise CoverageError("surrogate mass estimate collapsed to zero")
    return SurrogateConstant(c_value=1.0 / z_scaled, m0_r=m0,
                             z_scaled=z_scaled, argmax=z_star)


@dataclass(frozen=True)
class GammaParams:
    """Constants of the temperature/truncation cost Gamma."""

    p_max: int
    kappa: float
    c_temp: float
    c_r: float
    beta_bar: float
    beta_star: float

    def gamma(self, beta: float) -> float:
        mismatch = (1.0 / (2 * self.p_max) + self.c_temp * self.beta_bar ** self.kappa)
        return mismatch * abs(self.beta_star - beta) + self.c_r * beta


@dataclass(frozen=True)
class RateParams:
    """Resource levels entering the learning-cost envelopes."""

    rho_n: float        # N^{-1} + epsilon
    t2: float
    delta0: float
    alpha: float | None = None    # 1/(2 p_max), label scheme
    alpha0: float | None = None   # surrogate mass exponent, <= d_S
    m_r: float = 1.0              # sup |r*| over the ball


def learning_envelope(scheme: str, beta: float, rates: RateParams) -> float:
    """The scheme's learning-cost shape L_w(beta)."""
    stat = (rates.t2 * rates.delta0) ** (-0.25)
    if scheme == "label":
        if rates.alpha is None:
            raise ValueError("label envelope needs alpha = 1/(2 p_max)")
        a = rates.alpha
        return beta ** (-(a + 3) / 2) * rates.rho_n + beta ** (-(a + 5) / 4) * stat
    if scheme == "surrogate":
        if rates.alpha0 is None:
            raise ValueError("surrogate envelope needs alpha0")
        a0 = rates.alpha0
        return beta ** (-1 - a0 / 2) * rates.rho_n + beta ** (-1 - a0 / 4) * stat
    raise ValueError(f"unknown scheme {scheme!r}")


@dataclass(frozen=True)
class AdmissibleSet:
    eta: float
    grid: tuple[float, ...]
    admissible: tuple[bool, ...]
    chosen_beta: float | None
    gamma_values: tuple[float, ...]


def _envelope_value(envelope, beta: float) -> float:
    if callable(envelope):
        return float(envelope(beta))
    if isinstance(envelope, Mapping):
        for key, val in envelope.items():
            if math.isclose(float(key), beta, rel_tol=1e-9):
                return float(val)
        keys = sorted(float(k) for k in envelope)
        if beta < keys[0] or beta > keys[-1]:
            raise ValueError(f"envelope table does not cover beta={beta}")
        hi = next(k for k in keys if k >= beta)
        lo = max(k for k in keys if k <= beta)
        if hi == lo:
            return float(envelope[lo])
        t = (math.log(beta) - math.log(lo)) / (math.log(hi) - math.log(lo))
        return float(math.exp((1 - t) * math.log(envelope[lo]) + t * math.log(envelope[hi])))
    return float(envelope)


def admissible_set(scheme: str, eta: float, envelope, rates: RateParams,
                   gamma_params: GammaParams, beta_grid) -> AdmissibleSet:
    """Admissible deployment temperatures under a coverage envelope.

    beta is admissible when M_R * envelope(beta) * L_w(beta) <= eta; among
    admissible temperatures the chosen one minimizes Gamma. An empty set is a
    valid outcome (chosen_beta = None).
    """
    grid = tuple(float(b) for b in beta_grid)
    if not grid:
        raise ValueError("beta grid is empty")
    mask = []
    gammas = []
    for beta in grid:
        bound = rates.m_r * _envelope_value(envelope, beta) * learning_envelope(scheme, beta, rates)
        mask.append(bool(bound <= eta))
        gammas.append(gamma_params.gamma(beta))
    chosen = None
    best = math.inf
    for beta, ok, g in zip(grid, mask, gammas):
        if ok and g < best:
            best, chosen = g, beta
    return AdmissibleSet(eta=eta, grid=grid, admissible=tuple(mask),
                         chosen_beta=chosen, gamma_values=tuple(gammas))


def calibrate_gamma(link, radius: float, subspace_dim: int, beta_star: float,
                    beta_grid, beta_bar: float, maxima=None) -> GammaParams:
    """Fit C_temp and C_R once from measured T_temp / T_cut on a grid.

    C_temp is the smallest constant making the mismatch bound hold on all
    grid pairs; C_R the smallest constant with |T_cut(R)| <= C_R beta on the
    grid. Both are then frozen into GammaParams.
    """
    from .maxima import analyze_maxima
    from .tilted import target_truncated_expectation, tilted_1d_moments

    if maxima is None:
        maxima = analyze_maxima(link)
    betas = sorted(float(b) for b in beta_grid)
    means = {b: tilted_1d_moments(link, b, maxima).mean for b in betas}
    base = 1.0 / (2 * maxima.p_max)
    c_temp = 0.0
    for i, b1 in enumerate(betas):
        for b2 in betas[i + 1:]:
            t_temp = abs(means[b1] - means[b2])
            need = (t_temp / (b2 - b1) - base) / (beta_bar ** maxima.kappa)
            c_temp = max(c_temp, need)
    c_r = 0.0
    for b in betas:
        trunc_exp, _, _ = target_truncated_expectation(link, b, radius, subspace_dim, maxima)
        c_r = max(c_r, abs(means[b] - trunc_exp) / b)
    return GammaParams(p_max=maxima.p_max, kappa=maxima.kappa,
                       c_temp=max(c_temp, 0.0), c_r=c_r,
                       beta_bar=beta_bar, beta_star=beta_star)
