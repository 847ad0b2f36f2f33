"""Reward-weighted online spherical SGD for first-layer feature recovery.

Each neuron's direction follows

    w <- normalize(w + eta1 a0_j y e^{y/beta1} sigma'(<w, x>) P_w_perp x)

on a shared fresh-sample stream. The population drift of the overlap
m = <theta*, w> is available as an independent quadrature oracle, and the
default step size follows the stability scale mu_p d^{-(p/2 v 1)} normalized
by the second moment of the weighted update coefficient (the bare scale is
unstable for links with heavy weighted moments).

Crossing times are measured on |m|: for the even-signal links studied here
the two antipodal directions are statistically indistinguishable to the
first layer, and the readout stage absorbs the sign.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .hermite import generative_exponent, student_signal, teacher_signal
from .links import PolynomialLink
from .network import init_network
from .quadrature import GAUSS_HERMITE_CAP, converge_by_doubling, gauss_hermite_standard, gauss_legendre
from .sampling import default_theta_star, stream_rng

try:  # optional accelerator for the per-sample loop; results stay deterministic
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is present in CI
    HAVE_NUMBA = False

CHUNK = 8192


def sgd_step(w: np.ndarray, x: np.ndarray, y: float, eta1: float, a0j: float,
             beta1: float, activation: PolynomialLink) -> tuple[np.ndarray, bool]:
    """One reward-weighted spherical SGD step; the increment is tangent to w.

    Returns (new unit vector, degenerate_flag); the flag is set only in the
    measure-zero event that the update exactly annihilates w.
    """
    if beta1 <= 0:
        raise ValueError("beta1 must be positive")
    h = float(w @ x)
    coef = eta1 * a0j * y * math.exp(y / beta1) * float(activation.derivative().evaluate(h))
    increment = coef * (x - h * w)
    new = w + increment
    norm = float(np.linalg.norm(new))
    if norm == 0.0 or not math.isfinite(norm):
        return w, True
    return new / norm, False


def population_drift(overlap: float, beta1: float, link: PolynomialLink,
                     activation: PolynomialLink, tau: float = 0.0,
                     abs_tol: float = 1e-8, start_nodes: int = 128,
                     zeta_nodes: int = 64) -> float:
    """Expected overlap increment per unit eta1 a0_j, by tensor quadrature.

    With (u, h) jointly Gaussian at correlation m = overlap,
    drift = E[(sigma*(u) + zeta) e^{(sigma*(u)+zeta)/beta1}
              sigma'(h) (u - m h)].
    Serves as the oracle for empirical single-step drift tests.
    """
    if not -1.0 < overlap < 1.0:
        raise ValueError("overlap must lie in (-1, 1)")
    m = float(overlap)
    link_coeffs = np.asarray(link.coeffs, dtype=float)
    actd = np.asarray(activation.derivative().coeffs, dtype=float)
    root = math.sqrt(1.0 - m * m)

    def evaluate(n: int) -> float:
        g, wg = gauss_hermite_standard(n)
        s = npoly.polyval(g, link_coeffs)
        if tau == 0.0:
            gz = s * np.exp(s / beta1)
        else:
            z, wz = gauss_legendre(-tau, tau, zeta_nodes)
            wz = wz / (2.0 * tau)
            y = s[:, None] + z[None, :]
            gz = (y * np.exp(y / beta1)) @ wz
        h = m * g[:, None] + root * g[None, :]
        inner = npoly.polyval(h, actd) * (g[:, None] - m * h)
        return float(wg @ (gz[:, None] * inner) @ wg)

    return converge_by_doubling(evaluate, start_nodes, GAUSS_HERMITE_CAP // 2,
                                abs_tol, what="population drift")


def weighted_moment_scale(link: PolynomialLink, activation: PolynomialLink,
                          beta1: float, tau: float = 0.0, nodes: int = 400,
                          zeta_nodes: int = 64) -> float:
    """Lambda^2 = E[((sigma*+zeta) e^{(sigma*+zeta)/beta1})^2] E[sigma'(h)^2]."""
    g, wg = gauss_hermite_standard(nodes)
    s = npoly.polyval(g, np.asarray(link.coeffs, dtype=float))
    if tau == 0.0:
        w2 = float(wg @ (s * np.exp(s / beta1)) ** 2)
    else:
        z, wz = gauss_legendre(-tau, tau, zeta_nodes)
        wz = wz / (2.0 * tau)
        y = s[:, None] + z[None, :]
        w2 = float(wg @ (((y * np.exp(y / beta1)) ** 2) @ wz))
    actd = np.asarray(activation.derivative().coeffs, dtype=float)
    s2 = float(wg @ npoly.polyval(g, actd) ** 2)
    return w2 * s2


@dataclass(frozen=True)
class RecoverySignal:
    """Hermite-level constants of a (link, activation, beta1, tau) instance."""

    p_gen: int
    i_star: int
    u_p: float          # teacher coefficient U_{p_gen}(beta1)
    v_p_minus_1: float  # student coefficient V_{p_gen - 1}
    mu: float           # p_gen * s_init * U_p * V_{p-1}
    lambda_sq: float    # weighted second-moment normalization

    @property
    def drift_rate_per_unit_eta(self) -> float:
        """Leading drift constant U_p V_{p-1} / (p-1)! per unit eta1 a0."""
        return self.u_p * self.v_p_minus_1 / math.factorial(self.p_gen - 1)


def recovery_signal(link: PolynomialLink, activation: PolynomialLink, beta1: float,
                    tau: float = 0.0, s_init: float = 1.0,
                    p_gen: int | None = None, i_star: int | None = None) -> RecoverySignal:
    if p_gen is None:
        report = generative_exponent(link)
        p_gen, i_star = int(report.ge), report.i_star
    u_p = teacher_signal(p_gen, beta1, link, tau)
    v = float(student_signal(p_gen, activation))
    if v == 0.0:
        raise ValueError(
            "student activation has a vanishing signal coefficient at the "
            "generative exponent; pick an activation with V_{p-1} != 0")
    return RecoverySignal(p_gen=p_gen, i_star=i_star or 1, u_p=u_p, v_p_minus_1=v,
                          mu=p_gen * s_init * u_p * v,
                          lambda_sq=weighted_moment_scale(link, activation, beta1, tau))


def default_step_size(signal: RecoverySignal, d: int, c_eta: float = 0.5,
                      delta: float = 0.05) -> float:
    """eta1 = c_eta delta |mu_p| / (Lambda^2 d^{(p/2) v 1}).

    The Lambda^2 factor implements the link-dependent stability constant: it
    keeps the per-step overlap noise below the initialization scale.
    """
    p = signal.p_gen
    return c_eta * delta * abs(signal.mu) / (signal.lambda_sq * d ** max(p / 2.0, 1.0))


def predicted_horizon(signal: RecoverySignal, eta1: float, d: int, c_wk: float,
                      s_init: float = 1.0) -> int:
    """Rough step count to weak recovery under the population drift."""
    rate = eta1 * s_init * abs(signal.drift_rate_per_unit_eta)
    if signal.p_gen >= 2:
        efolds = math.log(max(c_wk * math.sqrt(d), 1.5)) + 1.0
        return max(1, int(efolds / rate))
    return max(1, int(1.5 * c_wk / rate))


@dataclass(frozen=True)
class RecoveryTrajectory:
    grid_times: np.ndarray       # recorded step indices (0 = initialization)
    overlaps: np.ndarray         # (len(grid_times), N) signed overlaps
    t_weak: np.ndarray           # (N,) first |m| >= c_wk, -1 when absent
    t_strong: np.ndarray         # (N,) first |m| >= 1 - eps, -1 when absent
    recovered_fraction: float
    eta1: float
    t_max: int
    meta: dict = field(default_factory=dict)

    def crossing_quantile(self, q: float = 0.25, which: str = "weak") -> float:
        """q-quantile of crossing times over all neurons (censored = +inf).

        Returns nan when the quantile falls into the censored mass.
        """
        times = self.t_weak if which == "weak" else self.t_strong
        vals = np.where(times >= 0, times.astype(float), np.inf)
        out = float(np.quantile(vals, q))
        return out if math.isfinite(out) else math.nan


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _sgd_chunk(w_rows, m, coef_scale, actd, xs, us, wts, xxs, c_wk,
                   strong_level, t_weak, t_strong, t_start, grid, grid_pos,
                   snapshots):  # pragma: no cover - exercised via run_recovery
        nb, d = xs.shape
        n = w_rows.shape[0]
        n_coef = actd.shape[0]
        pos = grid_pos
        for k in range(nb):
            t = t_start + k + 1
            for j in range(n):
                h = 0.0
                for l in range(d):
                    h += w_rows[j, l] * xs[k, l]
                sp = actd[n_coef - 1]
                for idx in range(n_coef - 2, -1, -1):
                    sp = sp * h + actd[idx]
                c = coef_scale[j] * wts[k] * sp
                denom = math.sqrt(1.0 + c * c * (xxs[k] - h * h))
                mj = (m[j] + c * (us[k] - h * m[j])) / denom
                m[j] = mj
                for l in range(d):
                    w_rows[j, l] = (w_rows[j, l] + c * (xs[k, l] - h * w_rows[j, l])) / denom
                am = abs(mj)
                if t_weak[j] < 0 and am >= c_wk:
                    t_weak[j] = t
                if t_strong[j] < 0 and am >= strong_level:
                    t_strong[j] = t
            while pos < grid.shape[0] and grid[pos] == t:
                for j in range(n):
                    snapshots[pos, j] = m[j]
                pos += 1
        return pos


def _sgd_chunk_numpy(w_rows, m, coef_scale, actd, xs, us, wts, xxs, c_wk,
                     strong_level, t_weak, t_strong, t_start, grid, grid_pos,
                     snapshots):
    pos = grid_pos
    for k in range(xs.shape[0]):
        t = t_start + k + 1
        x = xs[k]
        h = w_rows @ x
        coef = coef_scale * wts[k] * npoly.polyval(h, actd)
        denom = np.sqrt(1.0 + coef * coef * (xxs[k] - h * h))
        np.divide(m + coef * (us[k] - h * m), denom, out=m)
        w_rows += coef[:, None] * x[None, :] - (coef * h)[:, None] * w_rows
        w_rows /= denom[:, None]
        am = np.abs(m)
        newly_weak = (t_weak < 0) & (am >= c_wk)
        t_weak[newly_weak] = t
        newly_strong = (t_strong < 0) & (am >= strong_level)
        t_strong[newly_strong] = t
        while pos < grid.shape[0] and grid[pos] == t:
            snapshots[pos] = m
            pos += 1
    return pos


def run_recovery(d: int, n_neurons: int, link: PolynomialLink,
                 activation: PolynomialLink, tau: float, beta1: float, seed: int,
                 eta1: float | None = None, c_wk: float = 0.1, epsilon: float = 0.1,
                 t_max: int | None = None, *, s_init: float = 1.0,
                 exact_init: bool = False, n_grid: int = 48,
                 stop_fraction: float | None = None, t_mult: float = 8.0,
                 c_eta: float = 0.5, delta: float = 0.05,
                 shared_stream: bool = True, backend: str = "auto",
                 stream_id: int = 0, p_gen: int | None = None) -> RecoveryTrajectory:
    """Online recovery run for all neurons on a shared fresh-sample stream.

    Weak/strong crossing times are detected every step on |overlap|; signed
    overlaps are additionally recorded on a logarithmic time grid. Exhausting
    t_max with no recoveries returns an (all-censored) trajectory, not an
    error. With ``shared_stream=False`` each neuron consumes its own sample
    stream (variance studies); the default shares one stream as in the
    online setting.
    """
    theta_star = default_theta_star(d)
    signal = recovery_signal(link, activation, beta1, tau, s_init, p_gen=p_gen)
    if eta1 is None:
        eta1 = default_step_size(signal, d, c_eta=c_eta, delta=delta)
    if t_max is None:
        t_max = int(t_mult * predicted_horizon(signal, eta1, d, c_wk, s_init))
    net = init_network(d, n_neurons, activation, seed, s_init, stream_id=stream_id,
                       theta_star=theta_star,
                       exact_overlap=(1.0 / math.sqrt(d)) if exact_init else None)
    use_numba = HAVE_NUMBA if backend == "auto" else (backend == "numba")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is unavailable")
    kernel = _sgd_chunk if use_numba else _sgd_chunk_numpy

    if not shared_stream:
        return _run_independent_streams(net, link, theta_star, tau, beta1, seed,
                                        eta1, c_wk, epsilon, t_max, n_grid, kernel,
                                        signal, use_numba)

    rng = stream_rng(seed, stream_id + 1)
    w_rows = net.w_rows.copy()
    m = w_rows @ theta_star
    coef_scale = eta1 * net.readout
    actd = np.asarray(activation.derivative().coeffs, dtype=float)
    grid = np.unique(np.round(np.geomspace(1, max(t_max, 1), n_grid)).astype(np.int64))
    snapshots = np.zeros((grid.shape[0], n_neurons))
    t_weak = np.full(n_neurons, -1, dtype=np.int64)
    t_strong = np.full(n_neurons, -1, dtype=np.int64)
    link_coeffs = np.asarray(link.coeffs, dtype=float)

    t = 0
    pos = 0
    while t < t_max:
        nb = min(CHUNK, t_max - t)
        xs = rng.standard_normal((nb, d))
        zetas = rng.uniform(-tau, tau, nb) if tau > 0 else np.zeros(nb)
        us = xs @ theta_star
        ys = npoly.polyval(us, link_coeffs) + zetas
        wts = ys * np.exp(ys / beta1)
        xxs = np.einsum("ij,ij->i", xs, xs)
        pos = kernel(w_rows, m, coef_scale, actd, xs, us, wts, xxs, c_wk,
                     1.0 - epsilon, t_weak, t_strong, t, grid, pos, snapshots)
        t += nb
        m[:] = w_rows @ theta_star  # resync the incrementally tracked overlap
        if stop_fraction is not None and (t_weak >= 0).mean() >= stop_fraction:
            break

    recorded = pos
    return RecoveryTrajectory(
        grid_times=grid[:recorded], overlaps=snapshots[:recorded],
        t_weak=t_weak, t_strong=t_strong,
        recovered_fraction=float((t_weak >= 0).mean()),
        eta1=eta1, t_max=t_max,
        meta={
            "seed": seed, "d": d, "beta1": beta1, "tau": tau, "c_wk": c_wk,
            "epsilon": epsilon, "backend": "numba" if use_numba else "numpy",
            "steps_run": t, "u_p": signal.u_p, "mu": signal.mu,
            "lambda_sq": signal.lambda_sq, "s_init": s_init,
        },
    )


def _run_independent_streams(net, link, theta_star, tau, beta1, seed, eta1, c_wk,
                             epsilon, t_max, n_grid, kernel, signal, use_numba):
    """Per-neuron independent sample streams (config flag for variance studies)."""
    n_neurons, d = net.w_rows.shape
    actd = np.asarray(net.activation.derivative().coeffs, dtype=float)
    link_coeffs = np.asarray(link.coeffs, dtype=float)
    grid = np.unique(np.round(np.geomspace(1, max(t_max, 1), n_grid)).astype(np.int64))
    snapshots = np.zeros((grid.shape[0], n_neurons))
    t_weak = np.full(n_neurons, -1, dtype=np.int64)
    t_strong = np.full(n_neurons, -1, dtype=np.int64)
    for j in range(n_neurons):
        rng = stream_rng(seed, 1000 + j)
        w_j = net.w_rows[j:j + 1].copy()
        m_j = w_j @ theta_star
        tw = t_weak[j:j + 1]
        ts = t_strong[j:j + 1]
        t = 0
        pos = 0
        while t < t_max:
            nb = min(CHUNK, t_max - t)
            xs = rng.standard_normal((nb, d))
            zetas = rng.uniform(-tau, tau, nb) if tau > 0 else np.zeros(nb)
            us = xs @ theta_star
            ys = npoly.polyval(us, link_coeffs) + zetas
            wts = ys * np.exp(ys / beta1)
            xxs = np.einsum("ij,ij->i", xs, xs)
            pos = kernel(w_j, m_j, eta1 * net.readout[j:j + 1], actd, xs, us, wts,
                         xxs, c_wk, 1.0 - epsilon, tw, ts, t, grid, pos,
                         snapshots[:, j:j + 1])
            t += nb
            m_j[:] = w_j @ theta_star
    return RecoveryTrajectory(
        grid_times=grid, overlaps=snapshots, t_weak=t_weak, t_strong=t_strong,
        recovered_fraction=float((t_weak >= 0).mean()), eta1=eta1, t_max=t_max,
        meta={"seed": seed, "d": d, "beta1": beta1, "independent_streams": True,
              "backend": "numba" if use_numba else "numpy"},
    )


@dataclass(frozen=True)
class StudyCell:
    d: int
    beta1: float
    median: float
    ci_lo: float
    ci_hi: float
    values: tuple[float, ...]
    censored: int


@dataclass(frozen=True)
class StudyResult:
    cells: tuple[StudyCell, ...]
    slopes: dict

    def cell(self, d: int, beta1: float) -> StudyCell:
        for c in self.cells:
            if c.d == d and c.beta1 == beta1:
                return c
        raise KeyError((d, beta1))


def _bootstrap_median_ci(values: np.ndarray, rng: np.random.Generator,
                         n_boot: int = 400) -> tuple[float, float]:
    meds = np.empty(n_boot)
    n = len(values)
    for b in range(n_boot):
        meds[b] = np.median(values[rng.integers(0, n, n)])
    return float(np.quantile(meds, 0.05)), float(np.quantile(meds, 0.95))


def _loglog_slope(xs: np.ndarray, ys: np.ndarray) -> float:
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def scaling_study(dims, beta1s, repeats: int, link: PolynomialLink,
                  activation: PolynomialLink, seed: int, tau: float = 0.0,
                  n_neurons: int = 32, c_wk: float = 0.5, epsilon: float = 0.1,
                  quantile: float = 0.25, c_eta: float = 0.5, delta: float = 0.05,
                  t_mult: float = 10.0, backend: str = "auto",
                  p_gen: int | None = None) -> StudyResult:
    """Median weak-recovery times over a (d, beta1) grid with bootstrap CIs.

    The per-run statistic is the ``quantile`` crossing time over neurons
    (measured on |overlap|); cells whose runs all censor are marked. Log-log
    slope estimates in d (at each beta1) and in beta1 (at each d) are
    attached when at least two uncensored cells exist along the axis.
    """
    dims = [int(v) for v in dims]
    beta1s = [float(v) for v in beta1s]
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    cells = []
    stop_at = quantile + 2.0 / n_neurons + 0.05
    for d in dims:
        for b1 in beta1s:
            vals = []
            for r in range(repeats):
                run_seed = (seed * 1_000_003 + d * 1009 + int(b1 * 8) * 13 + r)
                traj = run_recovery(d, n_neurons, link, activation, tau, b1,
                                    seed=run_seed, c_wk=c_wk, epsilon=epsilon,
                                    exact_init=True, stop_fraction=stop_at,
                                    t_mult=t_mult, c_eta=c_eta, delta=delta,
                                    backend=backend, p_gen=p_gen)
                vals.append(traj.crossing_quantile(quantile))
            arr = np.asarray(vals, dtype=float)
            finite = arr[np.isfinite(arr)]
            censored = int(np.sum(~np.isfinite(arr)))
            if finite.size == 0 or censored > repeats // 2:
                cells.append(StudyCell(d=d, beta1=b1, median=math.nan,
                                       ci_lo=math.nan, ci_hi=math.nan,
                                       values=tuple(vals), censored=censored))
                continue
            med = float(np.median(finite))
            if finite.size >= 3:
                ci_lo, ci_hi = _bootstrap_median_ci(finite, stream_rng(seed, d + int(b1)))
            else:
                ci_lo = ci_hi = med
            cells.append(StudyCell(d=d, beta1=b1, median=med, ci_lo=ci_lo,
                                   ci_hi=ci_hi, values=tuple(vals), censored=censored))
    result = StudyResult(cells=tuple(cells), slopes={})
    slopes: dict = {}
    for b1 in beta1s:
        pts = [(c.d, c.median) for c in cells if c.beta1 == b1 and math.isfinite(c.median)]
        if len(pts) >= 2:
            xs, ys = zip(*pts)
            slopes[("d", b1)] = _loglog_slope(np.asarray(xs, float), np.asarray(ys, float))
    for d in dims:
        pts = [(c.beta1, c.median) for c in cells if c.d == d and math.isfinite(c.median)]
        if len(pts) >= 2:
            xs, ys = zip(*pts)
            slopes[("beta1", d)] = _loglog_slope(np.asarray(xs, float), np.asarray(ys, float))
    return StudyResult(cells=result.cells, slopes=slopes)
