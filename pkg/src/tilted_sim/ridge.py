"""Second-layer weighted ridge fitting under projected truncation.

The estimator solves, over readout vectors a,

    min_a (1/T2) sum_i 1_{B_R}(x_i) W(x_i, y_i) (y_i - <a, psi(x_i)>)^2
          + lambda |a|^2

with W one of: e^{y/beta2} (label rule), e^{r_{a0}(x)/beta2} with the frozen
initial readout a0 (surrogate rule), or 1 (uniform). The normal equations are
solved by a symmetric positive-definite factorization with a trace-scaled
jitter fallback, since exponential weights can ill-condition the Gram matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

from .maxima import MaximaReport
from .network import NetworkState, feature_map, network_reward
from .sampling import SampleBatch


class WeightRule(str, Enum):
    LABEL = "label"
    SURROGATE = "surrogate"
    UNIFORM = "uniform"


class RidgeError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProjectedTruncation:
    """Orthonormal basis of S = span{theta*, w_1..w_N} and the ball radius."""

    basis: np.ndarray    # (d, d_S)
    radius: float
    d_s: int

    def project(self, xs: np.ndarray) -> np.ndarray:
        """S-coordinates of the rows of xs."""
        return np.atleast_2d(xs) @ self.basis

    def inside(self, xs: np.ndarray) -> np.ndarray:
        z = self.project(xs)
        return np.einsum("ij,ij->i", z, z) <= self.radius * self.radius

    def theta_coords(self, theta_star: np.ndarray) -> np.ndarray:
        return self.basis.T @ theta_star


RANK_TOL = 1e-10


def build_truncation(net: NetworkState, theta_star: np.ndarray | None,
                     radius: float | None = None, slack: float = 2.0) -> ProjectedTruncation:
    """Orthonormalize [theta* | w_1 .. w_N]; radius defaults to slack * sqrt(d_S).

    Dropping theta_star (None) mimics the agnostic setting where S is spanned
    by the learned directions only.
    """
    cols = []
    if theta_star is not None:
        cols.append(np.asarray(theta_star, dtype=float))
    cols.extend(net.w_rows)
    mat = np.stack(cols, axis=1)
    u, s, _ = np.linalg.svd(mat, full_matrices=False)
    rank = int(np.sum(s > RANK_TOL * s[0]))
    basis = u[:, :rank]
    r = slack * math.sqrt(rank) if radius is None else float(radius)
    if r < math.sqrt(rank):
        raise ValueError(f"radius {r} below sqrt(d_S) = {math.sqrt(rank):.3f}")
    return ProjectedTruncation(basis=basis, radius=r, d_s=rank)


def subspace_reward_fn(net: NetworkState, trunc: ProjectedTruncation,
                       readout: np.ndarray | None = None):
    """Network reward as a function of S-coordinates (valid because the
    network depends on x only through P_S x once S contains every w_j)."""
    rows_s = net.w_rows @ trunc.basis         # (N, d_S)
    a = net.readout if readout is None else np.asarray(readout, dtype=float)
    biases = net.biases
    act = net.activation
    n = net.n_neurons

    def reward(z: np.ndarray) -> np.ndarray:
        pre = np.atleast_2d(z) @ rows_s.T + biases[None, :]
        return act.evaluate(pre) @ a / n

    return reward


@dataclass(frozen=True)
class RidgeFit:
    a_hat: np.ndarray
    lambda_: float
    weight_rule: WeightRule
    beta2: float
    n_used: int
    gram_condition: float
    normal_residual: float

    def predict(self, xs: np.ndarray, net: NetworkState) -> np.ndarray:
        return network_reward(xs, net, readout=self.a_hat)


def ridge_weights(rule: WeightRule, batch: SampleBatch, net: NetworkState,
                  beta2: float) -> np.ndarray:
    if rule == WeightRule.LABEL:
        return np.exp(batch.ys / beta2)
    if rule == WeightRule.SURROGATE:
        return np.exp(network_reward(batch.xs, net) / beta2)
    return np.ones(batch.n)


def fit_weighted_ridge(batch: SampleBatch, net: NetworkState,
                       trunc: ProjectedTruncation, rule: WeightRule | str,
                       beta2: float, lambda_: float) -> RidgeFit:
    """Solve the truncated weighted ridge normal equations.

    (Psi^T D Psi / T2 + lambda I) a = Psi^T D y / T2 with
    D = diag(1_{B_R} W). Truncated-out samples contribute exactly zero to
    both sides.
    """
    rule = WeightRule(rule)
    if lambda_ < 0:
        raise ValueError("lambda must be >= 0")
    inside = trunc.inside(batch.xs)
    n_used = int(inside.sum())
    if n_used == 0:
        raise RidgeError("all samples fall outside the truncation ball")
    weights = ridge_weights(rule, batch, net, beta2) * inside
    psi = feature_map(batch.xs, net)
    t2 = batch.n
    gram = (psi * weights[:, None]).T @ psi / t2
    moment = psi.T @ (weights * batch.ys) / t2
    system = gram + lambda_ * np.eye(net.n_neurons)
    cond = float(np.linalg.cond(system))
    try:
        a_hat = scipy.linalg.solve(system, moment, assume_a="pos")
    except np.linalg.LinAlgError:
        a_hat = None
    except scipy.linalg.LinAlgError:  # pragma: no cover - alias of the above
        a_hat = None
    if a_hat is None or not np.all(np.isfinite(a_hat)):
        if lambda_ == 0:
            rank = int(np.linalg.matrix_rank(gram))
            raise RidgeError(
                f"weighted Gram matrix is singular at lambda=0 "
                f"(rank {rank} < {net.n_neurons}); pass lambda > 0")
        jitter = 1e-12 * float(np.trace(system)) / net.n_neurons
        a_hat = scipy.linalg.solve(system + jitter * np.eye(net.n_neurons),
                                   moment, assume_a="pos")
    residual = float(np.linalg.norm(system @ a_hat - moment))
    rel_residual = residual / (np.linalg.norm(moment) + 1e-300)
    return RidgeFit(a_hat=a_hat, lambda_=lambda_, weight_rule=rule, beta2=beta2,
                    n_used=n_used, gram_condition=cond, normal_residual=rel_residual)


def ridge_objective(batch: SampleBatch, net: NetworkState, trunc: ProjectedTruncation,
                    rule: WeightRule | str, beta2: float, lambda_: float,
                    a: np.ndarray) -> float:
    """The regularized empirical objective at readout a (test oracle)."""
    rule = WeightRule(rule)
    inside = trunc.inside(batch.xs)
    weights = ridge_weights(rule, batch, net, beta2) * inside
    preds = network_reward(batch.xs, net, readout=a)
    return float(np.mean(weights * (batch.ys - preds) ** 2)
                 + lambda_ * float(a @ a))


def lambda_schedule(rule: WeightRule | str, beta2: float, t2: int, delta0: float,
                    maxima: MaximaReport, c_lambda: float = 1.0, tau: float = 0.0,
                    m0_r: float | None = None, c0_r: float | None = None) -> float:
    """Regularization schedules tied to the low-temperature moment scales.

    Label rule:     lambda = C beta2^{(alpha+1)/2} e^{L*/beta2} (T2 delta0)^{-1/2}
                    with alpha = 1/(2 p_max) and L* = B* + tau.
    Surrogate rule: lambda = C e^{M_{0,R}/beta2} (C_{0,R}(beta2) T2 delta0)^{-1/2},
                    consuming the surrogate peak M_{0,R} and mass ratio C_{0,R}.
    Uniform rule:   the label formula without the exponential factor.
    """
    rule = WeightRule(rule)
    if not (0 < delta0 <= 1):
        raise ValueError("delta0 must lie in (0, 1]")
    if t2 < 1:
        raise ValueError("t2 must be >= 1")
    if beta2 <= 0:
        raise ValueError("beta2 must be positive")
    root = math.sqrt(t2 * delta0)
    if rule == WeightRule.SURROGATE:
        if m0_r is None or c0_r is None:
            raise ValueError("surrogate schedule needs m0_r and c0_r extras")
        return c_lambda * math.exp(m0_r / beta2) / (math.sqrt(c0_r) * root)
    alpha = maxima.alpha
    scale = beta2 ** ((alpha + 1.0) / 2.0) / root
    if rule == WeightRule.LABEL:
        l_star = maxima.b_star + tau
        scale *= math.exp(l_star / beta2)
    return c_lambda * scale
