"""Two-layer student network: state, feature map, bias sampling.

The network computes r_a(x) = (1/N) sum_j a_j sigma(<w_j, x> + b_j) with
unit-norm first-layer rows. Biases are zero during feature recovery and are
sampled uniformly for the ridge stage.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .links import PolynomialLink
from .sampling import stream_rng


@dataclass(frozen=True)
class NetworkState:
    w_rows: np.ndarray     # (N, d), unit rows
    biases: np.ndarray     # (N,)
    readout: np.ndarray    # (N,)
    s_init: float
    activation: PolynomialLink

    @property
    def n_neurons(self) -> int:
        return self.w_rows.shape[0]

    @property
    def d(self) -> int:
        return self.w_rows.shape[1]

    def check_unit_rows(self, tol: float = 1e-10) -> None:
        norms = np.linalg.norm(self.w_rows, axis=1)
        worst = float(np.max(np.abs(norms - 1.0)))
        if worst > tol:
            raise ValueError(f"first-layer rows drifted off the sphere by {worst:.2e}")

    def with_biases(self, biases: np.ndarray) -> "NetworkState":
        return replace(self, biases=np.asarray(biases, dtype=float))

    def with_readout(self, readout: np.ndarray) -> "NetworkState":
        return replace(self, readout=np.asarray(readout, dtype=float))


def init_network(d: int, n_neurons: int, activation: PolynomialLink, seed: int,
                 s_init: float = 1.0, stream_id: int = 0,
                 theta_star: np.ndarray | None = None,
                 exact_overlap: float | None = None) -> NetworkState:
    """Random initialization: rows uniform on the sphere, readout +- s_init.

    With ``exact_overlap`` set, each row's overlap with theta_star is pinned
    to +-exact_overlap (sign from the raw draw), which removes initialization
    variance in scaling studies.
    """
    rng = stream_rng(seed, stream_id)
    w = rng.standard_normal((n_neurons, d))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    if exact_overlap is not None:
        if theta_star is None:
            raise ValueError("exact_overlap needs theta_star")
        m0 = float(exact_overlap)
        proj = w @ theta_star
        sign = np.where(proj >= 0, 1.0, -1.0)
        w_perp = w - proj[:, None] * theta_star[None, :]
        w_perp /= np.linalg.norm(w_perp, axis=1, keepdims=True)
        w = m0 * sign[:, None] * theta_star[None, :] + np.sqrt(1.0 - m0 * m0) * w_perp
    readout = rng.choice(np.array([-s_init, s_init]), size=n_neurons)
    return NetworkState(w_rows=w, biases=np.zeros(n_neurons), readout=readout,
                        s_init=s_init, activation=activation)


def synthetic_recovered_network(d: int, n_neurons: int, activation: PolynomialLink,
                                theta_star: np.ndarray, epsilon: float, seed: int,
                                s_init: float = 1.0, stream_id: int = 0) -> NetworkState:
    """Network whose rows sit at overlap exactly 1 - epsilon with theta_star.

    Stands in for the post-recovery state when a study only exercises the
    second stage: every row satisfies <w_j, theta*> = 1 - epsilon with an
    independent random orthogonal remainder.
    """
    rng = stream_rng(seed, stream_id)
    m = 1.0 - epsilon
    raw = rng.standard_normal((n_neurons, d))
    raw -= (raw @ theta_star)[:, None] * theta_star[None, :]
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    w = m * theta_star[None, :] + np.sqrt(max(0.0, 1.0 - m * m)) * raw
    readout = rng.choice(np.array([-s_init, s_init]), size=n_neurons)
    return NetworkState(w_rows=w, biases=np.zeros(n_neurons), readout=readout,
                        s_init=s_init, activation=activation)


def sample_biases(n_neurons: int, c_b: float, seed: int, stream_id: int = 0) -> np.ndarray:
    """I.i.d. Unif[-c_b, c_b] biases for the ridge stage."""
    if c_b <= 0:
        raise ValueError("c_b must be positive")
    return stream_rng(seed, stream_id).uniform(-c_b, c_b, size=n_neurons)


def feature_map(xs: np.ndarray, net: NetworkState) -> np.ndarray:
    """psi_N(x) = (1/N) sigma(<w_j, x> + b_j), vectorised over rows of xs."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    pre = xs @ net.w_rows.T + net.biases[None, :]
    return net.activation.evaluate(pre) / net.n_neurons


def network_reward(xs: np.ndarray, net: NetworkState,
                   readout: np.ndarray | None = None) -> np.ndarray:
    """r_a(x) = <a, psi_N(x)> for a = readout (defaults to the stored one)."""
    a = net.readout if readout is None else np.asarray(readout, dtype=float)
    return feature_map(xs, net) @ a
