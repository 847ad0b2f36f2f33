"""Reward-sample generation and the counter-based RNG stream contract.

Every stochastic component draws from a Philox generator keyed by
``(master_seed, stream_id)``. Streams are independent by key, so a worker
pool can hand out whole streams without the worker count changing which
samples a logical stream sees.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .links import PolynomialLink, validate_link

_KEY_MASK = (1 << 64) - 1


def stream_rng(master_seed: int, stream_id: int = 0) -> np.random.Generator:
    """Philox generator keyed by (master_seed, stream_id)."""
    key = np.array([master_seed & _KEY_MASK, stream_id & _KEY_MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def default_theta_star(d: int) -> np.ndarray:
    theta = np.zeros(d)
    theta[0] = 1.0
    return theta


def random_unit_vector(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class SampleBatch:
    """n reward samples: y_i = link(<theta*, x_i>) + zeta_i."""

    xs: np.ndarray        # (n, d)
    zetas: np.ndarray     # (n,)
    ys: np.ndarray        # (n,)
    seed: int
    theta_star: np.ndarray
    tau: float

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def d(self) -> int:
        return self.xs.shape[1]


def sample_batch(d: int, theta_star: np.ndarray | None, link: PolynomialLink,
                 tau: float, n: int, seed: int, stream_id: int = 0) -> SampleBatch:
    """Draw a deterministic batch from the reward model.

    Inputs are i.i.d. standard normal in R^d, noise is uniform on
    [-tau, tau]; identical (seed, stream_id) reproduce the batch bit for bit.
    """
    if n < 1:
        raise ValueError("need n >= 1 samples")
    ok = validate_link(link)
    if link.upper_bounded and not ok:
        raise ValueError(f"invalid link: {ok.reason}")
    if theta_star is None:
        theta_star = default_theta_star(d)
    theta_star = np.asarray(theta_star, dtype=float)
    norm = np.linalg.norm(theta_star)
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"theta_star must be unit norm (got {norm})")
    rng = stream_rng(seed, stream_id)
    xs = rng.standard_normal((n, d))
    zetas = rng.uniform(-tau, tau, size=n) if tau > 0 else np.zeros(n)
    ys = link.evaluate(xs @ theta_star) + zetas
    return SampleBatch(xs=xs, zetas=zetas, ys=ys, seed=seed,
                       theta_star=theta_star, tau=tau)
