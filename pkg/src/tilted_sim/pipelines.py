"""End-to-end stage-2 pipelines shared by the harness commands, the
acceptance checks, and the bridge/trend studies.

A "stage-2 instance" is the state after feature recovery: a network with
near-recovered first-layer directions and sampled biases, its projected
truncation, and the fitted-reward closures expressed in S-coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .links import PolynomialLink
from .maxima import MaximaReport, analyze_maxima
from .network import NetworkState, sample_biases, synthetic_recovered_network
from .ridge import (
    ProjectedTruncation,
    RidgeFit,
    WeightRule,
    build_truncation,
    fit_weighted_ridge,
    lambda_schedule,
    subspace_reward_fn,
)
from .sampling import default_theta_star, sample_batch, stream_rng
from .tilted import ValueGapReport, value_gap_report


@dataclass(frozen=True)
class Stage2Instance:
    link: PolynomialLink
    net: NetworkState
    trunc: ProjectedTruncation
    theta_star: np.ndarray
    maxima: MaximaReport
    tau: float
    seed: int

    def true_reward_fn(self):
        """sigma*(<theta*, x>) as a function of S-coordinates."""
        t_coords = self.trunc.theta_coords(self.theta_star)
        link = self.link

        def true_reward(z: np.ndarray) -> np.ndarray:
            return link.evaluate(np.atleast_2d(z) @ t_coords)

        return true_reward

    def surrogate_reward_fn(self):
        return subspace_reward_fn(self.net, self.trunc)

    def fitted_reward_fn(self, fit: RidgeFit):
        return subspace_reward_fn(self.net, self.trunc, readout=fit.a_hat)


def make_stage2_instance(link: PolynomialLink, activation: PolynomialLink, d: int,
                         n_neurons: int, epsilon: float, tau: float, seed: int,
                         c_b: float = 0.5, radius: float | None = None,
                         slack: float = 2.0, s_init: float = 1.0,
                         include_theta: bool = True) -> Stage2Instance:
    """Post-recovery state with directions at overlap 1 - epsilon.

    Conditions on the recovery event rather than re-running SGD: directions
    are placed at exact overlap 1 - epsilon with random orthogonal parts,
    biases are sampled uniformly, and the initial readout signs are frozen as
    the surrogate readout a0.
    """
    theta_star = default_theta_star(d)
    net = synthetic_recovered_network(d, n_neurons, activation, theta_star,
                                      epsilon, seed, s_init=s_init)
    net = net.with_biases(sample_biases(n_neurons, c_b, seed, stream_id=7))
    trunc = build_truncation(net, theta_star if include_theta else None,
                             radius=radius, slack=slack)
    return Stage2Instance(link=link, net=net, trunc=trunc, theta_star=theta_star,
                          maxima=analyze_maxima(link), tau=tau, seed=seed)


@dataclass(frozen=True)
class FittedReward:
    fit: RidgeFit
    lambda_: float
    scheme: WeightRule
    t2: int


def fit_stage2(instance: Stage2Instance, scheme: WeightRule | str, beta2: float,
               t2: int, delta0: float, seed: int, c_lambda: float = 1.0,
               lambda_override: float | None = None,
               surrogate_c0: float | None = None,
               surrogate_m0: float | None = None) -> FittedReward:
    """Draw T2 fresh samples and fit the weighted ridge readout.

    The regularization comes from the scheme's schedule unless overridden;
    the surrogate schedule needs the (M_{0,R}, C_{0,R}) extras.
    """
    scheme = WeightRule(scheme)
    batch = sample_batch(instance.net.d, instance.theta_star, instance.link,
                         instance.tau, t2, seed, stream_id=11)
    if lambda_override is not None:
        lam = float(lambda_override)
    elif scheme == WeightRule.SURROGATE and surrogate_c0 is not None:
        lam = lambda_schedule(scheme, beta2, t2, delta0, instance.maxima,
                              c_lambda=c_lambda, tau=instance.tau,
                              m0_r=surrogate_m0, c0_r=surrogate_c0)
    else:
        # the label schedule is also the uniform fallback; for the surrogate
        # scheme without extras we fall back to the label scale
        rule = scheme if scheme != WeightRule.SURROGATE else WeightRule.LABEL
        lam = lambda_schedule(rule, beta2, t2, delta0, instance.maxima,
                              c_lambda=c_lambda, tau=instance.tau)
    fit = fit_weighted_ridge(batch, instance.net, instance.trunc, scheme, beta2, lam)
    return FittedReward(fit=fit, lambda_=lam, scheme=scheme, t2=t2)


def instance_value_gap(instance: Stage2Instance, fitted: FittedReward,
                       beta_star: float, beta2: float, n_mc: int,
                       seed: int) -> ValueGapReport:
    reward_fn = instance.fitted_reward_fn(fitted.fit)
    rng = stream_rng(seed, stream_id=23)
    return value_gap_report(
        instance.link, beta_star, beta2, instance.trunc.radius, instance.trunc.d_s,
        reward_fn, instance.trunc.theta_coords(instance.theta_star), n_mc, rng,
        maxima=instance.maxima)


def quadratic_peak_instance(d_s: int, seed: int, d: int | None = None,
                            n_neurons: int = 4, radius: float | None = None,
                            slack: float = 2.0) -> Stage2Instance:
    """Instance whose surrogate reward is a negative-definite quadratic on S.

    Directions are confined to a d_s-dimensional coordinate subspace and the
    activation is -u^2 with unit positive readout, so r_{a0} has a single
    nondegenerate interior maximizer; used by the surrogate-constant slope
    studies.
    """
    d = d or (d_s + 2)
    link = PolynomialLink((0, 0, -1), upper_bounded=True)
    rng = stream_rng(seed, 3)
    theta_star = default_theta_star(d)
    dirs = np.zeros((n_neurons, d))
    raw = rng.standard_normal((n_neurons, d_s))
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    dirs[:, :d_s] = raw
    net = NetworkState(w_rows=dirs, biases=rng.uniform(-0.5, 0.5, n_neurons),
                       readout=np.ones(n_neurons), s_init=1.0, activation=link)
    # theta* = e_1 already lies in the coordinate subspace, so dim S = d_s
    trunc = build_truncation(net, theta_star, radius=radius, slack=slack)
    return Stage2Instance(link=link, net=net, trunc=trunc, theta_star=theta_star,
                          maxima=analyze_maxima(link), tau=0.0, seed=seed)
