"""Linear-Gaussian bandit on the r-ball, its conjugate posterior and Thompson sampling.

Rewards are ``R = theta*^T A + sigma * W`` with ``W ~ N(0, 1)`` and actions in
``{a : ||a|| <= r}``. The prior is ``N(mu0, Sigma0)`` so the posterior after
``t`` steps is Gaussian with precision ``V_t = Sigma0^{-1} + sigma^{-2} sum A A^T``.

Two execution paths are provided. The single-episode functions
(:func:`thompson_step`, :func:`run_episode`) work on one immutable
:class:`GaussianPosterior` at a time. :func:`simulate_batch` runs many
independent episodes in lock-step on stacked arrays and is what the Monte
Carlo estimators use.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import ActionOutOfSet, DimensionMismatch, InvalidParameter
from .linalg import (
    REFRESH_EVERY,
    SpdMatrix,
    gaussian_sample,
    mahalanobis_sq,
    rank_one_precision_update,
)

ZERO_NORM = 1e-14
ACTION_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class BanditConfig:
    """Problem parameters without a realized ``theta*``."""

    d: int
    r: float
    sigma: float
    prior_cov: SpdMatrix
    prior_mean: np.ndarray | None = None

    def __post_init__(self):
        if self.d < 1:
            raise InvalidParameter("d must be >= 1")
        if not self.r > 0:
            raise InvalidParameter(f"action radius must be positive, got {self.r}")
        if not self.sigma > 0:
            raise InvalidParameter(f"noise scale must be positive, got {self.sigma}")
        cov = self.prior_cov if isinstance(self.prior_cov, SpdMatrix) else SpdMatrix(self.prior_cov)
        object.__setattr__(self, "prior_cov", cov)
        if cov.dim != self.d:
            raise DimensionMismatch(f"prior covariance is {cov.dim}x{cov.dim}, expected d={self.d}")
        if not cov.is_pd():
            raise InvalidParameter("prior covariance must be positive definite")
        if self.prior_mean is not None:
            mu = np.asarray(self.prior_mean, dtype=float)
            if mu.shape != (self.d,):
                raise DimensionMismatch(f"prior mean has shape {mu.shape}, expected ({self.d},)")
            mu.setflags(write=False)
            object.__setattr__(self, "prior_mean", mu)

    @property
    def mu0(self) -> np.ndarray:
        return np.zeros(self.d) if self.prior_mean is None else self.prior_mean

    @property
    def has_zero_mean(self) -> bool:
        return self.prior_mean is None or not np.any(self.prior_mean)

    def with_prior_cov(self, cov) -> "BanditConfig":
        return BanditConfig(self.d, self.r, self.sigma, cov, self.prior_mean)

    def with_sigma(self, sigma: float) -> "BanditConfig":
        return BanditConfig(self.d, self.r, sigma, self.prior_cov, self.prior_mean)

    def fingerprint(self) -> str:
        payload = {
            "d": self.d,
            "r": repr(float(self.r)),
            "sigma": repr(float(self.sigma)),
            "prior_cov": [repr(float(x)) for x in self.prior_cov.array.ravel()],
            "prior_mean": [repr(float(x)) for x in self.mu0],
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class BanditInstance:
    config: BanditConfig
    theta_star: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.theta_star, dtype=float)
        if th.shape != (self.config.d,):
            raise DimensionMismatch(f"theta_star has shape {th.shape}, expected ({self.config.d},)")
        th.setflags(write=False)
        object.__setattr__(self, "theta_star", th)

    @property
    def d(self) -> int:
        return self.config.d

    @property
    def r(self) -> float:
        return self.config.r

    @property
    def sigma(self) -> float:
        return self.config.sigma

    @property
    def optimal_value(self) -> float:
        return self.r * float(np.linalg.norm(self.theta_star))


def sample_instance(config: BanditConfig, rng: np.random.Generator) -> BanditInstance:
    """Draw ``theta* ~ N(mu0, Sigma0)``."""
    return BanditInstance(config, gaussian_sample(config.mu0, config.prior_cov, rng))


@dataclass(frozen=True, eq=False)
class GaussianPosterior:
    """Posterior ``N(mean, covariance)`` after ``t`` observations.

    ``info`` is the natural parameter ``precision @ mean`` accumulated exactly,
    so the mean never inherits drift from the maintained covariance beyond one
    matrix-vector product.
    """

    t: int
    mean: np.ndarray
    precision: SpdMatrix
    covariance: SpdMatrix
    info: np.ndarray

    @classmethod
    def from_prior(cls, mean, cov) -> "GaussianPosterior":
        cov = cov if isinstance(cov, SpdMatrix) else SpdMatrix(cov)
        mean = np.asarray(mean, dtype=float)
        precision = cov.inverse()
        return cls(0, mean.copy(), precision, cov, precision.array @ mean)

    @classmethod
    def from_config(cls, config: BanditConfig) -> "GaussianPosterior":
        return cls.from_prior(config.mu0, config.prior_cov)

    @property
    def d(self) -> int:
        return self.mean.shape[0]


@dataclass(eq=False)
class Trajectory:
    """Per-step record of one episode (row ``t`` describes step ``t``)."""

    actions: np.ndarray
    rewards: np.ndarray
    theta_hats: np.ndarray
    pseudo_regret: np.ndarray
    events: np.ndarray
    potentials: np.ndarray
    err_sq: np.ndarray
    theta_star: np.ndarray
    beta: float
    final_posterior: GaussianPosterior | None = field(default=None, repr=False)
    extras: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return self.pseudo_regret.shape[0]

    @property
    def total_regret(self) -> float:
        return float(np.sum(self.pseudo_regret))

    @property
    def cumulative_regret(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.pseudo_regret)])

    @classmethod
    def empty(cls, d: int, theta_star, beta: float) -> "Trajectory":
        return cls(
            actions=np.zeros((0, d)),
            rewards=np.zeros(0),
            theta_hats=np.zeros((0, d)),
            pseudo_regret=np.zeros(0),
            events=np.zeros(0, dtype=bool),
            potentials=np.zeros(0),
            err_sq=np.zeros(0),
            theta_star=np.asarray(theta_star, dtype=float),
            beta=beta,
        )


def optimal_action(theta, r: float) -> np.ndarray:
    """Maximizer of ``theta^T a`` over the ball of radius ``r``.

    Works row-wise on a stack of vectors. A (numerically) zero ``theta`` maps
    to ``r * e_1``.
    """
    theta = np.asarray(theta, dtype=float)
    norms = np.linalg.norm(theta, axis=-1, keepdims=True)
    zero = norms <= ZERO_NORM
    safe = np.where(zero, 1.0, norms)
    out = r * theta / safe
    if np.any(zero):
        e1 = np.zeros(theta.shape[-1])
        e1[0] = r
        out = np.where(zero, e1, out)
    return out


def step(instance: BanditInstance, action, rng: np.random.Generator) -> float:
    action = np.asarray(action, dtype=float)
    if action.shape != (instance.d,):
        raise DimensionMismatch(f"action has shape {action.shape}, expected ({instance.d},)")
    if np.linalg.norm(action) > instance.r * (1 + ACTION_SLACK):
        raise ActionOutOfSet(f"||action|| = {np.linalg.norm(action):.6g} exceeds r = {instance.r}")
    return float(instance.theta_star @ action + instance.sigma * rng.standard_normal())


def posterior_update(post: GaussianPosterior, action, reward: float, sigma: float) -> GaussianPosterior:
    a = np.asarray(action, dtype=float)
    if a.shape != (post.d,):
        raise DimensionMismatch(f"action has shape {a.shape}, expected ({post.d},)")
    s2 = sigma * sigma
    t = post.t + 1
    precision = SpdMatrix(post.precision.array + np.outer(a, a) / s2)
    if t % REFRESH_EVERY == 0:
        covariance = precision.inverse()
    else:
        covariance = rank_one_precision_update(post.covariance, a / sigma)
    info = post.info + a * (reward / s2)
    return GaussianPosterior(t, covariance.array @ info, precision, covariance, info)


def posterior_batch(prior: GaussianPosterior, actions, rewards, sigma: float) -> GaussianPosterior:
    """Posterior from the stacked-history formula (no incremental state)."""
    actions = np.asarray(actions, dtype=float).reshape(-1, prior.d)
    rewards = np.asarray(rewards, dtype=float).ravel()
    if actions.shape[0] != rewards.shape[0]:
        raise DimensionMismatch(f"{actions.shape[0]} actions but {rewards.shape[0]} rewards")
    if actions.shape[0] == 0:
        return prior
    s2 = sigma * sigma
    precision = prior.precision.array + actions.T @ actions / s2
    info = prior.info + actions.T @ rewards / s2
    covariance = np.linalg.inv(precision)
    mean = np.linalg.solve(precision, info)
    return GaussianPosterior(
        prior.t + actions.shape[0], mean, SpdMatrix(precision), SpdMatrix(covariance), info
    )


def thompson_step(instance: BanditInstance, post: GaussianPosterior, rng, noise_rng=None):
    """One round: sample, act greedily on the sample, observe, update.

    ``noise_rng`` defaults to ``rng``; passing a separate stream keeps the
    reward noise independent of how the posterior draw consumes randomness.
    """
    theta_hat = gaussian_sample(post.mean, post.covariance, rng)
    action = optimal_action(theta_hat, instance.r)
    reward = step(instance, action, rng if noise_rng is None else noise_rng)
    return action, reward, theta_hat, posterior_update(post, action, reward, instance.sigma)


def default_beta(d: int, T: int) -> float:
    from .bounds import compute_beta

    return compute_beta(d, max(int(T), 1))


def run_episode(
    config: BanditConfig,
    T: int,
    seed: int,
    *,
    instance: BanditInstance | None = None,
    beta: float | None = None,
    index: int = 0,
) -> Trajectory:
    """Run Thompson sampling for ``T`` steps on a prior draw (or a given instance)."""
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    theta_rng, noise_rng, sampler_rng = rngmod.streams(seed, index, "theta", "noise", "sampler")
    if instance is None:
        instance = sample_instance(config, theta_rng)
    beta = default_beta(config.d, T) if beta is None else float(beta)
    post = GaussianPosterior.from_config(config)
    if T == 0:
        traj = Trajectory.empty(config.d, instance.theta_star, beta)
        traj.final_posterior = post
        return traj

    d = config.d
    actions = np.empty((T, d))
    theta_hats = np.empty((T, d))
    rewards = np.empty(T)
    err_sq = np.empty(T)
    potentials = np.empty(T)
    best = instance.optimal_value
    for t in range(T):
        v_t, sigma_t = post.precision, post.covariance
        a, rew, th, post = thompson_step(instance, post, sampler_rng, noise_rng)
        actions[t], rewards[t], theta_hats[t] = a, rew, th
        err_sq[t] = mahalanobis_sq(th - instance.theta_star, v_t)
        potentials[t] = np.sqrt(mahalanobis_sq(a, sigma_t))
    pseudo = best - actions @ instance.theta_star
    return Trajectory(
        actions=actions,
        rewards=rewards,
        theta_hats=theta_hats,
        pseudo_regret=pseudo,
        events=err_sq <= beta * beta,
        potentials=potentials,
        err_sq=err_sq,
        theta_star=instance.theta_star,
        beta=beta,
        final_posterior=post,
    )


# ---------------------------------------------------------------------------
# Batched engine


@dataclass(eq=False)
class BatchResult:
    """Lock-step simulation of ``n`` independent episodes.

    Arrays are indexed ``[replicate, step]``. ``err_sq[i, t]`` is
    ``||theta_hat_t - theta*||^2_{V_t}`` and ``potential[i, t]`` is
    ``||A_t||_{V_t^{-1}}``.
    """

    theta_star: np.ndarray
    pseudo_regret: np.ndarray
    err_sq: np.ndarray
    potential: np.ndarray
    final_mean: np.ndarray
    final_cov: np.ndarray
    final_precision: np.ndarray
    actions: np.ndarray | None = None
    rewards: np.ndarray | None = None

    @property
    def cumulative(self) -> np.ndarray:
        """Cumulative pseudo-regret with a leading zero column: shape ``(n, T + 1)``."""
        n = self.pseudo_regret.shape[0]
        return np.concatenate([np.zeros((n, 1)), np.cumsum(self.pseudo_regret, axis=1)], axis=1)


def _batched_sqrt(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        # Round-off can push a nearly singular covariance slightly indefinite.
        w, q = np.linalg.eigh(cov)
        return q * np.sqrt(np.clip(w, 0.0, None))[:, None, :]


def simulate_batch(
    config: BanditConfig,
    T: int,
    n: int,
    seed: int,
    index: int = 0,
    *,
    policy: str = "ts",
    keep_history: bool = False,
) -> BatchResult:
    """Simulate ``n`` episodes of length ``T`` on stream block ``index``.

    ``policy`` is ``"ts"`` (Thompson sampling) or ``"random"`` (uniform
    direction on the sphere, a sanity control).
    """
    if policy not in ("ts", "random"):
        raise ValueError(f"unknown policy {policy!r}")
    theta_rng, noise_rng, sampler_rng = rngmod.streams(seed, index, "theta", "noise", "sampler")
    d, r, s2 = config.d, config.r, config.sigma**2
    sigma0 = config.prior_cov.array
    mu0 = config.mu0
    prec0 = np.linalg.inv(sigma0)
    prec0 = 0.5 * (prec0 + prec0.T)

    theta = mu0 + theta_rng.standard_normal((n, d)) @ np.linalg.cholesky(sigma0).T
    best = r * np.linalg.norm(theta, axis=1)
    V = np.broadcast_to(prec0, (n, d, d)).copy()
    S = np.broadcast_to(sigma0, (n, d, d)).copy()
    b = np.broadcast_to(prec0 @ mu0, (n, d)).copy()

    pseudo = np.empty((n, T))
    err_sq = np.empty((n, T))
    potential = np.empty((n, T))
    acts = np.empty((n, T, d)) if keep_history else None
    rews = np.empty((n, T)) if keep_history else None
    for t in range(T):
        mu = np.matmul(S, b[:, :, None])[:, :, 0]
        z = sampler_rng.standard_normal((n, d))
        if policy == "ts":
            th = mu + np.matmul(_batched_sqrt(S), z[:, :, None])[:, :, 0]
        else:
            th = z
        A = optimal_action(th, r)
        gain = np.einsum("bi,bi->b", theta, A)
        pseudo[:, t] = best - gain
        e = th - theta
        err_sq[:, t] = np.einsum("bi,bij,bj->b", e, V, e)
        SA = np.matmul(S, A[:, :, None])[:, :, 0]
        q = np.einsum("bi,bi->b", A, SA)
        potential[:, t] = np.sqrt(np.clip(q, 0.0, None))
        R = gain + config.sigma * noise_rng.standard_normal(n)
        if keep_history:
            acts[:, t] = A
            rews[:, t] = R
        outer = A[:, :, None] * A[:, None, :]
        V += outer / s2
        if (t + 1) % REFRESH_EVERY == 0:
            S = np.linalg.inv(V)
        else:
            S -= SA[:, :, None] * SA[:, None, :] / (s2 + q)[:, None, None]
        S = 0.5 * (S + np.swapaxes(S, 1, 2))
        b += A * (R / s2)[:, None]

    final_mean = np.matmul(S, b[:, :, None])[:, :, 0]
    return BatchResult(
        theta_star=theta,
        pseudo_regret=pseudo,
        err_sq=err_sq,
        potential=potential,
        final_mean=final_mean,
        final_cov=S,
        final_precision=V,
        actions=acts,
        rewards=rews,
    )
