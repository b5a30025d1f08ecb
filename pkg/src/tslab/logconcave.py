"""Thompson sampling with strongly log-concave prior and noise.

The posterior is no longer Gaussian, so each TS draw comes from a
Metropolis-adjusted Langevin (MALA) chain. Chains are preconditioned by the
posterior's strong-convexity matrix ``V_t``: with ``V_t^{-1} = L L^T`` the
chain moves in whitened coordinates where the target is 1-strongly
log-concave, so a single step size works across the whole episode.

The module also ships empirical checks of the sub-Gaussian MGF bound and the
norm-concentration bound satisfied by strongly log-concave vectors.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import rng as rngmod
from .bandit import BatchResult, Trajectory, default_beta, optimal_action
from .errors import DimensionMismatch, InvalidInit, InvalidParameter
from .linalg import SpdMatrix
from .regret import RegretCurve, Z95, blocks, geometric_horizons, map_blocks, mean_and_halfwidth, wilson_interval

log = logging.getLogger(__name__)

DEFAULT_STEP_SIZE = 0.5
STEPS_PER_DIM = 50
MAX_REJECTION_ROUNDS = 10_000


# ---------------------------------------------------------------------------
# Densities


class LogConcaveDensity:
    """Unnormalized ``exp(-U(x))`` with ``U - x^T Lambda x / 2`` convex.

    ``potential`` and ``grad_potential`` act on the last axis, so a stack of
    points of shape ``(..., d)`` gives values of shape ``(...)``.
    """

    dim: int
    strong_convexity: SpdMatrix

    def potential(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_potential(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_density(self, x) -> np.ndarray:
        return -self.potential(np.asarray(x, dtype=float))

    def gradient(self, x) -> np.ndarray:
        return -self.grad_potential(np.asarray(x, dtype=float))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no exact sampler")

    @property
    def mean(self) -> np.ndarray | None:
        """Exact mean when known in closed form (e.g. by symmetry), else ``None``."""
        return None


class GaussianDensity(LogConcaveDensity):
    def __init__(self, mean, cov):
        cov = cov if isinstance(cov, SpdMatrix) else SpdMatrix(cov)
        mean = np.asarray(mean, dtype=float)
        if mean.shape != (cov.dim,):
            raise DimensionMismatch(f"mean has shape {mean.shape}, expected ({cov.dim},)")
        self.dim = cov.dim
        self.cov = cov
        self._mean = mean
        self.strong_convexity = cov.inverse()
        self._chol = np.linalg.cholesky(cov.array)

    def potential(self, x):
        dx = x - self._mean
        return 0.5 * np.einsum("...i,ij,...j->...", dx, self.strong_convexity.array, dx)

    def grad_potential(self, x):
        return (x - self._mean) @ self.strong_convexity.array

    def sample(self, n, rng):
        return self._mean + rng.standard_normal((n, self.dim)) @ self._chol.T

    @property
    def mean(self):
        return self._mean


def _pseudo_huber(x, eps):
    return np.sqrt(x * x + eps * eps) - eps


def _pseudo_huber_grad(x, eps):
    return x / np.sqrt(x * x + eps * eps)


def _rejection(n, propose, log_accept, rng):
    """Exact rejection sampling with a proposal that dominates the target."""
    out = []
    have = 0
    for _ in range(MAX_REJECTION_ROUNDS):
        if have >= n:
            break
        m = max(2 * (n - have), 64)
        cand = propose(m)
        keep = np.log(rng.uniform(size=m)) < log_accept(cand)
        out.append(cand[keep])
        have += int(keep.sum())
    else:
        raise RuntimeError("rejection sampler failed to produce enough samples")
    return np.concatenate(out)[:n]


class QuadraticPlusHuberDensity(LogConcaveDensity):
    """``U(x) = (x - m)^T Lambda (x - m) / 2 + kappa * sum_i (sqrt((x_i - m_i)^2 + eps^2) - eps)``.

    The second term is convex and non-quadratic, so the density is
    ``Lambda``-strongly log-concave but not Gaussian. Symmetric about ``m``.
    """

    def __init__(self, lam, mean=None, kappa: float = 0.5, eps: float = 0.1):
        lam = lam if isinstance(lam, SpdMatrix) else SpdMatrix(lam)
        if kappa < 0 or not eps > 0:
            raise InvalidParameter("need kappa >= 0 and eps > 0")
        self.dim = lam.dim
        self.strong_convexity = lam
        self._mean = np.zeros(lam.dim) if mean is None else np.asarray(mean, dtype=float)
        self.kappa = float(kappa)
        self.eps = float(eps)
        self._gauss = GaussianDensity(self._mean, lam.inverse())

    def _extra(self, x):
        return self.kappa * _pseudo_huber(x - self._mean, self.eps).sum(axis=-1)

    def potential(self, x):
        return self._gauss.potential(x) + self._extra(x)

    def grad_potential(self, x):
        return self._gauss.grad_potential(x) + self.kappa * _pseudo_huber_grad(x - self._mean, self.eps)

    def sample(self, n, rng):
        return _rejection(n, lambda m: self._gauss.sample(m, rng), lambda c: -self._extra(c), rng)

    @property
    def mean(self):
        return self._mean


class NoiseModel(LogConcaveDensity):
    """Zero-mean symmetric scalar noise with ``sigma^{-2}``-strongly convex potential ``psi``.

    ``psi`` and ``dpsi`` act elementwise; as a :class:`LogConcaveDensity`
    points have shape ``(..., 1)``.
    """

    dim = 1
    sigma: float

    def psi(self, w):
        raise NotImplementedError

    def dpsi(self, w):
        raise NotImplementedError

    @property
    def strong_convexity(self) -> SpdMatrix:
        return SpdMatrix([[self.sigma**-2]])

    def potential(self, x):
        return self.psi(x[..., 0])

    def grad_potential(self, x):
        return self.dpsi(x)

    def draw(self, shape, rng) -> np.ndarray:
        raise NotImplementedError

    def sample(self, n, rng):
        return self.draw(n, rng)[:, None]

    @property
    def mean(self):
        return np.zeros(1)


class GaussianNoise(NoiseModel):
    name = "gauss"

    def __init__(self, sigma: float):
        if not sigma > 0:
            raise InvalidParameter(f"sigma must be positive, got {sigma}")
        self.sigma = float(sigma)

    def psi(self, w):
        return 0.5 * np.square(w) / self.sigma**2

    def dpsi(self, w):
        return w / self.sigma**2

    def draw(self, shape, rng):
        return self.sigma * rng.standard_normal(shape)


class SmoothedLaplaceNoise(NoiseModel):
    """``psi(w) = w^2 / (2 sigma^2) + kappa (sqrt(w^2 + eps^2) - eps)``.

    A Gaussian core times a smoothed Laplace factor: heavier at the centre,
    still ``sigma^{-2}``-strongly log-concave.
    """

    name = "smoothed-laplace"

    def __init__(self, sigma: float, kappa: float = 1.0, eps: float = 0.1):
        if not sigma > 0:
            raise InvalidParameter(f"sigma must be positive, got {sigma}")
        if kappa < 0 or not eps > 0:
            raise InvalidParameter("need kappa >= 0 and eps > 0")
        self.sigma = float(sigma)
        self.kappa = float(kappa)
        self.eps = float(eps)

    def psi(self, w):
        return 0.5 * np.square(w) / self.sigma**2 + self.kappa * _pseudo_huber(w, self.eps)

    def dpsi(self, w):
        return w / self.sigma**2 + self.kappa * _pseudo_huber_grad(w, self.eps)

    def draw(self, shape, rng):
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape))
        flat = _rejection(
            n,
            lambda m: self.sigma * rng.standard_normal(m),
            lambda c: -self.kappa * _pseudo_huber(c, self.eps),
            rng,
        )
        return flat.reshape(shape)


def make_noise(name: str, sigma: float, **kwargs) -> NoiseModel:
    if name in ("gauss", "gaussian"):
        return GaussianNoise(sigma)
    if name == "smoothed-laplace":
        return SmoothedLaplaceNoise(sigma, **kwargs)
    raise InvalidParameter(f"unknown noise model {name!r}")


def gradient_check(density: LogConcaveDensity, points, h: float = 1e-6) -> float:
    """Largest relative gap between the gradient and central finite differences."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    worst = 0.0
    for x in points:
        g = density.gradient(x)
        fd = np.empty_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = h
            fd[i] = (density.log_density(x + e) - density.log_density(x - e)) / (2 * h)
        worst = max(worst, float(np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1.0)))
    return worst


def convexity_gap(density: LogConcaveDensity, x, y) -> np.ndarray:
    """``avg(U(x), U(y)) - ||x - y||^2_Lambda / 8 - U((x + y) / 2)``; nonnegative when the definition holds."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx = x - y
    q = np.einsum("...i,ij,...j->...", dx, density.strong_convexity.array, dx)
    return 0.5 * (density.potential(x) + density.potential(y)) - q / 8.0 - density.potential(0.5 * (x + y))


# ---------------------------------------------------------------------------
# Posterior


class PosteriorDensity(LogConcaveDensity):
    """``log pi_t(theta) = c + log pi(theta) + sum_s log p_W(R_s - A_s^T theta)``."""

    def __init__(self, prior: LogConcaveDensity, noise: NoiseModel, actions=None, rewards=None):
        d = prior.dim
        self.prior = prior
        self.noise = noise
        self.dim = d
        self.actions = np.zeros((0, d)) if actions is None else np.asarray(actions, dtype=float).reshape(-1, d)
        self.rewards = np.zeros(0) if rewards is None else np.asarray(rewards, dtype=float).ravel()
        if self.actions.shape[0] != self.rewards.shape[0]:
            raise DimensionMismatch(f"{self.actions.shape[0]} actions but {self.rewards.shape[0]} rewards")

    @property
    def t(self) -> int:
        return self.rewards.shape[0]

    @property
    def strong_convexity(self) -> SpdMatrix:
        """``V_t = Lambda_prior + sigma^{-2} sum_s A_s A_s^T``."""
        a = self.actions
        return SpdMatrix(self.prior.strong_convexity.array + a.T @ a / self.noise.sigma**2)

    def appended(self, action, reward) -> "PosteriorDensity":
        return PosteriorDensity(
            self.prior,
            self.noise,
            np.vstack([self.actions, np.reshape(action, (1, self.dim))]),
            np.append(self.rewards, reward),
        )

    def potential(self, x):
        resid = self.rewards - x @ self.actions.T
        return self.prior.potential(x) + self.noise.psi(resid).sum(axis=-1)

    def grad_potential(self, x):
        resid = self.rewards - x @ self.actions.T
        return self.prior.grad_potential(x) - self.noise.dpsi(resid) @ self.actions


# ---------------------------------------------------------------------------
# MALA


@dataclass
class MalaResult:
    x: np.ndarray
    acceptance_rate: np.ndarray


def mala_batch(potential_and_grad, x0, chol, n_steps: int, step_size: float, rng) -> MalaResult:
    """Run independent preconditioned MALA chains in lock-step.

    ``x0`` has shape ``(B, d)`` and ``chol`` shape ``(B, d, d)`` or ``(d, d)``
    with ``chol @ chol.T`` the preconditioner. ``potential_and_grad(x)``
    returns ``(U, grad U)`` for a ``(B, d)`` stack.
    """
    if not step_size > 0:
        raise InvalidParameter(f"step size must be positive, got {step_size}")
    if n_steps < 1:
        raise InvalidParameter(f"need at least one step, got {n_steps}")
    x = np.array(x0, dtype=float)
    B, d = x.shape
    chol = np.broadcast_to(chol, (B, d, d))
    cholT = np.swapaxes(chol, 1, 2)
    h = float(step_size)
    u, g = potential_and_grad(x)
    if not np.all(np.isfinite(u)):
        raise InvalidInit("log-density is not finite at the initial point")
    # Whitened gradient L^T grad U; the drift in x-space is -h L L^T grad U.
    wg = np.matmul(cholT, g[:, :, None])[:, :, 0]
    accepted = np.zeros(B)
    for _ in range(n_steps):
        z = rng.standard_normal((B, d))
        step_w = -h * wg + math.sqrt(2 * h) * z
        y = x + np.matmul(chol, step_w[:, :, None])[:, :, 0]
        uy, gy = potential_and_grad(y)
        wgy = np.matmul(cholT, gy[:, :, None])[:, :, 0]
        # Forward and reverse proposal residuals in whitened coordinates.
        fwd = math.sqrt(2 * h) * z
        rev = -step_w + h * wgy
        log_alpha = u - uy - (np.sum(rev * rev, axis=1) - np.sum(fwd * fwd, axis=1)) / (4 * h)
        acc = np.log(rng.uniform(size=B)) < np.where(np.isfinite(log_alpha), log_alpha, -np.inf)
        x = np.where(acc[:, None], y, x)
        u = np.where(acc, uy, u)
        wg = np.where(acc[:, None], wgy, wg)
        accepted += acc
    return MalaResult(x, accepted / n_steps)


def _density_fn(target: LogConcaveDensity):
    return lambda x: (target.potential(x), target.grad_potential(x))


def mala_chain(
    target: LogConcaveDensity,
    init,
    n_steps: int,
    step_size: float,
    rng: np.random.Generator,
    *,
    precondition: bool = True,
) -> MalaResult:
    """Independent chains from each row of ``init`` (or a single chain from a vector).

    With ``precondition`` the proposal covariance is ``V^{-1}`` for
    ``V = target.strong_convexity`` and ``step_size`` is in whitened units;
    otherwise it is the identity and ``step_size`` is in raw units.
    """
    x0 = np.atleast_2d(np.asarray(init, dtype=float))
    if x0.shape[1] != target.dim:
        raise DimensionMismatch(f"init has dimension {x0.shape[1]}, expected {target.dim}")
    if precondition:
        chol = np.linalg.cholesky(target.strong_convexity.inverse().array)
    else:
        chol = np.eye(target.dim)
    res = mala_batch(_density_fn(target), x0, chol, n_steps, step_size, rng)
    log.debug("MALA acceptance rate %.3f over %d chains", float(res.acceptance_rate.mean()), x0.shape[0])
    return res


def mala_sample(target: LogConcaveDensity, init, n_steps: int, step_size: float, rng, **kwargs) -> np.ndarray:
    """Endpoint of one MALA chain started at ``init``."""
    init = np.asarray(init, dtype=float)
    if init.shape != (target.dim,):
        raise DimensionMismatch(f"init has shape {init.shape}, expected ({target.dim},)")
    return mala_chain(target, init, n_steps, step_size, rng, **kwargs).x[0]


# ---------------------------------------------------------------------------
# Thompson sampling


@dataclass(frozen=True, eq=False)
class LogConcaveConfig:
    d: int
    r: float
    prior: LogConcaveDensity
    noise: NoiseModel

    def __post_init__(self):
        if self.prior.dim != self.d:
            raise DimensionMismatch(f"prior has dimension {self.prior.dim}, expected {self.d}")
        if not self.r > 0:
            raise InvalidParameter(f"action radius must be positive, got {self.r}")
        if not self.noise.sigma > 0:
            raise InvalidParameter("noise strong-convexity parameter must be positive")

    @property
    def sigma(self) -> float:
        return self.noise.sigma

    @property
    def prior_cov(self) -> SpdMatrix:
        """``Lambda^{-1}``, the covariance bound used in the regret bound."""
        return self.prior.strong_convexity.inverse()


@dataclass(frozen=True)
class SamplerSettings:
    n_steps: int | None = None
    step_size: float = DEFAULT_STEP_SIZE

    def steps_for(self, d: int) -> int:
        return STEPS_PER_DIM * d if self.n_steps is None else self.n_steps


@dataclass(eq=False)
class LcBatchResult(BatchResult):
    draws: np.ndarray | None = None
    acceptance_rate: np.ndarray | None = None


def lc_simulate_batch(
    config: LogConcaveConfig,
    T: int,
    n: int,
    seed: int,
    index: int = 0,
    *,
    sampler: SamplerSettings = SamplerSettings(),
) -> LcBatchResult:
    """Lock-step MALA-TS on ``n`` episodes, sharing streams with :func:`simulate_batch`.

    ``theta*`` and the reward noise come from the ``theta`` and ``noise``
    streams, so a Gaussian specialization sees the same instances and noise
    as exact TS with the same seed. Each chain starts from the previous
    draw of its episode; the first starts from an exact prior draw.
    """
    theta_rng, noise_rng, sampler_rng = rngmod.streams(seed, index, "theta", "noise", "sampler")
    d, r = config.d, config.r
    s2 = config.sigma**2
    prior, noise = config.prior, config.noise
    n_steps = sampler.steps_for(d)

    theta = prior.sample(n, theta_rng)
    best = r * np.linalg.norm(theta, axis=1)
    lam = prior.strong_convexity.array
    V = np.broadcast_to(lam, (n, d, d)).copy()
    acts = np.empty((n, T, d))
    rews = np.empty((n, T))
    pseudo = np.empty((n, T))
    err_sq = np.empty((n, T))
    potential = np.empty((n, T))
    draws = np.empty((n, T, d))
    acc_rate = np.empty(T)
    x = prior.sample(n, sampler_rng)

    for t in range(T):
        A_hist = acts[:, :t]
        R_hist = rews[:, :t]

        def pg(th, A_hist=A_hist, R_hist=R_hist):
            resid = R_hist - np.einsum("btd,bd->bt", A_hist, th)
            u = prior.potential(th) + noise.psi(resid).sum(axis=1)
            g = prior.grad_potential(th) - np.einsum("bt,btd->bd", noise.dpsi(resid), A_hist)
            return u, g

        Vinv = np.linalg.inv(V)
        chol = np.linalg.cholesky(0.5 * (Vinv + np.swapaxes(Vinv, 1, 2)))
        res = mala_batch(pg, x, chol, n_steps, sampler.step_size, sampler_rng)
        x = res.x
        draws[:, t] = x
        acc_rate[t] = res.acceptance_rate.mean()
        A = optimal_action(x, r)
        gain = np.einsum("bi,bi->b", theta, A)
        pseudo[:, t] = best - gain
        e = x - theta
        err_sq[:, t] = np.einsum("bi,bij,bj->b", e, V, e)
        potential[:, t] = np.sqrt(np.einsum("bi,bij,bj->b", A, Vinv, A))
        acts[:, t] = A
        rews[:, t] = gain + noise.draw(n, noise_rng)
        V += A[:, :, None] * A[:, None, :] / s2

    log.debug("MALA-TS mean acceptance %.3f", float(acc_rate.mean()) if T else float("nan"))
    return LcBatchResult(
        theta_star=theta,
        pseudo_regret=pseudo,
        err_sq=err_sq,
        potential=potential,
        final_mean=x,
        final_cov=np.linalg.inv(V),
        final_precision=V,
        actions=acts,
        rewards=rews,
        draws=draws,
        acceptance_rate=acc_rate,
    )


def lc_thompson_episode(
    config: LogConcaveConfig,
    T: int,
    seed: int,
    *,
    sampler: SamplerSettings = SamplerSettings(),
    beta: float | None = None,
    index: int = 0,
) -> Trajectory:
    """One MALA-TS episode in the same record format as exact TS."""
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    beta = default_beta(config.d, T) if beta is None else float(beta)
    res = lc_simulate_batch(config, T, 1, seed, index, sampler=sampler)
    if T == 0:
        traj = Trajectory.empty(config.d, res.theta_star[0], beta)
        traj.extras["acceptance_rate"] = np.zeros(0)
        return traj
    acts = res.actions[0]
    return Trajectory(
        actions=acts,
        rewards=res.rewards[0],
        theta_hats=res.draws[0],
        pseudo_regret=res.pseudo_regret[0],
        events=res.err_sq[0] <= beta * beta,
        potentials=res.potential[0],
        err_sq=res.err_sq[0],
        theta_star=res.theta_star[0],
        beta=beta,
        extras={"acceptance_rate": res.acceptance_rate},
    )


def _lc_block(config, T, size, seed, index, horizons, sampler):
    res = lc_simulate_batch(config, T, size, seed, index, sampler=sampler)
    return res.cumulative[:, horizons], res.acceptance_rate


@dataclass(eq=False)
class LcRegretCurve(RegretCurve):
    acceptance_rate: float = float("nan")


def lc_regret_curve(
    config: LogConcaveConfig,
    T: int,
    n_replicates: int,
    base_seed: int = 0,
    *,
    horizons=None,
    sampler: SamplerSettings = SamplerSettings(),
    config_hash: str = "",
    workers: int | None = None,
) -> LcRegretCurve:
    if n_replicates < 2:
        raise ValueError("need at least two replicates for a confidence interval")
    horizons = geometric_horizons(T) if horizons is None else np.asarray(horizons, dtype=int)
    if T == 0:
        z = np.zeros(horizons.shape)
        return LcRegretCurve(horizons, z, z.copy(), n_replicates, config_hash, float("nan"))
    tasks = [(config, T, size, base_seed, k, horizons, sampler) for k, size in blocks(n_replicates)]
    out = map_blocks(_lc_block, tasks, workers)
    vals = np.concatenate([o[0] for o in out], axis=0)
    acc = float(np.mean([o[1].mean() for o in out]))
    mean, hw = mean_and_halfwidth(vals)
    return LcRegretCurve(horizons, mean, hw, n_replicates, config_hash, acc)


# ---------------------------------------------------------------------------
# Concentration checks


def gaussian_mgf_margin(sigma, v) -> float:
    """``log E exp(v^T (X - EX)) - v^T Sigma v`` for ``X ~ N(., Sigma)``, i.e. ``-v^T Sigma v / 2``."""
    s = sigma.array if isinstance(sigma, SpdMatrix) else np.asarray(sigma, dtype=float)
    v = np.asarray(v, dtype=float)
    return -0.5 * float(v @ s @ v)


@dataclass
class MgfReport:
    v_grid: np.ndarray
    margins: np.ndarray
    errors: np.ndarray
    k: float = 3.0

    @property
    def worst(self) -> int:
        return int(np.argmax(self.margins - self.k * self.errors))

    @property
    def worst_margin(self) -> float:
        return float(self.margins[self.worst])

    @property
    def worst_error(self) -> float:
        return float(self.errors[self.worst])

    @property
    def passed(self) -> bool:
        return bool(np.all(self.margins <= self.k * self.errors))


def empirical_subgaussian_check(samples, lam, v_grid, *, mean=None, k: float = 3.0) -> MgfReport:
    """Compare the empirical centred MGF with ``exp(v^T Lambda^{-1} v)``.

    ``samples`` is an ``(n, d)`` array. The margin for each ``v`` is
    ``log mean exp(v^T (X - mu)) - v^T Lambda^{-1} v`` with ``mu`` the exact
    mean when supplied, else the sample mean; its Monte Carlo error is the
    delta-method standard error. Passes when every margin is at most
    ``k`` errors.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2:
        raise DimensionMismatch("samples must be an (n, d) array")
    v_grid = np.atleast_2d(np.asarray(v_grid, dtype=float))
    if v_grid.shape[0] == 0:
        raise InvalidParameter("v grid must be non-empty")
    lam = lam if isinstance(lam, SpdMatrix) else SpdMatrix(lam)
    cov = lam.inverse().array
    mu = x.mean(axis=0) if mean is None else np.asarray(mean, dtype=float)
    n = x.shape[0]
    proj = (x - mu) @ v_grid.T
    # Shift by the column max so exp never overflows.
    shift = proj.max(axis=0)
    w = np.exp(proj - shift)
    m = w.mean(axis=0)
    log_mgf = np.log(m) + shift
    err = w.std(axis=0, ddof=1) / (math.sqrt(n) * m) if n > 1 else np.zeros_like(m)
    bound = np.einsum("ki,ij,kj->k", v_grid, cov, v_grid)
    margins = log_mgf - bound
    zero = ~np.any(v_grid, axis=1)
    margins[zero] = 0.0
    err[zero] = 0.0
    return MgfReport(v_grid, margins, err, k)


@dataclass
class NormTailRow:
    t: float
    threshold: float
    bound: float
    frequency: float
    wilson_low: float
    wilson_high: float

    @property
    def passed(self) -> bool:
        """The exceedance is not significantly above the bound."""
        return self.wilson_low <= self.bound


@dataclass
class NormTailReport:
    C: float
    n: int
    rows: list[NormTailRow]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def norm_tail_check(samples, sigma, C: float, t_grid, *, center=None) -> NormTailReport:
    """Empirical ``P(||X - center||_{Sigma^{-1}} >= C (sqrt(d) + t))`` against ``2 exp(-t^2)``."""
    if not C > 0:
        raise InvalidParameter("C must be positive")
    x = np.asarray(samples, dtype=float)
    sigma = sigma if isinstance(sigma, SpdMatrix) else SpdMatrix(sigma)
    n, d = x.shape
    if center is not None:
        x = x - np.asarray(center, dtype=float)
    # ||x||_{Sigma^{-1}} through a triangular solve.
    Lc = np.linalg.cholesky(sigma.array)
    norms = np.linalg.norm(solve_triangular(Lc, x.T, lower=True), axis=0)
    rows = []
    for t in np.asarray(t_grid, dtype=float).ravel():
        thr = C * (math.sqrt(d) + t)
        k = int(np.count_nonzero(norms >= thr))
        lo, hi = wilson_interval(k, n, Z95)
        rows.append(NormTailRow(float(t), thr, 2.0 * math.exp(-t * t), k / n, lo, hi))
    return NormTailReport(float(C), n, rows)
