"""Monte Carlo estimates of Bayesian regret and of the events used to bound it.

Replicates are simulated in fixed-size blocks. Block ``k`` always uses the
random streams keyed by ``(seed, k, role)``, so every estimate is bitwise
reproducible and independent of the number of worker processes.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .bandit import BanditConfig, simulate_batch
from .bounds import theorem1_bound, theorem2_from_cov

BLOCK_SIZE = 256
Z95 = 1.959963984540054
CI_MULTIPLIER = 3.0


def worker_count(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    cap = os.environ.get("TSLAB_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


def blocks(n: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    """``(block index, size)`` pairs covering ``n`` replicates."""
    return [(k, min(block_size, n - k * block_size)) for k in range((n + block_size - 1) // block_size)]


def map_blocks(fn, tasks: list[tuple], workers: int | None = None) -> list:
    """Apply ``fn(*task)`` to each task, in order, optionally across processes."""
    w = min(worker_count(workers), len(tasks)) if tasks else 1
    if w <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=w) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def geometric_horizons(T: int) -> np.ndarray:
    """Powers of two up to ``T``, plus ``T`` itself."""
    if T <= 0:
        return np.array([0])
    h = [1 << k for k in range(int(math.log2(T)) + 1) if (1 << k) <= T]
    if h[-1] != T:
        h.append(T)
    return np.array(h)


def _cum_block(config, T, size, seed, index, horizons, policy):
    res = simulate_batch(config, T, size, seed, index, policy=policy)
    return res.cumulative[:, horizons]


def replicate_regret(
    config: BanditConfig,
    T: int,
    n_replicates: int,
    base_seed: int,
    horizons,
    *,
    policy: str = "ts",
    workers: int | None = None,
) -> np.ndarray:
    """Cumulative pseudo-regret of every replicate at each horizon: shape ``(n, H)``."""
    horizons = np.asarray(horizons, dtype=int)
    tasks = [(config, T, size, base_seed, k, horizons, policy) for k, size in blocks(n_replicates)]
    return np.concatenate(map_blocks(_cum_block, tasks, workers), axis=0)


def mean_and_halfwidth(x: np.ndarray, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    n = x.shape[axis]
    mean = x.mean(axis=axis)
    sd = x.std(axis=axis, ddof=1) if n > 1 else np.zeros_like(mean)
    return mean, Z95 * sd / math.sqrt(n)


@dataclass(eq=False)
class RegretCurve:
    horizons: np.ndarray
    mean_regret: np.ndarray
    half_width: np.ndarray
    n_replicates: int
    config_hash: str

    def is_monotone(self) -> bool:
        """Mean nondecreasing up to twice the CI half-width."""
        slack = 2.0 * np.maximum(self.half_width[1:], self.half_width[:-1])
        return bool(np.all(np.diff(self.mean_regret) >= -slack))


def bayes_regret_curve(
    config: BanditConfig,
    T: int,
    n_replicates: int,
    base_seed: int = 0,
    *,
    horizons=None,
    policy: str = "ts",
    workers: int | None = None,
) -> RegretCurve:
    """Mean cumulative pseudo-regret with 95% normal CIs at each horizon.

    Every replicate draws its own ``theta*`` from the prior.
    """
    if n_replicates < 2:
        raise ValueError("need at least two replicates for a confidence interval")
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    horizons = geometric_horizons(T) if horizons is None else np.asarray(horizons, dtype=int)
    if np.any(horizons > T) or np.any(horizons < 0):
        raise ValueError("horizons must lie in [0, T]")
    if T == 0:
        zeros = np.zeros(horizons.shape)
        return RegretCurve(horizons, zeros, zeros.copy(), n_replicates, config.fingerprint())
    vals = replicate_regret(config, T, n_replicates, base_seed, horizons, policy=policy, workers=workers)
    mean, hw = mean_and_halfwidth(vals)
    return RegretCurve(horizons, mean, hw, n_replicates, config.fingerprint())


@dataclass
class SandwichPoint:
    T: int
    lower: float
    mean: float
    half_width: float
    upper: float

    @property
    def ok(self) -> bool:
        slack = CI_MULTIPLIER * self.half_width
        return self.lower - slack <= self.mean <= self.upper + slack


def sandwich(config: BanditConfig, curve: RegretCurve) -> list[SandwichPoint]:
    """Compare a regret curve with the closed-form upper and lower bounds at each horizon."""
    pts = []
    for T, m, h in zip(curve.horizons, curve.mean_regret, curve.half_width):
        T = int(T)
        if T == 0:
            pts.append(SandwichPoint(0, 0.0, float(m), float(h), 0.0))
            continue
        up = theorem1_bound(config.d, T, config.sigma, config.r, config.prior_cov)
        lo = theorem2_from_cov(config.r, config.prior_cov, T)
        pts.append(SandwichPoint(T, lo, float(m), float(h), up))
    return pts


REGRET_CSV_COLUMNS = (
    "config_hash",
    "d",
    "r",
    "sigma",
    "tr_sigma0",
    "T",
    "mean_regret",
    "ci_half_width",
    "bound_upper",
    "bound_lower",
)


def regret_rows(config: BanditConfig, curve: RegretCurve, upper=None) -> list[dict]:
    """CSV rows for a regret curve; ``upper(T)`` overrides the default upper bound."""
    rows = []
    for pt in sandwich(config, curve):
        rows.append(
            {
                "config_hash": curve.config_hash,
                "d": config.d,
                "r": float(config.r),
                "sigma": float(config.sigma),
                "tr_sigma0": config.prior_cov.trace,
                "T": pt.T,
                "mean_regret": pt.mean,
                "ci_half_width": pt.half_width,
                "bound_upper": pt.upper if upper is None or pt.T == 0 else float(upper(pt.T)),
                "bound_lower": pt.lower,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# Event probabilities


def wilson_interval(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("n must be positive")
    phat = k / n
    denom = 1.0 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(eq=False)
class EventViolationReport:
    beta: float
    T: int
    n_replicates: int
    per_step: np.ndarray
    union_count: int
    wilson_low: float
    wilson_high: float

    @property
    def union_rate(self) -> float:
        return self.union_count / self.n_replicates

    @property
    def half_width(self) -> float:
        return 0.5 * (self.wilson_high - self.wilson_low)


def _event_block(config, T, size, seed, index, beta):
    res = simulate_batch(config, T, size, seed, index)
    bad = res.err_sq > beta * beta
    return bad.sum(axis=0), int(bad.any(axis=1).sum())


def event_violation_rate(
    config: BanditConfig,
    beta: float,
    T: int,
    n_replicates: int,
    base_seed: int = 0,
    *,
    workers: int | None = None,
) -> EventViolationReport:
    """Frequency of ``||theta_hat_t - theta*||_{V_t} > beta`` per step and for any step."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    tasks = [(config, T, size, base_seed, k, beta) for k, size in blocks(n_replicates)]
    out = map_blocks(_event_block, tasks, workers)
    per_step = np.sum([o[0] for o in out], axis=0) / n_replicates
    union = int(sum(o[1] for o in out))
    lo, hi = wilson_interval(union, n_replicates)
    return EventViolationReport(beta, T, n_replicates, per_step, union, lo, hi)


@dataclass
class ChiSquareResult:
    t: int
    n: int
    ks_stat: float
    p_value: float
    critical_value: float

    @property
    def passed(self) -> bool:
        return self.ks_stat < self.critical_value


def ks_critical_value(n: int, alpha: float = 0.01) -> float:
    """Exact one-sample two-sided Kolmogorov-Smirnov critical value."""
    return float(stats.kstwo.ppf(1.0 - alpha, n))


def _err_block(config, T, size, seed, index, checkpoints):
    res = simulate_batch(config, T, size, seed, index)
    return res.err_sq[:, checkpoints]


def chi_square_diagnostic(
    config: BanditConfig,
    t_checkpoints,
    n_replicates: int,
    base_seed: int = 0,
    *,
    scale: float = 0.5,
    alpha: float = 0.01,
    workers: int | None = None,
) -> list[ChiSquareResult]:
    """KS test of ``scale * ||theta_hat_t - theta*||^2_{V_t}`` against chi-square(d)."""
    checkpoints = np.asarray(sorted(set(int(t) for t in t_checkpoints)), dtype=int)
    if checkpoints.size == 0 or checkpoints[0] < 0:
        raise ValueError("checkpoints must be nonnegative and non-empty")
    T = int(checkpoints[-1]) + 1
    tasks = [(config, T, size, base_seed, k, checkpoints) for k, size in blocks(n_replicates)]
    err = np.concatenate(map_blocks(_err_block, tasks, workers), axis=0)
    ref = stats.chi2(config.d)
    crit = ks_critical_value(n_replicates, alpha)
    results = []
    for j, t in enumerate(checkpoints):
        ks = stats.kstest(scale * err[:, j], ref.cdf)
        results.append(ChiSquareResult(int(t), n_replicates, float(ks.statistic), float(ks.pvalue), crit))
    return results


# ---------------------------------------------------------------------------
# Burn-in versus long-run regret


@dataclass(eq=False)
class DecouplingReport:
    scales: np.ndarray
    tr_sigma0: np.ndarray
    T: int
    early_window: int
    early_regret: np.ndarray
    early_half_width: np.ndarray
    late_slope: np.ndarray
    late_half_width: np.ndarray
    early_exponent: float | None
    late_exponent: float | None
    n_replicates: int

    def to_dict(self) -> dict:
        return {
            "scales": self.scales.tolist(),
            "tr_sigma0": self.tr_sigma0.tolist(),
            "T": self.T,
            "early_window": self.early_window,
            "early_regret": self.early_regret.tolist(),
            "early_half_width": self.early_half_width.tolist(),
            "late_slope": self.late_slope.tolist(),
            "late_half_width": self.late_half_width.tolist(),
            "early_exponent": self.early_exponent,
            "late_exponent": self.late_exponent,
            "n_replicates": self.n_replicates,
        }


def _fit_exponent(x: np.ndarray, y: np.ndarray) -> float | None:
    if x.size < 2 or np.any(y <= 0):
        return None
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def decoupling_experiment(
    base_config: BanditConfig,
    scale_grid,
    T: int,
    n_replicates: int,
    base_seed: int = 0,
    *,
    workers: int | None = None,
) -> DecouplingReport:
    """Burn-in and long-run regret as the prior covariance is scaled.

    For each ``c`` in ``scale_grid`` the prior covariance becomes ``c * Sigma0``.
    Early regret is the cumulative regret over the first ``d`` steps; the
    late slope is ``(Regret(T) - Regret(T/2)) / (sqrt(T) - sqrt(T/2))``.
    Exponents are least-squares slopes on log-log axes against
    ``sqrt(tr(Sigma0))`` and are ``None`` for a single-point grid. All scales
    share random streams, so ``theta*`` is the same draw rescaled.
    """
    scales = np.asarray(scale_grid, dtype=float).ravel()
    d = base_config.d
    if scales.size == 0 or np.any(scales <= 0):
        raise ValueError("scale grid must be non-empty and positive")
    if T < 4 * d:
        raise ValueError(f"horizon must be at least 4d = {4 * d}")
    if scales.size > 1 and scales.max() / scales.min() < 16.0:
        raise ValueError("scale grid must span at least a factor 16")
    half = T // 2
    horizons = np.array([d, half, T])
    dt = math.sqrt(T) - math.sqrt(half)
    early, early_hw, slope, slope_hw, tr = [], [], [], [], []
    for c in scales:
        cfg = base_config.with_prior_cov(base_config.prior_cov.scaled(c))
        vals = replicate_regret(cfg, T, n_replicates, base_seed, horizons, workers=workers)
        m, h = mean_and_halfwidth(vals[:, 0])
        s, sh = mean_and_halfwidth((vals[:, 2] - vals[:, 1]) / dt)
        early.append(float(m))
        early_hw.append(float(h))
        slope.append(float(s))
        slope_hw.append(float(sh))
        tr.append(cfg.prior_cov.trace)
    tr = np.array(tr)
    early = np.array(early)
    slope = np.array(slope)
    return DecouplingReport(
        scales=scales,
        tr_sigma0=tr,
        T=T,
        early_window=d,
        early_regret=early,
        early_half_width=np.array(early_hw),
        late_slope=slope,
        late_half_width=np.array(slope_hw),
        early_exponent=_fit_exponent(np.sqrt(tr), early),
        late_exponent=_fit_exponent(np.sqrt(tr), slope),
        n_replicates=n_replicates,
    )
