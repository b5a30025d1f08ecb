"""Closed-form regret bounds and the constants that enter them.

All logarithms are natural. ``sigma0`` arguments accept an :class:`SpdMatrix`
or anything convertible to one.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import chi2

from .errors import InvalidHorizon, InvalidParameter
from .linalg import SpdMatrix, trace_power

# Default for the unspecified constant in the log-concave bound. A
# calibration choice, not a derived value.
THEOREM3_DEFAULT_C = 3.0


def _spd(m) -> SpdMatrix:
    return m if isinstance(m, SpdMatrix) else SpdMatrix(m)


def _check_horizon(T) -> None:
    if T < 1:
        raise InvalidHorizon(f"horizon must be >= 1, got {T}")


def c1(d: int, T: float) -> float:
    _check_horizon(T)
    x = 24.0 * math.log(T) / d
    return math.sqrt(1.0 + max(x, math.sqrt(x)))


def c2(d: int, T: float, sigma: float, r: float, sigma0) -> float:
    if not sigma > 0:
        raise InvalidParameter(f"sigma must be positive, got {sigma}")
    opnorm = _spd(sigma0).op_norm
    return c1(d, T) * math.sqrt(2.0 * math.log1p(r * r * opnorm * T / (d * sigma * sigma)))


def theorem1_terms(d: int, T: float, sigma: float, r: float, sigma0) -> tuple[float, float, float]:
    """The three summands of the Gaussian Thompson sampling upper bound."""
    s0 = _spd(sigma0)
    first = d * sigma * math.sqrt(T) * c2(d, T, sigma, r, s0)
    second = 3.0 * r * math.sqrt(d) * trace_power(s0, 0.5) * c1(d, T)
    third = math.sqrt(2.0 * r * r * s0.trace)
    return first, second, third


def theorem1_bound(d: int, T: float, sigma: float, r: float, sigma0, *, variant: str = "default") -> float:
    """Upper bound on the Bayesian regret of Thompson sampling at horizon ``T``.

    ``variant="sqrt2"`` multiplies the first term by sqrt(2).
    """
    first, second, third = theorem1_terms(d, T, sigma, r, sigma0)
    if variant == "sqrt2":
        first *= math.sqrt(2.0)
    elif variant != "default":
        raise ValueError(f"unknown variant {variant!r}")
    return first + second + third


def compute_beta(d: int, T: float) -> float:
    _check_horizon(T)
    lt = math.log(T)
    return math.sqrt(d + max(24.0 * lt, math.sqrt(24.0 * d * lt)))


def beta_slack(d: int, T: float) -> float:
    """The deviation ``s`` with ``beta**2 = d + s``."""
    return compute_beta(d, T) ** 2 - d


def chi_sq_tail(d: int, s: float) -> float:
    """Upper bound on ``P[chi2_d - d >= s]``."""
    if s < 0:
        raise InvalidParameter(f"s must be nonnegative, got {s}")
    return max(math.exp(-s * s / (8.0 * d)), math.exp(-s / 8.0))


def event_tail_exact(d: int, beta: float) -> float:
    """Exact ``P(||theta_hat - theta*||_{V_t} > beta)`` under exact posterior sampling.

    Half the squared distance is chi-square with ``d`` degrees of freedom.
    """
    return float(chi2.sf(beta * beta / 2.0, d))


def theorem2_bound(r: float, tau_sq, T: int, *, upper: str = "d-1") -> float:
    """Lower bound on the Bayesian regret of any policy.

    ``tau_sq`` are the prior eigenvalues in descending order. The sum runs over
    ``i = 2 .. min(T, d - 1)`` (``upper="d-1"``, default) or
    ``i = 2 .. min(T, d)`` (``upper="d"``).
    """
    tau_sq = np.asarray(tau_sq, dtype=float).ravel()
    if tau_sq.size == 0:
        raise InvalidParameter("tau_sq must be non-empty")
    if np.any(tau_sq < 0):
        raise InvalidParameter("tau_sq must be nonnegative")
    if np.any(np.diff(tau_sq) > 1e-12 * max(tau_sq[0], 1.0)):
        raise InvalidParameter("tau_sq must be sorted in descending order")
    d = tau_sq.size
    if upper == "d-1":
        m = min(int(T), d - 1)
    elif upper == "d":
        m = min(int(T), d)
    else:
        raise ValueError(f"unknown summation limit {upper!r}")
    norm = math.sqrt(float(np.sum(tau_sq)))
    if m < 2 or norm == 0:
        return 0.0
    i = np.arange(2, m + 1)
    return float(r / (math.pi * norm) * np.sum((i - 1) * tau_sq[i - 1]))


def theorem2_from_cov(r: float, sigma0, T: int, *, upper: str = "d-1") -> float:
    return theorem2_bound(r, _spd(sigma0).eigenvalues, T, upper=upper)


def corollary2_shape(S: float, r: float, d: int, T: int) -> float:
    """``S r d^{-1/2} min(T, d)^2``: the isotropic-prior lower bound without its constant."""
    return S * r * min(T, d) ** 2 / math.sqrt(d)


def expected_gaussian_norm(d: int) -> float:
    """``E||Z||`` for ``Z ~ N(0, I_d)``: ``sqrt(2) Gamma((d+1)/2) / Gamma(d/2)``."""
    return math.sqrt(2.0) * math.exp(gammaln((d + 1) / 2.0) - gammaln(d / 2.0))


def zhang_bound(S: float, d: int, T: int) -> float:
    """Noiseless minimax lower bound ``(S/sqrt(d)) sum_t (E||Z|| - sqrt(t-1))_+``."""
    if S < 0:
        raise InvalidParameter("S must be nonnegative")
    if T <= 0 or S == 0:
        return 0.0
    en = expected_gaussian_norm(d)
    t = np.arange(1, int(T) + 1)
    return float(S / math.sqrt(d) * np.sum(np.clip(en - np.sqrt(t - 1.0), 0.0, None)))


def theorem3_constants(d: int, T: float, sigma: float, r: float, sigma0) -> tuple[float, float]:
    _check_horizon(T)
    if not sigma > 0:
        raise InvalidParameter(f"sigma must be positive, got {sigma}")
    k1 = math.sqrt(1.0 + math.log(T) / d)
    k2 = k1 * math.sqrt(math.log1p(T * r * r * _spd(sigma0).op_norm / (d * sigma * sigma)))
    return k1, k2


def theorem3_terms(d: int, T: float, sigma: float, r: float, sigma0) -> tuple[float, float, float]:
    s0 = _spd(sigma0)
    k1, k2 = theorem3_constants(d, T, sigma, r, s0)
    return (
        d * sigma * math.sqrt(T) * k2,
        r * math.sqrt(d) * trace_power(s0, 0.5) * k1,
        math.sqrt(s0.trace) * r,
    )


def theorem3_bound(d: int, T: float, sigma: float, r: float, sigma0, C: float = THEOREM3_DEFAULT_C) -> float:
    """Regret bound for strongly log-concave prior and noise, up to the constant ``C``."""
    if not C > 0:
        raise InvalidParameter("C must be positive")
    return C * sum(theorem3_terms(d, T, sigma, r, sigma0))


def gaussian_theorem3_constant() -> float:
    """A value of ``C`` for which the log-concave bound dominates the Gaussian one over sqrt(2).

    ``(1 + max(24x, sqrt(24x))) / (1 + x) <= 24`` for ``x >= 0``, so the
    Gaussian ``c1`` is at most ``sqrt(24)`` times the log-concave one. Comparing
    term by term after dividing the Gaussian bound by sqrt(2), the first term
    needs ``C >= sqrt(24)``, the second ``C >= 3 sqrt(24) / sqrt(2)`` and the
    third ``C >= 1``. Hence ``3 sqrt(12)``.
    """
    return 3.0 * math.sqrt(12.0)


@dataclass
class BoundReport:
    d: int
    T: int
    sigma: float
    r: float
    tr_sigma0: float
    opnorm_sigma0: float
    c1: float
    c2: float
    beta: float
    upper_theorem1: float
    lower_theorem2: float
    lower_theorem2_to_d: float
    lower_zhang: float | None
    theorem3_terms: tuple[float, float, float] | None
    theorem3_C: float
    theorem3_C_is_calibration: bool = True

    def __post_init__(self):
        if self.upper_theorem1 < 0 or self.lower_theorem2 < 0 or self.c1 < 1:
            raise AssertionError("bound report violates basic sign invariants")

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.theorem3_terms is not None:
            out["theorem3_terms"] = list(self.theorem3_terms)
        return out


def _is_isotropic(s0: SpdMatrix) -> bool:
    ev = s0.eigenvalues
    return bool(ev[0] - ev[-1] <= 1e-12 * ev[0])


def bound_report(d: int, T: int, sigma: float, r: float, sigma0, C: float = THEOREM3_DEFAULT_C) -> BoundReport:
    """Evaluate every bound for one configuration.

    ``lower_zhang`` is filled only for isotropic priors, where the prior
    ``N(0, (S^2/d) I)`` with ``S^2 = tr(Sigma0)`` matches the comparison setting;
    it is scaled by ``r`` because rewards are linear in the action radius.
    """
    s0 = _spd(sigma0)
    zh = r * zhang_bound(math.sqrt(s0.trace), d, T) if _is_isotropic(s0) else None
    return BoundReport(
        d=d,
        T=T,
        sigma=sigma,
        r=r,
        tr_sigma0=s0.trace,
        opnorm_sigma0=s0.op_norm,
        c1=c1(d, T),
        c2=c2(d, T, sigma, r, s0),
        beta=compute_beta(d, T),
        upper_theorem1=theorem1_bound(d, T, sigma, r, s0),
        lower_theorem2=theorem2_from_cov(r, s0, T),
        lower_theorem2_to_d=theorem2_from_cov(r, s0, T, upper="d"),
        lower_zhang=zh,
        theorem3_terms=theorem3_terms(d, T, sigma, r, s0),
        theorem3_C=C,
    )
