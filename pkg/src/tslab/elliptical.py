"""Elliptical potential sums and the inequalities that control them.

A :class:`PotentialSequence` is a positive definite ``V_0`` together with
vectors ``u_0 .. u_{T-1}`` of norm at most one, defining
``V_{t+1} = V_t + u_t u_t^T``. The functions below evaluate the potential
``sum_t ||u_t||_{V_t^{-1}}^{2p}`` and its upper bounds exactly (up to
floating point), and provide fuzzing helpers that search for violations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import DimensionMismatch, HypothesisViolated, PreconditionViolated, SingularMatrix
from .linalg import RankOneInverse, SpdMatrix, log_det, random_rotation

NORM_SLACK = 1e-12
DEFAULT_P_GRID = (0.05, 0.1, 0.25, 0.5, 0.75, 1.0)
FUZZ_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class PotentialSequence:
    v0: SpdMatrix
    us: np.ndarray

    def __post_init__(self):
        v0 = self.v0 if isinstance(self.v0, SpdMatrix) else SpdMatrix(self.v0)
        object.__setattr__(self, "v0", v0)
        us = np.asarray(self.us, dtype=float)
        if us.size == 0:
            us = np.zeros((0, v0.dim))
        if us.ndim != 2 or us.shape[1] != v0.dim:
            raise DimensionMismatch(f"vectors have shape {us.shape}, expected (T, {v0.dim})")
        norms = np.linalg.norm(us, axis=1)
        if np.any(norms > 1.0 + NORM_SLACK):
            raise PreconditionViolated(f"vector norms must be <= 1, max is {norms.max():.17g}")
        us.setflags(write=False)
        object.__setattr__(self, "us", us)

    @property
    def T(self) -> int:
        return self.us.shape[0]

    @property
    def d(self) -> int:
        return self.v0.dim

    def precision(self, t: int) -> SpdMatrix:
        """``V_t = V_0 + sum_{s<t} u_s u_s^T``."""
        u = self.us[:t]
        return SpdMatrix(self.v0.array + u.T @ u)

    @property
    def final_precision(self) -> SpdMatrix:
        return self.precision(self.T)

    def appended(self, u) -> "PotentialSequence":
        return PotentialSequence(self.v0, np.vstack([self.us, np.asarray(u, dtype=float)[None, :]]))


def _require_pd(m: SpdMatrix) -> None:
    if not m.is_pd():
        raise SingularMatrix("V0 must be positive definite")


def potential_norms(seq: PotentialSequence) -> np.ndarray:
    """``||u_t||^2_{V_t^{-1}}`` for every step, from an incrementally maintained inverse."""
    _require_pd(seq.v0)
    tracker = RankOneInverse(seq.v0)
    out = np.empty(seq.T)
    for t, u in enumerate(seq.us):
        out[t] = tracker.quad_inv(u)
        tracker.update(u)
    return out


def lhs_potential(seq: PotentialSequence, p: float, norms: np.ndarray | None = None) -> float:
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    q = potential_norms(seq) if norms is None else norms
    return float(np.sum(q**p))


def log_det_ratio(seq: PotentialSequence) -> float:
    """``log(det V_T / det V_0)``, clipped at zero (it is nonnegative in exact arithmetic)."""
    _require_pd(seq.v0)
    if seq.T == 0:
        return 0.0
    return max(log_det(seq.final_precision) - log_det(seq.v0), 0.0)


def _trace_drop(ev_before: np.ndarray, ev_after: np.ndarray, p: float) -> float:
    """``(1/p) (tr(A^{-p}) - tr(B^{-p}))`` from eigenvalues; ``p = 0`` gives the log-det limit.

    Written with ``expm1`` so that small ``p`` does not cancel catastrophically.
    """
    if p == 0:
        return float(np.sum(np.log(ev_after)) - np.sum(np.log(ev_before)))
    a = np.sum(np.expm1(-p * np.log(ev_before)))
    b = np.sum(np.expm1(-p * np.log(ev_after)))
    return float((a - b) / p)


def burn_in_term(seq: PotentialSequence, p: float) -> float:
    """``(1/p) (tr(V_0^{-p}) - tr(V_T^{-p}))``, equal to ``log det(V_T / V_0)`` at ``p = 0``."""
    _require_pd(seq.v0)
    if seq.T == 0:
        return 0.0
    return _trace_drop(seq.v0.eigenvalues, seq.final_precision.eigenvalues, p)


def rhs_generalized(seq: PotentialSequence, p: float) -> float:
    """``2^p T^{1-p} (log det V_T/det V_0)^p + (3/(2p)) (tr V_0^{-p} - tr V_T^{-p})``."""
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    ld = log_det_ratio(seq)
    T = seq.T
    if T == 0:
        return 0.0
    first = 2.0**p * T ** (1.0 - p) * ld**p
    return first + 1.5 * max(burn_in_term(seq, p), 0.0)


def rhs_classic(seq: PotentialSequence) -> float:
    """``2 log(det V_T / det V_0)``; requires ``V_0 >= I``."""
    if seq.v0.min_eig < 1.0 - 1e-12:
        raise HypothesisViolated(f"requires V0 >= I, smallest eigenvalue is {seq.v0.min_eig:.6g}")
    return 2.0 * log_det_ratio(seq)


@dataclass(frozen=True)
class CaseCheck:
    branch: int
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + FUZZ_RTOL * abs(self.rhs) + 1e-300


def _quad_power(spec, u, power: float) -> float:
    """``u^T V^{power} u`` from a spectral decomposition of ``V``."""
    w = spec.eigenvectors.T @ u
    return float(np.sum(w * w * spec.eigenvalues**power))


def per_step_case_check(v, u, p: float) -> CaseCheck:
    """Evaluate the one-step bound on ``||u||^{2p}_{V^{-1}}`` in the branch that applies.

    Branch 1 (``||u||^2_{V^{-1}} <= 2``): ``(2 log(det(V + uu^T)/det V))^p``.
    Branch 2: ``(3/(2p)) (tr V^{-p} - tr (V + uu^T)^{-p})``.
    """
    v = v if isinstance(v, SpdMatrix) else SpdMatrix(v)
    _require_pd(v)
    u = np.asarray(u, dtype=float)
    if np.linalg.norm(u) > 1.0 + NORM_SLACK:
        raise PreconditionViolated("||u|| must be <= 1")
    q = _quad_power(v.spectrum, u, -1.0)
    lhs = q**p
    if q <= 2.0:
        # det(V + uu^T) / det(V) = 1 + q
        return CaseCheck(1, lhs, (2.0 * math.log1p(q)) ** p)
    after = SpdMatrix(v.array + np.outer(u, u))
    return CaseCheck(2, lhs, 1.5 * _trace_drop(v.eigenvalues, after.eigenvalues, p))


def holder_lemma_check(v, u, p: float) -> tuple[float, float]:
    """Both sides of ``(2/3)||u||^{2p}_{V^{-1}} <= ||u||^2_{V^{-1-p}} / (1 + ||u||^2_{V^{-1}})``."""
    v = v if isinstance(v, SpdMatrix) else SpdMatrix(v)
    _require_pd(v)
    if not 0 < p <= 1:
        raise PreconditionViolated(f"p must lie in (0, 1], got {p}")
    u = np.asarray(u, dtype=float)
    if np.linalg.norm(u) > 1.0 + NORM_SLACK:
        raise PreconditionViolated("||u|| must be <= 1")
    spec = v.spectrum
    q = _quad_power(spec, u, -1.0)
    if q < 2.0:
        raise PreconditionViolated(f"requires ||u||^2_(V^-1) >= 2, got {q:.6g}")
    return (2.0 / 3.0) * q**p, _quad_power(spec, u, -1.0 - p) / (1.0 + q)


def tightness_instance(lams) -> PotentialSequence:
    """``V_0 = diag(lams)`` with ``u_t = e_t``: the potential equals ``tr(V_0^{-p})``."""
    lams = np.asarray(lams, dtype=float).ravel()
    if lams.size == 0 or np.any(lams <= 0):
        raise ValueError("lams must be a non-empty positive vector")
    return PotentialSequence(SpdMatrix.diag(lams), np.eye(lams.size))


@dataclass
class Decomposition:
    """Per-step quantities behind the two-branch argument."""

    q: np.ndarray
    branch: np.ndarray
    log_ratio: np.ndarray
    trace_drop: np.ndarray
    branch_rhs: np.ndarray
    unconditional_rhs: np.ndarray


def stepwise_decomposition(seq: PotentialSequence, p: float) -> Decomposition:
    """Evaluate the one-step bounds along a sequence (eigendecomposition per step)."""
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    _require_pd(seq.v0)
    T = seq.T
    q = np.empty(T)
    log_ratio = np.empty(T)
    trace_drop = np.empty(T)
    branch = np.empty(T, dtype=int)
    branch_rhs = np.empty(T)
    v = seq.v0.array.copy()
    ev = seq.v0.eigenvalues
    for t, u in enumerate(seq.us):
        vm = SpdMatrix(v)
        q[t] = _quad_power(vm.spectrum, u, -1.0)
        check = per_step_case_check(vm, u, p)
        v = v + np.outer(u, u)
        ev_next = np.linalg.eigvalsh(v)[::-1]
        log_ratio[t] = math.log1p(q[t])
        trace_drop[t] = _trace_drop(ev, ev_next, p) * p
        branch[t] = check.branch
        branch_rhs[t] = check.rhs
        ev = ev_next
    unconditional = (2.0 * log_ratio) ** p + 1.5 / p * trace_drop
    return Decomposition(q, branch, log_ratio, trace_drop, branch_rhs, unconditional)


# ---------------------------------------------------------------------------
# Fuzzing

U_MODES = ("uniform", "unit", "tiny", "adversarial", "mixed")


@dataclass
class FuzzRecord:
    seed: int
    index: int
    d: int
    T: int
    p: float
    cond: float
    mode: str
    lhs: float
    rhs: float
    classic_rhs: float | None

    @property
    def rel_margin(self) -> float:
        return (self.rhs - self.lhs) / max(abs(self.rhs), 1e-300)

    @property
    def violated(self) -> bool:
        return self.lhs > self.rhs + FUZZ_RTOL * abs(self.rhs)


@dataclass
class FuzzReport:
    instances: int
    violations: int
    worst_margin: float | None
    worst_instance_seed: int | None
    classic_checked: int = 0
    classic_violations: int = 0
    records: list[FuzzRecord] = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {
            "instances": self.instances,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "worst_instance_seed": self.worst_instance_seed,
        }


def random_v0(d: int, rng: np.random.Generator, max_log10_cond: float = 8.0) -> tuple[SpdMatrix, float]:
    """Random positive definite matrix with condition number up to ``10**max_log10_cond``."""
    log_cond = rng.uniform(0.0, max_log10_cond)
    top = 10.0 ** rng.uniform(-3.0, 2.0)
    if d == 1:
        return SpdMatrix([[top / 10.0**log_cond]]), 1.0
    inner = rng.uniform(0.0, 1.0, size=d - 2)
    exps = np.concatenate([[0.0], inner, [1.0]]) * log_cond
    lams = top * 10.0 ** (-exps)
    q = random_rotation(d, rng)
    return SpdMatrix((q * lams) @ q.T), 10.0**log_cond


def _draw_u(mode: str, d: int, v: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if mode == "mixed":
        mode = U_MODES[rng.integers(0, 4)]
    if mode == "adversarial":
        w, q = np.linalg.eigh(v)
        u = q[:, 0].copy()
    else:
        u = rng.standard_normal(d)
    nrm = np.linalg.norm(u)
    u = u / nrm if nrm > 0 else np.eye(d)[0]
    if mode == "uniform":
        u *= rng.uniform(0.0, 1.0)
    elif mode == "tiny":
        u *= 10.0 ** rng.uniform(-8.0, -2.0)
    n = np.linalg.norm(u)
    if n > 1.0:
        u /= n
    return u


def fuzz_sequence(
    seed: int,
    index: int,
    *,
    max_dim: int = 8,
    max_T: int = 200,
    max_log10_cond: float = 8.0,
    p_grid=DEFAULT_P_GRID,
) -> tuple[PotentialSequence, float, float, str]:
    """Deterministically generate fuzz instance ``index`` of campaign ``seed``."""
    rng = rngmod.stream(seed, index, "fuzz")
    d = int(rng.integers(1, max_dim + 1))
    T = int(rng.integers(1, max_T + 1))
    p = float(p_grid[rng.integers(0, len(p_grid))])
    mode = U_MODES[rng.integers(0, len(U_MODES))]
    v0, cond = random_v0(d, rng, max_log10_cond)
    v = v0.array.copy()
    us = np.empty((T, d))
    for t in range(T):
        us[t] = _draw_u(mode, d, v, rng)
        v += np.outer(us[t], us[t])
    return PotentialSequence(v0, us), p, cond, mode


def fuzz_campaign(n_instances: int, seed: int = 0, **kwargs) -> FuzzReport:
    """Check the generalized bound (and the classic one where ``V_0 >= I``) on random sequences."""
    records = []
    classic_checked = classic_bad = 0
    for i in range(n_instances):
        seq, p, cond, mode = fuzz_sequence(seed, i, **kwargs)
        norms = potential_norms(seq)
        lhs = lhs_potential(seq, p, norms)
        rhs = rhs_generalized(seq, p)
        classic = None
        if seq.v0.min_eig >= 1.0:
            classic = rhs_classic(seq)
            classic_checked += 1
            lhs2 = float(np.sum(norms))
            if lhs2 > classic + FUZZ_RTOL * abs(classic):
                classic_bad += 1
        records.append(FuzzRecord(seed, i, seq.d, seq.T, p, cond, mode, lhs, rhs, classic))
    violations = sum(r.violated for r in records)
    worst = min(records, key=lambda r: r.rel_margin) if records else None
    return FuzzReport(
        instances=n_instances,
        violations=violations,
        worst_margin=None if worst is None else worst.rel_margin,
        worst_instance_seed=None if worst is None else worst.index,
        classic_checked=classic_checked,
        classic_violations=classic_bad,
        records=records,
    )
