"""Dense symmetric linear algebra used throughout the package.

Every matrix here is small (d <= 64), so spectral decompositions are computed
directly with LAPACK rather than by iterative methods.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DimensionMismatch, InvalidEigenvalue, InvalidRotation, SingularMatrix

# Positive definiteness gate used by powers, log-determinants and samplers.
SINGULAR_RTOL = 1e-12
PSD_RTOL = 1e-10
# Full re-inversion cadence for Sherman-Morrison maintained inverses.
REFRESH_EVERY = 64


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs of a symmetric matrix, eigenvalues in descending order."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


class SpdMatrix:
    """Immutable symmetric positive (semi)definite matrix.

    The input is symmetrized as ``(M + M.T) / 2`` on construction. Positive
    semidefiniteness is not enforced here; use :meth:`is_psd` or the checked
    constructors.
    """

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix entries must be finite")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        self._a = a

    @classmethod
    def identity(cls, d: int, scale: float = 1.0) -> "SpdMatrix":
        return cls(scale * np.eye(d))

    @classmethod
    def diag(cls, values) -> "SpdMatrix":
        return cls(np.diag(np.asarray(values, dtype=float)))

    @property
    def array(self) -> np.ndarray:
        return self._a

    @property
    def dim(self) -> int:
        return self._a.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._a
        return self._a.astype(dtype)

    def __repr__(self) -> str:
        return f"SpdMatrix(dim={self.dim}, trace={self.trace:.6g})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpdMatrix):
            return NotImplemented
        return self._a.shape == other._a.shape and bool(np.array_equal(self._a, other._a))

    __hash__ = None

    @cached_property
    def spectrum(self) -> SpectralDecomposition:
        w, q = np.linalg.eigh(self._a)
        w = w[::-1].copy()
        q = q[:, ::-1].copy()
        w.setflags(write=False)
        q.setflags(write=False)
        return SpectralDecomposition(w, q)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.spectrum.eigenvalues

    @property
    def min_eig(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def max_eig(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def op_norm(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    @property
    def trace(self) -> float:
        return float(np.trace(self._a))

    def is_psd(self, rtol: float = PSD_RTOL) -> bool:
        return self.min_eig >= -rtol * max(self.max_eig, 0.0)

    def is_pd(self, rtol: float = SINGULAR_RTOL) -> bool:
        return self.max_eig > 0 and self.min_eig > rtol * self.max_eig

    def scaled(self, c: float) -> "SpdMatrix":
        return SpdMatrix(c * self._a)

    def inverse(self) -> "SpdMatrix":
        _require_pd(self)
        return SpdMatrix(np.linalg.inv(self._a))

    def quad(self, x) -> float:
        return mahalanobis_sq(x, self)


def _as_array(m) -> np.ndarray:
    return m.array if isinstance(m, SpdMatrix) else np.asarray(m, dtype=float)


def _require_pd(m: SpdMatrix) -> None:
    if not m.is_pd():
        raise SingularMatrix(
            f"matrix is not positive definite (eigenvalue range [{m.min_eig:.3g}, {m.max_eig:.3g}])"
        )


def spd_from_eigenvalues(evals, rotation=None) -> SpdMatrix:
    """Build ``Q diag(evals) Q^T``; ``Q`` defaults to the identity."""
    evals = np.atleast_1d(np.asarray(evals, dtype=float))
    if evals.ndim != 1 or evals.size == 0:
        raise InvalidEigenvalue("eigenvalues must be a non-empty vector")
    if not np.all(np.isfinite(evals)) or np.any(evals <= 0):
        raise InvalidEigenvalue(f"eigenvalues must be finite and positive, got {evals}")
    d = evals.size
    if rotation is None:
        return SpdMatrix(np.diag(evals))
    q = np.asarray(rotation, dtype=float)
    if q.shape != (d, d):
        raise InvalidRotation(f"rotation must be {d}x{d}, got {q.shape}")
    if np.max(np.abs(q.T @ q - np.eye(d))) > 1e-10:
        raise InvalidRotation("rotation is not orthogonal")
    return SpdMatrix((q * evals) @ q.T)


def random_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix)."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def polynomial_eigenvalues(d: int, alpha: float) -> np.ndarray:
    """Eigenvalues ``i**(2*alpha)`` for ``i = d, ..., 1`` (descending).

    The index starts at 1 so the smallest eigenvalue is 1 and the matrix stays
    nonsingular.
    """
    if d < 1:
        raise ValueError("d must be positive")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    i = np.arange(d, 0, -1, dtype=float)
    return i ** (2.0 * alpha)


def spd_power(m: SpdMatrix, p: float) -> SpdMatrix:
    """``Q diag(lambda**p) Q^T`` for any real ``p``; requires ``m`` positive definite."""
    _require_pd(m)
    s = m.spectrum
    return SpdMatrix((s.eigenvectors * s.eigenvalues**p) @ s.eigenvectors.T)


def trace_power(m: SpdMatrix, p: float) -> float:
    """``tr(M**p)`` from the eigenvalues."""
    if p == 0:
        return float(m.dim)
    _require_pd(m)
    return float(np.sum(m.eigenvalues**p))


def fractional_power(m: SpdMatrix, p: float) -> SpdMatrix:
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    return spd_power(m, p)


def log_det(m: SpdMatrix) -> float:
    """Sum of log eigenvalues."""
    _require_pd(m)
    return float(np.sum(np.log(m.eigenvalues)))


def mahalanobis_sq(x, m) -> float:
    x = np.asarray(x, dtype=float)
    a = _as_array(m)
    if x.ndim != 1 or x.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"vector of shape {x.shape} vs matrix of shape {a.shape}")
    return max(float(x @ a @ x), 0.0)


def rank_one_precision_update(vinv, u) -> SpdMatrix:
    """Given ``V^{-1}``, return ``(V + u u^T)^{-1}`` by Sherman-Morrison."""
    a = _as_array(vinv)
    u = np.asarray(u, dtype=float)
    if u.shape != (a.shape[0],):
        raise DimensionMismatch(f"vector of shape {u.shape} vs matrix of shape {a.shape}")
    w = a @ u
    return SpdMatrix(a - np.outer(w, w) / (1.0 + u @ w))


def gaussian_sample(mean, cov, rng: np.random.Generator) -> np.ndarray:
    """Draw ``mean + L z`` with ``L`` the lower Cholesky factor of ``cov``."""
    mean = np.asarray(mean, dtype=float)
    c = _as_array(cov)
    if mean.shape != (c.shape[0],):
        raise DimensionMismatch(f"mean of shape {mean.shape} vs covariance of shape {c.shape}")
    try:
        chol = np.linalg.cholesky(c)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix("covariance is not positive definite") from exc
    return mean + chol @ rng.standard_normal(mean.shape[0])


class RankOneInverse:
    """Tracks ``V`` and ``V^{-1}`` under rank-one updates ``V += c u u^T``.

    ``V`` is accumulated exactly; the inverse uses Sherman-Morrison and is
    recomputed from ``V`` every ``refresh_every`` updates to bound drift.
    """

    def __init__(self, v0, refresh_every: int = REFRESH_EVERY):
        v0 = v0 if isinstance(v0, SpdMatrix) else SpdMatrix(v0)
        _require_pd(v0)
        self.v = v0.array.copy()
        self.vinv = np.linalg.inv(self.v)
        self.vinv = 0.5 * (self.vinv + self.vinv.T)
        self.refresh_every = refresh_every
        self.count = 0

    def quad_inv(self, u) -> float:
        """``u^T V^{-1} u``."""
        return max(float(u @ self.vinv @ u), 0.0)

    def update(self, u, weight: float = 1.0) -> None:
        u = np.asarray(u, dtype=float)
        self.v += weight * np.outer(u, u)
        self.count += 1
        if self.count % self.refresh_every == 0:
            self.vinv = np.linalg.inv(self.v)
        else:
            w = self.vinv @ u
            self.vinv -= weight * np.outer(w, w) / (1.0 + weight * (u @ w))
        self.vinv = 0.5 * (self.vinv + self.vinv.T)
