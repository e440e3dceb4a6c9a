"""Singular systems, spectral data projections, and filtered TSVD solutions.

Everything downstream of :func:`compute_svd` works in normalized units: the
singular values are scaled so the largest equals one, and projected data are
divided by the same factor. The original scale is kept on the system so the
normalization can be undone by callers that need it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InputError

__all__ = [
    "SingularSystem",
    "SpectralCoefficients",
    "FilteredSolution",
    "compute_svd",
    "normalize_data",
    "effective_rank",
    "filter_factors",
    "solve_filtered",
    "picard_data",
]


@dataclass(frozen=True, eq=False)
class SingularSystem:
    """Normalized (truncated) SVD of a forward operator.

    Attributes
    ----------
    m, n : int
        Row and column counts of the original operator.
    k_avail : int
        Number of stored singular triplets (exact zeros are dropped).
    sigma : ndarray, shape (k_avail,)
        Singular values, nonincreasing, with ``sigma[0] == 1``.
    u_cols, v_cols : ndarray
        Left (m x k_avail) and right (n x k_avail) singular vectors.
    scale : float
        The original largest singular value used for normalization.
    """

    m: int
    n: int
    k_avail: int
    sigma: np.ndarray
    u_cols: np.ndarray
    v_cols: np.ndarray
    scale: float

    def __post_init__(self):
        if self.k_avail < 1 or self.k_avail > min(self.m, self.n):
            raise InputError("k_avail must lie in [1, min(m, n)]")
        if self.sigma.shape != (self.k_avail,):
            raise InputError("sigma has wrong length")
        if self.u_cols.shape != (self.m, self.k_avail):
            raise InputError("u_cols has wrong shape")
        if self.v_cols.shape != (self.n, self.k_avail):
            raise InputError("v_cols has wrong shape")
        if not np.isfinite(self.scale) or self.scale <= 0:
            raise InputError("scale must be positive and finite")
        if abs(self.sigma[0] - 1.0) > 1e-12:
            raise InputError("sigma must be normalized so sigma[0] == 1")
        if np.any(self.sigma <= 0):
            raise InputError("singular values must be positive")
        if np.any(np.diff(self.sigma) > 0):
            raise InputError("singular values must be nonincreasing")


@dataclass(frozen=True, eq=False)
class SpectralCoefficients:
    """Projected data ``s_i = u_i^T (b / scale)`` plus total data energy."""

    s: np.ndarray
    b_norm_sq: float
    m: int

    def __post_init__(self):
        if self.s.ndim != 1:
            raise InputError("s must be one-dimensional")
        if self.b_norm_sq < 0:
            raise InputError("b_norm_sq must be nonnegative")
        energy = float(np.dot(self.s, self.s))
        if energy > self.b_norm_sq * (1.0 + 1e-10) + 1e-300:
            raise InputError("projected energy exceeds total energy")


@dataclass(frozen=True, eq=False)
class FilteredSolution:
    """A filtered truncated solution together with the (alpha, k) that made it."""

    x: np.ndarray
    alpha: float
    k: int


def compute_svd(a) -> SingularSystem:
    """Compute the full SVD of a dense matrix, normalized so sigma[0] = 1.

    Parameters
    ----------
    a : array_like, shape (m, n)
        Dense matrix with finite entries and at least one nonzero.

    Returns
    -------
    SingularSystem
        Triplets sorted by nonincreasing singular value; exact zeros are
        dropped so every stored singular value is positive. Reconstruction
        ``scale * U diag(sigma) V^T`` matches ``a`` to 1e-10 relative.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.size == 0:
        raise InputError("expected a nonempty two-dimensional matrix")
    if not np.all(np.isfinite(a)):
        raise InputError("matrix entries must be finite")
    if not np.any(a):
        raise DegenerateInputError("matrix is identically zero")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    # LAPACK returns values sorted descending; drop exact zeros so the
    # positivity invariant holds for rank-deficient input.
    keep = s > 0.0
    scale = float(s[0])
    sigma = s[keep] / scale
    sigma[0] = 1.0
    return SingularSystem(
        m=a.shape[0],
        n=a.shape[1],
        k_avail=int(np.count_nonzero(keep)),
        sigma=sigma,
        u_cols=u[:, keep],
        v_cols=vt[keep].T,
        scale=scale,
    )


def normalize_data(system: SingularSystem, b) -> SpectralCoefficients:
    """Project data onto the left singular vectors in normalized units.

    Returns
    -------
    SpectralCoefficients
        ``s_i = u_i^T (b / scale)`` for every stored triplet and
        ``b_norm_sq = ||b / scale||^2`` of the full data vector.
    """
    b = np.asarray(b, dtype=float)
    if b.shape != (system.m,):
        raise InputError(f"data vector must have length {system.m}")
    b_scaled = b / system.scale
    s = system.u_cols.T @ b_scaled
    return SpectralCoefficients(
        s=s, b_norm_sq=float(np.dot(b_scaled, b_scaled)), m=system.m
    )


def effective_rank(system: SingularSystem, eps: float) -> int:
    """Largest 1-based index with ``sigma[i-1] > eps * sigma[0]``; 0 if none."""
    if not 0.0 < eps < 1.0:
        raise InputError("eps must lie in (0, 1)")
    return int(np.count_nonzero(system.sigma > eps * system.sigma[0]))


def filter_factors(sigma, alpha: float):
    """Tikhonov filter factors for the given singular values.

    Parameters
    ----------
    sigma : array_like
        Positive singular values.
    alpha : float
        Regularization parameter, alpha >= 0.

    Returns
    -------
    gamma, phi : ndarray
        ``gamma_i = sigma_i^2 / (sigma_i^2 + alpha^2)`` and its complement
        ``phi_i = alpha^2 / (sigma_i^2 + alpha^2)``; the two sum to one.
    """
    if alpha < 0:
        raise InputError("alpha must be nonnegative")
    sigma = np.asarray(sigma, dtype=float)
    s2 = sigma * sigma
    denom = s2 + alpha * alpha
    gamma = s2 / denom
    return gamma, 1.0 - gamma


def solve_filtered(
    system: SingularSystem,
    coeffs: SpectralCoefficients,
    alpha: float,
    k: int,
) -> FilteredSolution:
    """Filtered truncated solution using the leading k singular triplets.

    The solution is assembled as ``sum_{i<=k} gamma_i(alpha) (s_i / sigma_i) v_i``.
    Because ``s_i`` and ``sigma_i`` are both stored in sigma_1-normalized
    units their ratio equals the original-unit ratio, so the returned vector
    is directly comparable with the unnormalized ground truth; only the
    filter is evaluated at the normalized alpha.
    """
    if not 1 <= k <= system.k_avail:
        raise InputError(f"k must lie in [1, {system.k_avail}]")
    if alpha < 0:
        raise InputError("alpha must be nonnegative")
    gamma, _ = filter_factors(system.sigma[:k], alpha)
    weights = gamma * coeffs.s[:k] / system.sigma[:k]
    return FilteredSolution(x=system.v_cols[:, :k] @ weights, alpha=float(alpha), k=k)


def picard_data(system: SingularSystem, coeffs: SpectralCoefficients) -> np.ndarray:
    """Rows ``(i, sigma_i, |s_i|, |s_i| / sigma_i)`` for i = 1..k_avail."""
    idx = np.arange(1, system.k_avail + 1, dtype=float)
    abs_s = np.abs(coeffs.s)
    return np.column_stack([idx, system.sigma, abs_s, abs_s / system.sigma])
