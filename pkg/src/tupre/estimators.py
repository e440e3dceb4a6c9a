"""UPRE and GCV objectives over TSVD subspaces, derivatives, bounds, and
one-dimensional minimization.

With filter complements ``phi_i = alpha^2 / (sigma_i^2 + alpha^2)`` and
``gamma_i = 1 - phi_i``, the truncated objectives are

    U_k(alpha) = sum_{i<=k} phi_i^2 s_i^2 + 2 sigma^2 sum_{i<=k} gamma_i
    G_k(alpha) = (sum_{i<=k} phi_i^2 s_i^2 + T_k)
                 / ((m - k) + sum_{i<=k} phi_i)^2

where ``T_k = ||b||^2 - sum_{i<=k} s_i^2`` is the projected tail energy
(clamped at zero against rounding) and sigma^2 is the whitened noise
variance. All formulas assume the normalized convention sigma_1 = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DomainError, InputError, NumericError
from .spectral import SingularSystem, SpectralCoefficients

__all__ = [
    "EstimatorInput",
    "AlphaInterval",
    "MinimizeResult",
    "upre_value",
    "upre_grad",
    "upre_hess",
    "gcv_value",
    "alpha_lower_bound",
    "upre_bounds",
    "minimize_objective",
]

# Log-spaced fill of the coarse bracketing grid; the singular values that
# fall inside the interval are added on top.
_GRID_FILL = 512
# Cap on alphas * terms evaluated per vectorized chunk.
_CHUNK_BUDGET = 2_000_000


@dataclass(frozen=True, eq=False)
class EstimatorInput:
    """Spectrum, projected data, and noise variance feeding the estimators."""

    sigma: np.ndarray
    s: np.ndarray
    b_norm_sq: float
    m: int
    noise_var: float

    def __post_init__(self):
        if self.sigma.ndim != 1 or self.s.shape != self.sigma.shape:
            raise InputError("sigma and s must be one-dimensional and equal length")
        if self.m < self.sigma.size:
            raise InputError("m must be at least the number of stored triplets")
        if not self.noise_var > 0:
            raise InputError("noise_var must be positive")
        if self.b_norm_sq < 0:
            raise InputError("b_norm_sq must be nonnegative")

    @classmethod
    def from_spectral(
        cls,
        system: SingularSystem,
        coeffs: SpectralCoefficients,
        noise_var: float,
    ) -> "EstimatorInput":
        """Bundle a singular system with projected data and a noise variance."""
        return cls(
            sigma=system.sigma,
            s=coeffs.s,
            b_norm_sq=coeffs.b_norm_sq,
            m=coeffs.m,
            noise_var=float(noise_var),
        )


@dataclass(frozen=True)
class AlphaInterval:
    """Closed search interval for the regularization parameter."""

    lo: float
    hi: float

    def __post_init__(self):
        if not 0.0 <= self.lo < self.hi <= 1.0:
            raise InputError("interval must satisfy 0 <= lo < hi <= 1")


class MinimizeResult(NamedTuple):
    alpha: float
    value: float
    at_boundary: bool


def _check_k(inp: EstimatorInput, k: int) -> None:
    if not 1 <= k <= inp.sigma.size:
        raise InputError(f"k must lie in [1, {inp.sigma.size}]")


def _phis_gammas(sigma: np.ndarray, alpha: float):
    a2 = alpha * alpha
    s2 = sigma * sigma
    phi = a2 / (s2 + a2)
    return phi, 1.0 - phi


def upre_value(inp: EstimatorInput, k: int, alpha: float) -> float:
    """Truncated UPRE objective U_k(alpha), constant terms dropped."""
    _check_k(inp, k)
    if alpha < 0:
        raise InputError("alpha must be nonnegative")
    phi, gamma = _phis_gammas(inp.sigma[:k], alpha)
    s2 = inp.s[:k] ** 2
    return float(np.dot(phi * phi, s2) + 2.0 * inp.noise_var * gamma.sum())


def _upre_values(inp: EstimatorInput, k: int, alphas: np.ndarray) -> np.ndarray:
    """Vectorized U_k over a grid of alphas, chunked to bound memory."""
    s2 = inp.s[:k] ** 2
    sig2 = inp.sigma[:k] ** 2
    out = np.empty(alphas.size)
    chunk = max(1, _CHUNK_BUDGET // max(k, 1))
    for start in range(0, alphas.size, chunk):
        a2 = alphas[start : start + chunk, None] ** 2
        phi = a2 / (sig2[None, :] + a2)
        gamma = 1.0 - phi
        out[start : start + chunk] = (phi * phi) @ s2 + 2.0 * inp.noise_var * gamma.sum(
            axis=1
        )
    return out


def upre_grad(inp: EstimatorInput, k: int, alpha: float) -> float:
    """First derivative of U_k with respect to alpha.

    Evaluates ``(4/alpha) (sum s_i^2 phi_i^2 gamma_i
    - sigma^2 sum phi_i gamma_i)``; undefined at alpha = 0.
    """
    _check_k(inp, k)
    if alpha <= 0:
        raise DomainError("the UPRE derivative requires alpha > 0")
    phi, gamma = _phis_gammas(inp.sigma[:k], alpha)
    s2 = inp.s[:k] ** 2
    signal = np.dot(s2 * phi * phi, gamma)
    noise = inp.noise_var * np.dot(phi, gamma)
    return float(4.0 / alpha * (signal - noise))


def upre_hess(inp: EstimatorInput, k: int, alpha: float) -> float:
    """Second derivative of U_k with respect to alpha.

    Evaluates ``-(1/alpha) U_k' + (8/alpha^2) (sum s_i^2 phi_i^2 gamma_i
    (2 gamma_i - phi_i) - sigma^2 sum phi_i gamma_i (gamma_i - phi_i))``.
    """
    _check_k(inp, k)
    if alpha <= 0:
        raise DomainError("the UPRE second derivative requires alpha > 0")
    phi, gamma = _phis_gammas(inp.sigma[:k], alpha)
    s2 = inp.s[:k] ** 2
    signal = np.dot(s2 * phi * phi * gamma, 2.0 * gamma - phi)
    noise = inp.noise_var * np.dot(phi * gamma, gamma - phi)
    grad = upre_grad(inp, k, alpha)
    return float(-grad / alpha + 8.0 / (alpha * alpha) * (signal - noise))


def _gcv_tail(inp: EstimatorInput, k: int) -> float:
    # Uses ||b||^2 = ||U^T b||^2, clamped so rounding cannot push it negative.
    return max(0.0, inp.b_norm_sq - float(np.dot(inp.s[:k], inp.s[:k])))


def gcv_value(inp: EstimatorInput, k: int, alpha: float) -> float:
    """Truncated GCV objective G_k(alpha)."""
    _check_k(inp, k)
    if alpha < 0:
        raise InputError("alpha must be nonnegative")
    phi, _ = _phis_gammas(inp.sigma[:k], alpha)
    denom = (inp.m - k) + phi.sum()
    if denom == 0.0:
        raise DomainError("GCV denominator vanishes (m == k and alpha == 0)")
    num = float(np.dot(phi * phi, inp.s[:k] ** 2)) + _gcv_tail(inp, k)
    return num / (denom * denom)


def _gcv_values(inp: EstimatorInput, k: int, alphas: np.ndarray) -> np.ndarray:
    s2 = inp.s[:k] ** 2
    sig2 = inp.sigma[:k] ** 2
    tail = _gcv_tail(inp, k)
    out = np.empty(alphas.size)
    chunk = max(1, _CHUNK_BUDGET // max(k, 1))
    for start in range(0, alphas.size, chunk):
        a2 = alphas[start : start + chunk, None] ** 2
        phi = a2 / (sig2[None, :] + a2)
        denom = (inp.m - k) + phi.sum(axis=1)
        if np.any(denom == 0.0):
            raise DomainError("GCV denominator vanishes (m == k and alpha == 0)")
        out[start : start + chunk] = ((phi * phi) @ s2 + tail) / (denom * denom)
    return out


def alpha_lower_bound(sigma_lplus1: float) -> float:
    """Theoretical lower bound on the UPRE minimizer.

    Given the first noise-dominated singular value ``sigma_{l+1}`` (in
    normalized units, so below one), returns
    ``sigma_{l+1} / sqrt(1 - sigma_{l+1}^2)``.
    """
    if not 0.0 <= sigma_lplus1 < 1.0:
        raise DomainError("the bound requires 0 <= sigma_{l+1} < 1")
    return sigma_lplus1 / math.sqrt(1.0 - sigma_lplus1 * sigma_lplus1)


def upre_bounds(
    inp: EstimatorInput, k: int, l: int, alpha: float
) -> tuple[float, float]:
    """Deterministic envelope of the expected UPRE objective.

    For data satisfying the exact-decay and noise-domination assumptions with
    noise index ``l``, the expected U_k(alpha) lies between

        lower = alpha^4 sum_{i<=l} gamma_i^2             + F_k(alpha)
        upper = alpha^2 sum_{i<=l} phi_i gamma_i         + F_k(alpha)
        F_k   = sigma^2 ((k - l) + 2 sum_{i<=l} gamma_i
                          + sum_{l<i<=k} gamma_i^2)

    Returns the (lower, upper) pair.
    """
    _check_k(inp, k)
    if not 1 <= l <= k:
        raise InputError("the noise index l must satisfy 1 <= l <= k")
    if alpha <= 0:
        raise DomainError("bounds require alpha > 0")
    phi, gamma = _phis_gammas(inp.sigma[:k], alpha)
    head_gamma = gamma[:l]
    lower_head = alpha**4 * float(np.dot(head_gamma, head_gamma))
    upper_head = alpha**2 * float(np.dot(phi[:l], head_gamma))
    tail_gamma = gamma[l:k]
    f_k = inp.noise_var * (
        (k - l) + 2.0 * float(head_gamma.sum()) + float(np.dot(tail_gamma, tail_gamma))
    )
    return lower_head + f_k, upper_head + f_k


_OBJECTIVE_GRIDS = {"upre": _upre_values, "gcv": _gcv_values}


def minimize_objective(
    inp: EstimatorInput,
    k: int,
    interval: AlphaInterval,
    objective: str = "upre",
) -> MinimizeResult:
    """Minimize a truncated objective over a closed alpha interval.

    A coarse bracket is located by evaluating the objective on the singular
    values that fall inside the interval plus a log-spaced fill, then refined
    with bounded derivative-free scalar minimization to absolute tolerance
    1e-10 in alpha. The interval endpoints compete with the refined point, so
    boundary minima are returned exactly at the boundary.

    Returns
    -------
    MinimizeResult
        ``(alpha, value, at_boundary)``; ``at_boundary`` is set when the
        minimizer coincides with either interval endpoint (to within the
        refinement tolerance).
    """
    _check_k(inp, k)
    try:
        grid_fn = _OBJECTIVE_GRIDS[objective]
    except KeyError:
        raise InputError(f"objective must be one of {sorted(_OBJECTIVE_GRIDS)}") from None

    lo, hi = interval.lo, interval.hi
    fill = np.geomspace(max(lo, 1e-12), hi, _GRID_FILL)
    inside = inp.sigma[:k]
    inside = inside[(inside > lo) & (inside < hi)]
    candidates = np.unique(np.concatenate([[lo], fill, inside, [hi]]))
    values = grid_fn(inp, k, candidates)
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise NumericError(
            f"objective {objective} is non-finite at alpha = {candidates[bad][0]!r}"
        )

    best = int(np.argmin(values))
    bracket_lo = candidates[max(best - 1, 0)]
    bracket_hi = candidates[min(best + 1, candidates.size - 1)]
    alpha, value = candidates[best], values[best]
    if bracket_hi > bracket_lo:
        result = minimize_scalar(
            lambda a: float(grid_fn(inp, k, np.array([a]))[0]),
            bounds=(bracket_lo, bracket_hi),
            method="bounded",
            options={"xatol": 1e-10},
        )
        refined_value = float(grid_fn(inp, k, np.array([result.x]))[0])
        if not math.isfinite(refined_value):
            raise NumericError(
                f"objective {objective} is non-finite at alpha = {float(result.x)!r}"
            )
        if refined_value < value:
            alpha, value = float(result.x), refined_value
    # Endpoints win ties so boundary minima are reported exactly.
    for endpoint, endpoint_value in ((lo, values[0]), (hi, values[-1])):
        if endpoint_value <= value:
            alpha, value = endpoint, endpoint_value
    at_boundary = (alpha - lo) <= 1e-10 or (hi - alpha) <= 1e-10
    return MinimizeResult(alpha=float(alpha), value=float(value), at_boundary=bool(at_boundary))
