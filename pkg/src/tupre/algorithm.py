"""Iterative truncated-UPRE parameter estimation with windowed stopping.

The driver minimizes the truncated UPRE objective on subspaces of growing
size k, watching the relative change between successive minimizers. Once the
moving-window mean of those changes drops below a tolerance (and the current
minimizer is not pinned at the theoretical lower bound), the parameter is
declared converged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InputError
from .estimators import (
    AlphaInterval,
    EstimatorInput,
    alpha_lower_bound,
    minimize_objective,
)

__all__ = ["TupreConfig", "TraceStep", "TupreResult", "run_tupre"]

# A minimizer within this distance of the interval floor counts as a
# lower-boundary hit; exact hits are produced by the endpoint snapping in
# minimize_objective.
_BOUNDARY_TOL = 1e-12
# Floor used when the theoretical bound is undefined (sigma >= 1) and cap
# keeping the search interval nonempty when the bound reaches 1.
_LO_FLOOR = 1e-12
_LO_CAP = 1.0 - 1e-6


@dataclass(frozen=True)
class TupreConfig:
    """Inputs of the iterative estimation loop.

    Attributes
    ----------
    k0 : int
        Initial subspace size.
    delta_k : int
        Step between successive subspace sizes.
    k_max : int, optional
        Largest subspace size; defaults to the effective rank of the
        spectrum at machine precision.
    delta : float
        Relative tolerance on the windowed mean change.
    w : int
        Moving-window length.
    l_estimate : int, optional
        Known or estimated noise index; when given, the search interval
        floor is fixed from ``sigma[l_estimate]`` instead of tracking k.
    """

    k0: int = 10
    delta_k: int = 10
    k_max: Optional[int] = None
    delta: float = 1e-3
    w: int = 5
    l_estimate: Optional[int] = None

    def __post_init__(self):
        if self.k0 < 1:
            raise InputError("k0 must be >= 1")
        if self.delta_k < 1:
            raise InputError("delta_k must be >= 1")
        if self.k_max is not None and self.k_max < self.k0:
            raise InputError("k_max must be >= k0")
        if not self.delta > 0:
            raise InputError("delta must be positive")
        if self.w < 1:
            raise InputError("w must be >= 1")
        if self.l_estimate is not None and self.l_estimate < 1:
            raise InputError("l_estimate must be >= 1")


@dataclass(frozen=True)
class TraceStep:
    """One evaluation of the loop: subspace size, minimizer, and bookkeeping.

    ``change`` is ``|alpha_i - alpha_{i-1}| / alpha_i`` (None on the first
    step); ``at_boundary`` records whether the minimizer sat on the interval
    floor used at this step.
    """

    k: int
    alpha: float
    alpha_min: float
    change: Optional[float]
    at_boundary: bool


@dataclass(frozen=True)
class TupreResult:
    """Outcome of the iterative loop, including the full (k, alpha) trace."""

    k_opt: int
    alpha_opt: float
    c_hat: float
    trace: tuple[TraceStep, ...]
    terminated_by: str  # "tolerance" or "k_max"


def window_mean(changes, w: int) -> float:
    """Mean of the trailing min(w, len) entries; inf when empty."""
    if not changes:
        return math.inf
    tail = changes[-w:]
    return float(sum(tail) / len(tail))


def _clipped_lower_bound(sigma_value: float) -> float:
    """Interval floor from the theoretical bound, kept inside (0, 1)."""
    if sigma_value >= 1.0:
        return _LO_FLOOR
    return min(alpha_lower_bound(sigma_value), _LO_CAP)


def run_tupre(inp: EstimatorInput, config: TupreConfig) -> TupreResult:
    """Run the iterative truncated-UPRE estimation loop.

    Starting at ``k0``, the UPRE objective restricted to the leading k
    triplets is minimized over ``[alpha_min, 1]``. The floor ``alpha_min``
    comes from the theoretical bound: from ``sigma[l_estimate]`` when a noise
    index is supplied, otherwise from ``sigma[k-1]``, refreshed each step.
    The loop advances k by ``delta_k`` (clamping the final step to ``k_max``)
    while the windowed mean relative change exceeds ``delta`` or the current
    minimizer sits on the floor, a boundary hit meaning noise has not yet
    dominated, so convergence cannot be declared.

    Returns
    -------
    TupreResult
        Terminal (k, alpha) pair, the final windowed mean change, the whole
        trace, and whether the tolerance or the k budget stopped the loop.
    """
    n_avail = inp.sigma.size
    k_max = config.k_max
    if k_max is None:
        eps = float(np.finfo(float).eps)
        k_max = int(np.count_nonzero(inp.sigma > eps * inp.sigma[0]))
        k_max = max(k_max, config.k0)
    if k_max > n_avail:
        raise InputError(f"k_max = {k_max} exceeds the {n_avail} stored triplets")
    if config.k0 > k_max:
        raise InputError("k0 exceeds k_max")
    if config.l_estimate is not None and config.l_estimate >= n_avail:
        raise InputError("l_estimate must leave at least one noise-dominated triplet")

    fixed_lo = None
    if config.l_estimate is not None:
        fixed_lo = _clipped_lower_bound(float(inp.sigma[config.l_estimate]))

    def floor_for(k: int) -> float:
        if fixed_lo is not None:
            return fixed_lo
        return _clipped_lower_bound(float(inp.sigma[k - 1]))

    def evaluate(k: int):
        lo = floor_for(k)
        result = minimize_objective(inp, k, AlphaInterval(lo, 1.0), "upre")
        at_lower = (result.alpha - lo) <= _BOUNDARY_TOL
        return lo, result.alpha, at_lower

    k = config.k0
    lo, alpha, at_lower = evaluate(k)
    trace = [TraceStep(k=k, alpha=alpha, alpha_min=lo, change=None, at_boundary=at_lower)]
    changes: list[float] = []
    c_hat_loop = math.inf
    i = 0
    while ((c_hat_loop > config.delta and k < k_max) or at_lower) and k < k_max:
        i += 1
        k = min(k + config.delta_k, k_max)
        previous = alpha
        lo, alpha, at_lower = evaluate(k)
        change = abs(alpha - previous) / alpha
        changes.append(change)
        trace.append(
            TraceStep(k=k, alpha=alpha, alpha_min=lo, change=change, at_boundary=at_lower)
        )
        if i >= config.w:
            c_hat_loop = window_mean(changes, config.w)

    terminated_by = "tolerance" if c_hat_loop <= config.delta and not at_lower else "k_max"
    return TupreResult(
        k_opt=k,
        alpha_opt=alpha,
        c_hat=window_mean(changes, config.w),
        trace=tuple(trace),
        terminated_by=terminated_by,
    )
