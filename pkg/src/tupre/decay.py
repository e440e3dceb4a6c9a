"""Parametric singular-value decay models and their closed-form index bounds.

Ill-posedness is classified by how fast the singular values fall off:
power-law decay ``i^{-tau}`` (mild for tau in [1/2, 1], moderate for
tau > 1) or exponential decay ``tau^{1-i}`` (severe, tau > 1). All models
are normalized so the first singular value is one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError

__all__ = [
    "DecayModel",
    "DecayFit",
    "singular_value_at",
    "singular_values",
    "rank_bound",
    "noise_index_bound",
    "fit_decay",
]

KINDS = ("mild", "moderate", "severe")


@dataclass(frozen=True)
class DecayModel:
    """A decay regime (mild, moderate, severe) with its rate parameter tau."""

    kind: str
    tau: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"kind must be one of {KINDS}")
        if self.kind == "mild" and not 0.5 <= self.tau <= 1.0:
            raise InputError("mild decay requires 1/2 <= tau <= 1")
        if self.kind in ("moderate", "severe") and not self.tau > 1.0:
            raise InputError(f"{self.kind} decay requires tau > 1")


def singular_value_at(model: DecayModel, i: int) -> float:
    """Model singular value at 1-based index i: i^{-tau} or tau^{1-i}."""
    if i < 1:
        raise InputError("index must be >= 1")
    if model.kind == "severe":
        return float(model.tau ** (1.0 - i))
    return float(i ** -model.tau)


def singular_values(model: DecayModel, n: int) -> np.ndarray:
    """Vector of the first n model singular values."""
    if n < 1:
        raise InputError("n must be >= 1")
    idx = np.arange(1, n + 1, dtype=float)
    if model.kind == "severe":
        return model.tau ** (1.0 - idx)
    return idx ** -model.tau


def rank_bound(model: DecayModel, eps: float) -> int:
    """Upper bound on the effective numerical rank at precision eps.

    The bound is the largest index whose model singular value still exceeds
    eps: strictly below ``eps^{-1/tau}`` for power-law decay and below
    ``1 - log(eps)/log(tau)`` for exponential decay, so the floor of the
    expression is returned. Values landing exactly on an integer may come
    out one lower in floating point; callers comparing against tabulated
    entries should allow +-1 there.
    """
    if not 0.0 < eps < 1.0:
        raise InputError("eps must lie in (0, 1)")
    if model.kind == "severe":
        return math.floor(1.0 - math.log(eps) / math.log(model.tau))
    return math.floor(eps ** (-1.0 / model.tau))


def noise_index_bound(
    model: DecayModel, sigma_noise: float, delta: float, nu: float
) -> int:
    """Index past which data coefficients are noise-dominated.

    Solves the crossover ``sigma_{l+delta}^{1+nu} = sigma_noise`` for l under
    the decay model and rounds to the nearest integer (half away from zero),
    never returning less than 1.

    Parameters
    ----------
    sigma_noise : float
        Noise standard deviation in normalized data units, in (0, 1).
    delta : float
        Fractional index offset of the crossover, in (0, 1).
    nu : float
        Excess decay rate of the exact coefficients, in (0, 1).
    """
    if not 0.0 < sigma_noise < 1.0:
        raise InputError("sigma_noise must lie in (0, 1)")
    if not 0.0 < delta < 1.0:
        raise InputError("delta must lie in (0, 1)")
    if not 0.0 < nu < 1.0:
        raise InputError("nu must lie in (0, 1)")
    if model.kind == "severe":
        raw = (1.0 - delta) - math.log(sigma_noise) / ((nu + 1.0) * math.log(model.tau))
    else:
        raw = sigma_noise ** (-1.0 / (model.tau * (1.0 + nu))) - delta
    return max(1, math.floor(raw + 0.5))


@dataclass(frozen=True)
class DecayFit:
    """Result of fitting a decay model to an empirical spectrum."""

    kind: str
    tau: float
    residual: float


def fit_decay(sigma, index_range: tuple[int, int]) -> DecayFit:
    """Fit both decay laws to a spectrum slice and keep the better one.

    A power model is fit by regressing ``log sigma_i`` on ``log i`` and an
    exponential model by regressing ``log sigma_i`` on ``i``; the model with
    the smaller root-mean-square log residual wins, with ties going to the
    exponential (severe) model since it implies fewer usable terms.

    Parameters
    ----------
    sigma : array_like
        Positive singular values, 1-based indexing assumed.
    index_range : (int, int)
        Inclusive 1-based index window to fit over; needs length >= 3.
    """
    sigma = np.asarray(sigma, dtype=float)
    lo, hi = index_range
    if not (1 <= lo and hi <= sigma.size and hi - lo + 1 >= 3):
        raise InputError("index range must lie within the spectrum and have length >= 3")
    window = sigma[lo - 1 : hi]
    if np.any(window <= 0):
        raise InputError("singular values in the fit range must be positive")
    idx = np.arange(lo, hi + 1, dtype=float)
    log_sigma = np.log(window)

    def _fit(x):
        coeffs, res = np.polyfit(x, log_sigma, 1, full=True)[:2]
        rss = float(res[0]) if res.size else 0.0
        return coeffs[0], math.sqrt(rss / x.size)

    slope_pow, res_pow = _fit(np.log(idx))
    slope_exp, res_exp = _fit(idx)
    if res_pow < res_exp:
        tau = -slope_pow
        kind = "mild" if tau <= 1.0 else "moderate"
        return DecayFit(kind=kind, tau=float(tau), residual=res_pow)
    return DecayFit(kind="severe", tau=float(math.exp(-slope_exp)), residual=res_exp)
