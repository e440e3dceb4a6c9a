"""Synthetic ground-truth problems, noise injection, and evaluation metrics.

Two generators are provided: a one-dimensional family driven by a decay
model with exact power-law coefficients, and a two-dimensional separable
Gaussian deblurring family whose operator is a Kronecker product of Toeplitz
factors. Both are deterministic under a fixed seed and normalized so the
noise-free data vector has unit norm.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .decay import DecayModel, singular_values
from .errors import DegenerateInputError, DomainError, InputError
from .spectral import SingularSystem, SpectralCoefficients, normalize_data

__all__ = [
    "ProblemInstance",
    "KroneckerBlur",
    "generate_model_problem",
    "generate_blur_problem",
    "with_noise_level",
    "add_noise",
    "rre",
    "estimate_noise_variance",
    "estimate_noise_index",
    "make_kronecker_blur",
    "save_instance",
    "load_instance",
]


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """A synthetic problem with known ground truth.

    ``l_true`` is the noise-crossover index: the largest i whose noise-free
    projected coefficient squared exceeds the noise variance (0 if none,
    which the generators reject as degenerate).
    """

    system: SingularSystem
    x_true: np.ndarray
    b_true: np.ndarray
    b: np.ndarray
    noise_sigma: float
    l_true: int
    seed: int

    @property
    def noise_var_normalized(self) -> float:
        """Noise variance in the sigma_1-normalized units the estimators use."""
        return (self.noise_sigma / self.system.scale) ** 2

    def coefficients(self) -> SpectralCoefficients:
        """Projection of the noisy data onto the stored singular vectors."""
        return normalize_data(self.system, self.b)


@dataclass(frozen=True, eq=False)
class KroneckerBlur:
    """Separable blur operator: the Kronecker product of two Toeplitz factors."""

    psf_1d: np.ndarray
    n_side: int
    a_left: np.ndarray
    a_right: np.ndarray


def add_noise(b_true, noise_sigma: float, seed: int) -> np.ndarray:
    """Add seeded i.i.d. Gaussian noise with standard deviation noise_sigma."""
    if noise_sigma < 0:
        raise InputError("noise_sigma must be nonnegative")
    b_true = np.asarray(b_true, dtype=float)
    if noise_sigma == 0.0:
        return b_true.copy()
    rng = np.random.default_rng(seed)
    return b_true + noise_sigma * rng.standard_normal(b_true.shape)


def rre(x, x_true) -> float:
    """Relative reconstruction error ||x - x_true|| / ||x_true||."""
    x = np.asarray(x, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    if x.shape != x_true.shape:
        raise InputError("vectors must have equal length")
    denom = float(np.linalg.norm(x_true))
    if denom == 0.0:
        raise DomainError("x_true must be nonzero")
    return float(np.linalg.norm(x - x_true)) / denom


def _haar_orthonormal(rng: np.random.Generator, n: int) -> np.ndarray:
    # QR of a Gaussian matrix with the R-diagonal sign fix.
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _crossover_index(s_true: np.ndarray, noise_sigma: float) -> int:
    above = np.nonzero(s_true**2 > noise_sigma**2)[0]
    return int(above[-1] + 1) if above.size else 0


def generate_model_problem(
    model: DecayModel, n: int, nu: float, noise_sigma: float, seed: int
) -> ProblemInstance:
    """Build a decay-model problem with exact power-law coefficients.

    The spectrum follows the decay model; the noise-free projected
    coefficients are ``sigma_i^(1+nu)`` with independent random signs,
    rescaled so the noise-free data vector has unit norm. The singular
    vectors are random orthonormal bases (QR of seeded Gaussian matrices),
    and Gaussian noise of standard deviation ``noise_sigma`` is added to the
    data.

    Raises
    ------
    DegenerateInputError
        If the noise level leaves no coefficient above the noise floor.
    """
    if n < 8:
        raise InputError("n must be >= 8")
    if not 0.0 < nu < 1.0:
        raise InputError("nu must lie in (0, 1)")
    if not 0.0 < noise_sigma < 1.0:
        raise InputError("noise_sigma must lie in (0, 1)")
    sigma = singular_values(model, n)
    rng = np.random.default_rng(seed)
    signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    s_true = sigma ** (1.0 + nu) * signs
    s_true /= np.linalg.norm(s_true)
    l_true = _crossover_index(s_true, noise_sigma)
    if l_true == 0:
        raise DegenerateInputError("no coefficient rises above the noise level")
    u = _haar_orthonormal(rng, n)
    v = _haar_orthonormal(rng, n)
    system = SingularSystem(
        m=n, n=n, k_avail=n, sigma=sigma, u_cols=u, v_cols=v, scale=1.0
    )
    x_true = v @ (s_true / sigma)
    b_true = u @ s_true
    b = add_noise(b_true, noise_sigma, int(rng.integers(2**63)))
    return ProblemInstance(
        system=system,
        x_true=x_true,
        b_true=b_true,
        b=b,
        noise_sigma=float(noise_sigma),
        l_true=l_true,
        seed=int(seed),
    )


def with_noise_level(
    instance: ProblemInstance, noise_sigma: float, seed: int
) -> ProblemInstance:
    """New instance sharing the system and truth but with fresh noise.

    Used by the Monte-Carlo harness to redraw noise (possibly at a different
    level) without regenerating the operator; ``l_true`` is recomputed for
    the new level.
    """
    if not 0.0 < noise_sigma < 1.0:
        raise InputError("noise_sigma must lie in (0, 1)")
    s_true = instance.system.u_cols.T @ instance.b_true
    l_true = _crossover_index(s_true, noise_sigma)
    if l_true == 0:
        raise DegenerateInputError("no coefficient rises above the noise level")
    return ProblemInstance(
        system=instance.system,
        x_true=instance.x_true,
        b_true=instance.b_true,
        b=add_noise(instance.b_true, noise_sigma, seed),
        noise_sigma=float(noise_sigma),
        l_true=l_true,
        seed=int(seed),
    )


def make_kronecker_blur(n_side: int, psf_width: float) -> KroneckerBlur:
    """Separable Gaussian blur with zero (Dirichlet) boundary conditions.

    Both factors are the same symmetric Toeplitz matrix built from a
    Gaussian kernel of the given width, normalized to unit total weight.
    """
    if n_side < 16 or n_side & (n_side - 1):
        raise InputError("n_side must be a power of two >= 16")
    if not psf_width > 0:
        raise InputError("psf_width must be positive")
    offsets = np.arange(n_side, dtype=float)
    column = np.exp(-(offsets**2) / (2.0 * psf_width**2))
    total = 2.0 * column.sum() - column[0]
    if total <= 0 or not np.isfinite(total):
        raise DegenerateInputError("blur kernel is numerically zero")
    column /= total
    idx = np.arange(n_side)
    factor = column[np.abs(idx[:, None] - idx[None, :])]
    return KroneckerBlur(
        psf_1d=column, n_side=n_side, a_left=factor, a_right=factor.copy()
    )


def _kronecker_system(blur: KroneckerBlur) -> SingularSystem:
    """Assemble the SVD of a_left (x) a_right from the factor SVDs."""
    ul, sl, vlt = np.linalg.svd(blur.a_left)
    ur, sr, vrt = np.linalg.svd(blur.a_right)
    products = np.outer(sl, sr).ravel()
    left_idx, right_idx = np.divmod(np.arange(products.size), blur.n_side)
    # Order by descending product; ties break lexicographically on the
    # (left, right) factor indices for determinism.
    order = np.lexsort((right_idx, left_idx, -products))
    products = products[order]
    keep = products > 0.0
    order = order[keep]
    products = products[keep]
    if products.size == 0:
        raise DegenerateInputError("blur operator is numerically zero")
    scale = float(products[0])
    sigma = products / scale
    sigma[0] = 1.0
    n_sq = blur.n_side**2
    u = np.kron(ul, ur)[:, order]
    v = np.kron(vlt.T, vrt.T)[:, order]
    return SingularSystem(
        m=n_sq, n=n_sq, k_avail=products.size, sigma=sigma, u_cols=u, v_cols=v, scale=scale
    )


def _blocky_image(rng: np.random.Generator, n_side: int, blocks: int = 6) -> np.ndarray:
    image = np.zeros((n_side, n_side))
    for _ in range(blocks):
        r0, c0 = rng.integers(0, n_side - 1, size=2)
        r1 = rng.integers(r0 + 1, n_side + 1)
        c1 = rng.integers(c0 + 1, n_side + 1)
        image[r0:r1, c0:c1] += rng.uniform(0.2, 1.0)
    return image


def generate_blur_problem(
    n_side: int, psf_width: float, noise_sigma: float, seed: int
) -> ProblemInstance:
    """Build a separable 2D deblurring problem.

    The operator is ``a_left (x) a_right`` from :func:`make_kronecker_blur`,
    its SVD assembled from the factor SVDs. The ground truth is a seeded
    piecewise-constant image, scaled so the blurred data vector has unit
    norm, and Gaussian noise is added on top.
    """
    if noise_sigma < 0:
        raise InputError("noise_sigma must be nonnegative")
    blur = make_kronecker_blur(n_side, psf_width)
    system = _kronecker_system(blur)
    rng = np.random.default_rng(seed)
    image = _blocky_image(rng, n_side)
    x_true = image.ravel()
    # kron(L, R) acting on row-major flattened X equals L @ X @ R.T flattened.
    b_true = (blur.a_left @ image @ blur.a_right.T).ravel()
    norm = np.linalg.norm(b_true)
    if norm == 0.0:
        raise DegenerateInputError("blurred image is identically zero")
    x_true = x_true / norm
    b_true = b_true / norm
    s_true = system.u_cols.T @ b_true
    l_true = _crossover_index(s_true, noise_sigma)
    if noise_sigma > 0 and l_true == 0:
        raise DegenerateInputError("no coefficient rises above the noise level")
    b = add_noise(b_true, noise_sigma, int(rng.integers(2**63)))
    return ProblemInstance(
        system=system,
        x_true=x_true,
        b_true=b_true,
        b=b,
        noise_sigma=float(noise_sigma),
        l_true=l_true,
        seed=int(seed),
    )


def estimate_noise_variance(coeffs: SpectralCoefficients, tail_fraction: float) -> float:
    """Mean of s_i^2 over the trailing tail_fraction of coefficients."""
    if not 0.0 < tail_fraction <= 0.5:
        raise InputError("tail_fraction must lie in (0, 0.5]")
    count = int(np.ceil(tail_fraction * coeffs.s.size))
    if count < 8:
        raise InputError("tail must contain at least 8 samples")
    tail = coeffs.s[-count:]
    return float(np.mean(tail * tail))


def estimate_noise_index(coeffs: SpectralCoefficients, noise_var: float) -> int:
    """First-crossing heuristic for the noise index.

    The squared coefficients are smoothed with a centered moving average of
    window 5 (truncated at the ends); the estimate is the largest 1-based
    index up to which the smoothed values all stay above twice the noise
    variance, i.e. the point where the averaged spectrum first crosses the
    noise floor. Returns 1 if the average starts below the floor and
    ``len(s)`` if it never crosses.
    """
    if not noise_var > 0:
        raise InputError("noise_var must be positive")
    s2 = coeffs.s**2
    n = s2.size
    cumulative = np.concatenate([[0.0], np.cumsum(s2)])
    starts = np.maximum(np.arange(n) - 2, 0)
    stops = np.minimum(np.arange(n) + 3, n)
    averages = (cumulative[stops] - cumulative[starts]) / (stops - starts)
    above = averages > 2.0 * noise_var
    if above.all():
        return n
    return max(1, int(np.argmax(~above)))


# Serialization: metadata as JSON, arrays as little-endian float64 binaries.

_ARRAY_FILES = {
    "sigma": lambda inst: inst.system.sigma,
    "u_cols": lambda inst: inst.system.u_cols,
    "v_cols": lambda inst: inst.system.v_cols,
    "x_true": lambda inst: inst.x_true,
    "b_true": lambda inst: inst.b_true,
    "b": lambda inst: inst.b,
}


def save_instance(
    instance: ProblemInstance, directory, problem_meta: Optional[dict] = None
) -> Path:
    """Write an instance to a run directory.

    ``meta.json`` records the scalar fields plus array shapes; each array
    goes to ``<name>.bin`` as raw little-endian float64. ``problem_meta``
    (e.g. the generating model, n, nu) is merged into the JSON document.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    shapes = {}
    for name, getter in _ARRAY_FILES.items():
        array = np.ascontiguousarray(getter(instance), dtype="<f8")
        (directory / f"{name}.bin").write_bytes(array.tobytes())
        shapes[name] = list(array.shape)
    meta = {
        "m": instance.system.m,
        "n": instance.system.n,
        "k_avail": instance.system.k_avail,
        "scale": instance.system.scale,
        "noise_sigma": instance.noise_sigma,
        "l_true": instance.l_true,
        "seed": instance.seed,
        "shapes": shapes,
    }
    if problem_meta:
        meta["problem"] = dict(problem_meta)
    path = directory / "meta.json"
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_instance(directory) -> tuple[ProblemInstance, dict]:
    """Read an instance written by :func:`save_instance`."""
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    arrays = {}
    for name, shape in meta["shapes"].items():
        raw = (directory / f"{name}.bin").read_bytes()
        arrays[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    system = SingularSystem(
        m=meta["m"],
        n=meta["n"],
        k_avail=meta["k_avail"],
        sigma=arrays["sigma"],
        u_cols=arrays["u_cols"],
        v_cols=arrays["v_cols"],
        scale=meta["scale"],
    )
    instance = ProblemInstance(
        system=system,
        x_true=arrays["x_true"],
        b_true=arrays["b_true"],
        b=arrays["b"],
        noise_sigma=meta["noise_sigma"],
        l_true=meta["l_true"],
        seed=meta["seed"],
    )
    return instance, meta.get("problem", {})
