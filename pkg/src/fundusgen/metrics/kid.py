"""Kernel distance between feature sets: unbiased MMD^2, polynomial kernel.

    k(a, b) = (a.b / D + 1)^3

computed over seeded random subsets; the reported value is the mean and
standard deviation of the per-subset estimates. No Gaussian assumption, and
the estimator is unbiased, so slightly negative means are legitimate for
matching distributions.
"""

from __future__ import annotations

import numpy as np

from .features import FeatureMatrix


def _poly_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    dim = x.shape[1]
    return (x @ y.T / dim + 1.0) ** 3


def mmd2_unbiased_poly(x: np.ndarray, y: np.ndarray) -> float:
    """Unbiased squared MMD between two same-size feature subsets."""
    m, n = x.shape[0], y.shape[0]
    k_xx = _poly_kernel(x, x)
    k_yy = _poly_kernel(y, y)
    k_xy = _poly_kernel(x, y)
    term_x = (k_xx.sum() - np.trace(k_xx)) / (m * (m - 1))
    term_y = (k_yy.sum() - np.trace(k_yy)) / (n * (n - 1))
    return float(term_x + term_y - 2.0 * k_xy.mean())


def _subset_indices(n: int, subset_size: int, seed: int, round_idx: int) -> np.ndarray:
    # keyed by (seed, round, set size) only, so kid(A, B) == kid(B, A)
    rng = np.random.default_rng(np.random.SeedSequence((seed, round_idx, n)))
    return rng.choice(n, size=subset_size, replace=False)


def kid(a: FeatureMatrix | np.ndarray, b: FeatureMatrix | np.ndarray,
        subset_size: int = 100, num_subsets: int = 50,
        seed: int = 0) -> tuple[float, float]:
    """KID (mean, std) over seeded subsets of the two feature sets."""
    fa = a.rows if isinstance(a, FeatureMatrix) else np.asarray(a, dtype=np.float64)
    fb = b.rows if isinstance(b, FeatureMatrix) else np.asarray(b, dtype=np.float64)
    if fa.ndim != 2 or fb.ndim != 2 or fa.shape[1] != fb.shape[1]:
        raise ValueError(f"feature shapes incompatible: {fa.shape} vs {fb.shape}")
    if subset_size < 2:
        raise ValueError("subset_size must be >= 2")
    if fa.shape[0] < subset_size or fb.shape[0] < subset_size:
        raise ValueError(f"subset_size {subset_size} exceeds set sizes "
                         f"({fa.shape[0]}, {fb.shape[0]})")

    estimates = np.empty(num_subsets)
    for i in range(num_subsets):
        xa = fa[_subset_indices(fa.shape[0], subset_size, seed, i)]
        xb = fb[_subset_indices(fb.shape[0], subset_size, seed, i)]
        estimates[i] = mmd2_unbiased_poly(xa, xb)
    return float(estimates.mean()), float(estimates.std())
