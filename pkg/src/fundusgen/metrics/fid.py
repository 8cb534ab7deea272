"""Frechet distance between Gaussian fits of two feature sets.

    d^2 = ||mu_A - mu_B||^2 + Tr(S_A + S_B - 2 (S_A S_B)^{1/2})

The matrix square root is taken by eigendecomposition of the symmetrized
product sqrt(S_A) S_B sqrt(S_A); negative eigenvalues (numerical noise) are
clamped to zero. When the product is near-singular both covariances get an
eps*I ridge. Exact at desk scale, no iterative approximation.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericsError
from .features import FeatureMatrix


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _trace_sqrt_product(cov_a: np.ndarray, cov_b: np.ndarray) -> float:
    half = _psd_sqrt(cov_a)
    inner = half @ cov_b @ half
    inner = (inner + inner.T) / 2.0
    vals = np.linalg.eigvalsh(inner)
    return float(np.sqrt(np.clip(vals, 0.0, None)).sum())


def fid(a: FeatureMatrix | np.ndarray, b: FeatureMatrix | np.ndarray,
        eps: float = 1e-6) -> float:
    """FID between two feature matrices of the same dimensionality."""
    fa = a.rows if isinstance(a, FeatureMatrix) else np.asarray(a, dtype=np.float64)
    fb = b.rows if isinstance(b, FeatureMatrix) else np.asarray(b, dtype=np.float64)
    if fa.ndim != 2 or fb.ndim != 2 or fa.shape[1] != fb.shape[1]:
        raise ValueError(f"feature shapes incompatible: {fa.shape} vs {fb.shape}")
    if fa.shape[0] < 2 or fb.shape[0] < 2:
        raise ValueError("need at least 2 samples per set")

    mu_a, mu_b = fa.mean(axis=0), fb.mean(axis=0)
    cov_a = np.atleast_2d(np.cov(fa, rowvar=False))
    cov_b = np.atleast_2d(np.cov(fb, rowvar=False))

    dim = cov_a.shape[0]
    scale = max(float(np.trace(cov_a) + np.trace(cov_b)) / (2 * dim), 1.0)
    near_singular = (np.linalg.eigvalsh(cov_a).min() < eps * scale
                     or np.linalg.eigvalsh(cov_b).min() < eps * scale)
    if near_singular:
        ridge = eps * np.eye(dim)
        cov_a = cov_a + ridge
        cov_b = cov_b + ridge

    mean_term = float(((mu_a - mu_b) ** 2).sum())
    value = mean_term + float(np.trace(cov_a) + np.trace(cov_b)) \
        - 2.0 * _trace_sqrt_product(cov_a, cov_b)
    if not np.isfinite(value):
        raise NumericsError("FID is non-finite even after ridge stabilization")
    return value
