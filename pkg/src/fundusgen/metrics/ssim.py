"""Structural similarity, computed from scratch.

Gaussian-windowed local statistics over all fully-valid window positions
(no padding), per channel, then averaged over channels. The default dynamic
range is 2.0 because pipeline images live in [-1, 1]; reference
implementations that assume [0, 1] would use 1.0 here.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F

from ..errors import ResolutionError


def gaussian_window(window_size: int = 11, sigma: float = 1.5) -> torch.Tensor:
    """Normalized 2-D Gaussian window of shape (window_size, window_size)."""
    half = window_size // 2
    coords = torch.arange(window_size, dtype=torch.float64) - half
    g = torch.exp(-(coords**2) / (2.0 * sigma**2))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim(x: torch.Tensor, y: torch.Tensor, window_size: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03, data_range: float = 2.0) -> float:
    """Mean SSIM between two (C, H, W) images with the same shape."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    if x.ndim != 3:
        raise ValueError(f"expected (C, H, W) tensors, got {tuple(x.shape)}")
    c, h, w = x.shape
    if h < window_size or w < window_size:
        raise ResolutionError(f"image {h}x{w} smaller than the {window_size}-pixel window")

    window = gaussian_window(window_size, sigma).to(torch.float64)
    kernel = window.expand(c, 1, window_size, window_size).contiguous()
    xd = x.detach().to(torch.float64).unsqueeze(0)
    yd = y.detach().to(torch.float64).unsqueeze(0)

    mu_x = F.conv2d(xd, kernel, groups=c)
    mu_y = F.conv2d(yd, kernel, groups=c)
    var_x = F.conv2d(xd * xd, kernel, groups=c) - mu_x**2
    var_y = F.conv2d(yd * yd, kernel, groups=c) - mu_y**2
    cov = F.conv2d(xd * yd, kernel, groups=c) - mu_x * mu_y

    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2))
    value = ssim_map.mean().item()
    if not math.isfinite(value):
        raise ValueError("SSIM produced a non-finite value")
    return value
