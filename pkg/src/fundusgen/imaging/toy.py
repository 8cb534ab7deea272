"""Procedural toy fundus images.

Renders small synthetic retina-like pictures: an orange-red circular field
of view, a bright optic disc, a handful of dark vessel curves branching out
of the disc, and 0-5 lesion spots (dark hemorrhages or bright exudates).
Ground-truth geometry is returned alongside the pixels so downstream
experiments can label images without any annotation step. Everything is a
pure function of (seed, size).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..errors import ResolutionError

_SIZES = (32, 64, 128, 256)

Curve = tuple[tuple[float, float], tuple[float, float], tuple[float, float]]


@dataclass
class ToyParams:
    """Ground truth for one toy image. Coordinates are pixel (x, y)."""

    disc_center: tuple[float, float]
    disc_radius: float
    vessel_tree: list[Curve] = field(default_factory=list)
    lesion_spots: list[tuple[float, float, float, str]] = field(default_factory=list)
    background_tint: tuple[float, float, float] = (0.0, 0.0, 0.0)
    fov_center: tuple[float, float] = (0.0, 0.0)
    fov_radius: float = 0.0

    @property
    def has_lesion(self) -> bool:
        return len(self.lesion_spots) > 0


def _bezier(p0, p1, p2, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u = 1.0 - t
    x = u * u * p0[0] + 2 * u * t * p1[0] + t * t * p2[0]
    y = u * u * p0[1] + 2 * u * t * p1[1] + t * t * p2[1]
    return x, y


def _stamp_soft_disc(alpha: np.ndarray, cx: float, cy: float, radius: float,
                     strength: float, softness: float) -> None:
    """Accumulate a soft-edged disc into an alpha canvas (in place)."""
    size = alpha.shape[0]
    reach = int(np.ceil(radius + softness)) + 1
    x0, x1 = max(int(cx) - reach, 0), min(int(cx) + reach + 1, size)
    y0, y1 = max(int(cy) - reach, 0), min(int(cy) + reach + 1, size)
    if x0 >= x1 or y0 >= y1:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1]
    dist = np.sqrt((xs + 0.5 - cx) ** 2 + (ys + 0.5 - cy) ** 2)
    contribution = strength * np.clip((radius + softness - dist) / softness, 0.0, 1.0)
    patch = alpha[y0:y1, x0:x1]
    np.maximum(patch, contribution, out=patch)


def _draw_curve(alpha: np.ndarray, curve: Curve, width0: float, taper: float) -> None:
    p0, p1, p2 = curve
    length = abs(p2[0] - p0[0]) + abs(p2[1] - p0[1]) + 1.0
    n = max(int(3 * length), 24)
    t = np.linspace(0.0, 1.0, n)
    xs, ys = _bezier(p0, p1, p2, t)
    widths = width0 * (1.0 - taper * t)
    for cx, cy, w in zip(xs, ys, widths):
        _stamp_soft_disc(alpha, cx, cy, max(w, 0.5), 1.0, max(w, 0.8))


def _blend(img: np.ndarray, alpha: np.ndarray, color: tuple[float, float, float]) -> None:
    for c in range(3):
        img[c] = img[c] * (1.0 - alpha) + color[c] * alpha


def _low_freq_noise(rng: np.random.Generator, size: int, cells: int, amplitude: float) -> np.ndarray:
    coarse = rng.uniform(-amplitude, amplitude, size=(cells, cells))
    # bilinear upsample of the coarse grid to full resolution
    xs = np.linspace(0, cells - 1, size)
    ix = np.floor(xs).astype(int)
    fx = xs - ix
    ix1 = np.minimum(ix + 1, cells - 1)
    rows = coarse[:, ix] * (1 - fx) + coarse[:, ix1] * fx
    out = rows[ix, :] * (1 - fx)[:, None] + rows[ix1, :] * fx[:, None]
    return out


def synthesize_toy_fundus(seed: int, size: int) -> tuple[torch.Tensor, ToyParams]:
    """Render one toy fundus image; deterministic in (seed, size).

    Pixels outside the circular field of view are exactly -1.
    """
    if size not in _SIZES:
        raise ResolutionError(f"toy size must be one of {_SIZES}, got {size}")
    rng = np.random.default_rng(seed)
    s = float(size)
    center = (s / 2.0, s / 2.0)
    fov_radius = 0.47 * s

    ys, xs = np.mgrid[0:size, 0:size]
    px = xs + 0.5
    py = ys + 0.5
    dist_center = np.sqrt((px - center[0]) ** 2 + (py - center[1]) ** 2)
    fov = dist_center <= fov_radius

    tint = (
        0.62 + rng.uniform(-0.08, 0.08),
        0.16 + rng.uniform(-0.05, 0.05),
        0.05 + rng.uniform(-0.02, 0.04),
    )
    shading = 1.0 - 0.35 * (dist_center / fov_radius) ** 2
    img = np.empty((3, size, size), dtype=np.float64)
    mottle = _low_freq_noise(rng, size, cells=5, amplitude=0.05)
    for c in range(3):
        img[c] = np.clip(tint[c] * shading + mottle, 0.0, 1.0)

    # optic disc, kept fully inside the field of view
    disc_radius = rng.uniform(0.10, 0.14) * fov_radius
    disc_angle = rng.uniform(0.0, 2.0 * np.pi)
    disc_dist = rng.uniform(0.35, 0.95) * (fov_radius - disc_radius - 2.0)
    disc_center = (center[0] + disc_dist * np.cos(disc_angle),
                   center[1] + disc_dist * np.sin(disc_angle))
    disc_alpha = np.zeros((size, size))
    _stamp_soft_disc(disc_alpha, disc_center[0], disc_center[1], disc_radius,
                     1.0, 0.25 * disc_radius + 1.0)
    _blend(img, disc_alpha, (0.97, 0.82, 0.45))

    # vessel trunks leave the disc center; some grow a thinner branch
    n_trunks = int(rng.integers(3, 6))
    vessel_alpha = np.zeros((size, size))
    tree: list[Curve] = []
    width0 = max(0.017 * s, 1.0)
    for _ in range(n_trunks):
        angle = rng.uniform(0.0, 2.0 * np.pi)
        reach = rng.uniform(0.55, 0.92) * fov_radius
        end = (center[0] + reach * np.cos(angle), center[1] + reach * np.sin(angle))
        mid = ((disc_center[0] + end[0]) / 2.0, (disc_center[1] + end[1]) / 2.0)
        bend = rng.uniform(-0.25, 0.25) * reach
        ctrl = (mid[0] - bend * np.sin(angle), mid[1] + bend * np.cos(angle))
        trunk: Curve = (disc_center, ctrl, end)
        tree.append(trunk)
        _draw_curve(vessel_alpha, trunk, width0, taper=0.6)
        if rng.random() < 0.7:
            t0 = rng.uniform(0.35, 0.7)
            bx, by = _bezier(*trunk, np.array([t0]))
            b0 = (float(bx[0]), float(by[0]))
            branch_angle = angle + rng.uniform(0.4, 0.9) * rng.choice((-1.0, 1.0))
            branch_reach = rng.uniform(0.25, 0.45) * fov_radius
            b2 = (b0[0] + branch_reach * np.cos(branch_angle),
                  b0[1] + branch_reach * np.sin(branch_angle))
            b1 = ((b0[0] + b2[0]) / 2.0, (b0[1] + b2[1]) / 2.0)
            branch: Curve = (b0, b1, b2)
            tree.append(branch)
            _draw_curve(vessel_alpha, branch, 0.6 * width0, taper=0.5)
    _blend(img, np.clip(vessel_alpha, 0.0, 1.0) * 0.85, (0.30, 0.04, 0.02))

    # 0-5 lesions; half the corpus stays clean so presence is a usable label
    n_lesions = 0 if rng.random() < 0.5 else int(rng.integers(1, 6))
    lesions: list[tuple[float, float, float, str]] = []
    for _ in range(n_lesions):
        for _attempt in range(50):
            radius = rng.uniform(0.03, 0.06) * s
            angle = rng.uniform(0.0, 2.0 * np.pi)
            dist = rng.uniform(0.0, 1.0) * (fov_radius - radius - 2.0)
            lx = center[0] + dist * np.cos(angle)
            ly = center[1] + dist * np.sin(angle)
            d_disc = np.hypot(lx - disc_center[0], ly - disc_center[1])
            if d_disc > disc_radius + radius + 1.0:
                break
        kind = "hemorrhage" if rng.random() < 0.5 else "exudate"
        color = (0.22, 0.01, 0.01) if kind == "hemorrhage" else (1.0, 0.97, 0.80)
        spot_alpha = np.zeros((size, size))
        _stamp_soft_disc(spot_alpha, lx, ly, radius, 0.95, max(0.5 * radius, 1.0))
        _blend(img, spot_alpha, color)
        lesions.append((float(lx), float(ly), float(radius), kind))

    out = np.clip(img, 0.0, 1.0) * 2.0 - 1.0
    out[:, ~fov] = -1.0
    params = ToyParams(
        disc_center=(float(disc_center[0]), float(disc_center[1])),
        disc_radius=float(disc_radius),
        vessel_tree=tree,
        lesion_spots=lesions,
        background_tint=tuple(float(t) for t in tint),
        fov_center=center,
        fov_radius=float(fov_radius),
    )
    return torch.from_numpy(out.astype(np.float32)), params
