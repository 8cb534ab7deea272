"""Image file I/O.

Every image tensor in the pipeline is float32, RGB, shape (3, H, W), values
in [-1, 1]. 8-bit files map linearly: v/127.5 - 1 on load, round-half-up on
save, so a save/load round trip moves a pixel by at most one quantization
step (1/127.5).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from ..errors import ChannelError, DataError


def check_image(img: torch.Tensor) -> torch.Tensor:
    """Assert the pipeline image contract; returns the tensor unchanged."""
    if img.ndim != 3 or img.shape[0] != 3:
        raise ChannelError(f"expected a (3, H, W) RGB tensor, got shape {tuple(img.shape)}")
    h, w = img.shape[1], img.shape[2]
    if h != w or h & (h - 1) or not 32 <= h <= 1024:
        raise ChannelError(f"expected square power-of-two size in [32, 1024], got {h}x{w}")
    if not torch.isfinite(img).all():
        raise DataError("image contains non-finite values")
    if img.min() < -1 or img.max() > 1:
        raise DataError("image values must lie in [-1, 1]")
    return img


def load_image(path: str | Path, size: int) -> torch.Tensor:
    """Load a PNG/JPEG as a (3, size, size) tensor in [-1, 1].

    Non-square sources are stretched to size x size (bilinear). Only RGB
    files are accepted; anything else raises ChannelError rather than being
    silently converted.
    """
    try:
        with Image.open(path) as handle:
            handle.load()
            img = handle
            if img.mode != "RGB":
                raise ChannelError(f"{path}: expected an RGB image, got mode {img.mode!r}")
            if img.size != (size, size):
                img = img.resize((size, size), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float32)
    except ChannelError:
        raise
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    arr = arr / 127.5 - 1.0
    return torch.from_numpy(arr.transpose(2, 0, 1).copy())


def save_image(img: torch.Tensor, path: str | Path) -> None:
    """Write an image tensor as an 8-bit PNG (values clamped to [-1, 1])."""
    check_image(img)
    arr = img.detach().cpu().numpy()
    # round half up: -1 -> 0, +1 -> 255
    quantized = np.floor((np.clip(arr, -1.0, 1.0) + 1.0) * 127.5 + 0.5)
    quantized = np.clip(quantized, 0, 255).astype(np.uint8).transpose(1, 2, 0)
    try:
        Image.fromarray(quantized, mode="RGB").save(Path(path), format="PNG")
    except OSError as exc:
        raise DataError(f"cannot write image {path}: {exc}") from exc
