"""Latent containers passed between the encoder and the generator."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch


@dataclass
class LatentCode:
    """Per-image style rows, base feature, and optional skip feature maps.

    ``w_plus``: (B, n_slots, d) style rows, one per synthesis slot.
    ``f``:      (B, C0, R0, R0) base feature consumed by the first layer.
    ``skips``:  coarse-to-fine list of (resolution, feature map) pairs that
                matching-resolution generator layers add in after their
                first convolution.
    """

    w_plus: torch.Tensor
    f: torch.Tensor
    skips: list[tuple[int, torch.Tensor]] = field(default_factory=list)

    @property
    def n_slots(self) -> int:
        return self.w_plus.shape[1]

    @property
    def batch_size(self) -> int:
        return self.w_plus.shape[0]

    def detached(self) -> "LatentCode":
        return LatentCode(self.w_plus.detach(), self.f.detach(),
                          [(r, s.detach()) for r, s in self.skips])


@dataclass
class LatentPrior:
    """Gaussian fit of encoder outputs over a corpus, for novel sampling.

    Per-slot mean and standard deviation of the style rows, plus the mean
    and elementwise spread of the base feature.
    """

    w_mean: torch.Tensor  # (n_slots, d)
    w_std: torch.Tensor   # (n_slots, d)
    f_mean: torch.Tensor  # (C0, R0, R0)
    f_std: torch.Tensor   # (C0, R0, R0)
    count: int = 0
