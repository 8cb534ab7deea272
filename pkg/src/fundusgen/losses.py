"""Training objective: latent regularization + perceptual + pixel terms.

All three norms are size-normalized (mean over elements, or division by the
root of the element count) so the weights behave the same at every
resolution. The optional adversarial term is off by default and only
participates when its weight is positive and a discriminator is supplied.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .config import LossWeights
from .errors import ConfigError, NumericsError

EPS = 1e-8

__all__ = [
    "LossWeights",
    "LossReport",
    "MeanLatent",
    "PerceptualExtractor",
    "PatchDiscriminator",
    "l2_loss",
    "lpips_loss",
    "reg_loss",
    "total_loss",
    "update_mean_latent",
    "adversarial_generator_loss",
    "discriminator_loss",
]


def _batched(x: torch.Tensor) -> torch.Tensor:
    return x.unsqueeze(0) if x.ndim == 3 else x


class PerceptualExtractor(torch.nn.Module):
    """Frozen multi-stage feature network for the perceptual distance.

    ``test`` profile: 3 fixed-seed random conv stages, no downloads.
    ``vgg`` profile: torchvision VGG16 slices (needs the 'pretrained' extra).
    ``smooth=True`` swaps rectifiers for softplus so finite-difference
    gradient checks see a C^1 function; production keeps leaky ReLU.
    """

    def __init__(self, profile: str = "test", seed: int = 0, smooth: bool = False,
                 num_stages: int = 3):
        super().__init__()
        self.profile = profile
        self.smooth = smooth
        if profile == "test":
            gen = torch.Generator().manual_seed(seed)
            widths = [3, 8, 16, 32, 64][: num_stages + 1]
            stages = []
            for cin, cout in zip(widths[:-1], widths[1:]):
                conv = torch.nn.Conv2d(cin, cout, 3, stride=2, padding=1)
                with torch.no_grad():
                    conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen)
                                      / (3.0 * cin**0.5))
                    conv.bias.copy_(0.05 * torch.randn(conv.bias.shape, generator=gen))
                stages.append(conv)
            self.stages = torch.nn.ModuleList(stages)
            self.extractor_id = f"lpips-testconv{num_stages}-s{seed}"
        elif profile == "vgg":
            try:
                from torchvision.models import VGG16_Weights, vgg16
            except ImportError as exc:
                raise ConfigError("the vgg perceptual profile needs torchvision; "
                                  "install the 'pretrained' extra") from exc
            feats = vgg16(weights=VGG16_Weights.IMAGENET1K_V1).features
            self.stages = torch.nn.ModuleList([feats[:4], feats[4:9], feats[9:16]])
            self.extractor_id = "lpips-vgg16"
        else:
            raise ConfigError(f"unknown perceptual profile {profile!r}")
        self.stage_weights = [1.0] * len(self.stages)
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def _act(self, x: torch.Tensor) -> torch.Tensor:
        return F.softplus(x) if self.smooth else F.leaky_relu(x, 0.2)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        for stage in self.stages:
            if self.profile == "test":
                x = self._act(stage(x))
            else:
                x = stage(x)
            feats.append(x)
        return feats


def l2_loss(x: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    """Mean squared difference over all elements."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    return ((x - x_hat) ** 2).mean()


def _unit_normalize(feat: torch.Tensor) -> torch.Tensor:
    norm = torch.sqrt((feat**2).sum(dim=1, keepdim=True) + EPS)
    return feat / norm


def lpips_loss(x: torch.Tensor, x_hat: torch.Tensor,
               pe: PerceptualExtractor) -> torch.Tensor:
    """Perceptual distance: channel-normalized stage features, squared
    difference summed over channels, averaged spatially, summed over stages."""
    fx = pe(_batched(x))
    fy = pe(_batched(x_hat))
    total = None
    for weight, fa, fb in zip(pe.stage_weights, fx, fy):
        diff = (_unit_normalize(fa) - _unit_normalize(fb)) ** 2
        term = weight * diff.sum(dim=1).mean()
        total = term if total is None else total + term
    if not torch.isfinite(total):
        raise NumericsError("perceptual loss is non-finite")
    return total


@dataclass
class MeanLatent:
    """Exponential moving average of encoder latents; the anchor of the
    regularization term. Never carries gradient."""

    decay: float = 0.995
    w_bar: torch.Tensor | None = None
    update_count: int = 0

    def update(self, batch_latents: torch.Tensor) -> "MeanLatent":
        lat = batch_latents.detach()
        if lat.ndim == 2:
            lat = lat.unsqueeze(0)
        batch_mean = lat.mean(dim=0)
        if self.w_bar is None:
            self.w_bar = batch_mean.clone()
        else:
            self.w_bar = self.decay * self.w_bar + (1.0 - self.decay) * batch_mean
        self.update_count += 1
        return self


def update_mean_latent(ml: MeanLatent, batch_latents: torch.Tensor) -> MeanLatent:
    return ml.update(batch_latents)


def reg_loss(w_plus: torch.Tensor, ml: MeanLatent) -> torch.Tensor:
    """L2 distance of the latents from the running mean, scaled by the root
    of the element count so the value is resolution/slot-count independent."""
    if ml.w_bar is None:
        raise ValueError("mean latent has not been initialized")
    w = w_plus.unsqueeze(0) if w_plus.ndim == 2 else w_plus
    anchor = ml.w_bar.detach().to(w.dtype)
    scale = float(anchor.numel()) ** 0.5
    per_sample = torch.sqrt(((w - anchor) ** 2).sum(dim=(1, 2)) + EPS**2) / scale
    return per_sample.mean()


@dataclass
class LossReport:
    """Scalar total (kept as a tensor for backward) plus logged components."""

    total: torch.Tensor
    reg: float
    lpips: float
    l2: float
    adv: float
    weights: LossWeights

    def to_dict(self) -> dict:
        return {
            "total": float(self.total.detach()),
            "reg": self.reg,
            "lpips": self.lpips,
            "l2": self.l2,
            "adv": self.adv,
            "weights": {"reg": self.weights.reg, "lpips": self.weights.lpips,
                        "l2": self.weights.l2, "adv": self.weights.adv},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def total_loss(x: torch.Tensor, x_hat: torch.Tensor, w_plus: torch.Tensor,
               ml: MeanLatent, weights: LossWeights, pe: PerceptualExtractor,
               discriminator: "PatchDiscriminator | None" = None) -> LossReport:
    """Weighted sum of the active components; inactive ones are not computed."""
    zero = x_hat.new_zeros(())
    reg = reg_loss(w_plus, ml) if weights.reg > 0 else zero
    lpips = lpips_loss(x, x_hat, pe) if weights.lpips > 0 else zero
    l2 = l2_loss(x, x_hat) if weights.l2 > 0 else zero
    adv = zero
    if weights.adv > 0:
        if discriminator is None:
            raise ConfigError("adversarial weight is positive but no discriminator given")
        adv = adversarial_generator_loss(discriminator, x_hat)
    total = weights.reg * reg + weights.lpips * lpips + weights.l2 * l2 + weights.adv * adv
    parts = {name: float(t.detach()) for name, t in
             (("reg", reg), ("lpips", lpips), ("l2", l2), ("adv", adv))}
    if not torch.isfinite(total):
        raise NumericsError(f"non-finite training loss (components: {parts})")
    return LossReport(total=total, reg=parts["reg"], lpips=parts["lpips"],
                      l2=parts["l2"], adv=parts["adv"], weights=weights)


class PatchDiscriminator(torch.nn.Module):
    """Small conv discriminator for the optional adversarial term."""

    def __init__(self, width: int = 32):
        super().__init__()
        layers: list[torch.nn.Module] = []
        cin = 3
        for cout in (width, width * 2, width * 4):
            layers += [torch.nn.Conv2d(cin, cout, 3, stride=2, padding=1),
                       torch.nn.LeakyReLU(0.2)]
            cin = cout
        layers.append(torch.nn.Conv2d(cin, 1, 3, padding=1))
        self.net = torch.nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(_batched(x)).mean(dim=(1, 2, 3))


def adversarial_generator_loss(d: PatchDiscriminator, x_hat: torch.Tensor) -> torch.Tensor:
    """Non-saturating logistic generator objective."""
    return F.softplus(-d(x_hat)).mean()


def discriminator_loss(d: PatchDiscriminator, x: torch.Tensor,
                       x_hat: torch.Tensor) -> torch.Tensor:
    return F.softplus(d(x_hat.detach())).mean() + F.softplus(-d(x)).mean()
