"""Style-based synthesis network.

The first seven layers run at the base resolution with dilated 3x3
convolutions (wide receptive fields, no extra parameters) so coarse
anatomy is committed early; upsampling only starts afterwards, two styled
convolutions per doubling, and a final styled 1x1 projection to RGB with a
soft squash into [-1, 1]. Every layer consumes exactly one style row
through a learned affine (scale head biased at 1, so w=0 modulates by
identity) followed by weight demodulation.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig
from .errors import CheckpointError, ConfigError, ResolutionError
from .latent import LatentCode, LatentPrior


class ModulatedConv2d(nn.Module):
    """Styled convolution: per-input-channel scaling from the style row,
    then per-output-channel weight renormalization to unit L2 (+eps)."""

    def __init__(self, cin: int, cout: int, kernel: int, latent_dim: int,
                 dilation: int = 1, demodulate: bool = True):
        super().__init__()
        if dilation < 1:
            raise ConfigError(f"dilation must be >= 1, got {dilation}")
        self.weight = nn.Parameter(torch.randn(cout, cin, kernel, kernel))
        self.bias = nn.Parameter(torch.zeros(cout))
        self.affine = nn.Linear(latent_dim, cin)
        nn.init.normal_(self.affine.weight, std=latent_dim**-0.5)
        nn.init.ones_(self.affine.bias)
        self.weight_gain = (cin * kernel * kernel) ** -0.5
        self.kernel = kernel
        self.dilation = dilation
        self.demodulate = demodulate
        self.eps = 1e-8

    def forward(self, x: torch.Tensor, style_row: torch.Tensor) -> torch.Tensor:
        batch, cin, height, width = x.shape
        style = self.affine(style_row)  # (B, cin)
        weight = self.weight.unsqueeze(0) * self.weight_gain
        weight = weight * style.view(batch, 1, cin, 1, 1)
        if self.demodulate:
            norm = torch.rsqrt(weight.pow(2).sum(dim=(2, 3, 4)) + self.eps)
            weight = weight * norm.view(batch, -1, 1, 1, 1)
        cout = weight.shape[1]
        padding = self.dilation * (self.kernel - 1) // 2
        out = F.conv2d(x.reshape(1, batch * cin, height, width),
                       weight.reshape(batch * cout, cin, self.kernel, self.kernel),
                       padding=padding, dilation=self.dilation, groups=batch)
        out = out.view(batch, cout, height, width)
        return out + self.bias.view(1, -1, 1, 1)


class SynthesisLayer(nn.Module):
    _GAIN = 2.0**0.5  # keeps activation variance from decaying layer by layer

    def __init__(self, cin: int, cout: int, latent_dim: int, dilation: int = 1,
                 smooth: bool = False):
        super().__init__()
        self.conv = ModulatedConv2d(cin, cout, 3, latent_dim, dilation=dilation)
        self.smooth = smooth

    def forward(self, x: torch.Tensor, style_row: torch.Tensor) -> torch.Tensor:
        out = self.conv(x, style_row)
        act = F.softplus(out) if self.smooth else F.leaky_relu(out, 0.2)
        return act * self._GAIN


class StyleGenerator(nn.Module):
    """Synthesis network; consumes a LatentCode, emits an RGB image in [-1, 1]."""

    def __init__(self, cfg: ModelConfig, smooth: bool = False):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        d = cfg.latent_dim
        r0 = cfg.base_resolution
        c0 = cfg.channels_at(r0)

        self.prefix = nn.ModuleList(
            SynthesisLayer(c0, c0, d, dilation=dil, smooth=smooth)
            for dil in cfg.dilation_schedule)

        self.up_layers = nn.ModuleList()
        self.up_resolutions: list[int] = []
        cin = c0
        for res in cfg.synthesis_resolutions()[1:]:
            cout = cfg.channels_at(res)
            self.up_layers.append(nn.ModuleList([
                SynthesisLayer(cin, cout, d, smooth=smooth),
                SynthesisLayer(cout, cout, d, smooth=smooth)]))
            self.up_resolutions.append(res)
            cin = cout

        self.to_rgb = ModulatedConv2d(cin, 3, 1, d, demodulate=False)

    @property
    def n_slots(self) -> int:
        return self.cfg.n_slots

    def forward(self, code: LatentCode) -> torch.Tensor:
        return self.synthesize(code)

    def synthesize(self, code: LatentCode) -> torch.Tensor:
        cfg = self.cfg
        if code.n_slots != cfg.n_slots:
            raise ConfigError(f"latent code carries {code.n_slots} style rows, "
                              f"generator expects {cfg.n_slots}")
        r0 = cfg.base_resolution
        if code.f.shape[-1] != r0 or code.f.shape[-2] != r0:
            raise ResolutionError(f"base feature is {tuple(code.f.shape[-2:])}, "
                                  f"expected {r0}x{r0}")
        skips = dict(code.skips)
        unknown = set(skips) - set([r0] + self.up_resolutions)
        if unknown:
            raise ConfigError(f"skip resolutions {sorted(unknown)} have no "
                              f"matching generator layer")
        w = code.w_plus
        slot = 0

        x = code.f
        for layer in self.prefix:
            x = layer(x, w[:, slot])
            slot += 1
            if slot == 1 and r0 in skips:
                x = x + skips[r0]
            assert x.shape[-1] == r0, "constant-resolution prefix grew"

        for res, (conv1, conv2) in zip(self.up_resolutions, self.up_layers):
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = conv1(x, w[:, slot])
            slot += 1
            if res in skips:
                x = x + skips[res]
            x = conv2(x, w[:, slot])
            slot += 1

        # polynomial-tail squash to (-1, 1): unlike tanh it never rounds to a
        # gradient of exactly zero, so dark-field targets cannot dead-lock it
        rgb = self.to_rgb(x, w[:, slot])
        image = rgb / (1.0 + rgb.abs())
        slot += 1
        if slot != cfg.n_slots:
            raise ConfigError(f"synthesis consumed {slot} style rows, "
                              f"config promises {cfg.n_slots}")
        return image


def receptive_field(cfg: ModelConfig, layer_index: int) -> int:
    """Receptive field (pixels) after layer 1..7 of the dilated prefix."""
    if not 1 <= layer_index <= 7:
        raise ValueError(f"layer_index must be in 1..7, got {layer_index}")
    return 1 + sum(2 * d for d in cfg.dilation_schedule[:layer_index])


def sample_novel(generator: StyleGenerator, prior: LatentPrior, count: int,
                 seed: int, truncation: float, f_noise: float = 0.25,
                 batch_size: int = 16) -> list[torch.Tensor]:
    """Draw novel images from the fitted latent prior.

    Style rows come from the per-slot Gaussian, shrunk toward the mean by
    the truncation factor; the base feature is its mean plus truncation-
    scaled seeded noise. truncation=0 therefore collapses every sample onto
    the mean latents.
    """
    if prior is None:
        raise CheckpointError("checkpoint carries no latent prior; train first")
    if not 0.0 <= truncation <= 1.0:
        raise ValueError(f"truncation must lie in [0, 1], got {truncation}")
    gen = torch.Generator().manual_seed(seed)
    images: list[torch.Tensor] = []
    remaining = count
    was_training = generator.training
    generator.eval()
    with torch.no_grad():
        while remaining > 0:
            n = min(batch_size, remaining)
            eps_w = torch.randn((n,) + tuple(prior.w_mean.shape), generator=gen)
            eps_f = torch.randn((n,) + tuple(prior.f_mean.shape), generator=gen)
            w = prior.w_mean + truncation * prior.w_std * eps_w
            f = prior.f_mean + truncation * f_noise * prior.f_std * eps_f
            batch = generator.synthesize(LatentCode(w_plus=w, f=f, skips=[]))
            images.extend(img for img in batch)
            remaining -= n
    if was_training:
        generator.train()
    return images
