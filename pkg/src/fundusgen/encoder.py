"""Hierarchical image encoder.

A residual backbone feeds a three-level feature pyramid; coarse levels see
large anatomy (field of view, optic disc), the mid level the vessel
network, the fine level small lesions. Per-slot strided-conv heads map the
pyramid levels to style rows (coarse levels fill the early rows), a
stride-2 convolution over the mid level produces the generator's base
feature, and 1x1 projections of up to three levels become skip inputs for
the matching generator resolutions.

The backbone always runs at ``32 * base_resolution`` pixels; ``encode``
resizes other inputs bilinearly first, so small desk-profile images reuse
the identical stride layout (pyramid levels at 1/32, 1/16 and 1/8 of the
backbone input).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig
from .errors import ConfigError, ResolutionError
from .latent import LatentCode


def _groups_for(channels: int) -> int:
    g = 8
    while channels % g:
        g //= 2
    return max(g, 1)


class Act(nn.Module):
    """Leaky rectifier, or softplus when the owner runs in smooth mode
    (smoothness is needed only by finite-difference gradient checks)."""

    def __init__(self, smooth: bool):
        super().__init__()
        self.smooth = smooth

    def forward(self, x):
        return F.softplus(x) if self.smooth else F.leaky_relu(x, 0.2)


class ResidualBlock(nn.Module):
    def __init__(self, cin: int, cout: int, stride: int, smooth: bool):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False)
        self.norm1 = nn.GroupNorm(_groups_for(cout), cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1, bias=False)
        self.norm2 = nn.GroupNorm(_groups_for(cout), cout)
        self.act = Act(smooth)
        if stride != 1 or cin != cout:
            self.shortcut = nn.Sequential(
                nn.Conv2d(cin, cout, 1, stride=stride, bias=False),
                nn.GroupNorm(_groups_for(cout), cout))
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = self.act(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        return self.act(out + self.shortcut(x))


class Backbone(nn.Module):
    """Four residual stages at strides 4/8/16/32 of the input."""

    def __init__(self, cfg: ModelConfig, smooth: bool = False):
        super().__init__()
        w = cfg.backbone_widths
        # two stride-2 convs instead of conv+maxpool keep the path smooth
        self.stem = nn.Sequential(
            nn.Conv2d(3, w[0], 7, stride=2, padding=3, bias=False),
            nn.GroupNorm(_groups_for(w[0]), w[0]), Act(smooth),
            nn.Conv2d(w[0], w[0], 3, stride=2, padding=1, bias=False),
            nn.GroupNorm(_groups_for(w[0]), w[0]), Act(smooth))
        self.stages = nn.ModuleList()
        cin = w[0]
        for i, width in enumerate(w):
            stride = 1 if i == 0 else 2
            self.stages.append(nn.Sequential(
                ResidualBlock(cin, width, stride, smooth),
                ResidualBlock(width, width, 1, smooth)))
            cin = width

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, ...]:
        if x.ndim == 3:
            x = x.unsqueeze(0)
        if x.shape[-1] < 32 or x.shape[-2] < 32:
            raise ResolutionError(f"backbone needs inputs of at least 32 px, "
                                  f"got {tuple(x.shape[-2:])}")
        out = []
        x = self.stem(x)
        for stage in self.stages:
            x = stage(x)
            out.append(x)
        return tuple(out)


@dataclass
class FeaturePyramid:
    """Three fused levels sharing one channel width.

    ``low`` is the deepest/coarsest level (1/32 of the backbone input),
    ``mid`` 1/16, ``high`` 1/8.
    """

    low: torch.Tensor
    mid: torch.Tensor
    high: torch.Tensor

    def levels(self) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        return (self.low, self.mid, self.high)


class PyramidFusion(nn.Module):
    """Lateral 1x1 projections + top-down nearest upsampling + 3x3 smoothing."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cp = cfg.pyramid_channels
        widths = cfg.backbone_widths
        self.lateral_low = nn.Conv2d(widths[3], cp, 1)
        self.lateral_mid = nn.Conv2d(widths[2], cp, 1)
        self.lateral_high = nn.Conv2d(widths[1], cp, 1)
        self.smooth_low = nn.Conv2d(cp, cp, 3, padding=1)
        self.smooth_mid = nn.Conv2d(cp, cp, 3, padding=1)
        self.smooth_high = nn.Conv2d(cp, cp, 3, padding=1)
        self.expected_widths = (widths[1], widths[2], widths[3])

    def forward(self, stages: tuple[torch.Tensor, ...]) -> FeaturePyramid:
        _, c2, c3, c4 = stages
        got = (c2.shape[1], c3.shape[1], c4.shape[1])
        if got != self.expected_widths:
            raise ConfigError(f"backbone stage widths {got} do not match the "
                              f"configured {self.expected_widths}")
        low = self.lateral_low(c4)
        mid = self.lateral_mid(c3) + F.interpolate(low, scale_factor=2, mode="nearest")
        high = self.lateral_high(c2) + F.interpolate(mid, scale_factor=2, mode="nearest")
        return FeaturePyramid(self.smooth_low(low), self.smooth_mid(mid),
                              self.smooth_high(high))


class SlotHead(nn.Module):
    """One style slot: stride-2 convs down to 1x1, then a projection to d."""

    def __init__(self, cfg: ModelConfig, level_resolution: int, smooth: bool):
        super().__init__()
        h = cfg.head_width
        layers: list[nn.Module] = []
        cin, res = cfg.pyramid_channels, level_resolution
        while res > 1:
            layers += [nn.Conv2d(cin, h, 3, stride=2, padding=1), Act(smooth)]
            cin, res = h, res // 2
        self.reduce = nn.Sequential(*layers)
        self.project = nn.Conv2d(h, cfg.latent_dim, 1)
        self.level_resolution = level_resolution

    def forward(self, level: torch.Tensor) -> torch.Tensor:
        if level.shape[-1] != self.level_resolution:
            raise ConfigError(f"style head built for {self.level_resolution}px "
                              f"level, got {level.shape[-1]}px")
        return self.project(self.reduce(level)).flatten(1)


class StyleMapper(nn.Module):
    """Maps pyramid levels to the style matrix.

    Row layout is coarse-to-fine: the low level fills the first rows, the
    mid level the next block, the high level the remainder, so perturbing
    one level only moves its own rows.
    """

    def __init__(self, cfg: ModelConfig, smooth: bool = False):
        super().__init__()
        counts = cfg.resolved_style_counts()
        r0 = cfg.base_resolution
        self.heads_low = nn.ModuleList(SlotHead(cfg, r0, smooth) for _ in range(counts[0]))
        self.heads_mid = nn.ModuleList(SlotHead(cfg, 2 * r0, smooth) for _ in range(counts[1]))
        self.heads_high = nn.ModuleList(SlotHead(cfg, 4 * r0, smooth) for _ in range(counts[2]))

    def forward(self, p: FeaturePyramid) -> torch.Tensor:
        rows = [head(p.low) for head in self.heads_low]
        rows += [head(p.mid) for head in self.heads_mid]
        rows += [head(p.high) for head in self.heads_high]
        return torch.stack(rows, dim=1)


class BaseFeatureHead(nn.Module):
    """Stride-2 convolution over the mid level producing the base feature.

    Optionally concatenates a 2x-downsampled copy of the high level first,
    so fine structure can steer the base feature (``concat_high``).
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cin = cfg.pyramid_channels * (2 if cfg.concat_high else 1)
        self.concat_high = cfg.concat_high
        self.conv = nn.Conv2d(cin, cfg.channels_at(cfg.base_resolution), 3,
                              stride=2, padding=1)

    def forward(self, p: FeaturePyramid) -> torch.Tensor:
        out_res = p.mid.shape[-1] // 2
        if out_res < 4:
            raise ResolutionError(
                f"base feature would be {out_res}px (< 4px minimum); "
                f"the pyramid input is too small")
        x = p.mid
        if self.concat_high:
            x = torch.cat([x, F.avg_pool2d(p.high, 2)], dim=1)
        return self.conv(x)


class FundusEncoder(nn.Module):
    """Backbone -> pyramid -> (style rows, base feature, skip projections)."""

    def __init__(self, cfg: ModelConfig, smooth: bool = False):
        super().__init__()
        self.cfg = cfg
        self.backbone = Backbone(cfg, smooth)
        self.fpn = PyramidFusion(cfg)
        self.mapper = StyleMapper(cfg, smooth)
        self.base_head = BaseFeatureHead(cfg)
        r0 = cfg.base_resolution
        self.skip_resolutions = [r0, 2 * r0, 4 * r0]
        self.skip_projections = nn.ModuleList(
            nn.Conv2d(cfg.pyramid_channels, cfg.channels_at(r), 1)
            for r in self.skip_resolutions if r <= cfg.image_size)

    def backbone_forward(self, x: torch.Tensor) -> tuple[torch.Tensor, ...]:
        return self.backbone(x)

    def fpn_forward(self, stages: tuple[torch.Tensor, ...]) -> FeaturePyramid:
        return self.fpn(stages)

    def map_to_styles(self, p: FeaturePyramid) -> torch.Tensor:
        return self.mapper(p)

    def base_feature(self, p: FeaturePyramid) -> torch.Tensor:
        return self.base_head(p)

    def encode(self, x: torch.Tensor, skip_count: int) -> LatentCode:
        if not 0 <= skip_count <= 3:
            raise ConfigError(f"skip_count must be in 0..3, got {skip_count}")
        if skip_count > len(self.skip_projections):
            raise ConfigError(
                f"skip_count {skip_count} needs a generator resolution of "
                f"{self.skip_resolutions[skip_count - 1]}px, beyond the "
                f"{self.cfg.image_size}px target")
        if x.ndim == 3:
            x = x.unsqueeze(0)
        work = self.cfg.working_resolution
        if x.shape[-1] != work or x.shape[-2] != work:
            x = F.interpolate(x, size=(work, work), mode="bilinear",
                              align_corners=False)
        pyramid = self.fpn(self.backbone(x))
        w_plus = self.mapper(pyramid)
        f = self.base_head(pyramid)
        skips = []
        for level, proj, res in zip(pyramid.levels(), self.skip_projections,
                                    self.skip_resolutions):
            if len(skips) == skip_count:
                break
            skips.append((res, proj(level)))
        return LatentCode(w_plus=w_plus, f=f, skips=skips)


def pyramid_shapes(cfg: ModelConfig) -> dict[str, tuple[int, int, int]]:
    """Expected (C, H, W) of each pyramid level for the working resolution."""
    cp, work = cfg.pyramid_channels, cfg.working_resolution
    return {"low": (cp, work // 32, work // 32),
            "mid": (cp, work // 16, work // 16),
            "high": (cp, work // 8, work // 8)}


def check_pyramid(p: FeaturePyramid, cfg: ModelConfig, input_size: int | None = None) -> None:
    """Assert the stride-{32,16,8} shape contract against a backbone input size."""
    size = input_size if input_size is not None else cfg.working_resolution
    cp = cfg.pyramid_channels
    expected = {"low": size // 32, "mid": size // 16, "high": size // 8}
    for name, level in zip(("low", "mid", "high"), p.levels()):
        want = (cp, expected[name], expected[name])
        if tuple(level.shape[-3:]) != want:
            raise ConfigError(f"pyramid level {name} has shape "
                              f"{tuple(level.shape[-3:])}, expected {want}")
        if not torch.isfinite(level).all():
            raise ValueError(f"pyramid level {name} contains non-finite values")


def finite_difference_probe(encoder: FundusEncoder, x: torch.Tensor,
                            direction: torch.Tensor, step: float = 1e-3) -> tuple[float, float]:
    """Directional derivative of sum(w_plus): central differences vs autograd.

    The analytic side is the 32-bit autograd path under test; the
    finite-difference side runs on a float64 copy of the encoder so the
    oracle's roundoff stays far below the comparison tolerance.
    """
    import copy

    x = x.detach()
    direction = direction / direction.norm()

    xg = x.clone().requires_grad_(True)
    encoder.encode(xg, 0).w_plus.sum().backward()
    analytic = float((xg.grad * direction).sum())

    enc64 = copy.deepcopy(encoder).double().eval()
    x64, d64 = x.double(), direction.double()
    with torch.no_grad():
        plus = float(enc64.encode(x64 + step * d64, 0).w_plus.sum())
        minus = float(enc64.encode(x64 - step * d64, 0).w_plus.sum())
    return (plus - minus) / (2 * step), analytic


def slot_partition(cfg: ModelConfig) -> dict[str, range]:
    """Row ranges of the style matrix owned by each pyramid level."""
    low, mid, high = cfg.resolved_style_counts()
    return {"low": range(0, low), "mid": range(low, low + mid),
            "high": range(low + mid, low + mid + high)}


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
