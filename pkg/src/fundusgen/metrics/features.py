"""Deep-feature extraction for distribution metrics.

Two profiles:

* ``test`` — a tiny fixed-seed random conv stack (D=64). Deterministic and
  dependency-free, so the whole evaluation pipeline runs without downloading
  pretrained weights. Values are only comparable within this profile.
* ``canonical`` — the standard 2048-dimensional pooled classification
  features (torchvision InceptionV3); requires the ``pretrained`` extra and
  network access to fetch weights the first time.

Reports always carry the extractor id for exactly this reason.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import ConfigError


@dataclass
class FeatureMatrix:
    rows: np.ndarray  # (N, D) float64
    extractor_id: str

    def __post_init__(self):
        if self.rows.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got shape {self.rows.shape}")
        if not np.isfinite(self.rows).all():
            raise ValueError("feature matrix contains non-finite values")

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


class TestConvFeatures(torch.nn.Module):
    """Fixed-seed 3-stage conv network with global average pooling, D=64."""

    __test__ = False  # keep pytest from collecting this as a test class

    def __init__(self, seed: int = 0, input_size: int = 64):
        super().__init__()
        self.extractor_id = f"testconv64-s{seed}"
        self.input_size = input_size
        self.dim = 64
        gen = torch.Generator().manual_seed(seed)
        widths = [3, 16, 32, 64]
        self.convs = torch.nn.ModuleList()
        for cin, cout in zip(widths[:-1], widths[1:]):
            conv = torch.nn.Conv2d(cin, cout, 3, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen)
                                  / (3.0 * cin**0.5))
                conv.bias.copy_(0.1 * torch.randn(conv.bias.shape, generator=gen))
            self.convs.append(conv)
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    @torch.no_grad()
    def forward(self, batch: torch.Tensor) -> torch.Tensor:
        x = batch
        for conv in self.convs:
            x = F.leaky_relu(conv(x), 0.2)
        return x.mean(dim=(2, 3))


class InceptionFeatures:
    """Canonical 2048-d pooled features; imports torchvision lazily."""

    def __init__(self):
        try:
            from torchvision.models import Inception_V3_Weights, inception_v3
        except ImportError as exc:
            raise ConfigError(
                "the canonical extractor needs torchvision; install the "
                "'pretrained' extra or use the test profile") from exc
        net = inception_v3(weights=Inception_V3_Weights.IMAGENET1K_V1)
        net.fc = torch.nn.Identity()
        net.eval()
        for p in net.parameters():
            p.requires_grad_(False)
        self.net = net
        self.extractor_id = "inception-v3-pool2048"
        self.input_size = 299
        self.dim = 2048

    @torch.no_grad()
    def __call__(self, batch: torch.Tensor) -> torch.Tensor:
        # network expects [0,1]-normalized ImageNet stats; pipeline is [-1,1]
        x = (batch + 1.0) / 2.0
        mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
        std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)
        return self.net((x - mean) / std)


def get_extractor(profile: str, seed: int = 0):
    if profile == "test":
        return TestConvFeatures(seed=seed)
    if profile == "canonical":
        return InceptionFeatures()
    raise ConfigError(f"unknown extractor profile {profile!r}")


def extract_features(images, extractor, batch_size: int = 32) -> FeatureMatrix:
    """Run the extractor over a list/stack of (3, H, W) images.

    Row order matches input order. Images whose size differs from the
    extractor's expected input are bilinearly resized (never cropped).
    """
    if isinstance(images, torch.Tensor) and images.ndim == 3:
        images = [images]
    batches = []
    chunk: list[torch.Tensor] = []
    for img in images:
        chunk.append(img)
        if len(chunk) == batch_size:
            batches.append(torch.stack(chunk))
            chunk = []
    if chunk:
        batches.append(torch.stack(chunk))
    if not batches:
        raise ValueError("no images to extract features from")

    rows = []
    with torch.no_grad():
        for batch in batches:
            if batch.shape[-1] != extractor.input_size:
                batch = F.interpolate(batch, size=(extractor.input_size,) * 2,
                                      mode="bilinear", align_corners=False)
            rows.append(extractor(batch).cpu().double().numpy())
    return FeatureMatrix(np.concatenate(rows, axis=0), extractor.extractor_id)
