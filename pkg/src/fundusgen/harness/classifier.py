"""Image classifiers for the augmentation study.

The desk profile is a 4-block CNN of roughly 100k parameters; the named
large architectures (densenet121/resnet50/vgg16) are available when
torchvision is installed and compute permits. Training is deterministic
per seed, and the per-epoch ordering of the real data block is independent
of any appended synthetic block, so a real-only run and an augmented run
with the same seed are matched pairs (identical init, identical real-data
order).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..config import ModelConfig
from ..errors import ConfigError
from ..imaging.manifest import DatasetManifest
from ..training.loop import load_split_images
from ..utils import derive_seed


@dataclass
class ClassifierConfig:
    arch: str = "smallcnn"
    width: int = 16
    epochs: int = 12
    batch_size: int = 16
    lr: float = 1e-3

    def label(self) -> str:
        return self.arch if self.arch != "smallcnn" else f"smallcnn{self.width}"


class SmallCnn(nn.Module):
    """4 stride-2 conv blocks, global pooling, linear head (~100k params)."""

    def __init__(self, num_classes: int, width: int = 16):
        super().__init__()
        blocks = []
        cin = 3
        for cout in (width, 2 * width, 4 * width, 8 * width):
            blocks += [nn.Conv2d(cin, cout, 3, stride=2, padding=1),
                       nn.GroupNorm(min(8, cout), cout),
                       nn.LeakyReLU(0.2)]
            cin = cout
        self.features = nn.Sequential(*blocks)
        self.head = nn.Linear(cin, num_classes)

    def forward(self, x):
        return self.head(self.features(x).mean(dim=(2, 3)))


def _build_net(cfg: ClassifierConfig, num_classes: int) -> nn.Module:
    if cfg.arch == "smallcnn":
        return SmallCnn(num_classes, cfg.width)
    try:
        import torchvision.models as models
    except ImportError as exc:
        raise ConfigError(f"classifier arch {cfg.arch!r} needs torchvision; "
                          "install the 'pretrained' extra") from exc
    factories = {"densenet121": models.densenet121, "resnet50": models.resnet50,
                 "vgg16": models.vgg16}
    if cfg.arch not in factories:
        raise ConfigError(f"unknown classifier arch {cfg.arch!r}")
    return factories[cfg.arch](num_classes=num_classes)


def data_order_digest(order: list[int], epochs: int) -> str:
    return hashlib.sha256(repr((epochs, order)).encode()).hexdigest()[:16]


def fit_classifier(train_images: torch.Tensor, train_labels: torch.Tensor,
                   cfg: ClassifierConfig, seed: int,
                   extra_images: torch.Tensor | None = None,
                   extra_labels: torch.Tensor | None = None) -> tuple[nn.Module, str]:
    """Train on the real block plus an optional appended synthetic block.

    Returns the net and a digest of the real-data order actually used, so
    matched-pair experiments can assert the pairing held.
    """
    classes = torch.unique(train_labels)
    if len(classes) < 2:
        raise ConfigError("training labels contain a single class; nothing to learn")
    num_classes = int(train_labels.max().item()) + 1

    torch.manual_seed(seed)
    net = _build_net(cfg, num_classes)
    optimizer = torch.optim.Adam(net.parameters(), lr=cfg.lr)

    n_real = len(train_images)
    real_order_log: list[int] = []
    net.train()
    for epoch in range(cfg.epochs):
        real_perm = np.random.default_rng(
            derive_seed(seed, "cls-real", epoch)).permutation(n_real)
        real_order_log.extend(int(i) for i in real_perm)
        epoch_images = [train_images[real_perm]]
        epoch_labels = [train_labels[real_perm]]
        if extra_images is not None and len(extra_images) > 0:
            extra_perm = np.random.default_rng(
                derive_seed(seed, "cls-extra", epoch)).permutation(len(extra_images))
            epoch_images.append(extra_images[extra_perm])
            epoch_labels.append(extra_labels[extra_perm])
        xs = torch.cat(epoch_images)
        ys = torch.cat(epoch_labels)
        for start in range(0, len(xs), cfg.batch_size):
            batch_x = xs[start:start + cfg.batch_size]
            batch_y = ys[start:start + cfg.batch_size]
            optimizer.zero_grad(set_to_none=True)
            loss = F.cross_entropy(net(batch_x), batch_y)
            loss.backward()
            optimizer.step()
    return net, data_order_digest(real_order_log, cfg.epochs)


@torch.no_grad()
def evaluate_classifier(net: nn.Module, images: torch.Tensor,
                        labels: torch.Tensor, batch_size: int = 64) -> float:
    net.eval()
    correct = 0
    for start in range(0, len(images), batch_size):
        logits = net(images[start:start + batch_size])
        correct += int((logits.argmax(dim=1) == labels[start:start + batch_size]).sum())
    return correct / len(images)


def _split_tensors(manifest: DatasetManifest, split: str,
                   size: int) -> tuple[torch.Tensor, torch.Tensor]:
    entries = manifest.subset(split)
    images = load_split_images(manifest, split, size)
    labels = torch.tensor([e.label for e in entries], dtype=torch.long)
    if (labels < 0).any():
        raise ConfigError(f"{split} split contains unlabeled entries")
    return images, labels


def train_classifier(manifest: DatasetManifest, classifier_config: ClassifierConfig,
                     seed: int, model_config: ModelConfig | None = None) -> float:
    """Train on the manifest's train split, return top-1 accuracy on test."""
    size = model_config.image_size if model_config is not None else 64
    train_x, train_y = _split_tensors(manifest, "train", size)
    test_x, test_y = _split_tensors(manifest, "test", size)
    net, _ = fit_classifier(train_x, train_y, classifier_config, seed)
    return evaluate_classifier(net, test_x, test_y)
