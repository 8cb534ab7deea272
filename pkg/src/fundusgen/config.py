"""Run configuration: profiles, validation, canonical digests.

A run is described by one JSON document with three sections (``model``,
``train``, ``metrics``) plus an optional ``profile`` base ("desk" or
"canonical"). Unknown keys are rejected so typos never silently fall back to
defaults. The digest of the canonicalized document identifies a run and is
embedded in checkpoints and reports.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .utils import digest_of


@dataclass
class LossWeights:
    """Nonnegative weights of the training objective's components."""

    reg: float = 0.005
    lpips: float = 0.8
    l2: float = 1.0
    adv: float = 0.0

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"loss weight {f.name!r} must be finite and >= 0, got {v}")
        if self.lpips == 0 and self.l2 == 0:
            raise ConfigError("at least one of the lpips/l2 weights must be positive "
                              "(no reconstruction signal otherwise)")


@dataclass
class ModelConfig:
    """Architecture of the encoder and the synthesis network.

    ``base_resolution`` is the spatial size of the generator's input feature
    map; the encoder runs its backbone at ``32 * base_resolution`` so the
    pyramid levels land exactly on the generator resolutions that accept
    skip connections.
    """

    image_size: int = 64
    base_resolution: int = 8
    latent_dim: int = 128
    pyramid_channels: int = 64
    backbone_widths: tuple[int, int, int, int] = (16, 32, 64, 128)
    head_width: int = 64
    style_counts: tuple[int, int, int] | None = None
    channel_base: int = 1536
    channel_max: int = 128
    dilation_schedule: tuple[int, ...] = (4, 4, 2, 2, 1, 1, 1)
    skip_count: int = 0
    concat_high: bool = True

    @property
    def n_slots(self) -> int:
        """Style slots: 7 constant-resolution layers, 2 per doubling, 1 toRGB."""
        return 7 + 2 * self.num_doublings + 1

    @property
    def num_doublings(self) -> int:
        return int(round(math.log2(self.image_size / self.base_resolution)))

    @property
    def working_resolution(self) -> int:
        """Backbone input size; inputs of a different size are resized first."""
        return 32 * self.base_resolution

    def resolved_style_counts(self) -> tuple[int, int, int]:
        """Per-level slot counts (coarse, mid, fine); fine level absorbs the rest."""
        if self.style_counts is not None:
            return self.style_counts
        return (3, 4, self.n_slots - 7)

    def channels_at(self, resolution: int) -> int:
        return min(self.channel_max, self.channel_base // resolution)

    def synthesis_resolutions(self) -> list[int]:
        r, out = self.base_resolution, []
        while r <= self.image_size:
            out.append(r)
            r *= 2
        return out

    def validate(self) -> None:
        size = self.image_size
        if size & (size - 1) or not 32 <= size <= 1024:
            raise ConfigError(f"image_size must be a power of two in [32, 1024], got {size}")
        r0 = self.base_resolution
        if r0 & (r0 - 1) or r0 < 4:
            raise ConfigError(f"base_resolution must be a power of two >= 4, got {r0}")
        if r0 > size:
            raise ConfigError("base_resolution cannot exceed image_size")
        if len(self.dilation_schedule) != 7 or any(d < 1 for d in self.dilation_schedule):
            raise ConfigError("dilation_schedule must list 7 integers >= 1")
        if not 0 <= self.skip_count <= 3:
            raise ConfigError(f"skip_count must be in 0..3, got {self.skip_count}")
        counts = self.resolved_style_counts()
        if len(counts) != 3 or min(counts) < 1 or sum(counts) != self.n_slots:
            raise ConfigError(f"style_counts must be 3 positive integers summing to "
                              f"{self.n_slots}, got {counts}")
        if len(self.backbone_widths) != 4:
            raise ConfigError("backbone_widths must list 4 stage widths")


@dataclass
class TrainConfig:
    batch_size: int = 4
    lr0: float = 1e-3
    lr_min: float = 1e-5
    beta1: float = 0.9
    total_steps: int = 500
    seed: int = 0
    mean_latent_decay: float = 0.995
    weights: LossWeights = field(default_factory=LossWeights)
    deterministic: bool = True
    snapshot_every: int | None = None

    def resolved_snapshot_every(self) -> int:
        if self.snapshot_every is not None:
            return self.snapshot_every
        return max(self.total_steps // 20, 50)

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.lr_min < self.lr0:
            raise ConfigError("lr_min must be smaller than lr0")
        if not 0 < self.mean_latent_decay < 1:
            raise ConfigError("mean_latent_decay must lie in (0, 1)")
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        self.weights.validate()


@dataclass
class MetricsConfig:
    extractor: str = "test"
    kid_subset_size: int = 100
    kid_num_subsets: int = 50
    lpips_profile: str = "test"

    def validate(self) -> None:
        if self.extractor not in ("test", "canonical"):
            raise ConfigError(f"extractor must be 'test' or 'canonical', got {self.extractor!r}")
        if self.lpips_profile not in ("test", "vgg"):
            raise ConfigError(f"lpips_profile must be 'test' or 'vgg', got {self.lpips_profile!r}")
        if self.kid_subset_size < 2 or self.kid_num_subsets < 1:
            raise ConfigError("kid_subset_size must be >= 2 and kid_num_subsets >= 1")


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def validate(self) -> "RunConfig":
        self.model.validate()
        self.train.validate()
        self.metrics.validate()
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return digest_of(self.to_dict())


def desk_config() -> RunConfig:
    """Small CPU-trainable profile: 64-pixel images, 8-pixel base feature."""
    return RunConfig().validate()


def canonical_config() -> RunConfig:
    """Full-fidelity profile: 512-pixel images, 18 style slots of width 512."""
    model = ModelConfig(
        image_size=512,
        base_resolution=16,
        latent_dim=512,
        pyramid_channels=256,
        backbone_widths=(64, 128, 256, 512),
        head_width=128,
        channel_base=32768,
        channel_max=512,
        dilation_schedule=(8, 8, 4, 4, 2, 2, 1),
    )
    train = TrainConfig(batch_size=8)
    metrics = MetricsConfig(extractor="canonical", lpips_profile="vgg")
    return RunConfig(model=model, train=train, metrics=metrics).validate()


_PROFILES = {"desk": desk_config, "canonical": canonical_config}

_TUPLE_FIELDS = {"backbone_widths", "style_counts", "dilation_schedule"}


def _apply_overrides(obj, section: str, overrides: dict):
    known = {f.name for f in fields(obj)}
    for key, value in overrides.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in config section {section!r}; "
                              f"known keys: {sorted(known)}")
        if key == "weights":
            if not isinstance(value, dict):
                raise ConfigError("train.weights must be an object")
            obj = replace(obj, weights=_apply_overrides(LossWeights(), "train.weights", value))
            continue
        if key in _TUPLE_FIELDS and value is not None:
            value = tuple(value)
        obj = replace(obj, **{key: value})
    return obj


def config_from_dict(doc: dict) -> RunConfig:
    """Build a validated RunConfig from a JSON-style dict; rejects unknown keys."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    doc = dict(doc)
    profile = doc.pop("profile", "desk")
    if profile not in _PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(_PROFILES)}")
    cfg = _PROFILES[profile]()
    for section in ("model", "train", "metrics"):
        overrides = doc.pop(section, None)
        if overrides is None:
            continue
        if not isinstance(overrides, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        cfg = replace(cfg, **{section: _apply_overrides(getattr(cfg, section), section, overrides)})
    if doc:
        raise ConfigError(f"unknown top-level config keys: {sorted(doc)}")
    return cfg.validate()


def load_config(path: str | Path | None) -> RunConfig:
    """Read a config JSON file, or return the desk profile when path is None."""
    if path is None:
        return desk_config()
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return config_from_dict(doc)
