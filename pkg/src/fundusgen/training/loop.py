"""Joint training of the encoder and generator on reconstruction.

Batch composition is a pure function of (seed, step): step k takes slice
[k*B, (k+1)*B) of an infinite index stream made of per-epoch permutations.
Nothing else in a step consumes randomness, so an interrupted run resumed
from a checkpoint walks the exact same trajectory as an uninterrupted one.

Per step: encode -> update the latent EMA (detached) -> synthesize ->
weighted loss -> one Adam update at the cosine-annealed learning rate. A
non-finite loss aborts with diagnostics; divergence is never skipped over.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..config import RunConfig
from ..encoder import FundusEncoder
from ..errors import CheckpointError, ConfigError, NumericsError
from ..generator import StyleGenerator
from ..imaging.io import load_image, save_image
from ..imaging.manifest import DatasetManifest
from ..latent import LatentPrior
from ..losses import (
    LossReport,
    MeanLatent,
    PatchDiscriminator,
    PerceptualExtractor,
    discriminator_loss,
    total_loss,
)
from ..utils import derive_seed, seed_everything, set_deterministic
from .checkpoint import CheckpointData, load_checkpoint, save_checkpoint
from .schedule import cosine_lr

log = logging.getLogger(__name__)


@dataclass
class TrainState:
    config: RunConfig
    encoder: FundusEncoder
    generator: StyleGenerator
    optimizer: torch.optim.Adam
    mean_latent: MeanLatent
    perceptual: PerceptualExtractor
    step: int = 0
    discriminator: PatchDiscriminator | None = None
    d_optimizer: torch.optim.Adam | None = None
    prior: LatentPrior | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def create(cls, config: RunConfig) -> "TrainState":
        config.validate()
        seed_everything(config.train.seed)
        if config.train.deterministic:
            set_deterministic(True)
        encoder = FundusEncoder(config.model)
        generator = StyleGenerator(config.model)
        params = list(encoder.parameters()) + list(generator.parameters())
        optimizer = torch.optim.Adam(params, lr=config.train.lr0,
                                     betas=(config.train.beta1, 0.999), eps=1e-8)
        discriminator = d_optimizer = None
        if config.train.weights.adv > 0:
            discriminator = PatchDiscriminator()
            d_optimizer = torch.optim.Adam(discriminator.parameters(),
                                           lr=config.train.lr0,
                                           betas=(config.train.beta1, 0.999))
        perceptual = PerceptualExtractor(profile=config.metrics.lpips_profile)
        return cls(config=config, encoder=encoder, generator=generator,
                   optimizer=optimizer,
                   mean_latent=MeanLatent(decay=config.train.mean_latent_decay),
                   perceptual=perceptual, discriminator=discriminator,
                   d_optimizer=d_optimizer)

    @classmethod
    def resume(cls, config: RunConfig, data: CheckpointData) -> "TrainState":
        if data.config_digest != config.digest():
            raise CheckpointError(
                f"checkpoint was trained with config digest {data.config_digest}, "
                f"resume requested with {config.digest()}; refusing to mix")
        state = cls.create(config)
        state.encoder.load_state_dict(data.encoder_state)
        state.generator.load_state_dict(data.generator_state)
        state.optimizer.load_state_dict(data.optimizer_state)
        ml = data.mean_latent
        state.mean_latent = MeanLatent(decay=ml["decay"], w_bar=ml["w_bar"],
                                       update_count=ml["update_count"])
        state.step = data.step
        state.prior = data.prior
        return state

    def save(self, path: str | Path) -> Path:
        return save_checkpoint(path, encoder=self.encoder, generator=self.generator,
                               optimizer=self.optimizer, mean_latent=self.mean_latent,
                               step=self.step, config=self.config, prior=self.prior)

    @classmethod
    def load(cls, path: str | Path) -> "TrainState":
        from ..config import config_from_dict
        data = load_checkpoint(path)
        config = config_from_dict(data.config)
        return cls.resume(config, data)


def batch_indices(seed: int, step: int, n: int, batch_size: int) -> list[int]:
    """Slice [step*B, (step+1)*B) of the infinite permutation stream."""
    start = step * batch_size
    out = []
    for offset in range(batch_size):
        pos = start + offset
        epoch, idx = divmod(pos, n)
        perm = np.random.default_rng(derive_seed(seed, "order", epoch)).permutation(n)
        out.append(int(perm[idx]))
    return out


def train_step(batch: torch.Tensor, state: TrainState) -> LossReport:
    """One optimization step; the returned report carries the loss scalars."""
    cfg = state.config
    state.encoder.train()
    state.generator.train()
    lr = cosine_lr(state.step, cfg.train.total_steps, cfg.train.lr0, cfg.train.lr_min)
    for group in state.optimizer.param_groups:
        group["lr"] = lr

    code = state.encoder.encode(batch, cfg.model.skip_count)
    # the EMA sees only detached latents: reg gradient reaches the encoder
    # through w_plus alone, never through the anchor
    state.mean_latent.update(code.w_plus)
    x_hat = state.generator.synthesize(code)
    try:
        report = total_loss(batch, x_hat, code.w_plus, state.mean_latent,
                            cfg.train.weights, state.perceptual,
                            discriminator=state.discriminator)
    except NumericsError as exc:
        raise NumericsError(f"aborting at step {state.step}: {exc}") from exc

    state.optimizer.zero_grad(set_to_none=True)
    report.total.backward()
    state.optimizer.step()

    if state.discriminator is not None:
        for group in state.d_optimizer.param_groups:
            group["lr"] = lr
        state.d_optimizer.zero_grad(set_to_none=True)
        d_loss = discriminator_loss(state.discriminator, batch, x_hat.detach())
        d_loss.backward()
        state.d_optimizer.step()

    state.step += 1
    return report


def load_split_images(manifest: DatasetManifest, split: str, size: int) -> torch.Tensor:
    entries = manifest.subset(split)
    if not entries:
        raise ConfigError(f"manifest has no entries in the {split!r} split")
    return torch.stack([load_image(manifest.resolve(e), size) for e in entries])


@torch.no_grad()
def fit_latent_prior(encoder: FundusEncoder, images: torch.Tensor,
                     skip_count: int = 0, batch_size: int = 16) -> LatentPrior:
    """Per-slot Gaussian fit of encoder latents over a corpus."""
    encoder.eval()
    ws, fs = [], []
    for start in range(0, len(images), batch_size):
        code = encoder.encode(images[start:start + batch_size], skip_count)
        ws.append(code.w_plus)
        fs.append(code.f)
    w = torch.cat(ws)
    f = torch.cat(fs)
    w_std = w.std(dim=0) if len(w) > 1 else torch.zeros_like(w[0])
    f_std = f.std(dim=0) if len(f) > 1 else torch.zeros_like(f[0])
    return LatentPrior(w_mean=w.mean(dim=0), w_std=w_std,
                       f_mean=f.mean(dim=0), f_std=f_std, count=len(w))


@torch.no_grad()
def reconstruct(state: TrainState, images: torch.Tensor,
                batch_size: int = 16) -> torch.Tensor:
    state.encoder.eval()
    state.generator.eval()
    outs = []
    for start in range(0, len(images), batch_size):
        code = state.encoder.encode(images[start:start + batch_size],
                                    state.config.model.skip_count)
        outs.append(state.generator.synthesize(code))
    return torch.cat(outs)


def save_grid(images: torch.Tensor, path: str | Path, cols: int = 4) -> None:
    """Tile a stack of same-size images into one PNG."""
    n, _, height, width = images.shape
    rows = (n + cols - 1) // cols
    canvas = torch.full((3, rows * height, cols * width), -1.0)
    for i in range(n):
        r, c = divmod(i, cols)
        canvas[:, r * height:(r + 1) * height, c * width:(c + 1) * width] = images[i]
    arr = ((canvas.clamp(-1, 1) + 1.0) * 127.5 + 0.5).floor().clamp(0, 255)
    from PIL import Image
    Image.fromarray(arr.to(torch.uint8).numpy().transpose(1, 2, 0), "RGB").save(Path(path))


def fit(config: RunConfig, manifest: DatasetManifest, out_dir: str | Path,
        resume: str | Path | None = None) -> tuple[TrainState, Path]:
    """Run the full training loop; returns the state and final checkpoint path.

    Writes per-step JSON Lines to train_log.jsonl, a snapshot checkpoint and
    a 4x4 original/reconstruction grid every snapshot interval, and a final
    checkpoint that includes the fitted latent prior for novel sampling.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images = load_split_images(manifest, "train", config.model.image_size)

    if resume is not None:
        state = TrainState.resume(config, load_checkpoint(resume))
        log_mode = "a"
    else:
        state = TrainState.create(config)
        log_mode = "w"

    snapshot_every = config.train.resolved_snapshot_every()
    preview = images[: min(8, len(images))]
    total = config.train.total_steps
    n = len(images)

    with (out_dir / "train_log.jsonl").open(log_mode) as log_file:
        while state.step < total:
            idx = batch_indices(config.train.seed, state.step, n, config.train.batch_size)
            report = train_step(images[idx], state)
            lr = state.optimizer.param_groups[0]["lr"]
            record = {"step": state.step, "lr": lr}
            record.update({k: v for k, v in report.to_dict().items() if k != "weights"})
            log_file.write(json.dumps(record) + "\n")

            if state.step % snapshot_every == 0 or state.step == total:
                recon = reconstruct(state, preview)
                save_grid(torch.cat([preview, recon]),
                          out_dir / f"snapshot_{state.step:06d}.png")
                state.save(out_dir / f"checkpoint_{state.step:06d}.ckpt")
                log.info("step %d/%d total=%.4f", state.step, total,
                         float(report.total.detach()))

    state.prior = fit_latent_prior(state.encoder, images,
                                   skip_count=config.model.skip_count)
    final_path = state.save(out_dir / "checkpoint_final.ckpt")
    return state, final_path
