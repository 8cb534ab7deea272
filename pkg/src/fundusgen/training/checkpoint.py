"""Checkpoint persistence.

One binary file (deterministic pickle of numpy arrays, so saving the same
state twice yields identical bytes) plus a small JSON sidecar with the
format version, step, config digest and creation time. Resuming against a
different config digest is a hard error rather than a silent drift.
"""

from __future__ import annotations

import json
import pickle
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import torch

from ..errors import CheckpointError
from ..latent import LatentPrior

FORMAT_VERSION = 1


def _to_arrays(obj: Any) -> Any:
    """Recursively convert tensors to numpy; canonicalize for stable bytes.

    Dict keys are sorted and all strings interned so pickle's object-identity
    memoization behaves the same for freshly-built and reloaded state (the
    save -> load -> save byte-identity contract).
    """
    if isinstance(obj, torch.Tensor):
        return obj.detach().cpu().numpy()
    if isinstance(obj, str):
        return sys.intern(obj)
    if isinstance(obj, dict):
        return {_to_arrays(k): _to_arrays(obj[k]) for k in sorted(obj, key=str)}
    if isinstance(obj, (list, tuple)):
        converted = [_to_arrays(v) for v in obj]
        return converted if isinstance(obj, list) else tuple(converted)
    return obj


def _to_tensors(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return torch.from_numpy(obj.copy())
    if isinstance(obj, dict):
        return {k: _to_tensors(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_to_tensors(v) for v in obj]
    if isinstance(obj, tuple):
        return tuple(_to_tensors(v) for v in obj)
    return obj


@dataclass
class CheckpointData:
    """In-memory image of a checkpoint file."""

    encoder_state: dict
    generator_state: dict
    optimizer_state: dict
    mean_latent: dict
    prior: LatentPrior | None
    step: int
    config: dict
    config_digest: str
    version: int = FORMAT_VERSION


def save_checkpoint(path: str | Path, *, encoder, generator, optimizer,
                    mean_latent, step: int, config, prior: LatentPrior | None,
                    extra_state: dict | None = None) -> Path:
    path = Path(path)
    payload = {
        "version": FORMAT_VERSION,
        "step": int(step),
        "config": config.to_dict(),
        "config_digest": config.digest(),
        "encoder_state": dict(encoder.state_dict()),
        "generator_state": dict(generator.state_dict()),
        "optimizer_state": optimizer.state_dict(),
        "mean_latent": {
            "decay": mean_latent.decay,
            "update_count": mean_latent.update_count,
            "w_bar": mean_latent.w_bar,
        },
        "prior": None if prior is None else {
            "w_mean": prior.w_mean, "w_std": prior.w_std,
            "f_mean": prior.f_mean, "f_std": prior.f_std,
            "count": prior.count,
        },
        "extra_state": extra_state if extra_state else None,
    }
    path.write_bytes(pickle.dumps(_to_arrays(payload), protocol=4))
    sidecar = {"version": FORMAT_VERSION, "step": int(step),
               "config_digest": config.digest(),
               "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))
    return path


def load_checkpoint(path: str | Path) -> CheckpointData:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} does not exist")
    try:
        payload = pickle.loads(path.read_bytes())
    except (pickle.UnpicklingError, EOFError) as exc:
        raise CheckpointError(f"checkpoint {path} is corrupt: {exc}") from exc
    if payload.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {payload.get('version')} "
                              f"is not supported (expected {FORMAT_VERSION})")
    prior = None
    if payload["prior"] is not None:
        p = _to_tensors(payload["prior"])
        prior = LatentPrior(w_mean=p["w_mean"], w_std=p["w_std"],
                            f_mean=p["f_mean"], f_std=p["f_std"], count=p["count"])
    return CheckpointData(
        encoder_state=_to_tensors(payload["encoder_state"]),
        generator_state=_to_tensors(payload["generator_state"]),
        optimizer_state=_to_tensors(payload["optimizer_state"]),
        mean_latent=_to_tensors(payload["mean_latent"]),
        prior=prior,
        step=payload["step"],
        config=payload["config"],
        config_digest=payload["config_digest"],
        version=payload["version"],
    )
