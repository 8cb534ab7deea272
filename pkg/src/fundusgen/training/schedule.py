"""Learning-rate schedule."""

from __future__ import annotations

import math


def cosine_lr(step: int, total_steps: int, lr0: float, lr_min: float) -> float:
    """Cosine annealing from lr0 down to lr_min over total_steps.

    Steps beyond the horizon clamp to lr_min.
    """
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    if step >= total_steps:
        return lr_min
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))
