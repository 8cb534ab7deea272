from .checkpoint import CheckpointData, load_checkpoint, save_checkpoint
from .loop import TrainState, fit, fit_latent_prior, train_step
from .refine import RefineResult, refine
from .schedule import cosine_lr

__all__ = [
    "CheckpointData",
    "load_checkpoint",
    "save_checkpoint",
    "TrainState",
    "fit",
    "fit_latent_prior",
    "train_step",
    "RefineResult",
    "refine",
    "cosine_lr",
]
