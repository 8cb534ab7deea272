from .ablation import AblationSpec, run_ablation
from .augmentation import AugmentationSpec, run_augmentation_experiment
from .classifier import ClassifierConfig, SmallCnn, train_classifier

__all__ = [
    "AblationSpec",
    "run_ablation",
    "AugmentationSpec",
    "run_augmentation_experiment",
    "ClassifierConfig",
    "SmallCnn",
    "train_classifier",
]
