"""Hierarchical-encoder style-based synthesis of retinal fundus images."""

__version__ = "0.1.0"

from .config import RunConfig, canonical_config, desk_config, load_config

__all__ = ["RunConfig", "canonical_config", "desk_config", "load_config", "__version__"]
