from .io import check_image, load_image, save_image
from .manifest import DatasetManifest, ManifestEntry, build_manifest
from .toy import ToyParams, synthesize_toy_fundus

__all__ = [
    "check_image",
    "load_image",
    "save_image",
    "DatasetManifest",
    "ManifestEntry",
    "build_manifest",
    "ToyParams",
    "synthesize_toy_fundus",
]
