import numpy as np
import pytest
import torch

from fundusgen.config import desk_config
from fundusgen.imaging import save_image, synthesize_toy_fundus


@pytest.fixture(scope="session")
def cfg():
    return desk_config()


@pytest.fixture(scope="session")
def toy_batch():
    """16 deterministic toy images at 64 px, stacked (N, 3, 64, 64)."""
    return torch.stack([synthesize_toy_fundus(s, 64)[0] for s in range(16)])


@pytest.fixture(scope="session")
def toy_dir(tmp_path_factory):
    """A directory of 24 toy PNGs named by seed."""
    root = tmp_path_factory.mktemp("toyimgs")
    for seed in range(24):
        img, _ = synthesize_toy_fundus(seed, 64)
        save_image(img, root / f"toy_{seed:03d}.png")
    return root


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
