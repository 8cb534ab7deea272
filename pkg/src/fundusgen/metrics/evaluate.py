"""Directory-level evaluation: FID/KID over two image sets, SSIM over pairs.

SSIM is a paired metric, so it is only reported when a pairing is supplied:
either ``"identity"`` (match files by name) or a JSON Lines file of
``{"gen": ..., "real": ...}`` path pairs. Without one, the SSIM fields stay
null and a warning is logged instead of guessing an alignment.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..config import RunConfig
from ..errors import DataError
from ..imaging.io import load_image
from .features import extract_features, get_extractor
from .fid import fid
from .kid import kid
from .ssim import ssim

log = logging.getLogger(__name__)

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


@dataclass
class MetricReport:
    ssim_mean: float | None
    ssim_std: float | None
    fid: float
    kid_mean: float
    kid_std: float
    n_real: int
    n_gen: int
    extractor_id: str
    config_digest: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        return cls(**json.loads(text))


def _list_images(directory: Path) -> list[Path]:
    files = sorted(p for p in directory.iterdir()
                   if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES)
    if not files:
        raise DataError(f"no images found in {directory}")
    return files


def _resolve_pairs(pairing, gen_files: list[Path], real_files: list[Path]):
    if pairing is None:
        return None
    if pairing == "identity":
        real_by_name = {p.name: p for p in real_files}
        pairs = [(g, real_by_name[g.name]) for g in gen_files if g.name in real_by_name]
        if not pairs:
            raise DataError("identity pairing matched no filenames between the two sets")
        return pairs
    pairs = []
    pairing = Path(pairing)
    gen_root = gen_files[0].parent
    real_root = real_files[0].parent
    for i, line in enumerate(pairing.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            g, r = Path(obj["gen"]), Path(obj["real"])
        except (json.JSONDecodeError, KeyError) as exc:
            raise DataError(f"{pairing}:{i}: malformed pair line: {exc}") from exc
        pairs.append((g if g.is_absolute() else gen_root / g,
                      r if r.is_absolute() else real_root / r))
    if not pairs:
        raise DataError(f"pairing file {pairing} is empty")
    return pairs


def evaluate_dirs(real_dir: str | Path, gen_dir: str | Path, config: RunConfig,
                  pairing: str | Path | None = None,
                  out_path: str | Path | None = None) -> MetricReport:
    """Compute FID/KID (full sets) and optionally paired SSIM; write JSON."""
    real_files = _list_images(Path(real_dir))
    gen_files = _list_images(Path(gen_dir))
    size = config.model.image_size

    real_imgs = [load_image(p, size) for p in real_files]
    gen_imgs = [load_image(p, size) for p in gen_files]

    extractor = get_extractor(config.metrics.extractor)
    real_feats = extract_features(real_imgs, extractor)
    gen_feats = extract_features(gen_imgs, extractor)

    fid_value = fid(real_feats, gen_feats)
    subset_size = min(config.metrics.kid_subset_size, real_feats.n, gen_feats.n)
    kid_mean, kid_std = kid(real_feats, gen_feats, subset_size=subset_size,
                            num_subsets=config.metrics.kid_num_subsets)

    pairs = _resolve_pairs(pairing, gen_files, real_files)
    if pairs is None:
        log.warning("no gen->real pairing supplied; SSIM omitted from the report")
        ssim_mean = ssim_std = None
    else:
        by_path_real = {p: i for i, p in enumerate(real_files)}
        by_path_gen = {p: i for i, p in enumerate(gen_files)}
        values = []
        for g, r in pairs:
            gi = gen_imgs[by_path_gen[g]] if g in by_path_gen else load_image(g, size)
            ri = real_imgs[by_path_real[r]] if r in by_path_real else load_image(r, size)
            values.append(ssim(gi, ri))
        ssim_mean = float(np.mean(values))
        ssim_std = float(np.std(values))

    report = MetricReport(
        ssim_mean=ssim_mean, ssim_std=ssim_std,
        fid=fid_value, kid_mean=kid_mean, kid_std=kid_std,
        n_real=len(real_files), n_gen=len(gen_files),
        extractor_id=extractor.extractor_id,
        config_digest=config.digest(),
    )
    if out_path is not None:
        Path(out_path).write_text(report.to_json())
    return report
