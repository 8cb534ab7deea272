"""Dataset manifests over on-disk image collections.

A manifest is an ordered list of (path, label, split) entries plus class
names. Three directory layouts are understood:

* ``flat``          — images anywhere under the root, all unlabeled (-1).
* ``class-folders`` — one subdirectory per class, sorted names give ids.
* ``csv-labels``    — ``labels.csv`` at the root with ``path,label`` rows.

Splits come from ``splits.json`` at the root when present (a mapping of
relative path to split name), otherwise from a stable 64-bit FNV-1a hash of
the relative path: buckets 0-7 train, 8 val, 9 test. Rebuilding a manifest
from the same tree therefore always reproduces the same splits.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import DataError
from ..utils import fnv1a64

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}
_SPLITS = ("train", "val", "test")


@dataclass
class ManifestEntry:
    path: str  # POSIX path relative to the manifest root
    label: int
    split: str


@dataclass
class DatasetManifest:
    root: Path
    entries: list[ManifestEntry] = field(default_factory=list)
    class_names: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path

    def subset(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def validate(self) -> "DatasetManifest":
        seen = set()
        for e in self.entries:
            if e.path in seen:
                raise DataError(f"duplicate manifest path {e.path!r}")
            seen.add(e.path)
            if e.split not in _SPLITS:
                raise DataError(f"invalid split {e.split!r} for {e.path!r}")
            if not -1 <= e.label < max(len(self.class_names), 1) and e.label != -1:
                raise DataError(f"label {e.label} out of range for {e.path!r}")
        return self

    def save(self, path: str | Path) -> None:
        """Write JSON Lines, one object per entry; class names in a sidecar."""
        path = Path(path)
        with path.open("w") as fh:
            for e in self.entries:
                fh.write(json.dumps({"path": e.path, "label": e.label, "split": e.split}))
                fh.write("\n")
        if self.class_names:
            path.with_suffix(".classes.json").write_text(json.dumps(self.class_names))

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        entries = []
        try:
            for i, line in enumerate(path.read_text().splitlines(), start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    entries.append(ManifestEntry(obj["path"], int(obj["label"]), obj["split"]))
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise DataError(f"{path}:{i}: malformed manifest line: {exc}") from exc
        except OSError as exc:
            raise DataError(f"cannot read manifest {path}: {exc}") from exc
        classes_file = path.with_suffix(".classes.json")
        class_names = json.loads(classes_file.read_text()) if classes_file.exists() else []
        return cls(root=path.parent, entries=entries, class_names=class_names).validate()


def _assign_split(rel_path: str, overrides: dict[str, str] | None) -> str:
    if overrides is not None and rel_path in overrides:
        return overrides[rel_path]
    bucket = fnv1a64(rel_path) % 10
    if bucket < 8:
        return "train"
    return "val" if bucket == 8 else "test"


def _list_images(root: Path) -> list[Path]:
    return sorted(p for p in root.rglob("*")
                  if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES)


def _load_split_overrides(root: Path) -> dict[str, str] | None:
    split_file = root / "splits.json"
    if not split_file.exists():
        return None
    overrides = json.loads(split_file.read_text())
    bad = {v for v in overrides.values()} - set(_SPLITS)
    if bad:
        raise DataError(f"splits.json contains unknown split names: {sorted(bad)}")
    return overrides


def build_manifest(root: str | Path, layout: str) -> DatasetManifest:
    """Scan a directory tree into a manifest; entry order is lexicographic."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"manifest root {root} does not exist")
    overrides = _load_split_overrides(root)

    if layout == "flat":
        images = _list_images(root)
        labels = {p: -1 for p in images}
        class_names: list[str] = []
    elif layout == "class-folders":
        class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
        class_names = [d.name for d in class_dirs]
        images, labels = [], {}
        for idx, d in enumerate(class_dirs):
            for p in _list_images(d):
                images.append(p)
                labels[p] = idx
        images.sort()
    elif layout == "csv-labels":
        csv_path = root / "labels.csv"
        if not csv_path.exists():
            raise DataError(f"csv-labels layout requires {csv_path}")
        raw: dict[Path, str] = {}
        with csv_path.open(newline="") as fh:
            reader = csv.reader(fh)
            for lineno, row in enumerate(reader, start=1):
                if lineno == 1 and row and row[0].strip().lower() in ("path", "filename", "file"):
                    continue
                if len(row) != 2 or not row[0].strip():
                    raise DataError(f"{csv_path}:{lineno}: expected 'path,label', got {row!r}")
                raw[root / row[0].strip()] = row[1].strip()
        class_names = sorted(set(raw.values()))
        name_to_id = {name: i for i, name in enumerate(class_names)}
        images = sorted(raw)
        missing = [p for p in images if not p.is_file()]
        if missing:
            raise DataError(f"labels.csv names missing files, e.g. {missing[0]}")
        labels = {p: name_to_id[raw[p]] for p in images}
    else:
        raise DataError(f"unknown layout {layout!r}; use flat, class-folders or csv-labels")

    if not images:
        raise DataError(f"no images found under {root} (empty manifest)")
    entries = []
    for p in images:
        rel = p.relative_to(root).as_posix()
        entries.append(ManifestEntry(rel, labels[p], _assign_split(rel, overrides)))
    return DatasetManifest(root=root, entries=entries, class_names=class_names).validate()
