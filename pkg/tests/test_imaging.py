import json
from collections import Counter

import numpy as np
import pytest
import torch
from PIL import Image

from fundusgen.errors import ChannelError, DataError, ResolutionError
from fundusgen.imaging import (
    build_manifest,
    load_image,
    save_image,
    synthesize_toy_fundus,
)


def _write_png(path, arr):
    Image.fromarray(arr, mode="RGB").save(path)


class TestLoadImage:
    def test_identity_resize_maps_linearly(self, tmp_path, rng):
        arr = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
        _write_png(tmp_path / "a.png", arr)
        img = load_image(tmp_path / "a.png", 64)
        expected = arr.astype(np.float32).transpose(2, 0, 1) / 127.5 - 1.0
        assert torch.allclose(img, torch.from_numpy(expected), atol=0, rtol=0)

    def test_mid_gray_maps_near_zero(self, tmp_path):
        arr = np.full((32, 32, 3), 128, dtype=np.uint8)
        _write_png(tmp_path / "g.png", arr)
        img = load_image(tmp_path / "g.png", 32)
        assert torch.allclose(img, torch.full_like(img, 128 / 127.5 - 1.0), atol=1e-6)
        assert abs(img[0, 0, 0].item() - 0.00392) < 1e-4

    def test_nonsquare_source_is_stretched(self, tmp_path, rng):
        arr = rng.integers(0, 256, size=(584, 565, 3), dtype=np.uint8)
        _write_png(tmp_path / "drive.png", arr)
        img = load_image(tmp_path / "drive.png", 512)
        assert img.shape == (3, 512, 512)
        assert img.min() >= -1 and img.max() <= 1

    def test_grayscale_rejected(self, tmp_path):
        Image.fromarray(np.zeros((32, 32), dtype=np.uint8), mode="L").save(tmp_path / "l.png")
        with pytest.raises(ChannelError):
            load_image(tmp_path / "l.png", 32)

    def test_unreadable_file(self, tmp_path):
        (tmp_path / "bad.png").write_bytes(b"not a png")
        with pytest.raises(DataError):
            load_image(tmp_path / "bad.png", 32)


class TestSaveImage:
    def test_round_trip_error_within_one_step(self, tmp_path, rng):
        img = torch.from_numpy(rng.uniform(-1, 1, size=(3, 64, 64)).astype(np.float32))
        save_image(img, tmp_path / "r.png")
        back = load_image(tmp_path / "r.png", 64)
        assert (back - img).abs().max().item() <= 1 / 127.5 + 1e-6

    @pytest.mark.parametrize("value,byte", [(-1.0, 0), (1.0, 255)])
    def test_range_endpoints(self, tmp_path, value, byte):
        img = torch.full((3, 32, 32), value)
        save_image(img, tmp_path / "e.png")
        arr = np.asarray(Image.open(tmp_path / "e.png"))
        assert (arr == byte).all()


class TestToyFundus:
    def test_deterministic(self):
        a, pa = synthesize_toy_fundus(0, 64)
        b, pb = synthesize_toy_fundus(0, 64)
        assert torch.equal(a, b)
        assert pa == pb

    def test_outside_fov_is_black(self):
        img, params = synthesize_toy_fundus(7, 64)
        ys, xs = np.mgrid[0:64, 0:64]
        dist = np.sqrt((xs + 0.5 - params.fov_center[0]) ** 2
                       + (ys + 0.5 - params.fov_center[1]) ** 2)
        outside = torch.from_numpy(dist > params.fov_radius)
        assert (img[:, outside] == -1).all()

    def test_geometry_invariants(self):
        for seed in range(25):
            img, p = synthesize_toy_fundus(seed, 64)
            cx, cy = p.fov_center
            # disc fully inside the field of view
            d = np.hypot(p.disc_center[0] - cx, p.disc_center[1] - cy)
            assert d + p.disc_radius <= p.fov_radius
            for lx, ly, lr, kind in p.lesion_spots:
                assert np.hypot(lx - cx, ly - cy) + lr <= p.fov_radius
                assert kind in ("hemorrhage", "exudate")
            trunks = [c for c in p.vessel_tree if c[0] == p.disc_center]
            assert len(trunks) >= 3

    def test_lesion_histogram_spans_full_range(self):
        counts = Counter(len(synthesize_toy_fundus(s, 64)[1].lesion_spots)
                         for s in range(200))
        assert set(counts) == {0, 1, 2, 3, 4, 5}

    def test_invalid_size(self):
        with pytest.raises(ResolutionError):
            synthesize_toy_fundus(0, 48)


class TestManifest:
    @staticmethod
    def _make_class_tree(root, classes=("healthy", "lesion"), per_class=5):
        rng = np.random.default_rng(0)
        for name in classes:
            (root / name).mkdir()
            for i in range(per_class):
                arr = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
                _write_png(root / name / f"img_{i}.png", arr)

    def test_class_folders(self, tmp_path):
        self._make_class_tree(tmp_path)
        m = build_manifest(tmp_path, "class-folders")
        assert len(m) == 10
        assert m.class_names == ["healthy", "lesion"]
        assert {e.label for e in m.entries} == {0, 1}
        assert [e.path for e in m.entries] == sorted(e.path for e in m.entries)

    def test_rebuild_is_identical(self, tmp_path):
        self._make_class_tree(tmp_path)
        assert build_manifest(tmp_path, "class-folders") == build_manifest(tmp_path, "class-folders")

    def test_flat_is_unlabeled(self, tmp_path):
        self._make_class_tree(tmp_path)
        m = build_manifest(tmp_path, "flat")
        assert all(e.label == -1 for e in m.entries)
        assert m.class_names == []

    def test_splits_partition(self, tmp_path):
        rng = np.random.default_rng(0)
        for i in range(60):
            arr = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
            _write_png(tmp_path / f"f_{i:03d}.png", arr)
        m = build_manifest(tmp_path, "flat")
        by_split = Counter(e.split for e in m.entries)
        assert sum(by_split.values()) == 60
        assert set(by_split) <= {"train", "val", "test"}
        assert by_split["train"] > by_split["val"]
        assert by_split["train"] > by_split["test"]

    def test_split_override_file(self, tmp_path):
        self._make_class_tree(tmp_path)
        m0 = build_manifest(tmp_path, "class-folders")
        target = m0.entries[0].path
        (tmp_path / "splits.json").write_text(json.dumps({target: "test"}))
        m = build_manifest(tmp_path, "class-folders")
        assert next(e for e in m.entries if e.path == target).split == "test"

    def test_csv_labels_and_error_line(self, tmp_path):
        rng = np.random.default_rng(0)
        for name in ("a.png", "b.png"):
            _write_png(tmp_path / name, rng.integers(0, 256, (32, 32, 3), dtype=np.uint8))
        (tmp_path / "labels.csv").write_text("path,label\na.png,dog\nb.png,cat\n")
        m = build_manifest(tmp_path, "csv-labels")
        assert m.class_names == ["cat", "dog"]
        assert [e.label for e in m.entries] == [1, 0]  # a->dog=1, b->cat=0

        (tmp_path / "labels.csv").write_text("path,label\na.png,dog\nbroken-line\n")
        with pytest.raises(DataError, match=":3:"):
            build_manifest(tmp_path, "csv-labels")

    def test_empty_root_errors(self, tmp_path):
        with pytest.raises(DataError, match="empty"):
            build_manifest(tmp_path, "flat")

    def test_save_load_round_trip(self, tmp_path):
        self._make_class_tree(tmp_path)
        m = build_manifest(tmp_path, "class-folders")
        m.save(tmp_path / "manifest.jsonl")
        loaded = type(m).load(tmp_path / "manifest.jsonl")
        assert loaded.entries == m.entries
        assert loaded.class_names == m.class_names
