"""Synthetic fixture generator."""

import os

import numpy as np
import pytest

from forestvit.data import CLASSES, SPLITS, load_image, scan
from forestvit.errors import ConfigError
from forestvit.rng import sample_rng
from forestvit.toydata import (BACKGROUND, MOVING_COLOR, class_mask, make_toy,
                               render)


class TestMasks:
    def test_equal_area_half_on(self):
        for label in range(4):
            assert class_mask(label).sum() == 32 * 32 // 2

    def test_masks_pairwise_distinct_under_phase(self):
        for a in range(4):
            for b in range(a + 1, 4):
                for pa in range(4):
                    for pb in range(4):
                        ma = class_mask(a, 8, (pa, pa))
                        mb = class_mask(b, 8, (pb, pb))
                        assert not np.array_equal(ma, mb)

    def test_phase_shifts_the_pattern(self):
        base = class_mask(0, 8, (0, 0))
        shifted = class_mask(0, 8, (2, 0))
        assert not np.array_equal(base, shifted)
        assert np.array_equal(np.roll(base, -2, axis=0), shifted)

    def test_bad_label(self):
        with pytest.raises(ConfigError):
            class_mask(4)


class TestRender:
    def test_range_and_shape(self):
        img = render(2, "moving", sample_rng(0, 0))
        assert img.shape == (32, 32, 3)
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_deterministic(self):
        a = render(1, "moving", sample_rng(5, 9))
        b = render(1, "moving", sample_rng(5, 9))
        assert np.array_equal(a, b)

    def test_moving_mean_intensity_matches_across_classes(self):
        # half the pixels carry the shared color whatever the class
        means = []
        for label in range(4):
            imgs = [render(label, "moving", sample_rng(0, 100 + label * 50 + i))
                    for i in range(20)]
            means.append(np.mean(imgs))
        expected = 0.5 * BACKGROUND + 0.5 * np.mean(MOVING_COLOR)
        for m in means:
            assert abs(m - expected) < 0.01

    def test_fixed_variant_color_separable(self):
        # mean channel vector differs clearly between classes
        vecs = [render(label, "fixed", sample_rng(0, label)).mean(axis=(0, 1))
                for label in range(4)]
        for a in range(4):
            for b in range(a + 1, 4):
                assert np.linalg.norm(vecs[a] - vecs[b]) > 0.1


class TestMakeToy:
    def test_tree_and_counts(self, tmp_path):
        root = tmp_path / "toy"
        totals = make_toy(root, "fixed", seed=0, counts=(3, 2, 1))
        assert totals == {"train": 12, "validation": 8, "test": 4}
        manifest = scan(root)
        assert len(manifest) == 24
        report_splits = {s: len(manifest.split_records(s)) for s in SPLITS}
        assert report_splits == totals

    def test_metadata_covers_every_image(self, tmp_path):
        root = tmp_path / "toy"
        make_toy(root, "moving", seed=0, counts=(2, 1, 1))
        manifest = scan(root)
        assert all(r.coord is not None for r in manifest.records)

    def test_coordinates_cluster_by_class(self, tmp_path):
        root = tmp_path / "toy"
        make_toy(root, "fixed", seed=3, counts=(4, 1, 1))
        manifest = scan(root)
        lat_by_class = {}
        for rec in manifest.records:
            lat_by_class.setdefault(rec.label, []).append(rec.coord.latitude)
        centers = [np.mean(lat_by_class[l]) for l in range(4)]
        assert all(centers[i] < centers[i + 1] for i in range(3))

    def test_regeneration_byte_identical(self, tmp_path):
        r1, r2 = tmp_path / "a", tmp_path / "b"
        make_toy(r1, "moving", seed=7, counts=(2, 1, 1))
        make_toy(r2, "moving", seed=7, counts=(2, 1, 1))
        for dirpath, _, files in os.walk(r1):
            rel = os.path.relpath(dirpath, r1)
            for name in files:
                with open(os.path.join(dirpath, name), "rb") as fh:
                    d1 = fh.read()
                with open(os.path.join(r2, rel, name), "rb") as fh:
                    assert fh.read() == d1, name

    def test_seed_changes_content(self, tmp_path):
        r1, r2 = tmp_path / "a", tmp_path / "b"
        make_toy(r1, "moving", seed=0, counts=(1, 1, 1))
        make_toy(r2, "moving", seed=1, counts=(1, 1, 1))
        p = os.path.join("train", CLASSES[0], "img_0000.png")
        a = load_image(os.path.join(r1, p))
        b = load_image(os.path.join(r2, p))
        assert not np.array_equal(a, b)

    def test_bad_variant(self, tmp_path):
        with pytest.raises(ConfigError):
            make_toy(tmp_path / "x", "wobbly", seed=0)

    def test_bad_counts(self, tmp_path):
        with pytest.raises(ConfigError):
            make_toy(tmp_path / "x", "fixed", seed=0, counts=(1, -1, 1))
