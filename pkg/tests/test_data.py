"""Tests for dataset ingestion: scanning, metadata joins, channel statistics,
PNG IO, bilinear resize, and split validation."""

import numpy as np
import pytest
from PIL import Image

from forestvit.data import (CLASSES, ChannelStats, DatasetManifest, channel_stats,
                            class_index, load_image, load_stats, normalize,
                            resize, save_image, save_stats, scan, stats_from_text,
                            stats_to_text, validate_splits)
from forestvit.errors import ConfigError, DataError, FormatError


def write_png(path, array):
    path.parent.mkdir(parents=True, exist_ok=True)
    save_image(path, array)


def make_tree(root, layout, metadata=None):
    """layout: {split: {class_name: [(filename, HxWx3 array), ...]}}"""
    for split, classes in layout.items():
        for cname, images in classes.items():
            for fname, arr in images:
                write_png(root / split / cname / fname, arr)
    if metadata is not None:
        lines = ["path,latitude,longitude"]
        lines += [f"{p},{lat},{lon}" for p, lat, lon in metadata]
        (root / "metadata.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def const_image(value, size=4):
    return np.full((size, size, 3), value)


class TestScan:
    def test_empty_root(self, tmp_path):
        manifest = scan(tmp_path)
        assert len(manifest) == 0

    def test_fixture_tree_sorted(self, tmp_path):
        make_tree(tmp_path, {
            "train": {"other": [("b.png", const_image(0.2))],
                      "plantation": [("a.png", const_image(0.4))]},
            "test": {"other": [("a.png", const_image(0.6))],
                     "plantation": [("b.png", const_image(0.8))]},
        })
        manifest = scan(tmp_path)
        assert len(manifest) == 4
        keys = [(r.split, r.class_name, r.path.name) for r in manifest.records]
        assert keys == sorted(keys)
        assert keys[0][0] == "test"  # byte order: test < train

    def test_duplicate_filename_across_classes(self, tmp_path):
        make_tree(tmp_path, {
            "train": {"other": [("x.png", const_image(0.1))],
                      "plantation": [("x.png", const_image(0.9))]},
        })
        manifest = scan(tmp_path)
        assert len(manifest) == 2
        assert manifest.records[0].path != manifest.records[1].path

    def test_unknown_class_dir_named_in_error(self, tmp_path):
        make_tree(tmp_path, {"train": {"other": [("x.png", const_image(0.1))]}})
        (tmp_path / "train" / "wetland").mkdir()
        with pytest.raises(DataError) as exc:
            scan(tmp_path)
        assert "wetland" in str(exc.value)

    def test_unknown_split_dir_rejected(self, tmp_path):
        make_tree(tmp_path, {"train": {"other": [("x.png", const_image(0.1))]}})
        (tmp_path / "holdout").mkdir()
        with pytest.raises(DataError):
            scan(tmp_path)

    def test_metadata_join(self, tmp_path):
        make_tree(tmp_path,
                  {"train": {"other": [("x.png", const_image(0.1)),
                                       ("y.png", const_image(0.2))]}},
                  metadata=[("train/other/x.png", -1.5, 110.25)])
        manifest = scan(tmp_path)
        by_name = {r.path.name: r for r in manifest.records}
        assert by_name["x.png"].coord.latitude == -1.5
        assert by_name["x.png"].coord.longitude == 110.25
        assert by_name["y.png"].coord is None

    def test_bad_metadata_header(self, tmp_path):
        make_tree(tmp_path, {"train": {"other": [("x.png", const_image(0.1))]}})
        (tmp_path / "metadata.csv").write_text("file,lat,lon\n", encoding="utf-8")
        with pytest.raises(FormatError):
            scan(tmp_path)

    def test_scan_deterministic(self, tmp_path):
        make_tree(tmp_path, {
            "train": {"other": [(f"img{i}.png", const_image(i / 10)) for i in range(5)]},
        })
        a = scan(tmp_path)
        b = scan(tmp_path)
        assert [r.rel_path for r in a.records] == [r.rel_path for r in b.records]

    def test_class_index_order(self):
        assert [class_index(c) for c in CLASSES] == [0, 1, 2, 3]
        with pytest.raises(DataError):
            class_index("savanna")


class TestChannelStats:
    def test_constant_image(self, tmp_path):
        make_tree(tmp_path, {"train": {"other": [("x.png", const_image(0.5))]}})
        stats = channel_stats(scan(tmp_path))
        # 0.5 quantizes to 128/255 on write
        assert np.max(np.abs(stats.mean - 128.0 / 255.0)) < 1e-12
        assert np.max(np.abs(stats.std)) < 1e-12

    def test_half_and_half(self, tmp_path):
        img = np.zeros((2, 2, 3))
        img[0, :, :] = 1.0  # two pixels 1, two pixels 0 per channel
        make_tree(tmp_path, {"train": {"other": [("x.png", img)]}})
        stats = channel_stats(scan(tmp_path))
        assert np.max(np.abs(stats.mean - 0.5)) < 1e-12
        assert np.max(np.abs(stats.std - 0.5)) < 1e-12

    def test_matches_flat_loop_oracle(self, tmp_path):
        rng = np.random.default_rng(0)
        images = [rng.uniform(size=(4, 4, 3)) for _ in range(3)]
        make_tree(tmp_path, {"train": {"other": [
            (f"i{i}.png", img) for i, img in enumerate(images)]}})
        manifest = scan(tmp_path)
        stats = channel_stats(manifest)
        pixels = np.concatenate([load_image(r.path).reshape(-1, 3)
                                 for r in manifest.records])
        for ch in range(3):
            vals = pixels[:, ch]
            mean = sum(vals) / len(vals)
            var = sum((v - mean) ** 2 for v in vals) / len(vals)
            assert abs(stats.mean[ch] - mean) < 1e-12
            assert abs(stats.std[ch] - np.sqrt(var)) < 1e-12

    def test_empty_split_rejected(self, tmp_path):
        make_tree(tmp_path, {"train": {"other": [("x.png", const_image(0.5))]}})
        with pytest.raises(DataError):
            channel_stats(scan(tmp_path), split="validation")

    def test_permutation_invariant(self, tmp_path):
        rng = np.random.default_rng(1)
        make_tree(tmp_path, {"train": {"other": [
            (f"i{i}.png", rng.uniform(size=(4, 4, 3))) for i in range(4)]}})
        manifest = scan(tmp_path)
        reversed_manifest = DatasetManifest(root=manifest.root,
                                            records=list(reversed(manifest.records)))
        a = channel_stats(manifest)
        b = channel_stats(reversed_manifest)
        assert np.allclose(a.mean, b.mean, rtol=1e-12, atol=1e-15)
        assert np.allclose(a.std, b.std, rtol=1e-12, atol=1e-15)


class TestNormalize:
    def test_mean_image_is_zero(self):
        stats = ChannelStats(mean=np.array([0.2, 0.4, 0.6]),
                             std=np.array([0.1, 0.2, 0.3]))
        img = np.tile(stats.mean, (4, 4, 1))
        assert np.max(np.abs(normalize(img, stats))) < 1e-12

    def test_renormalized_stats(self):
        rng = np.random.default_rng(2)
        img = rng.uniform(size=(8, 8, 3))
        flat = img.reshape(-1, 3)
        stats = ChannelStats(mean=flat.mean(axis=0), std=flat.std(axis=0))
        out = normalize(img, stats).reshape(-1, 3)
        assert np.max(np.abs(out.mean(axis=0))) < 1e-9
        assert np.max(np.abs(out.std(axis=0) - 1.0)) < 1e-6

    def test_zero_std_channel(self):
        stats = ChannelStats(mean=np.array([0.5, 0.5, 0.5]),
                             std=np.array([0.0, 0.1, 0.1]))
        img = np.full((2, 2, 3), 0.5)
        out = normalize(img, stats)
        assert np.isfinite(out).all()
        assert np.max(np.abs(out[:, :, 0])) < 1e-12

    def test_invertible(self):
        rng = np.random.default_rng(3)
        img = rng.uniform(size=(4, 4, 3))
        stats = ChannelStats(mean=np.array([0.3, 0.5, 0.7]),
                             std=np.array([0.2, 0.25, 0.3]))
        back = normalize(img, stats) * stats.std + stats.mean
        assert np.max(np.abs(back - img)) < 1e-12


class TestImageIO:
    def test_pure_white_1x1(self, tmp_path):
        png = tmp_path / "w.png"
        Image.fromarray(np.full((1, 1, 3), 255, dtype=np.uint8)).save(png)
        assert np.array_equal(load_image(png), np.ones((1, 1, 3)))

    def test_checkerboard(self, tmp_path):
        board = np.zeros((2, 2, 3), dtype=np.uint8)
        board[0, 0] = board[1, 1] = 255
        png = tmp_path / "c.png"
        Image.fromarray(board).save(png)
        expected = np.zeros((2, 2, 3))
        expected[0, 0] = expected[1, 1] = 1.0
        assert np.array_equal(load_image(png), expected)

    def test_encode_decode_roundtrip(self, tmp_path):
        rng = np.random.default_rng(4)
        raw = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        png = tmp_path / "r.png"
        save_image(png, raw / 255.0)
        assert np.array_equal(np.asarray(Image.open(png)), raw)

    def test_alpha_discarded(self, tmp_path):
        rgba = np.zeros((2, 2, 4), dtype=np.uint8)
        rgba[:, :, 0] = 200
        rgba[:, :, 3] = 10
        png = tmp_path / "a.png"
        Image.fromarray(rgba, mode="RGBA").save(png)
        out = load_image(png)
        assert out.shape == (2, 2, 3)
        assert np.max(np.abs(out[:, :, 0] - 200.0 / 255.0)) < 1e-12

    def test_undecodable_names_path(self, tmp_path):
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"this is not a png")
        with pytest.raises(FormatError) as exc:
            load_image(bad)
        assert "bad.png" in str(exc.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_image(tmp_path / "ghost.png")

    def test_non_square_warns(self, tmp_path):
        png = tmp_path / "ns.png"
        Image.fromarray(np.zeros((2, 4, 3), dtype=np.uint8)).save(png)
        with pytest.warns(UserWarning):
            load_image(png)

    def test_round_half_up(self, tmp_path):
        png = tmp_path / "h.png"
        save_image(png, np.full((1, 1, 3), 0.5))
        assert np.asarray(Image.open(png))[0, 0, 0] == 128


class TestResize:
    def test_same_size_identity(self):
        rng = np.random.default_rng(5)
        img = rng.uniform(size=(6, 6, 3))
        assert np.max(np.abs(resize(img, 6) - img)) < 1e-9

    def test_constant_stays_constant(self):
        img = np.full((5, 5, 3), 0.37)
        out = resize(img, 9)
        assert np.max(np.abs(out - 0.37)) < 1e-12

    def test_hand_worked_2x2_to_4x4(self):
        # source channel values: pixel (y, x) -> 2y + x
        img = np.zeros((2, 2, 3))
        for y in range(2):
            for x in range(2):
                img[y, x, :] = 2 * y + x
        out = resize(img, 4)
        # half-pixel centers with edge clamping give effective source
        # coordinates [0, 0.25, 0.75, 1] on each axis
        coords = [0.0, 0.25, 0.75, 1.0]
        expected = np.array([[2 * fy + fx for fx in coords] for fy in coords])
        for ch in range(3):
            assert np.max(np.abs(out[:, :, ch] - expected)) < 1e-12

    def test_downsample_shape(self):
        rng = np.random.default_rng(6)
        out = resize(rng.uniform(size=(7, 7, 3)), 3)
        assert out.shape == (3, 3, 3)

    def test_bad_target(self):
        with pytest.raises(ConfigError):
            resize(np.zeros((4, 4, 3)), 1)


class TestValidateSplits:
    def test_fixture_counts(self, tmp_path):
        make_tree(tmp_path, {
            "train": {"other": [("a.png", const_image(0.1)),
                                ("b.png", const_image(0.2))],
                      "plantation": [("c.png", const_image(0.3))]},
            "validation": {"other": [("d.png", const_image(0.4))]},
        })
        report = validate_splits(scan(tmp_path))
        assert report["totals"] == {"train": 3, "validation": 1, "test": 0}
        assert report["per_split"]["train"]["other"] == 2
        assert report["total"] == 4

    def test_empty_manifest(self, tmp_path):
        report = validate_splits(scan(tmp_path))
        assert report["total"] == 0

    def test_expected_totals_checked(self, tmp_path):
        make_tree(tmp_path, {"train": {"other": [("a.png", const_image(0.1))]}})
        manifest = scan(tmp_path)
        validate_splits(manifest, expected_totals=(1, 0, 0))
        with pytest.raises(DataError):
            validate_splits(manifest, expected_totals=(2, 0, 0))


class TestStatsFile:
    def test_round_trip_lossless(self, tmp_path):
        rng = np.random.default_rng(7)
        stats = ChannelStats(mean=rng.uniform(size=3), std=rng.uniform(size=3))
        path = tmp_path / "stats.txt"
        save_stats(path, stats)
        loaded = load_stats(path)
        assert np.array_equal(loaded.mean, stats.mean)
        assert np.array_equal(loaded.std, stats.std)

    def test_key_names(self):
        text = stats_to_text(ChannelStats(mean=np.zeros(3), std=np.ones(3)))
        keys = [line.split("=")[0] for line in text.strip().splitlines()]
        assert keys == ["mean_r", "mean_g", "mean_b", "std_r", "std_g", "std_b"]

    def test_missing_key_rejected(self):
        with pytest.raises(FormatError):
            stats_from_text("mean_r=0.5\n")
