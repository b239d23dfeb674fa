"""Tests for geolocation features: coordinate normalization, intensity bars,
and the extended classification-head concatenation."""

import numpy as np
import pytest
from PIL import Image

from forestvit import tensor as T
from forestvit.data import save_image
from forestvit.errors import ConfigError, DataError, ShapeError
from forestvit.geo import (GeoCoordinate, GeoNormalizer, concat_geo_head,
                           embed_geo_bars, fit_normalizer, normalize_coord)
from forestvit.tensor import Tape, Tensor, backward

from helpers import rel_err


class TestGeoCoordinate:
    def test_valid(self):
        c = GeoCoordinate(latitude=-2.5, longitude=113.9)
        assert c.latitude == -2.5

    def test_bounds(self):
        with pytest.raises(DataError):
            GeoCoordinate(latitude=91.0, longitude=0.0)
        with pytest.raises(DataError):
            GeoCoordinate(latitude=0.0, longitude=-181.0)


class TestNormalizer:
    def test_degenerate_rejected(self):
        with pytest.raises(ConfigError):
            GeoNormalizer(lat_min=1.0, lat_max=1.0, lon_min=0.0, lon_max=2.0)

    def test_fit(self):
        coords = [GeoCoordinate(-5.0, 100.0), GeoCoordinate(3.0, 118.0),
                  GeoCoordinate(-1.0, 110.0)]
        n = fit_normalizer(coords)
        assert (n.lat_min, n.lat_max, n.lon_min, n.lon_max) == (-5.0, 3.0, 100.0, 118.0)

    def test_fit_empty_rejected(self):
        with pytest.raises(ConfigError):
            fit_normalizer([])

    def test_array_round_trip(self):
        n = GeoNormalizer(-5.0, 3.0, 100.0, 118.0)
        assert GeoNormalizer.from_array(n.as_array()) == n


class TestNormalizeCoord:
    n = GeoNormalizer(lat_min=-10.0, lat_max=10.0, lon_min=100.0, lon_max=120.0)

    def test_min_corner(self):
        u, v = normalize_coord(GeoCoordinate(-10.0, 100.0), self.n)
        assert (u, v) == (0.0, 0.0)

    def test_max_corner(self):
        u, v = normalize_coord(GeoCoordinate(10.0, 120.0), self.n)
        assert (u, v) == (1.0, 1.0)

    def test_midpoint(self):
        u, v = normalize_coord(GeoCoordinate(0.0, 110.0), self.n)
        assert abs(u - 0.5) < 1e-12 and abs(v - 0.5) < 1e-12

    def test_clamps_outside_bounds(self):
        u, v = normalize_coord(GeoCoordinate(-20.0, 140.0), self.n)
        assert (u, v) == (1.0, 0.0)

    def test_monotone(self):
        lons = [100.0, 105.0, 111.0, 119.0]
        us = [normalize_coord(GeoCoordinate(0.0, lon), self.n)[0] for lon in lons]
        assert us == sorted(us)
        lats = [-9.0, -1.0, 2.0, 8.0]
        vs = [normalize_coord(GeoCoordinate(lat, 110.0), self.n)[1] for lat in lats]
        assert vs == sorted(vs)


class TestEmbedGeoBars:
    def _image(self, seed=0, size=16):
        return np.random.default_rng(seed).uniform(size=(size, size, 3))

    def test_zero_coords_black_bars(self):
        out = embed_geo_bars(self._image(), (0.0, 0.0), bar_px=3)
        assert np.all(out[-3:, :, :] == 0.0)
        assert np.all(out[:, -3:, :] == 0.0)

    def test_full_intensity_bottom_bar(self):
        out = embed_geo_bars(self._image(), (1.0, 0.25), bar_px=3)
        assert np.all(out[-3:, :-3, :] == 1.0)

    def test_vertical_bar_owns_corner(self):
        out = embed_geo_bars(self._image(), (0.25, 0.75), bar_px=3)
        assert np.all(out[:, -3:, :] == 0.75)  # includes the corner square
        assert np.all(out[-3:, :-3, :] == 0.25)

    def test_non_bar_pixels_untouched(self):
        img = self._image(1)
        out = embed_geo_bars(img, (0.3, 0.6), bar_px=3)
        assert np.array_equal(out[:-3, :-3, :], img[:-3, :-3, :])

    def test_idempotent(self):
        img = self._image(2)
        once = embed_geo_bars(img, (0.3, 0.6), bar_px=3)
        twice = embed_geo_bars(once, (0.3, 0.6), bar_px=3)
        assert np.array_equal(once, twice)

    def test_bar_too_thick_rejected(self):
        with pytest.raises(ConfigError):
            embed_geo_bars(self._image(), (0.5, 0.5), bar_px=4)  # 16/4 = 4
        with pytest.raises(ConfigError):
            embed_geo_bars(self._image(), (0.5, 0.5), bar_px=0)

    def test_eight_bit_export_values(self, tmp_path):
        img = np.zeros((16, 16, 3))
        out = embed_geo_bars(img, (0.5, 1.0), bar_px=3)
        png = tmp_path / "bars.png"
        save_image(png, out)
        pixels = np.asarray(Image.open(png))
        assert pixels[15, 0, 0] == 128  # u=0.5 rounds half up
        assert pixels[0, 15, 0] == 255  # v=1.0 at full intensity
        assert pixels[0, 0, 0] == 0

    def test_zero_export_value(self, tmp_path):
        out = embed_geo_bars(np.full((16, 16, 3), 0.7), (0.0, 0.0), bar_px=3)
        png = tmp_path / "zero.png"
        save_image(png, out)
        pixels = np.asarray(Image.open(png))
        assert pixels[15, 0, 0] == 0 and pixels[0, 15, 0] == 0


class TestConcatGeoHead:
    def test_length_and_tail(self):
        out = concat_geo_head(Tensor(np.ones(4)), (0.25, 0.75))
        assert out.data.shape == (6,)
        assert np.array_equal(out.data[4:], [0.25, 0.75])

    def test_zero_coords_append_zeros(self):
        out = concat_geo_head(Tensor(np.arange(4.0)), (0.0, 0.0))
        assert np.array_equal(out.data, [0.0, 1.0, 2.0, 3.0, 0.0, 0.0])

    def test_rejects_bad_shapes(self):
        with pytest.raises(ShapeError):
            concat_geo_head(Tensor(np.ones((2, 2))), (0.0, 0.0))
        with pytest.raises(ShapeError):
            concat_geo_head(Tensor(np.ones(4)), Tensor(np.ones(3)))

    def test_gradient_flows_to_both_pathways(self):
        rng = np.random.default_rng(0)
        d = 4
        w = rng.normal(size=(d + 2, 3))
        cls_val = rng.normal(size=d)
        uv_val = np.array([0.3, 0.8])
        cls = Tensor(cls_val.copy(), requires_grad=True)
        uv = Tensor(uv_val.copy(), requires_grad=True)
        with Tape() as tape:
            ext = concat_geo_head(cls, uv)
            logits = T.matmul(T.reshape(ext, (1, d + 2)), Tensor(w))
            loss = T.cross_entropy(T.reshape(logits, (3,)), 1)
        backward(tape, loss)
        assert cls.grad is not None and uv.grad is not None

        def loss_at(c_arr, u_arr):
            ext = np.concatenate([c_arr, u_arr])
            z = ext @ w
            e = np.exp(z - z.max())
            return float(-np.log(e[1] / e.sum()))

        h = 1e-5
        for vec, grad, other in ((cls_val, cls.grad, uv_val),
                                 (uv_val, uv.grad, cls_val)):
            fd = np.zeros_like(vec)
            for i in range(vec.size):
                bump = vec.copy()
                bump[i] += h
                args = (bump, other) if vec is cls_val else (other, bump)
                fp = loss_at(*args)
                bump[i] -= 2 * h
                fm = loss_at(*args)
                fd[i] = (fp - fm) / (2 * h)
            assert rel_err(grad, fd) < 1e-4
