"""Latitude/longitude as model inputs.

Two mechanisms: painting normalized-coordinate intensity bars into the image
(bottom bar = longitude, right bar = latitude) and appending the normalized
pair to the class-token embedding ahead of the classification head.

Normalization bounds always come from the training split, never validation or
test, so no information leaks across splits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

from . import tensor as T
from .errors import ConfigError, DataError, ShapeError
from .tensor import Tensor


@dataclass(frozen=True)
class GeoCoordinate:
    """A point on the globe in degrees."""

    latitude: float
    longitude: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise DataError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise DataError(f"longitude {self.longitude} outside [-180, 180]")


@dataclass(frozen=True)
class GeoNormalizer:
    """Axis-aligned bounding box of the training-split coordinates."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise ConfigError(
                f"degenerate normalizer: lat [{self.lat_min}, {self.lat_max}], "
                f"lon [{self.lon_min}, {self.lon_max}]")

    def as_array(self) -> np.ndarray:
        return np.array([self.lat_min, self.lat_max, self.lon_min, self.lon_max])

    @classmethod
    def from_array(cls, a) -> "GeoNormalizer":
        a = np.asarray(a, dtype=np.float64).reshape(-1)
        if a.shape != (4,):
            raise ShapeError(f"normalizer array must have 4 entries, got {a.shape}")
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


def fit_normalizer(coords: Iterable[GeoCoordinate]) -> GeoNormalizer:
    """Bounding box over the given (training) coordinates."""
    coords = list(coords)
    if not coords:
        raise ConfigError("cannot fit a geo normalizer on zero coordinates")
    lats = [c.latitude for c in coords]
    lons = [c.longitude for c in coords]
    return GeoNormalizer(min(lats), max(lats), min(lons), max(lons))


def normalize_coord(c: GeoCoordinate, n: GeoNormalizer) -> Tuple[float, float]:
    """(u, v) in [0,1]^2: u from longitude, v from latitude; out-of-bounds
    coordinates clamp to the box edge."""
    u = (c.longitude - n.lon_min) / (n.lon_max - n.lon_min)
    v = (c.latitude - n.lat_min) / (n.lat_max - n.lat_min)
    return (min(max(u, 0.0), 1.0), min(max(v, 0.0), 1.0))


def embed_geo_bars(image: np.ndarray, uv: Sequence[float], bar_px: int) -> np.ndarray:
    """Paint the bottom bar_px rows at gray level u and the rightmost bar_px
    columns at gray level v (the vertical bar owns the shared corner square).
    The satellite content stays untouched in the top-left region."""
    img = np.array(image, dtype=np.float64, copy=True)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"expected HxWx3 image, got shape {img.shape}")
    h, w = img.shape[:2]
    if bar_px <= 0:
        raise ConfigError("bar_px must be positive")
    if bar_px >= min(h, w) / 4:
        raise ConfigError(f"bar_px {bar_px} too thick for image side {min(h, w)} "
                          f"(must be < side/4)")
    u, v = float(uv[0]), float(uv[1])
    img[h - bar_px:, :w - bar_px, :] = u
    img[:, w - bar_px:, :] = v
    return img


def concat_geo_head(cls_embedding: Union[Tensor, np.ndarray],
                    uv: Union[Tensor, Sequence[float]]) -> Tensor:
    """Append (u, v) to the class-token embedding: length D -> D+2.

    Passing uv as a Tensor keeps the geo pathway differentiable too.
    """
    emb = cls_embedding if isinstance(cls_embedding, Tensor) else Tensor(cls_embedding)
    if emb.data.ndim != 1:
        raise ShapeError(f"expected a 1-D embedding, got shape {emb.data.shape}")
    if isinstance(uv, Tensor):
        extra = uv
        if extra.data.shape != (2,):
            raise ShapeError(f"expected 2 coordinates, got shape {extra.data.shape}")
    else:
        extra = Tensor(np.array([float(uv[0]), float(uv[1])]))
    return T.concat([emb, extra], axis=0)
