"""Dataset ingestion: directory scanning, metadata parsing, channel statistics,
normalization, PNG IO, and bilinear resizing.

Expected layout:

    root/<split>/<class_name>/<image>.png
    root/metadata.csv            (optional; header: path,latitude,longitude)

Splits are train/validation/test; the four class names map to indices in
alphabetical order. Metadata paths are POSIX-style and relative to root.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, DataError, FormatError
from .geo import GeoCoordinate

CLASSES = ("grassland_shrubland", "other", "plantation", "smallholder_agriculture")
SPLITS = ("train", "validation", "test")
METADATA_NAME = "metadata.csv"


def class_index(name: str) -> int:
    try:
        return CLASSES.index(name)
    except ValueError:
        raise DataError(f"unknown class directory {name!r}; expected one of {CLASSES}")


@dataclass(frozen=True)
class ManifestRecord:
    split: str
    label: int
    class_name: str
    path: Path  # absolute
    rel_path: str  # POSIX, relative to root (metadata join key)
    coord: Optional[GeoCoordinate] = None


@dataclass
class DatasetManifest:
    root: Path
    records: List[ManifestRecord] = field(default_factory=list)
    classes: tuple = CLASSES

    def __len__(self) -> int:
        return len(self.records)

    def split_records(self, split: str) -> List[ManifestRecord]:
        if split not in SPLITS:
            raise ConfigError(f"unknown split {split!r}; expected one of {SPLITS}")
        return [r for r in self.records if r.split == split]


def _read_metadata(path: Path) -> Dict[str, GeoCoordinate]:
    coords = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: metadata file is empty (header required)")
        if [h.strip() for h in header] != ["path", "latitude", "longitude"]:
            raise FormatError(f"{path}: expected header path,latitude,longitude, "
                              f"got {','.join(header)}")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            rel, lat_s, lon_s = row
            try:
                lat, lon = float(lat_s), float(lon_s)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric coordinate")
            coords[rel.strip()] = GeoCoordinate(lat, lon)
    return coords


def scan(root) -> DatasetManifest:
    """Walk the split/class tree into a manifest sorted by
    (split, class, filename), byte order. Coordinates are joined from
    metadata.csv when present; records without a row stay geo-less."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    meta_path = root / METADATA_NAME
    coords = _read_metadata(meta_path) if meta_path.is_file() else {}
    records = []
    for split_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        if split_dir.name not in SPLITS:
            raise DataError(f"unexpected directory {split_dir.name!r} in dataset "
                            f"root; expected split names {SPLITS}")
        for class_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
            label = class_index(class_dir.name)
            for img in sorted(class_dir.iterdir()):
                if not img.is_file() or img.suffix.lower() != ".png":
                    continue
                rel = img.relative_to(root).as_posix()
                records.append(ManifestRecord(
                    split=split_dir.name, label=label, class_name=class_dir.name,
                    path=img, rel_path=rel, coord=coords.get(rel)))
    records.sort(key=lambda r: (r.split, r.class_name, r.path.name))
    return DatasetManifest(root=root, records=records)


@dataclass
class ChannelStats:
    """Per-channel mean and population standard deviation (training split)."""

    mean: np.ndarray
    std: np.ndarray


def channel_stats(manifest: DatasetManifest, split: str = "train") -> ChannelStats:
    """Mean/std per channel over every pixel of every image in the split,
    accumulated in 64-bit; std uses the population (1/n) denominator."""
    recs = manifest.split_records(split)
    if not recs:
        raise DataError(f"split {split!r} is empty; cannot compute channel stats")
    total = np.zeros(3)
    total_sq = np.zeros(3)
    count = 0
    for rec in recs:
        img = load_image(rec.path)
        flat = img.reshape(-1, 3)
        total += flat.sum(axis=0)
        total_sq += (flat * flat).sum(axis=0)
        count += flat.shape[0]
    mean = total / count
    var = total_sq / count - mean * mean
    return ChannelStats(mean=mean, std=np.sqrt(np.maximum(var, 0.0)))


def normalize(image: np.ndarray, stats: ChannelStats) -> np.ndarray:
    """Per channel (x - mean) / max(std, 1e-6)."""
    img = np.asarray(image, dtype=np.float64)
    return (img - stats.mean) / np.maximum(stats.std, 1e-6)


def load_image(path) -> np.ndarray:
    """Decode a PNG to HxWx3 reals in [0,1]; alpha is discarded."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float64) / 255.0
    except FileNotFoundError:
        raise DataError(f"image file missing: {path}")
    except (UnidentifiedImageError, OSError) as exc:
        raise FormatError(f"cannot decode {path}: {exc}")
    if arr.shape[0] != arr.shape[1]:
        warnings.warn(f"{path}: non-square image {arr.shape[0]}x{arr.shape[1]}; "
                      f"resize will handle it")
    return arr


def save_image(path, image: np.ndarray) -> None:
    """Write [0,1] reals as an 8-bit RGB PNG; quantization is round-half-up."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ConfigError(f"expected HxWx3 image, got shape {img.shape}")
    q = np.clip(np.floor(img * 255.0 + 0.5), 0.0, 255.0).astype(np.uint8)
    Image.fromarray(q, mode="RGB").save(Path(path), format="PNG")


def resize(image: np.ndarray, target: int) -> np.ndarray:
    """Bilinear resize to target x target with half-pixel-centered sampling
    (source position of output i is (i+0.5)*scale - 0.5) and edge clamping."""
    if target < 2:
        raise ConfigError("resize target must be at least 2")
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    if h == target and w == target:
        return img.copy()

    def axis_coords(n_src, n_dst):
        pos = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
        lo = np.floor(pos).astype(np.int64)
        frac = pos - lo
        lo0 = np.clip(lo, 0, n_src - 1)
        lo1 = np.clip(lo + 1, 0, n_src - 1)
        return lo0, lo1, frac

    y0, y1, fy = axis_coords(h, target)
    x0, x1, fx = axis_coords(w, target)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    p00 = img[np.ix_(y0, x0)]
    p01 = img[np.ix_(y0, x1)]
    p10 = img[np.ix_(y1, x0)]
    p11 = img[np.ix_(y1, x1)]
    top = p00 * (1.0 - fx) + p01 * fx
    bot = p10 * (1.0 - fx) + p11 * fx
    return top * (1.0 - fy) + bot * fy


def validate_splits(manifest: DatasetManifest, expected_totals=None) -> dict:
    """Per-split / per-class counts. When expected_totals (train, validation,
    test) is given, mismatching totals raise a data error."""
    report = {split: {name: 0 for name in manifest.classes} for split in SPLITS}
    for rec in manifest.records:
        report[rec.split][rec.class_name] += 1
    totals = {split: sum(report[split].values()) for split in SPLITS}
    out = {"per_split": report, "totals": totals, "total": sum(totals.values())}
    if expected_totals is not None:
        want = tuple(expected_totals)
        got = (totals["train"], totals["validation"], totals["test"])
        if got != want:
            raise DataError(f"split totals {got} do not match expected {want}")
    return out


_STATS_KEYS = ("mean_r", "mean_g", "mean_b", "std_r", "std_g", "std_b")


def stats_to_text(stats: ChannelStats) -> str:
    """key=value lines with 17 significant digits (lossless for 64-bit)."""
    values = list(stats.mean) + list(stats.std)
    return "".join(f"{k}={v:.17g}\n" for k, v in zip(_STATS_KEYS, values))


def stats_from_text(text: str) -> ChannelStats:
    kv = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"stats line {lineno} is not key=value: {line!r}")
        key, _, value = line.partition("=")
        try:
            kv[key.strip()] = float(value)
        except ValueError:
            raise FormatError(f"stats key {key!r} has non-numeric value")
    missing = [k for k in _STATS_KEYS if k not in kv]
    if missing:
        raise FormatError(f"stats file missing keys {missing}")
    return ChannelStats(mean=np.array([kv["mean_r"], kv["mean_g"], kv["mean_b"]]),
                        std=np.array([kv["std_r"], kv["std_g"], kv["std_b"]]))


def save_stats(path, stats: ChannelStats) -> None:
    Path(path).write_text(stats_to_text(stats), encoding="utf-8")


def load_stats(path) -> ChannelStats:
    return stats_from_text(Path(path).read_text(encoding="utf-8"))
