"""Synthetic 4-class fixture dataset for end-to-end runs.

Each 32x32 image is filled with a periodic binary texture (period 4, exactly
half the pixels on, so mean intensity never identifies the class):

    grassland_shrubland      horizontal stripes
    other                    vertical stripes
    plantation               checkerboard of 2x2 cells
    smallholder_agriculture  diagonal stripes

Variants:
    fixed   texture phase fixed at (0, 0), class-specific colors; the class
            is readable from any single pixel's color
    moving  texture phase drawn at random and one shared color for every
            class, which zeroes out the per-pixel expected intensity
            differences a linear model needs; only the local pattern
            arrangement identifies the class

Every image draws from its own counter-based stream (seed xor global index),
so regenerating with the same seed reproduces files byte for byte. Draw order
per image: noise field, then texture phase (moving only), then the two
coordinate jitters. Coordinates in metadata.csv are clustered per class.
"""

from __future__ import annotations

import csv
import os
from typing import Dict, Tuple

import numpy as np

from .data import CLASSES, METADATA_NAME, SPLITS, save_image
from .errors import ConfigError
from .rng import sample_rng

VARIANTS = ("fixed", "moving")
IMAGE_SIZE = 32
PERIOD = 4

FIXED_COLORS = (
    (0.85, 0.15, 0.15),
    (0.15, 0.85, 0.15),
    (0.20, 0.30, 0.95),
    (0.90, 0.85, 0.10),
)
MOVING_COLOR = (0.92, 0.92, 0.92)
BACKGROUND = 0.10
NOISE_STD = 0.02


def class_mask(label: int, size: int = IMAGE_SIZE, phase: Tuple[int, int] = (0, 0)):
    """Boolean texture covering exactly half the pixels at any phase."""
    rows, cols = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    rows = (rows + phase[0]) % PERIOD
    cols = (cols + phase[1]) % PERIOD
    if label == 0:
        return rows < 2
    if label == 1:
        return cols < 2
    if label == 2:
        return ((rows // 2) + (cols // 2)) % 2 == 0
    if label == 3:
        return (rows + cols) % PERIOD < 2
    raise ConfigError(f"label out of range: {label}")


def render(label: int, variant: str, rng) -> np.ndarray:
    noise = rng.normal(0.0, NOISE_STD, size=(IMAGE_SIZE, IMAGE_SIZE, 3))
    if variant == "fixed":
        phase = (0, 0)
        color = FIXED_COLORS[label]
    else:
        phase = (rng.integers(0, PERIOD), rng.integers(0, PERIOD))
        color = MOVING_COLOR
    img = np.full((IMAGE_SIZE, IMAGE_SIZE, 3), BACKGROUND)
    img[class_mask(label, IMAGE_SIZE, phase)] = np.asarray(color)
    return np.clip(img + noise, 0.0, 1.0)


def class_coordinate(label: int, rng) -> Tuple[float, float]:
    lat = -6.0 + 3.0 * label + rng.uniform(-1.0, 1.0)
    lon = 105.0 + 4.0 * label + rng.uniform(-1.0, 1.0)
    return lat, lon


def make_toy(root, variant: str = "fixed", seed: int = 0,
             counts: Tuple[int, int, int] = (60, 20, 20)) -> Dict[str, int]:
    """Write the dataset tree under ``root``; returns images per split."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant: {variant!r}")
    if len(counts) != len(SPLITS) or any(c < 0 for c in counts):
        raise ConfigError(f"counts must be three non-negative ints, got {counts}")
    root = os.fspath(root)
    rows = []
    totals = {}
    index = 0
    for split, count in zip(SPLITS, counts):
        totals[split] = count * len(CLASSES)
        for label, cls in enumerate(CLASSES):
            folder = os.path.join(root, split, cls)
            os.makedirs(folder, exist_ok=True)
            for i in range(count):
                rng = sample_rng(seed, index)
                index += 1
                img = render(label, variant, rng)
                name = f"img_{i:04d}.png"
                save_image(os.path.join(folder, name), img)
                lat, lon = class_coordinate(label, rng)
                rows.append((f"{split}/{cls}/{name}", lat, lon))
    with open(os.path.join(root, METADATA_NAME), "w", encoding="utf-8",
              newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "latitude", "longitude"])
        for path, lat, lon in rows:
            writer.writerow([path, f"{lat:.10g}", f"{lon:.10g}"])
    return totals
