"""Seeded on-the-fly image augmentation.

Images are HxWx3 float arrays in [0, 1]. Every randomized transform takes an
explicit rng so that (image, policy, seed) fully determines the output. The
rng is counter-based (Philox), so streams are identical across platforms.

apply_policy draw order (documented so streams are reproducible):
  1. horizontal-flip gate
  2. vertical-flip gate
  3. rot90 gate, then k uniform in {1,2,3} if the gate passed
  4. grayscale gate
  5. three jitter factors (brightness, contrast, saturation), always drawn
  6. perspective gate, then 8 corner offsets if the gate passed
     (corners TL, TR, BR, BL; dx before dy; degenerate draws are retried)
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, FormatError, IterationError
from .rng import SeededRng, sample_rng

__all__ = ["AugmentPolicy", "SeededRng", "sample_rng", "apply_policy",
           "augmented_policy", "color_jitter", "flips_policy", "grayscale",
           "hflip", "perspective", "policy_from_text", "policy_preset",
           "policy_to_text", "rot90", "solve_homography", "vflip"]

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class AugmentPolicy:
    """Per-transform probabilities and magnitudes; all fields serialize 1:1."""

    p_hflip: float = 0.0
    p_vflip: float = 0.0
    p_rot90: float = 0.0
    p_gray: float = 0.0
    brightness: float = 0.0
    contrast: float = 0.0
    saturation: float = 0.0
    p_perspective: float = 0.0
    perspective_scale: float = 0.0

    def __post_init__(self):
        for name in ("p_hflip", "p_vflip", "p_rot90", "p_gray", "p_perspective"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0,1], got {v}")
        for name in ("brightness", "contrast", "saturation"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be non-negative")
        if not 0.0 <= self.perspective_scale < 1.0:
            raise ConfigError("perspective_scale must be in [0,1)")


def flips_policy() -> AugmentPolicy:
    """Horizontal and vertical flips only, each with probability 1/2."""
    return AugmentPolicy(p_hflip=0.5, p_vflip=0.5)


def augmented_policy() -> AugmentPolicy:
    """Flips plus 90-degree rotations, rare grayscale, color jitter, perspective."""
    return AugmentPolicy(p_hflip=0.5, p_vflip=0.5, p_rot90=0.5, p_gray=0.03,
                         brightness=0.2, contrast=0.2, saturation=0.2,
                         p_perspective=0.2, perspective_scale=0.2)


_PRESETS = {
    "none": AugmentPolicy,
    "flips": flips_policy,
    "augmented": augmented_policy,
}


def policy_preset(name: str) -> AugmentPolicy:
    if name not in _PRESETS:
        raise ConfigError(f"unknown augmentation preset {name!r}; "
                          f"choose from {sorted(_PRESETS)}")
    return _PRESETS[name]()


def policy_to_text(policy: AugmentPolicy) -> str:
    """key=value lines, one per field, in field order."""
    return "".join(f"{f.name}={getattr(policy, f.name)!r}\n"
                   for f in fields(AugmentPolicy))


def policy_from_text(text: str) -> AugmentPolicy:
    names = {f.name for f in fields(AugmentPolicy)}
    kwargs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"policy line {lineno} is not key=value: {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in names:
            raise FormatError(f"unknown policy key {key!r}")
        try:
            kwargs[key] = float(value.strip())
        except ValueError as exc:
            raise FormatError(f"policy key {key!r} has non-numeric value") from exc
    return AugmentPolicy(**kwargs)


def hflip(image: np.ndarray) -> np.ndarray:
    """Mirror left-right."""
    return np.asarray(image)[:, ::-1, :].copy()


def vflip(image: np.ndarray) -> np.ndarray:
    """Mirror top-bottom."""
    return np.asarray(image)[::-1, :, :].copy()


def rot90(image: np.ndarray, k: int) -> np.ndarray:
    """Rotate a square image counterclockwise by k quarter turns."""
    img = np.asarray(image)
    if img.shape[0] != img.shape[1]:
        raise ConfigError(f"rot90 needs a square image, got {img.shape[:2]}")
    return np.rot90(img, k, axes=(0, 1)).copy()


def grayscale(image: np.ndarray) -> np.ndarray:
    """Replace all channels with luminance 0.299 R + 0.587 G + 0.114 B."""
    img = np.asarray(image, dtype=np.float64)
    luma = img @ _LUMA
    return np.repeat(luma[:, :, None], 3, axis=2)


def color_jitter(image: np.ndarray, brightness: float, contrast: float,
                 saturation: float, rng: SeededRng) -> np.ndarray:
    """Randomized brightness scale, contrast blend toward the image's mean
    luminance, and saturation blend toward per-pixel luminance.

    All three factors are drawn from U[1-delta, 1+delta] on every call (even
    when a delta is zero) so the rng stream does not depend on the deltas; a
    factor of exactly 1 leaves that stage untouched. Each stage clamps to [0,1].
    """
    img = np.asarray(image, dtype=np.float64)
    fb = float(rng.uniform(1.0 - brightness, 1.0 + brightness))
    fc = float(rng.uniform(1.0 - contrast, 1.0 + contrast))
    fs = float(rng.uniform(1.0 - saturation, 1.0 + saturation))
    if fb != 1.0:
        img = np.clip(img * fb, 0.0, 1.0)
    if fc != 1.0:
        mean = float((img @ _LUMA).mean())
        img = np.clip(mean + fc * (img - mean), 0.0, 1.0)
    if fs != 1.0:
        luma = (img @ _LUMA)[:, :, None]
        img = np.clip(luma + fs * (img - luma), 0.0, 1.0)
    return img


def solve_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """3x3 projective map sending each src corner to its dst corner.

    Solves the standard 8x8 linear system with the bottom-right entry fixed
    at 1. Raises numpy's LinAlgError when the configuration is singular.
    """
    a = np.zeros((8, 8))
    rhs = np.zeros(8)
    for i, ((x, y), (xx, yy)) in enumerate(zip(src, dst)):
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -xx * x, -xx * y]
        rhs[2 * i] = xx
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -yy * x, -yy * y]
        rhs[2 * i + 1] = yy
    h = np.linalg.solve(a, rhs)
    return np.array([[h[0], h[1], h[2]],
                     [h[3], h[4], h[5]],
                     [h[6], h[7], 1.0]])


def _bilinear_zero_pad(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample img at fractional (x=column, y=row) grids; outside pixels are 0."""
    h, w = img.shape[:2]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0

    def fetch(yy, xx):
        valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        out = np.zeros(yy.shape + (3,))
        out[valid] = img[yy[valid], xx[valid]]
        return out

    p00 = fetch(y0, x0)
    p01 = fetch(y0, x0 + 1)
    p10 = fetch(y0 + 1, x0)
    p11 = fetch(y0 + 1, x0 + 1)
    fx = fx[:, :, None]
    fy = fy[:, :, None]
    top = p00 * (1.0 - fx) + p01 * fx
    bot = p10 * (1.0 - fx) + p11 * fx
    return top * (1.0 - fy) + bot * fy


def perspective(image: np.ndarray, scale: float, rng: SeededRng) -> np.ndarray:
    """Warp by a random homography that displaces each corner by up to
    scale * image side. Inverse-warped with bilinear sampling; samples that
    fall outside the source are zero. Degenerate corner draws are retried.
    """
    if not 0.0 <= scale < 1.0:
        raise ConfigError("perspective scale must be in [0,1)")
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    src = np.array([[0.0, 0.0], [w - 1.0, 0.0], [w - 1.0, h - 1.0], [0.0, h - 1.0]])
    for _ in range(1000):
        dst = np.empty_like(src)
        for c in range(4):
            dx = float(rng.uniform(-scale * w, scale * w))
            dy = float(rng.uniform(-scale * h, scale * h))
            dst[c] = src[c] + (dx, dy)
        try:
            hom = solve_homography(src, dst)
        except np.linalg.LinAlgError:
            continue
        if abs(np.linalg.det(hom)) < 1e-10:
            continue
        inv = np.linalg.inv(hom)
        cols, rows = np.meshgrid(np.arange(w, dtype=np.float64),
                                 np.arange(h, dtype=np.float64))
        denom = inv[2, 0] * cols + inv[2, 1] * rows + inv[2, 2]
        xs = (inv[0, 0] * cols + inv[0, 1] * rows + inv[0, 2]) / denom
        ys = (inv[1, 0] * cols + inv[1, 1] * rows + inv[1, 2]) / denom
        return _bilinear_zero_pad(img, xs, ys)
    raise IterationError("perspective corner draws stayed degenerate")


def apply_policy(image: np.ndarray, policy: AugmentPolicy, rng: SeededRng) -> np.ndarray:
    """Apply each configured transform with its probability, in fixed order
    (see module docstring for the documented rng draw order)."""
    img = np.asarray(image, dtype=np.float64)
    if float(rng.uniform()) < policy.p_hflip:
        img = hflip(img)
    if float(rng.uniform()) < policy.p_vflip:
        img = vflip(img)
    if float(rng.uniform()) < policy.p_rot90:
        img = rot90(img, rng.integers(1, 4))
    if float(rng.uniform()) < policy.p_gray:
        img = grayscale(img)
    img = color_jitter(img, policy.brightness, policy.contrast,
                       policy.saturation, rng)
    if float(rng.uniform()) < policy.p_perspective:
        img = perspective(img, policy.perspective_scale, rng)
    return img
