"""Training loop, model selection, and evaluation harness.

The pipeline per sample is: decode to [0,1] floats, bilinear-resize to the
configured input size, augment (training pass only), paint geo bars when that
mode is on, then standardize with train-split channel stats. The transformer
consumes images one at a time on its own gradient tape; per-sample backward
passes are seeded with 1/batch_size so parameter gradients accumulate to the
batch mean. Logistic regression shares the same pipeline on flattened pixels.

Model selection keeps the epoch with the lowest validation loss (ties go to
the earlier epoch). Everything needed to re-run evaluation (parameters,
channel stats, geo normalizer bounds, history) is stored in one checkpoint.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import tensor as T
from .augment import apply_policy, policy_preset
from .baseline import LrParams, lr_forward, lr_gradient
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (CLASSES, ChannelStats, ManifestRecord, channel_stats,
                   load_image, normalize, resize, scan)
from .errors import (ConfigError, ContractError, DataError, FormatError,
                     IterationError, NumericError)
from .geo import GeoNormalizer, embed_geo_bars, fit_normalizer, normalize_coord
from .metrics import (build_report, confusion, confusion_to_csv,
                      logits_to_probs, report_to_text)
from .optim import adamw_init, adamw_step, collect_grads, sgd_step
from .rng import SeededRng, sample_rng
from .tensor import Tape, Tensor, backward, zero_grad
from .vit import VitConfig, forward, init_vit_params

log = logging.getLogger(__name__)

MODELS = ("vit", "lr")
OPTIMIZERS = ("adamw", "sgd")
GEO_MODES = ("none", "bars", "head_concat")
AUGMENT_PRESETS = ("none", "flips", "augmented")

# checkpoint block names that are not model parameters
RESERVED_BLOCKS = ("history", "stats.mean", "stats.std", "geo.bounds")

HISTORY_HEADER = "epoch,train_loss,val_loss,val_acc"


@dataclass(frozen=True)
class TrainConfig:
    model: str = "vit"
    image_size: int = 32
    patch_size: int = 8
    embed_dim: int = 32
    num_heads: int = 2
    depth: int = 2
    mlp_ratio: float = 4.0
    augment: str = "none"
    geo_mode: str = "none"
    geo_bar_px: int = 0  # 0 picks image_size // 14 (16 at the 224 default)
    batch_size: int = 32
    learning_rate: float = 5e-5
    epochs: int = 150
    optimizer: str = "adamw"
    weight_decay: float = 0.0
    seed: int = 0
    root: str = ""
    out: str = ""

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model: {self.model!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer: {self.optimizer!r}")
        if self.geo_mode not in GEO_MODES:
            raise ConfigError(f"unknown geo mode: {self.geo_mode!r}")
        if self.augment not in AUGMENT_PRESETS:
            raise ConfigError(f"unknown augment preset: {self.augment!r}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, "
                              f"got {self.learning_rate}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.geo_bar_px < 0:
            raise ConfigError(f"geo_bar_px must be >= 0, got {self.geo_bar_px}")
        if self.model == "vit":
            self.vit_config()  # validates size/patch/head relationships

    def vit_config(self) -> VitConfig:
        extra = 2 if self.geo_mode == "head_concat" else 0
        return VitConfig(image_size=self.image_size, patch_size=self.patch_size,
                         embed_dim=self.embed_dim, num_heads=self.num_heads,
                         depth=self.depth, mlp_ratio=self.mlp_ratio,
                         num_classes=len(CLASSES), head_extra=extra)

    def bar_px(self) -> int:
        return self.geo_bar_px if self.geo_bar_px > 0 else max(1, self.image_size // 14)


_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}


def config_to_pairs(config: TrainConfig) -> Dict[str, str]:
    pairs = {}
    for name in sorted(_FIELDS):
        value = getattr(config, name)
        pairs[name] = f"{value:.17g}" if isinstance(value, float) else str(value)
    return pairs


def config_to_text(config: TrainConfig) -> str:
    return "".join(f"{k}={v}\n" for k, v in config_to_pairs(config).items())


def config_from_pairs(pairs: Dict[str, str],
                      base: Optional[TrainConfig] = None) -> TrainConfig:
    """Build a config from string key=value pairs over ``base`` (or defaults)."""
    values = dataclasses.asdict(base) if base is not None else {}
    for key, raw in pairs.items():
        if key not in _FIELDS:
            raise FormatError(f"unknown config key: {key!r}")
        kind = _FIELDS[key].type
        try:
            if kind == "int":
                values[key] = int(raw)
            elif kind == "float":
                values[key] = float(raw)
            else:
                values[key] = raw
        except ValueError as exc:
            raise FormatError(f"bad value for {key!r}: {raw!r}") from exc
    return TrainConfig(**values)


def config_from_text(text: str, base: Optional[TrainConfig] = None) -> TrainConfig:
    pairs: Dict[str, str] = {}
    for idx, line in enumerate(text.splitlines()):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"line {idx + 1}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return config_from_pairs(pairs, base)


@dataclass
class TrainResult:
    config: TrainConfig
    best_epoch: int
    history: np.ndarray  # (epochs, 4): epoch, train_loss, val_loss, val_acc
    checkpoint_path: str
    history_path: str


class _Pipeline:
    """Shared sample preparation for training and evaluation."""

    def __init__(self, config: TrainConfig, stats: ChannelStats,
                 normalizer: Optional[GeoNormalizer]):
        self.config = config
        self.stats = stats
        self.normalizer = normalizer
        self.policy = policy_preset(config.augment)
        self._cache: Dict[str, np.ndarray] = {}

    def base_image(self, record: ManifestRecord) -> np.ndarray:
        cached = self._cache.get(record.rel_path)
        if cached is None:
            cached = resize(load_image(record.path), self.config.image_size)
            self._cache[record.rel_path] = cached
        return cached

    def uv(self, record: ManifestRecord) -> Optional[Tuple[float, float]]:
        if self.normalizer is None:
            return None
        return normalize_coord(record.coord, self.normalizer)

    def prepare(self, record: ManifestRecord, augment_rng=None):
        """Returns (model-ready image, head-extra uv or None)."""
        img = self.base_image(record)
        if augment_rng is not None and self.config.augment != "none":
            img = apply_policy(img, self.policy, augment_rng)
        uv = self.uv(record)
        if self.config.geo_mode == "bars":
            img = embed_geo_bars(img, uv, self.config.bar_px())
        img = normalize(img, self.stats)
        extra = uv if self.config.geo_mode == "head_concat" else None
        return img, extra


def _require_coords(records: List[ManifestRecord], geo_mode: str) -> None:
    if geo_mode == "none":
        return
    missing = [r.rel_path for r in records if r.coord is None]
    if missing:
        raise DataError(f"geo mode '{geo_mode}' needs coordinates; missing for: "
                        + ", ".join(sorted(missing)))


def _lr_features(pipe: _Pipeline, record: ManifestRecord, augment_rng=None):
    img, extra = pipe.prepare(record, augment_rng)
    vec = img.reshape(-1)
    if extra is not None:
        vec = np.concatenate([vec, np.asarray(extra, dtype=np.float64)])
    return vec


def _row_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    return lse - z[np.arange(labels.size), labels]


class _Model:
    """Uniform step/score interface over the transformer and the baseline."""

    def __init__(self, config: TrainConfig):
        self.config = config
        if config.model == "vit":
            self.vit_config = config.vit_config()
            self.vit_params = init_vit_params(self.vit_config, config.seed)
            self.named = self.vit_params.named()
        else:
            n_feat = config.image_size * config.image_size * 3
            if config.geo_mode == "head_concat":
                n_feat += 2
            self.named = {
                "lr.weight": Tensor(np.zeros((n_feat, len(CLASSES)))),
                "lr.bias": Tensor(np.zeros(len(CLASSES))),
            }

    def _lr_params(self) -> LrParams:
        return LrParams(W=self.named["lr.weight"].data,
                        b=self.named["lr.bias"].data)

    def batch_grads(self, pipe: _Pipeline, records, labels, rngs) -> float:
        """Accumulate mean-gradient over the batch; returns summed sample loss."""
        if self.config.model == "vit":
            zero_grad(self.named.values())
            total = 0.0
            for record, label, rng in zip(records, labels, rngs):
                img, extra = pipe.prepare(record, rng)
                with Tape() as tape:
                    logits = forward(img, self.vit_config, self.vit_params, extra)
                    loss = T.cross_entropy(logits, label)
                backward(tape, loss, seed=1.0 / len(records))
                total += loss.item()
            return total
        feats = np.stack([_lr_features(pipe, r, g) for r, g in zip(records, rngs)])
        labels = np.asarray(labels, dtype=np.int64)
        gw, gb = lr_gradient(feats, labels, self._lr_params())
        self.grads = {"lr.weight": gw, "lr.bias": gb}
        logits = lr_forward(feats, self._lr_params())
        return float(_row_cross_entropy(logits, labels).sum())

    def step(self, opt_state, lr: float, weight_decay: float) -> None:
        grads = (collect_grads(self.named) if self.config.model == "vit"
                 else self.grads)
        if self.config.optimizer == "adamw":
            adamw_step(self.named, grads, opt_state, lr,
                       weight_decay=weight_decay)
        else:
            sgd_step(self.named, grads, lr)

    def scores(self, pipe: _Pipeline, records) -> np.ndarray:
        """Logits for a list of records, no augmentation."""
        if self.config.model == "vit":
            out = np.zeros((len(records), len(CLASSES)))
            for i, record in enumerate(records):
                img, extra = pipe.prepare(record)
                out[i] = forward(img, self.vit_config, self.vit_params, extra).data
            return out
        feats = np.stack([_lr_features(pipe, r) for r in records])
        return lr_forward(feats, self._lr_params())

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named.items()}

    def restore(self, blocks: Dict[str, np.ndarray]) -> None:
        for name, t in self.named.items():
            t.data = blocks[name].copy()


def train(config: TrainConfig) -> TrainResult:
    """Full run: returns the minimum-validation-loss checkpoint and history."""
    manifest = scan(config.root)
    train_records = manifest.split_records("train")
    val_records = manifest.split_records("validation")
    if not train_records:
        raise DataError(f"no training images under {config.root}")
    if not val_records and config.epochs > 0:
        raise DataError(f"no validation images under {config.root}")
    _require_coords(train_records + val_records, config.geo_mode)

    stats = channel_stats(manifest, "train")
    normalizer = None
    if config.geo_mode != "none":
        normalizer = fit_normalizer([r.coord for r in train_records])
    pipe = _Pipeline(config, stats, normalizer)
    model = _Model(config)
    opt_state = adamw_init(model.named) if config.optimizer == "adamw" else None

    n = len(train_records)
    labels = np.array([r.label for r in train_records], dtype=np.int64)
    val_labels = np.array([r.label for r in val_records], dtype=np.int64)

    best_epoch = -1
    best_val = np.inf
    best_blocks = model.snapshot()
    history: List[Tuple[int, float, float, float]] = []

    for epoch in range(config.epochs):
        order = SeededRng(config.seed, epoch).permutation(n)
        loss_sum = 0.0
        for step, lo in enumerate(range(0, n, config.batch_size)):
            idx = order[lo:lo + config.batch_size]
            records = [train_records[i] for i in idx]
            rngs = [sample_rng(config.seed, epoch * n + int(i)) for i in idx]
            try:
                batch_loss = model.batch_grads(pipe, records, labels[idx], rngs)
            except NumericError as exc:
                raise IterationError(f"non-finite training loss at epoch "
                                     f"{epoch}, step {step}") from exc
            if not np.isfinite(batch_loss):
                raise IterationError(f"non-finite training loss at epoch "
                                     f"{epoch}, step {step}")
            model.step(opt_state, config.learning_rate, config.weight_decay)
            loss_sum += batch_loss
        train_loss = loss_sum / n

        val_scores = model.scores(pipe, val_records)
        val_loss = float(_row_cross_entropy(val_scores, val_labels).mean())
        if not np.isfinite(val_loss):
            raise IterationError(f"non-finite validation loss at epoch {epoch}")
        val_acc = float((np.argmax(val_scores, axis=1) == val_labels).mean())
        history.append((epoch, train_loss, val_loss, val_acc))
        log.info("epoch %d: train %.6f val %.6f acc %.4f",
                 epoch, train_loss, val_loss, val_acc)
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_blocks = model.snapshot()

    hist = np.array(history, dtype=np.float64).reshape(len(history), 4)
    os.makedirs(config.out or ".", exist_ok=True)
    checkpoint_path = os.path.join(config.out or ".", "checkpoint.bin")
    history_path = os.path.join(config.out or ".", "history.csv")

    blocks = dict(best_blocks)
    blocks["history"] = hist
    blocks["stats.mean"] = stats.mean.copy()
    blocks["stats.std"] = stats.std.copy()
    if normalizer is not None:
        blocks["geo.bounds"] = normalizer.as_array()
    header = config_to_pairs(config)
    header["checkpoint_epoch"] = str(best_epoch)
    save_checkpoint(checkpoint_path, header, blocks)

    with open(history_path, "w", encoding="utf-8") as fh:
        fh.write(HISTORY_HEADER + "\n")
        for epoch, tl, vl, va in history:
            fh.write(f"{epoch},{tl:.17g},{vl:.17g},{va:.17g}\n")

    return TrainResult(config=config, best_epoch=best_epoch, history=hist,
                       checkpoint_path=checkpoint_path,
                       history_path=history_path)


@dataclass
class LoadedCheckpoint:
    config: TrainConfig
    epoch: int
    params: Dict[str, np.ndarray]
    stats: ChannelStats
    normalizer: Optional[GeoNormalizer]
    history: np.ndarray


def open_checkpoint(path: str) -> LoadedCheckpoint:
    header, blocks = load_checkpoint(path)
    pairs = {k: v for k, v in header.items() if k in _FIELDS}
    config = config_from_pairs(pairs)
    missing = [k for k in ("stats.mean", "stats.std", "history")
               if k not in blocks]
    if missing:
        raise FormatError(f"checkpoint lacks blocks: {', '.join(missing)}")
    normalizer = None
    if config.geo_mode != "none":
        if "geo.bounds" not in blocks:
            raise FormatError("checkpoint lacks geo.bounds for its geo mode")
        normalizer = GeoNormalizer.from_array(blocks["geo.bounds"])
    params = {k: v for k, v in blocks.items() if k not in RESERVED_BLOCKS}
    stats = ChannelStats(mean=blocks["stats.mean"], std=blocks["stats.std"])
    return LoadedCheckpoint(config=config,
                            epoch=int(header.get("checkpoint_epoch", "-1")),
                            params=params, stats=stats, normalizer=normalizer,
                            history=blocks["history"].reshape(-1, 4))


def _rebuild(loaded: LoadedCheckpoint) -> _Model:
    model = _Model(loaded.config)
    for name in model.named:
        if name not in loaded.params:
            raise FormatError(f"checkpoint lacks parameter block: {name}")
    model.restore(loaded.params)
    return model


PROBS_HEADER_PREFIX = "path,label,pred"


def probs_table_to_csv(paths: List[str], labels: np.ndarray,
                       probs: np.ndarray) -> str:
    names = ",".join(f"prob_{c}" for c in CLASSES)
    lines = [f"{PROBS_HEADER_PREFIX},{names}"]
    preds = np.argmax(probs, axis=1)
    for path, label, pred, row in zip(paths, labels, preds, probs):
        cells = ",".join(f"{p:.17g}" for p in row)
        lines.append(f"{path},{int(label)},{int(pred)},{cells}")
    return "\n".join(lines) + "\n"


def probs_table_from_csv(text: str):
    rows = list(csv.reader(text.strip().splitlines()))
    if not rows or not rows[0] or rows[0][:3] != ["path", "label", "pred"]:
        raise FormatError("bad probability table header")
    paths = [r[0] for r in rows[1:]]
    labels = np.array([int(r[1]) for r in rows[1:]], dtype=np.int64)
    probs = np.array([[float(x) for x in r[3:]] for r in rows[1:]])
    return paths, labels, probs


def evaluate(checkpoint_path: str, split: str, root: Optional[str] = None,
             out_dir: Optional[str] = None):
    """Single deterministic pass over a split.

    Returns (EvalReport, ConfusionMatrix, (paths, labels, probs)). When
    ``out_dir`` is given, writes report.txt, confusion.csv, probabilities.csv.
    """
    loaded = open_checkpoint(checkpoint_path)
    config = loaded.config
    manifest = scan(root if root is not None else config.root)
    records = manifest.split_records(split)
    if not records:
        raise ContractError(f"split {split!r} has no records")
    _require_coords(records, config.geo_mode)

    pipe = _Pipeline(config, loaded.stats, loaded.normalizer)
    model = _rebuild(loaded)
    scores = model.scores(pipe, records)
    labels = np.array([r.label for r in records], dtype=np.int64)
    probs = logits_to_probs(scores)
    report = build_report(probs, labels, CLASSES)
    cm = confusion(np.argmax(probs, axis=1), labels, len(CLASSES))
    paths = [r.rel_path for r in records]

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
            fh.write(report_to_text(report))
        with open(os.path.join(out_dir, "confusion.csv"), "w", encoding="utf-8") as fh:
            fh.write(confusion_to_csv(cm, CLASSES))
        with open(os.path.join(out_dir, "probabilities.csv"), "w",
                  encoding="utf-8") as fh:
            fh.write(probs_table_to_csv(paths, labels, probs))
    return report, cm, (paths, labels, probs)
