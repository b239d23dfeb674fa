"""Vision-transformer classifier built on the tensor core.

Pipeline: square image -> non-overlapping patch vectors -> linear embedding
with a prepended class token and additive positional embeddings -> a stack of
pre-norm encoder blocks (self-attention, then GeLU MLP, residuals around both)
-> final LayerNorm -> linear head on the class token -> raw logits.

All functions are pure given (config, params); gradients flow through the
parameters whenever a Tape is active.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor


@dataclass(frozen=True)
class VitConfig:
    """Architecture hyperparameters; all sizes in scalars, not learned."""

    image_size: int = 32
    patch_size: int = 8
    embed_dim: int = 32
    num_heads: int = 2
    depth: int = 2
    mlp_ratio: float = 4.0
    num_classes: int = 4
    eps: float = 1e-6
    head_extra: int = 0  # extra head inputs appended to the class embedding

    def __post_init__(self):
        if self.image_size <= 0 or self.patch_size <= 0:
            raise ConfigError("image_size and patch_size must be positive")
        if self.image_size % self.patch_size != 0:
            raise ConfigError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.embed_dim <= 0 or self.num_heads <= 0:
            raise ConfigError("embed_dim and num_heads must be positive")
        if self.embed_dim % self.num_heads != 0:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        if self.depth <= 0:
            raise ConfigError("depth must be positive")
        if self.mlp_ratio <= 0:
            raise ConfigError("mlp_ratio must be positive")
        if self.head_extra < 0:
            raise ConfigError("head_extra must be non-negative")

    @property
    def num_patches(self) -> int:
        n = self.image_size // self.patch_size
        return n * n

    @property
    def patch_dim(self) -> int:
        return 3 * self.patch_size * self.patch_size

    @property
    def mlp_hidden(self) -> int:
        return int(round(self.mlp_ratio * self.embed_dim))


@dataclass
class BlockParams:
    """Learnable weights for one encoder block."""

    ln1_gamma: Tensor
    ln1_beta: Tensor
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    ln2_gamma: Tensor
    ln2_beta: Tensor
    mlp_w1: Tensor
    mlp_b1: Tensor
    mlp_w2: Tensor
    mlp_b2: Tensor


@dataclass
class VitParams:
    """All learnable parameters of the transformer."""

    patch_w: Tensor
    patch_b: Tensor
    cls_token: Tensor  # shape (1, embed_dim)
    pos_embed: Tensor  # shape (num_patches + 1, embed_dim)
    blocks: list = field(default_factory=list)
    head_ln_gamma: Tensor = None
    head_ln_beta: Tensor = None
    head_w: Tensor = None
    head_b: Tensor = None

    def named(self) -> dict:
        """Stable name -> Tensor mapping over every parameter."""
        out = {
            "patch.weight": self.patch_w,
            "patch.bias": self.patch_b,
            "cls_token": self.cls_token,
            "pos_embed": self.pos_embed,
        }
        for i, blk in enumerate(self.blocks):
            p = f"blocks.{i}."
            out[p + "ln1.gamma"] = blk.ln1_gamma
            out[p + "ln1.beta"] = blk.ln1_beta
            out[p + "attn.wq"] = blk.wq
            out[p + "attn.bq"] = blk.bq
            out[p + "attn.wk"] = blk.wk
            out[p + "attn.bk"] = blk.bk
            out[p + "attn.wv"] = blk.wv
            out[p + "attn.bv"] = blk.bv
            out[p + "attn.wo"] = blk.wo
            out[p + "attn.bo"] = blk.bo
            out[p + "ln2.gamma"] = blk.ln2_gamma
            out[p + "ln2.beta"] = blk.ln2_beta
            out[p + "mlp.w1"] = blk.mlp_w1
            out[p + "mlp.b1"] = blk.mlp_b1
            out[p + "mlp.w2"] = blk.mlp_w2
            out[p + "mlp.b2"] = blk.mlp_b2
        out["head.ln.gamma"] = self.head_ln_gamma
        out["head.ln.beta"] = self.head_ln_beta
        out["head.weight"] = self.head_w
        out["head.bias"] = self.head_b
        return out

    def tensors(self) -> list:
        return list(self.named().values())


def param_count(config: VitConfig) -> int:
    """Closed-form number of scalars in VitParams for this config."""
    d = config.embed_dim
    h = config.mlp_hidden
    n = config.num_patches
    patch = config.patch_dim * d + d
    tokens = d + (n + 1) * d  # class token + positional table
    block = 2 * d + 4 * (d * d + d) + 2 * d + (d * h + h) + (h * d + d)
    head = 2 * d + (d + config.head_extra) * config.num_classes + config.num_classes
    return patch + tokens + config.depth * block + head


def init_vit_params(config: VitConfig, seed: int) -> VitParams:
    """Seeded initialization: truncated normal (std 0.02) for projections,
    ones for LayerNorm gains, zeros everywhere else."""
    rng = np.random.default_rng(seed)
    d = config.embed_dim
    h = config.mlp_hidden

    def proj(rows, cols):
        return Tensor(T.trunc_normal(rng, (rows, cols), std=0.02), requires_grad=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    def ones(*shape):
        return Tensor(np.ones(shape), requires_grad=True)

    params = VitParams(
        patch_w=proj(config.patch_dim, d),
        patch_b=zeros(d),
        cls_token=zeros(1, d),
        pos_embed=zeros(config.num_patches + 1, d),
    )
    for _ in range(config.depth):
        params.blocks.append(BlockParams(
            ln1_gamma=ones(d), ln1_beta=zeros(d),
            wq=proj(d, d), bq=zeros(d),
            wk=proj(d, d), bk=zeros(d),
            wv=proj(d, d), bv=zeros(d),
            wo=proj(d, d), bo=zeros(d),
            ln2_gamma=ones(d), ln2_beta=zeros(d),
            mlp_w1=proj(d, h), mlp_b1=zeros(h),
            mlp_w2=proj(h, d), mlp_b2=zeros(d),
        ))
    params.head_ln_gamma = ones(d)
    params.head_ln_beta = zeros(d)
    params.head_w = proj(d + config.head_extra, config.num_classes)
    params.head_b = zeros(config.num_classes)
    return params


def params_from_named(config: VitConfig, arrays: dict) -> VitParams:
    """Rebuild VitParams from a name -> array mapping (checkpoint load)."""
    template = init_vit_params(config, seed=0)
    named = template.named()
    missing = set(named) - set(arrays)
    extra = set(arrays) - set(named)
    if missing or extra:
        raise ConfigError(f"parameter names disagree: missing {sorted(missing)}, "
                          f"unexpected {sorted(extra)}")
    for name, t in named.items():
        a = np.asarray(arrays[name], dtype=np.float64)
        if a.shape != t.data.shape:
            raise ShapeError(f"{name}: stored shape {a.shape} != expected {t.data.shape}")
        t.data = a
    return template


def patchify(image: np.ndarray, patch_size: int) -> np.ndarray:
    """Square HxWx3 image -> (num_patches, 3*p*p) matrix.

    Patches are ordered row-major over the patch grid; within a patch, pixels
    are flattened row-major with channels last (fastest varying).
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ConfigError(f"expected HxWx3 image, got shape {img.shape}")
    h, w, c = img.shape
    if h != w:
        raise ConfigError(f"image must be square, got {h}x{w}")
    if h % patch_size != 0:
        raise ConfigError(f"image size {h} not divisible by patch size {patch_size}")
    n = h // patch_size
    return (img.reshape(n, patch_size, n, patch_size, c)
               .transpose(0, 2, 1, 3, 4)
               .reshape(n * n, patch_size * patch_size * c))


def unpatchify(patches: np.ndarray, image_size: int, patch_size: int) -> np.ndarray:
    """Inverse of patchify."""
    n = image_size // patch_size
    p = np.asarray(patches, dtype=np.float64)
    return (p.reshape(n, n, patch_size, patch_size, 3)
             .transpose(0, 2, 1, 3, 4)
             .reshape(image_size, image_size, 3))


def embed(patches, params: VitParams) -> Tensor:
    """Patch matrix -> (num_patches+1, embed_dim) token sequence.

    Row 0 is the class token; every row gets its positional embedding added.
    """
    p = patches if isinstance(patches, Tensor) else Tensor(patches)
    if p.data.ndim != 2 or p.data.shape[1] != params.patch_w.data.shape[0]:
        raise ShapeError(f"patch vectors of length {p.data.shape} do not match "
                         f"projection rows {params.patch_w.data.shape[0]}")
    proj = T.add(T.matmul(p, params.patch_w), params.patch_b)
    tokens = T.concat([params.cls_token, proj], axis=0)
    if tokens.data.shape != params.pos_embed.data.shape:
        raise ShapeError(f"token grid {tokens.data.shape} does not match positional "
                         f"table {params.pos_embed.data.shape}")
    return T.add(tokens, params.pos_embed)


def attention(x: Tensor, blk: BlockParams, num_heads: int) -> Tensor:
    """Multi-head scaled dot-product self-attention with output projection."""
    t, d = x.data.shape
    if d % num_heads != 0:
        raise ConfigError(f"token width {d} not divisible by {num_heads} heads")
    dh = d // num_heads
    scale = 1.0 / math.sqrt(dh)
    q = T.add(T.matmul(x, blk.wq), blk.bq)
    k = T.add(T.matmul(x, blk.wk), blk.bk)
    v = T.add(T.matmul(x, blk.wv), blk.bv)
    heads = []
    for h in range(num_heads):
        cols = slice(h * dh, (h + 1) * dh)
        qh = q[:, cols]
        kh = k[:, cols]
        vh = v[:, cols]
        weights = T.softmax(T.scale(T.matmul(qh, T.transpose(kh)), scale), axis=-1)
        heads.append(T.matmul(weights, vh))
    merged = heads[0] if num_heads == 1 else T.concat(heads, axis=1)
    return T.add(T.matmul(merged, blk.wo), blk.bo)


def encoder_block(x: Tensor, blk: BlockParams, num_heads: int, eps: float) -> Tensor:
    """Pre-norm block: attend over LN1(x), then MLP over LN2, residuals around both."""
    u = T.add(x, attention(T.layer_norm(x, blk.ln1_gamma, blk.ln1_beta, eps),
                           blk, num_heads))
    hidden = T.gelu(T.add(T.matmul(T.layer_norm(u, blk.ln2_gamma, blk.ln2_beta, eps),
                                   blk.mlp_w1), blk.mlp_b1))
    return T.add(u, T.add(T.matmul(hidden, blk.mlp_w2), blk.mlp_b2))


def forward(image, config: VitConfig, params: VitParams,
            head_extra_inputs: Optional[Sequence[float]] = None) -> Tensor:
    """Image -> raw logits (length num_classes). Softmax is the caller's job.

    ``head_extra_inputs`` supplies the values appended to the class embedding
    when config.head_extra > 0 (e.g. normalized coordinates).
    """
    img = np.asarray(image, dtype=np.float64)
    want = (config.image_size, config.image_size, 3)
    if img.shape != want:
        raise ConfigError(f"image shape {img.shape} does not match config {want}")
    x = embed(patchify(img, config.patch_size), params)
    for blk in params.blocks:
        x = encoder_block(x, blk, config.num_heads, config.eps)
    x = T.layer_norm(x, params.head_ln_gamma, params.head_ln_beta, config.eps)
    cls = x[0:1, :]
    if config.head_extra:
        if head_extra_inputs is None or len(head_extra_inputs) != config.head_extra:
            raise ConfigError(f"head expects {config.head_extra} extra inputs, "
                              f"got {head_extra_inputs}")
        extra = Tensor(np.asarray(head_extra_inputs, dtype=np.float64).reshape(1, -1))
        cls = T.concat([cls, extra], axis=1)
    elif head_extra_inputs:
        raise ConfigError("head_extra_inputs given but config.head_extra is 0")
    logits = T.add(T.matmul(cls, params.head_w), params.head_b)
    return T.reshape(logits, (config.num_classes,))


def forward_batch(images, config: VitConfig, params: VitParams,
                  head_extra_inputs=None) -> np.ndarray:
    """Stack of per-sample forwards; logits are independent of batch composition."""
    out = np.zeros((len(images), config.num_classes))
    for i, img in enumerate(images):
        extra = None if head_extra_inputs is None else head_extra_inputs[i]
        out[i] = forward(img, config, params, extra).data
    return out
