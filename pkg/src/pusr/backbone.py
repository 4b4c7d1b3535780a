"""Channel-wise U-Net backbone and full model assembly.

A model is a 3x3 head conv, a stack of H-blocks (two fusable MBConv blocks
with GELU after each, then optional local importance attention), and a 3x3
tail conv feeding a pixel shuffle.  The H-block widths follow a "U" over the
stage channel list: an S-stage config runs 2S-1 blocks at widths
(C0, C1, ..., C_{S-1}, ..., C1, C0).

Two forward schedules realize the same arithmetic:

* ``split``  - training bookkeeping: after each descending block the first
  C_{i+1} channels continue and the remainder is held, then concatenated
  back in front of each ascending block.
* ``index``  - deployment bookkeeping: one persistent C0-channel buffer;
  block i reads and writes channels [0, C_i) in place.  No held-feature
  copies are made.

The two schedules touch identical values in identical order, so their
outputs are bit-identical for any block set.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import reparam
from .lia import LIAParams, apply_lia
from .tensor import (ConvParams, DTYPES, Tensor4, conv2d, gelu, pixel_shuffle,
                     slice_channels, write_channels)

VARIANTS: dict[str, tuple[int, ...]] = {
    "U": (16, 8),
    "T": (32, 16),
    "S": (32, 16, 8),
    "M": (48, 32, 16),
    "B": (64, 48, 32),
    "L": (80, 64, 48),
}

TRAINING = "training"
FUSED = "fused"


@dataclass(frozen=True)
class LIAConfig:
    """Construction-time hyperparameters for the attention of every H-block."""

    kernel: int = 3
    pool_k: int = 2
    pool_stride: int = 2
    squeeze: int = 4
    importance_mode: str = "softpool"

    def to_dict(self) -> dict:
        return {"kernel": self.kernel, "pool_k": self.pool_k,
                "pool_stride": self.pool_stride, "squeeze": self.squeeze,
                "importance_mode": self.importance_mode}

    @staticmethod
    def from_dict(d: dict) -> "LIAConfig":
        return LIAConfig(**d)


@dataclass(frozen=True)
class ModelConfig:
    """Variant descriptor: per-stage channels (non-increasing), upscale
    factor, kernel size, and block hyperparameters."""

    stage_channels: tuple[int, ...]
    scale: int
    kernel: int = 3
    in_channels: int = 3
    expansion: int = 2
    se_reduction: int = 4
    lia: LIAConfig = field(default_factory=LIAConfig)
    use_attention: bool = True
    rep_identity: bool = True

    def __post_init__(self):
        object.__setattr__(self, "stage_channels", tuple(self.stage_channels))
        if len(self.stage_channels) < 1 or any(c < 1 for c in self.stage_channels):
            raise ValueError("stage_channels must be positive")
        if any(a < b for a, b in zip(self.stage_channels, self.stage_channels[1:])):
            raise ValueError("stage channels must be non-increasing")
        if self.scale not in (2, 3, 4):
            raise ValueError("scale must be 2, 3, or 4")
        if self.kernel % 2 != 1:
            raise ValueError("kernel size must be odd")
        if self.expansion < 1:
            raise ValueError("expansion must be >= 1")

    @property
    def stages(self) -> int:
        return len(self.stage_channels)

    def block_widths(self) -> tuple[int, ...]:
        """Channel width of each of the 2S-1 H-blocks, descending then
        ascending."""
        down = self.stage_channels
        return down + down[-2::-1]

    def to_dict(self) -> dict:
        return {
            "stage_channels": list(self.stage_channels),
            "scale": self.scale,
            "kernel": self.kernel,
            "in_channels": self.in_channels,
            "expansion": self.expansion,
            "se_reduction": self.se_reduction,
            "lia": self.lia.to_dict(),
            "use_attention": self.use_attention,
            "rep_identity": self.rep_identity,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        d = dict(d)
        d["stage_channels"] = tuple(d["stage_channels"])
        d["lia"] = LIAConfig.from_dict(d["lia"])
        return ModelConfig(**d)

    @staticmethod
    def for_variant(variant: str, scale: int, **overrides) -> "ModelConfig":
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}")
        return ModelConfig(stage_channels=VARIANTS[variant], scale=scale, **overrides)


@dataclass(frozen=True)
class HBlock:
    """One U-position: two MBConv stages (training or fused form) and the
    optional attention tail."""

    rep1: reparam.RepMBConvParams | ConvParams
    rep2: reparam.RepMBConvParams | ConvParams
    lia: LIAParams | None


@dataclass(frozen=True)
class SRModel:
    config: ModelConfig
    head: ConvParams
    blocks: tuple[HBlock, ...]
    tail: ConvParams
    form: str
    dtype: str = "f32"

    def __post_init__(self):
        if self.form not in (TRAINING, FUSED):
            raise ValueError("form must be 'training' or 'fused'")
        if self.dtype not in DTYPES:
            raise ValueError("dtype must be 'f32' or 'f64'")


def _init_conv(rng: np.random.Generator, c_out: int, c_in: int, k: int,
               dtype, gain: float = 1.0, stride: int = 1,
               padding: int | None = None) -> ConvParams:
    bound = gain / np.sqrt(c_in * k * k)
    kern = rng.uniform(-bound, bound, size=(c_out, c_in, k, k)).astype(dtype)
    bias = np.zeros(c_out, dtype=dtype)
    return ConvParams(kern, bias, stride=stride, padding=padding)


def _init_rep(rng: np.random.Generator, c: int, cfg: ModelConfig,
              dtype) -> reparam.RepMBConvParams:
    cm = cfg.expansion * c
    hidden = max(1, cm // cfg.se_reduction)
    # Spatial kernel starts near zero and s=1, v=0 so the block opens close
    # to the identity; the SE gate then sits at a flat 0.5.
    k1 = _init_conv(rng, cm, c, 1, dtype)
    k2 = _init_conv(rng, cm, cm, cfg.kernel, dtype, gain=0.01)
    k3 = _init_conv(rng, c, cm, 1, dtype)
    s = np.ones(cm, dtype=dtype)
    v = np.zeros(cm, dtype=dtype)
    b1 = 1.0 / np.sqrt(cm)
    se_w1 = rng.uniform(-b1, b1, size=(hidden, cm)).astype(dtype)
    b2 = 1.0 / np.sqrt(hidden)
    se_w2 = rng.uniform(-b2, b2, size=(cm, hidden)).astype(dtype)
    return reparam.RepMBConvParams(k1, k2, k3, s, v, se_w1, se_w2,
                                   k2_identity_enabled=cfg.rep_identity)


def _init_lia(rng: np.random.Generator, c: int, cfg: LIAConfig,
              dtype) -> LIAParams:
    squeezed = max(1, c // cfg.squeeze)
    conv_a = _init_conv(rng, squeezed, c, cfg.kernel, dtype, stride=2)
    conv_b = _init_conv(rng, 1, squeezed, cfg.kernel, dtype)
    return LIAParams(conv_a, conv_b, pool_k=cfg.pool_k,
                     pool_stride=cfg.pool_stride,
                     importance_mode=cfg.importance_mode)


def build_model(cfg: ModelConfig, seed: int = 0, dtype: str = "f32") -> SRModel:
    """Deterministically initialized training-form model for a config."""
    if dtype not in DTYPES:
        raise ValueError("dtype must be 'f32' or 'f64'")
    np_dtype = DTYPES[dtype]
    rng = np.random.default_rng(seed)
    c0 = cfg.stage_channels[0]
    head = _init_conv(rng, c0, cfg.in_channels, cfg.kernel, np_dtype)
    blocks = []
    for width in cfg.block_widths():
        rep1 = _init_rep(rng, width, cfg, np_dtype)
        rep2 = _init_rep(rng, width, cfg, np_dtype)
        lia = _init_lia(rng, width, cfg.lia, np_dtype) if cfg.use_attention else None
        blocks.append(HBlock(rep1, rep2, lia))
    tail = _init_conv(rng, cfg.in_channels * cfg.scale ** 2, c0, cfg.kernel,
                      np_dtype)
    return SRModel(cfg, head, tuple(blocks), tail, TRAINING, dtype)


def fuse_model(m: SRModel) -> SRModel:
    """Collapse every MBConv block to a single conv; head, tail, and
    attention weights are carried over bit-exactly."""
    if m.form == FUSED:
        raise ValueError("model is already fused")
    blocks = tuple(
        HBlock(reparam.fuse(b.rep1), reparam.fuse(b.rep2), b.lia)
        for b in m.blocks)
    return SRModel(m.config, m.head, blocks, m.tail, FUSED, m.dtype)


def _rep_apply(rep, x: Tensor4) -> Tensor4:
    if isinstance(rep, ConvParams):
        return conv2d(x, rep)
    return reparam.forward_train(x, rep)


def apply_hblock(block: HBlock, x: Tensor4) -> Tensor4:
    x = gelu(_rep_apply(block.rep1, x))
    x = gelu(_rep_apply(block.rep2, x))
    if block.lia is not None:
        x = apply_lia(x, block.lia)
    return x


def _forward_split(m: SRModel, feats: Tensor4) -> Tensor4:
    widths = m.config.block_widths()
    stages = m.config.stages
    held: list[Tensor4] = []
    for i, block in enumerate(m.blocks):
        if i < stages:                      # descending leg
            out = apply_hblock(block, feats)
            if i < stages - 1:
                keep = widths[i + 1]
                feats = out[:, :keep]
                held.append(out[:, keep:])
            else:
                feats = out
        else:                               # ascending leg
            feats = np.concatenate([feats, held.pop()], axis=1)
            feats = apply_hblock(block, feats)
    return feats


def _forward_index(m: SRModel, feats: Tensor4) -> Tensor4:
    buf = np.ascontiguousarray(feats)       # the persistent C0 buffer
    for width, block in zip(m.config.block_widths(), m.blocks):
        view = slice_channels(buf, 0, width)
        write_channels(buf, 0, width, apply_hblock(block, view))
    return buf


def forward(m: SRModel, x: Tensor4, schedule: str | None = None) -> Tensor4:
    """Run the model on an (n, 3, h, w) image batch; output is
    (n, 3, h*scale, w*scale).

    ``schedule`` picks the bookkeeping: 'split' (hold/concat) or 'index'
    (in-place channel ranges).  Defaults to 'split' for training-form models
    and 'index' for fused ones.  Both produce bit-identical results.
    """
    if schedule is None:
        schedule = "index" if m.form == FUSED else "split"
    if schedule not in ("split", "index"):
        raise ValueError("schedule must be 'split' or 'index'")
    if x.shape[1] != m.config.in_channels:
        raise ValueError(f"expected {m.config.in_channels}-channel input")
    if x.dtype != DTYPES[m.dtype]:
        raise ValueError(f"model is {m.dtype}, input is {x.dtype}")
    feats = conv2d(x, m.head)
    feats = _forward_split(m, feats) if schedule == "split" else _forward_index(m, feats)
    return pixel_shuffle(conv2d(feats, m.tail), m.config.scale)


def forward_train(m: SRModel, x: Tensor4) -> Tensor4:
    """Split/concat-schedule forward (works for either form)."""
    return forward(m, x, schedule="split")


def forward_fused(m: SRModel, x: Tensor4) -> Tensor4:
    """In-place channel-index forward; requires a fused model."""
    if m.form != FUSED:
        raise ValueError("forward_fused requires a fused model")
    return forward(m, x, schedule="index")
