"""Local importance-based attention.

A single-channel importance map is measured on a downscaled copy of the
feature (softpool, then a stride-2 squeeze conv, then a 1-channel conv),
squashed through a sigmoid, and bilinearly rescaled back up.  The input's
first channel, also squashed, acts as a gate that re-calibrates the map.
Both single-channel modulators multiply the feature, so the output magnitude
never exceeds the input's.

``lia_variant`` exposes the ablation ladder used in tests: identity, gate
only, importance only, max-based importance, swapped sigmoid/rescale order,
and the full mechanism.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .tensor import (ConvParams, Tensor4, bilinear_resize, conv2d, maxpool2d,
                     sigmoid, softpool2d)

VARIANTS = ("I", "II", "III", "IV", "V", "VI")


@dataclass(frozen=True)
class LIAParams:
    """Attention weights: squeeze conv (stride 2, C -> C/q) and map conv
    (C/q -> 1), plus the pooling window geometry."""

    conv_a: ConvParams
    conv_b: ConvParams
    pool_k: int = 2
    pool_stride: int = 2
    importance_mode: str = "softpool"

    def __post_init__(self):
        if self.conv_b.c_out != 1:
            raise ValueError("importance map must be single-channel")
        if self.conv_a.c_out != self.conv_b.c_in:
            raise ValueError("squeeze/map channel mismatch")
        if self.importance_mode not in ("softpool", "maxpool"):
            raise ValueError(f"unknown importance mode {self.importance_mode!r}")

    @property
    def c(self) -> int:
        return self.conv_a.c_in

    def astype(self, dtype) -> "LIAParams":
        return replace(self, conv_a=self.conv_a.astype(dtype),
                       conv_b=self.conv_b.astype(dtype))


def local_importance(x: Tensor4, p: LIAParams) -> Tensor4:
    """Single-channel importance at reduced resolution: pool, squeeze conv,
    map conv.  No activation is applied here."""
    if x.shape[1] != p.c:
        raise ValueError(f"input has {x.shape[1]} channels, attention expects {p.c}")
    if x.shape[2] < p.pool_k or x.shape[3] < p.pool_k:
        raise ValueError("input too small for the downsampling chain")
    if p.importance_mode == "softpool":
        pooled = softpool2d(x, p.pool_k, p.pool_stride)
    else:
        pooled = maxpool2d(x, p.pool_k, p.pool_stride)
    return conv2d(conv2d(pooled, p.conv_a), p.conv_b)


def lia_modulators(x: Tensor4, p: LIAParams) -> tuple[Tensor4, Tensor4]:
    """The two (n, 1, h, w) maps the attention multiplies the input by:
    the first-channel gate and the upsampled importance map."""
    gate = sigmoid(x[:, :1])
    imp = bilinear_resize(sigmoid(local_importance(x, p)), x.shape[2], x.shape[3])
    return gate, imp


def apply_lia(x: Tensor4, p: LIAParams) -> Tensor4:
    """Full attention: gate * rescale(sigmoid(importance)) * x, both maps
    broadcast over channels."""
    gate, imp = lia_modulators(x, p)
    return gate * imp * x


def lia_variant(x: Tensor4, p: LIAParams, variant: str) -> Tensor4:
    """Ablation variants I..VI (VI is the full mechanism)."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if variant == "I":
        return x.copy()
    if variant == "II":
        return sigmoid(x[:, :1]) * x
    if variant == "III":
        imp = bilinear_resize(sigmoid(local_importance(x, p)), x.shape[2], x.shape[3])
        return imp * x
    if variant == "IV":
        return apply_lia(x, replace(p, importance_mode="maxpool"))
    if variant == "V":
        gate = sigmoid(x[:, :1])
        imp = sigmoid(bilinear_resize(local_importance(x, p), x.shape[2], x.shape[3]))
        return gate * imp * x
    return apply_lia(x, p)
