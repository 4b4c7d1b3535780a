"""Reparameterizable MBConv block and its fusion algebra.

The training-time block is a MobileNet-style bottleneck made entirely of
linear pieces: expand 1x1 conv -> per-channel scale -> k x k conv with a
parallel identity branch -> input-independent channel gate -> squeeze 1x1
conv -> residual.  Because every stage is linear, the whole block collapses
in closed form to a single k x k convolution with the exact same geometry as
a vanilla conv, which is what gets deployed.

Padding convention: the expand 1x1 stage is evaluated on the zero-padded
input grid, so the k x k stage sees the expand bias in its border ring.  This
makes the collapsed form equal to the composed form everywhere, borders
included, in exact arithmetic.  The same convention is what the two merge
primitives below assume.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .tensor import ConvParams, Tensor4, conv2d, relu, scale_channels, sigmoid


def identity_kernel(c: int, k: int, dtype=np.float32) -> np.ndarray:
    """The k x k kernel that reproduces its input: 1 at (i, i, k//2, k//2)."""
    if k % 2 != 1:
        raise ValueError("identity kernel requires odd k")
    if c < 1:
        raise ValueError("need at least one channel")
    kern = np.zeros((c, c, k, k), dtype=dtype)
    kern[np.arange(c), np.arange(c), k // 2, k // 2] = 1
    return kern


def se_vector(v: np.ndarray, se_w1: np.ndarray, se_w2: np.ndarray) -> np.ndarray:
    """Input-independent squeeze-excitation gate: sigmoid(W2 relu(W1 v)).

    Entries are strictly inside (0, 1).  Because it depends only on the
    learned vector v, it is evaluated once at fusion time.
    """
    if se_w1.shape[1] != v.shape[0] or se_w2.shape[1] != se_w1.shape[0] \
            or se_w2.shape[0] != v.shape[0]:
        raise ValueError("SE weight shapes inconsistent with v")
    return sigmoid(se_w2 @ relu(se_w1 @ v))


def merge_pointwise_into_kxk(k1: ConvParams, k2: ConvParams) -> ConvParams:
    """Collapse a 1x1 conv followed by a k x k conv into one k x k conv.

    Valid when the 1x1 stage runs on the padded grid of the k x k stage (see
    module docstring); then conv(conv(x, k1), k2) == conv(x, merged) for all x.
    """
    if k1.kernel_size != (1, 1) or k1.groups != 1 or k2.groups != 1:
        raise ValueError("expected ungrouped 1x1 then kxk")
    if k2.c_in != k1.c_out:
        raise ValueError("channel mismatch between stages")
    w1 = k1.kernel[:, :, 0, 0]                      # (c_mid, c_in)
    kern = np.einsum("omhw,mi->oihw", k2.kernel, w1)
    bias = k2.bias + k2.kernel.sum(axis=(2, 3)) @ k1.bias
    return ConvParams(kern, bias, stride=k2.stride, padding=k2.padding)


def merge_kxk_into_pointwise(k2: ConvParams, k3: ConvParams) -> ConvParams:
    """Collapse a k x k conv followed by a 1x1 conv into one k x k conv.

    Exact for any padding: the 1x1 stage has no spatial extent, so
    conv(conv(x, k2), k3) == conv(x, merged) holds everywhere.
    """
    if k3.kernel_size != (1, 1) or k2.groups != 1 or k3.groups != 1:
        raise ValueError("expected kxk then ungrouped 1x1")
    if k3.c_in != k2.c_out:
        raise ValueError("channel mismatch between stages")
    w3 = k3.kernel[:, :, 0, 0]                      # (c_out, c_mid)
    kern = np.einsum("om,mihw->oihw", w3, k2.kernel)
    bias = w3 @ k2.bias + k3.bias
    return ConvParams(kern, bias, stride=k2.stride, padding=k2.padding)


@dataclass(frozen=True)
class RepMBConvParams:
    """Learnable state of one reparameterizable MBConv block.

    k1: expand 1x1, C -> C_m.  k2: spatial k x k, C_m -> C_m (the parallel
    identity branch is controlled by ``k2_identity_enabled``).  k3: squeeze
    1x1, C_m -> C.  ``s`` replaces the first activation with a per-channel
    scale; ``v`` with the SE matrices gives the input-independent channel
    gate.
    """

    k1: ConvParams
    k2: ConvParams
    k3: ConvParams
    s: np.ndarray
    v: np.ndarray
    se_w1: np.ndarray
    se_w2: np.ndarray
    k2_identity_enabled: bool = True

    def __post_init__(self):
        cm = self.k1.c_out
        if self.k1.kernel_size != (1, 1) or self.k3.kernel_size != (1, 1):
            raise ValueError("expand and squeeze stages must be 1x1")
        if self.k2.c_in != cm or self.k2.c_out != cm or self.k3.c_in != cm:
            raise ValueError("inner channel widths inconsistent")
        if self.k3.c_out != self.k1.c_in:
            raise ValueError("block must preserve channel count")
        if self.k != self.k2.kernel_size[1] or self.k % 2 != 1:
            raise ValueError("spatial kernel must be square and odd")
        if self.s.shape != (cm,) or self.v.shape != (cm,):
            raise ValueError("s and v must have length C_m")

    @property
    def c(self) -> int:
        return self.k1.c_in

    @property
    def c_m(self) -> int:
        return self.k1.c_out

    @property
    def k(self) -> int:
        return self.k2.kernel_size[0]

    @property
    def dtype(self):
        return self.k1.kernel.dtype

    def astype(self, dtype) -> "RepMBConvParams":
        return RepMBConvParams(
            self.k1.astype(dtype), self.k2.astype(dtype), self.k3.astype(dtype),
            self.s.astype(dtype), self.v.astype(dtype),
            self.se_w1.astype(dtype), self.se_w2.astype(dtype),
            self.k2_identity_enabled)


def effective_k2(p: RepMBConvParams) -> ConvParams:
    """Spatial stage with the identity branch folded into the kernel."""
    if not p.k2_identity_enabled:
        return p.k2
    kern = p.k2.kernel + identity_kernel(p.c_m, p.k, dtype=p.dtype)
    return replace(p.k2, kernel=kern)


def forward_train(x: Tensor4, p: RepMBConvParams) -> Tensor4:
    """Training-form block evaluation.

    The expand stage runs on the zero-padded grid so that the spatial stage's
    border ring carries the expand bias (the convention the fusion assumes);
    the residual is added last.
    """
    if x.shape[1] != p.c:
        raise ValueError(f"input has {x.shape[1]} channels, block expects {p.c}")
    pad = p.k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    y = conv2d(xp, p.k1)
    y = scale_channels(y, p.s)
    k2e = replace(effective_k2(p), padding=0)
    u = conv2d(y, k2e)
    u = scale_channels(u, se_vector(p.v, p.se_w1, p.se_w2))
    out = conv2d(u, p.k3)
    return out + x


def fuse(p: RepMBConvParams) -> ConvParams:
    """Collapse the block to a single k x k conv (plus bias) with stride 1 and
    shape-preserving padding.  Exact in real arithmetic; the result has the
    parameter footprint of a vanilla convolution of the same geometry.
    """
    se = se_vector(p.v, p.se_w1, p.se_w2)
    k1_scaled = ConvParams(p.k1.kernel * p.s[:, None, None, None],
                           p.k1.bias * p.s, padding=0)
    inner = merge_pointwise_into_kxk(k1_scaled, effective_k2(p))
    k3_scaled = ConvParams(p.k3.kernel * se[None, :, None, None],
                           p.k3.bias, padding=0)
    merged = merge_kxk_into_pointwise(inner, k3_scaled)
    kern = merged.kernel + identity_kernel(p.c, p.k, dtype=p.dtype)
    return ConvParams(kern, merged.bias, stride=1, padding=p.k // 2)
