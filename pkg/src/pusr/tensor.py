"""Dense NCHW tensor operators.

Everything in this package works on plain numpy arrays of rank 4 laid out
``(batch, channel, height, width)``, dtype float32 for the engine path or
float64 for verification runs.  The functions here are the full set of
numerical primitives the rest of the package composes; all of them are pure
and deterministic (bit-identical results across runs and across BLAS thread
counts).

Normative conventions, fixed here once so every caller agrees:

* ``conv2d`` zero-pads and accumulates each output element over the flattened
  ``(c_in, k_h, k_w)`` axis in increasing index order (input channels outer,
  kernel rows, then kernel columns innermost).  The reduction is carried out
  by a single GEMM over an im2col buffer whose contraction axis is laid out
  exactly in that order, so the summation sequence is independent of the
  BLAS thread count.
* ``bilinear_resize`` uses half-pixel source centers (the align-corners=false
  convention).
* ``gelu`` is the exact erf form, not the tanh approximation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

Tensor4 = np.ndarray

DTYPES = {"f32": np.float32, "f64": np.float64}
DTYPE_NAMES = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}

# Patch buffers above this size are built in output-row chunks instead of in
# one piece.  Chunking splits the output axis only, never the reduction axis,
# so accumulation order is unaffected.
_IM2COL_BUDGET_BYTES = 128 * 1024 * 1024


def _require_tensor4(x: np.ndarray, name: str = "x") -> None:
    if not isinstance(x, np.ndarray) or x.ndim != 4:
        raise ValueError(f"{name} must be a rank-4 (n, c, h, w) array")
    if x.dtype not in (np.float32, np.float64):
        raise ValueError(f"{name} must be float32 or float64, got {x.dtype}")


@dataclass(frozen=True)
class ConvParams:
    """A convolution layer: kernel ``(c_out, c_in/groups, k_h, k_w)`` plus bias.

    ``padding`` defaults to ``k//2`` (shape preserving for stride 1); pass an
    explicit value for valid-mode convolution.
    """

    kernel: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int | None = None
    groups: int = 1

    def __post_init__(self):
        if self.kernel.ndim != 4:
            raise ValueError("kernel must be rank-4 (c_out, c_in/groups, k_h, k_w)")
        if self.bias.ndim != 1 or self.bias.shape[0] != self.kernel.shape[0]:
            raise ValueError("bias length must equal c_out")
        if self.bias.dtype != self.kernel.dtype:
            raise ValueError("kernel and bias dtype mismatch")
        if self.stride < 1 or self.groups < 1:
            raise ValueError("stride and groups must be >= 1")
        if self.kernel.shape[0] % self.groups != 0:
            raise ValueError("c_out not divisible by groups")
        if self.padding is None:
            object.__setattr__(self, "padding", self.kernel.shape[2] // 2)
        if self.padding < 0:
            raise ValueError("padding must be >= 0")

    @property
    def c_out(self) -> int:
        return self.kernel.shape[0]

    @property
    def c_in(self) -> int:
        return self.kernel.shape[1] * self.groups

    @property
    def kernel_size(self) -> tuple[int, int]:
        return self.kernel.shape[2], self.kernel.shape[3]

    @property
    def param_count(self) -> int:
        return self.kernel.size + self.bias.size

    def astype(self, dtype) -> "ConvParams":
        return ConvParams(self.kernel.astype(dtype), self.bias.astype(dtype),
                          self.stride, self.padding, self.groups)


def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int,
            ho: int, wo: int) -> np.ndarray:
    """Patch matrix of shape (n, c*kh*kw, ho*wo); contraction axis ordered
    (channel, kernel row, kernel col)."""
    n, c = xp.shape[:2]
    s = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, kh, kw, ho, wo),
        strides=(s[0], s[1], s[2], s[3], s[2] * stride, s[3] * stride),
        writeable=False,
    )
    return win.reshape(n, c * kh * kw, ho * wo)


def conv2d(x: Tensor4, p: ConvParams) -> Tensor4:
    """2-D convolution (cross-correlation), zero-padded.

    Output shape is ``(n, c_out, (h+2p-kh)//s+1, (w+2p-kw)//s+1)``.  Each
    output element accumulates over ``(c_in, k_h, k_w)`` in increasing index
    order; see the module docstring for why this is reproducible.
    """
    _require_tensor4(x)
    n, c, h, w = x.shape
    if c != p.c_in:
        raise ValueError(f"input has {c} channels, layer expects {p.c_in}")
    if x.dtype != p.kernel.dtype:
        raise ValueError("input dtype does not match layer dtype")
    kh, kw = p.kernel_size
    ho = conv_output_size(h, kh, p.stride, p.padding)
    wo = conv_output_size(w, kw, p.stride, p.padding)
    if ho < 1 or wo < 1:
        raise ValueError(f"empty spatial output ({ho}x{wo}) for input {h}x{w}")

    if p.padding > 0:
        pd = p.padding
        xp = np.pad(x, ((0, 0), (0, 0), (pd, pd), (pd, pd)))
    else:
        xp = np.ascontiguousarray(x)

    cig = p.kernel.shape[1]  # channels per group
    cog = p.c_out // p.groups
    out = np.empty((n, p.c_out, ho, wo), dtype=x.dtype)

    # Row-chunk so the patch buffer stays within budget.
    bytes_per_row = n * cig * kh * kw * wo * x.dtype.itemsize
    rows = max(1, min(ho, _IM2COL_BUDGET_BYTES // max(1, bytes_per_row)))

    for g in range(p.groups):
        xg = xp[:, g * cig:(g + 1) * cig]
        wm = np.ascontiguousarray(p.kernel[g * cog:(g + 1) * cog]
                                  .reshape(cog, cig * kh * kw))
        for r0 in range(0, ho, rows):
            r1 = min(r0 + rows, ho)
            xs = xg[:, :, r0 * p.stride:(r1 - 1) * p.stride + kh, :]
            cols = np.ascontiguousarray(_im2col(xs, kh, kw, p.stride, r1 - r0, wo))
            res = np.matmul(wm, cols)  # (n, cog, (r1-r0)*wo)
            out[:, g * cog:(g + 1) * cog, r0:r1, :] = \
                res.reshape(n, cog, r1 - r0, wo)

    out += p.bias.reshape(1, p.c_out, 1, 1)
    return out


def _pool_windows(x: Tensor4, kh: int, kw: int, stride: int):
    n, c, h, w = x.shape
    if h < kh or w < kw:
        raise ValueError(f"pool window {kh}x{kw} larger than input {h}x{w}")
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    s = x.strides
    return np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, ho, wo, kh, kw),
        strides=(s[0], s[1], s[2] * stride, s[3] * stride, s[2], s[3]),
        writeable=False,
    )


def _pool_size(k) -> tuple[int, int]:
    if isinstance(k, tuple):
        return k
    return k, k


def softpool2d(x: Tensor4, k=2, stride: int = 2) -> Tensor4:
    """Exponentially weighted pooling: each window yields
    ``sum_i x_i * e^{x_i} / sum_j e^{x_j}``, computed per channel.

    Exponentials are stabilized by subtracting the window max, which leaves
    the value unchanged.  ``k`` may be an int or an ``(kh, kw)`` tuple.
    """
    _require_tensor4(x)
    kh, kw = _pool_size(k)
    win = _pool_windows(x, kh, kw, stride)
    m = win.max(axis=(4, 5), keepdims=True)
    e = np.exp(win - m)
    return (win * e).sum(axis=(4, 5)) / e.sum(axis=(4, 5))


def maxpool2d(x: Tensor4, k=2, stride: int = 2) -> Tensor4:
    _require_tensor4(x)
    kh, kw = _pool_size(k)
    return _pool_windows(x, kh, kw, stride).max(axis=(4, 5))


def bilinear_resize(x: Tensor4, out_h: int, out_w: int) -> Tensor4:
    """Bilinear rescaling with half-pixel source centers (align-corners=false).

    Source coordinate for output index ``i`` is ``(i + 0.5) * in/out - 0.5``;
    neighbor indices are clamped to the image, so constant inputs map to
    constant outputs.
    """
    _require_tensor4(x)
    if out_h < 1 or out_w < 1:
        raise ValueError("target size must be >= 1")
    n, c, h, w = x.shape

    def axis_weights(size_in: int, size_out: int, dtype):
        coords = (np.arange(size_out, dtype=np.float64) + 0.5) * (size_in / size_out) - 0.5
        lo = np.floor(coords).astype(np.int64)
        t = (coords - lo).astype(dtype)
        i0 = np.clip(lo, 0, size_in - 1)
        i1 = np.clip(lo + 1, 0, size_in - 1)
        return i0, i1, t

    y0, y1, ty = axis_weights(h, out_h, x.dtype)
    x0, x1, tx = axis_weights(w, out_w, x.dtype)

    rows0 = x[:, :, y0, :]
    rows1 = x[:, :, y1, :]
    ty = ty.reshape(1, 1, out_h, 1)
    vert = rows0 * (1 - ty) + rows1 * ty
    tx = tx.reshape(1, 1, 1, out_w)
    return vert[:, :, :, x0] * (1 - tx) + vert[:, :, :, x1] * tx


def pixel_shuffle(x: Tensor4, r: int) -> Tensor4:
    """Depth-to-space: channel ``c*r*r + i*r + j`` moves to spatial offset
    ``(i, j)`` of output channel ``c``.  Shape (n, c, h, w) -> (n, c/r^2, h*r, w*r).
    """
    _require_tensor4(x)
    n, c, h, w = x.shape
    if r < 1:
        raise ValueError("upscale factor must be >= 1")
    if c % (r * r) != 0:
        raise ValueError(f"channel count {c} not divisible by r^2={r * r}")
    co = c // (r * r)
    out = x.reshape(n, co, r, r, h, w)
    out = out.transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(out).reshape(n, co, h * r, w * r)


def pixel_unshuffle(x: Tensor4, r: int) -> Tensor4:
    """Inverse of :func:`pixel_shuffle`."""
    _require_tensor4(x)
    n, c, h, w = x.shape
    if h % r != 0 or w % r != 0:
        raise ValueError("spatial dims not divisible by r")
    out = x.reshape(n, c, h // r, r, w // r, r)
    out = out.transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(out).reshape(n, c * r * r, h // r, w // r)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign to avoid overflow in exp.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GELU: ``0.5 * x * (1 + erf(x / sqrt(2)))``."""
    return (0.5 * x * (1.0 + erf(x / np.sqrt(x.dtype.type(2.0))))).astype(x.dtype, copy=False)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def scale_channels(x: Tensor4, v: np.ndarray) -> Tensor4:
    """Multiply channel ``c`` of ``x`` by ``v[c]``."""
    _require_tensor4(x)
    if v.ndim != 1 or v.shape[0] != x.shape[1]:
        raise ValueError("scale vector length must equal channel count")
    return x * v.reshape(1, -1, 1, 1)


def add(x: Tensor4, y: Tensor4) -> Tensor4:
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    return x + y


def slice_channels(x: Tensor4, lo: int, hi: int) -> Tensor4:
    """Zero-copy view of channels [lo, hi)."""
    _require_tensor4(x)
    if not (0 <= lo < hi <= x.shape[1]):
        raise ValueError(f"bad channel range [{lo}, {hi}) for {x.shape[1]} channels")
    return x[:, lo:hi]


def write_channels(x: Tensor4, lo: int, hi: int, y: Tensor4) -> Tensor4:
    """In-place update of channels [lo, hi); requires exclusive access to x."""
    _require_tensor4(x)
    if y.shape != (x.shape[0], hi - lo, x.shape[2], x.shape[3]):
        raise ValueError("value shape does not match channel range")
    x[:, lo:hi] = y
    return x
