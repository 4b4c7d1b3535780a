"""Model profiling (params / MACs / activations) and image fidelity metrics.

Counting conventions, fixed for comparability with common SR efficiency
tooling: MACs are ``k_h * k_w * (c_in/groups) * c_out * h_out * w_out`` per
convolution, bias adds excluded; activations are the total output elements
of convolution layers only; pooling and elementwise ops contribute zero to
both.  Parameter counts include biases.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .backbone import FUSED, SRModel
from .lia import LIAParams
from .tensor import ConvParams, conv_output_size

PSNR_CAP_DB = 100.0

# BT.601 full-range luma weights.
_LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class LayerStat:
    name: str
    params: int
    macs: int
    activations: int
    output_shape: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"name": self.name, "params": self.params, "macs": self.macs,
                "activations": self.activations,
                "output_shape": list(self.output_shape)}


@dataclass(frozen=True)
class ProfileReport:
    params: int
    macs: int
    activations: int
    peak_feature_bytes: int
    input_size: tuple[int, int]
    per_layer: tuple[LayerStat, ...]

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "input_size": list(self.input_size),
            "params": self.params,
            "macs": self.macs,
            "activations": self.activations,
            "peak_feature_bytes": self.peak_feature_bytes,
            "per_layer": [s.to_dict() for s in self.per_layer],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=False)


def conv_layer_stats(p: ConvParams, h: int, w: int, name: str) -> LayerStat:
    kh, kw = p.kernel_size
    ho = conv_output_size(h, kh, p.stride, p.padding)
    wo = conv_output_size(w, kw, p.stride, p.padding)
    out_elems = p.c_out * ho * wo
    macs = kh * kw * (p.c_in // p.groups) * p.c_out * ho * wo
    return LayerStat(name, p.param_count, macs, out_elems, (p.c_out, ho, wo))


def _rep_stats(rep, name: str, h: int, w: int, kernel: int) -> list[LayerStat]:
    if isinstance(rep, ConvParams):
        return [conv_layer_stats(rep, h, w, name)]
    # Training form as executed: the expand conv runs on the padded grid.
    # The scale/gate vectors and SE matrices are parameters without conv
    # work, listed as their own entry so totals stay a per-layer sum.
    pad = kernel // 2
    surrogates = rep.s.size + rep.v.size + rep.se_w1.size + rep.se_w2.size
    return [
        conv_layer_stats(rep.k1, h + 2 * pad, w + 2 * pad, f"{name}.k1"),
        conv_layer_stats(ConvParams(rep.k2.kernel, rep.k2.bias, padding=0),
                         h + 2 * pad, w + 2 * pad, f"{name}.k2"),
        conv_layer_stats(rep.k3, h, w, f"{name}.k3"),
        LayerStat(f"{name}.surrogates", surrogates, 0, 0, ()),
    ]


def _lia_stats(p: LIAParams, name: str, h: int, w: int) -> list[LayerStat]:
    hp = (h - p.pool_k) // p.pool_stride + 1
    wp = (w - p.pool_k) // p.pool_stride + 1
    ka = p.conv_a.kernel_size[0]
    ha = conv_output_size(hp, ka, p.conv_a.stride, p.conv_a.padding)
    wa = conv_output_size(wp, ka, p.conv_a.stride, p.conv_a.padding)
    return [
        conv_layer_stats(p.conv_a, hp, wp, f"{name}.conv_a"),
        conv_layer_stats(p.conv_b, ha, wa, f"{name}.conv_b"),
    ]


def peak_feature_elements(m: SRModel, h: int, w: int) -> int:
    """Estimated peak intermediate feature footprint, in elements.

    Fused form: the persistent C0 buffer plus the largest temporary produced
    while it is live.  Training form: held splits plus the active feature
    total C0 as well, but the temporaries include the expanded-width stages.
    """
    c0 = m.config.stage_channels[0]
    widest = max(m.config.block_widths())
    tail_out = m.config.in_channels * m.config.scale ** 2
    if m.form == FUSED:
        largest_temp = max(widest, tail_out) * h * w
    else:
        pad = m.config.kernel // 2
        largest_temp = max(
            m.config.expansion * widest * (h + 2 * pad) * (w + 2 * pad),
            tail_out * h * w)
    return c0 * h * w + largest_temp


def profile(m: SRModel, h: int, w: int) -> ProfileReport:
    """Static profile of the model at an ``h x w`` input."""
    layers = [conv_layer_stats(m.head, h, w, "head")]
    for i, b in enumerate(m.blocks):
        layers += _rep_stats(b.rep1, f"blocks.{i}.rep1", h, w, m.config.kernel)
        layers += _rep_stats(b.rep2, f"blocks.{i}.rep2", h, w, m.config.kernel)
        if b.lia is not None:
            layers += _lia_stats(b.lia, f"blocks.{i}.lia", h, w)
    layers.append(conv_layer_stats(m.tail, h, w, "tail"))
    itemsize = 8 if m.dtype == "f64" else 4
    return ProfileReport(
        params=sum(s.params for s in layers),
        macs=sum(s.macs for s in layers),
        activations=sum(s.activations for s in layers),
        peak_feature_bytes=peak_feature_elements(m, h, w) * itemsize,
        input_size=(h, w),
        per_layer=tuple(layers),
    )


def rgb_to_y(img: np.ndarray) -> np.ndarray:
    """BT.601 full-range luma of a (..., 3, h, w) array in [0, 1]."""
    if img.shape[-3] != 3:
        raise ValueError("luma conversion needs a 3-channel image")
    r, g, b = img[..., 0, :, :], img[..., 1, :, :], img[..., 2, :, :]
    return _LUMA[0] * r + _LUMA[1] * g + _LUMA[2] * b


def _check_pair(a: np.ndarray, b: np.ndarray, mode: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if mode not in ("rgb", "y"):
        raise ValueError("mode must be 'rgb' or 'y'")


def psnr(a: np.ndarray, b: np.ndarray, mode: str = "rgb") -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] images; identical images
    report the 100 dB cap.  Mode 'y' compares BT.601 luma."""
    _check_pair(a, b, mode)
    if mode == "y":
        a, b = rgb_to_y(a), rgb_to_y(b)
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_channel(a: np.ndarray, b: np.ndarray, win: np.ndarray,
                  c1: float, c2: float) -> float:
    k = win.shape[0]
    wa = np.lib.stride_tricks.sliding_window_view(a, (k, k))
    wb = np.lib.stride_tricks.sliding_window_view(b, (k, k))
    mu1 = np.tensordot(wa, win, axes=([2, 3], [0, 1]))
    mu2 = np.tensordot(wb, win, axes=([2, 3], [0, 1]))
    e11 = np.tensordot(wa * wa, win, axes=([2, 3], [0, 1]))
    e22 = np.tensordot(wb * wb, win, axes=([2, 3], [0, 1]))
    e12 = np.tensordot(wa * wb, win, axes=([2, 3], [0, 1]))
    s1 = e11 - mu1 ** 2
    s2 = e22 - mu2 ** 2
    s12 = e12 - mu1 * mu2
    num = (2 * mu1 * mu2 + c1) * (2 * s12 + c2)
    den = (mu1 ** 2 + mu2 ** 2 + c1) * (s1 + s2 + c2)
    return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray, mode: str = "rgb") -> float:
    """Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5),
    K1=0.01, K2=0.03, dynamic range 1.

    Weighted window moments, no sample-covariance correction; the map is
    averaged over valid window positions.  Multichannel 'rgb' averages the
    per-channel scores; 'y' converts to luma first.
    """
    _check_pair(a, b, mode)
    if mode == "y":
        a, b = rgb_to_y(a)[None], rgb_to_y(b)[None]
    a = a.astype(np.float64).reshape(-1, a.shape[-2], a.shape[-1])
    b = b.astype(np.float64).reshape(-1, b.shape[-2], b.shape[-1])
    if a.shape[-2] < 11 or a.shape[-1] < 11:
        raise ValueError("images must be at least 11x11 for SSIM")
    win = _gaussian_window()
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    return float(np.mean([_ssim_channel(a[c], b[c], win, c1, c2)
                          for c in range(a.shape[0])]))
