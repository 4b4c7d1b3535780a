"""PNG in, PNG out.

Images cross the API boundary as (3, h, w) float arrays in [0, 1].  Export
clamps to [0, 1] and rounds half away from zero to 8-bit, a convention fixed
here so golden-image comparisons are stable.
"""

from __future__ import annotations

import numpy as np
from PIL import Image


def load_png(path, dtype=np.float32) -> np.ndarray:
    """Read any PNG as a (3, h, w) array in [0, 1]; non-RGB inputs are
    converted."""
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        arr = np.asarray(rgb, dtype=dtype) / dtype(255.0)
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and quantize; ties round away from zero."""
    clipped = np.clip(img, 0.0, 1.0)
    return np.floor(clipped * 255.0 + 0.5).astype(np.uint8)


def save_png(img: np.ndarray, path) -> None:
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError("expected a (3, h, w) image")
    Image.fromarray(to_uint8(img).transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def reflect_pad_to(img: np.ndarray, min_h: int, min_w: int) -> np.ndarray:
    """Reflect-pad a (3, h, w) image up to at least (min_h, min_w)."""
    _, h, w = img.shape
    ph, pw = max(0, min_h - h), max(0, min_w - w)
    if ph == 0 and pw == 0:
        return img
    # Reflection needs pad < dim; tile in steps for very small images.
    out = img
    while ph > 0 or pw > 0:
        step_h = min(ph, out.shape[1] - 1)
        step_w = min(pw, out.shape[2] - 1)
        out = np.pad(out, ((0, 0), (0, step_h), (0, step_w)), mode="reflect")
        ph -= step_h
        pw -= step_w
    return out
