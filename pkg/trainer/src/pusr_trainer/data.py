"""Patch sampling from a directory of high-resolution PNGs.

Low-resolution inputs are made on the fly by bicubic-downscaling the sampled
HR patch, the standard degradation for toy SR runs.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import torch
from PIL import Image


class PatchSampler:
    """Draws random (lr, hr) patch batches from the PNGs in a directory."""

    def __init__(self, root, patch: int = 64, scale: int = 2, seed: int = 0):
        if patch % scale != 0:
            raise ValueError("patch size must be a multiple of the scale")
        self.patch = patch
        self.scale = scale
        self.paths = sorted(Path(root).glob("*.png"))
        if not self.paths:
            raise ValueError(f"no PNG images found in {os.fspath(root)!r}")
        self.rng = np.random.default_rng(seed)
        self.images = [np.asarray(Image.open(p).convert("RGB"), dtype=np.uint8)
                       for p in self.paths]
        hr = patch  # HR patch side; LR side is patch // scale
        for p, img in zip(self.paths, self.images):
            if img.shape[0] < hr or img.shape[1] < hr:
                raise ValueError(f"{p} is smaller than the {hr}x{hr} HR patch")

    def sample_pair(self) -> tuple[np.ndarray, np.ndarray]:
        img = self.images[self.rng.integers(len(self.images))]
        hr_side = self.patch
        y = int(self.rng.integers(img.shape[0] - hr_side + 1))
        x = int(self.rng.integers(img.shape[1] - hr_side + 1))
        hr = img[y:y + hr_side, x:x + hr_side]
        lr_side = hr_side // self.scale
        lr = np.asarray(Image.fromarray(hr).resize((lr_side, lr_side),
                                                   Image.BICUBIC))
        return lr, hr

    def batch(self, size: int) -> tuple[torch.Tensor, torch.Tensor]:
        lrs, hrs = zip(*(self.sample_pair() for _ in range(size)))

        def to_tensor(stack):
            arr = np.stack(stack).astype(np.float32) / 255.0
            return torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous()

        return to_tensor(lrs), to_tensor(hrs)


def bicubic_upscale(lr: np.ndarray, scale: int) -> np.ndarray:
    """Bicubic baseline for a (h, w, 3) uint8 image."""
    h, w = lr.shape[:2]
    up = Image.fromarray(lr).resize((w * scale, h * scale), Image.BICUBIC)
    return np.asarray(up, dtype=np.uint8)
