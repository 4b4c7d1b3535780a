"""Checkpoint lifecycle: build, save, fuse, infer, measure.

Writes a random training-form checkpoint, fuses it to the deployment form,
upscales a synthetic PNG with both the library API and the metric pair
(PSNR/SSIM) against a plain bilinear upscale of the same input.  A random
model won't beat bilinear -- the point is the plumbing: the checkpoint
round-trips byte-exactly and the fused model is the one you'd ship.
"""

import os
import tempfile

import numpy as np

from pusr import (ModelConfig, bilinear_resize, build_model, forward_fused,
                  fuse_model, psnr, ssim)
from pusr.image import load_png, save_png
from pusr.model_io import load, save

workdir = tempfile.mkdtemp(prefix="pusr-demo-")
scale = 2

# A synthetic test card: gradients, a grid, a disc.
h = w = 48
yy, xx = np.mgrid[0:h, 0:w] / h
img = np.stack([yy, xx, 0.5 * (yy + xx)]).astype(np.float32)
img[:, ::8, :] = 1.0
img[:, :, ::8] = 0.0
img[0][(yy - 0.5) ** 2 + (xx - 0.5) ** 2 < 0.05] = 1.0
src = os.path.join(workdir, "input.png")
save_png(img, src)

cfg = ModelConfig.for_variant("U", scale=scale)
ckpt = os.path.join(workdir, "model.pusr")
save(build_model(cfg, seed=0), ckpt)
print(f"wrote training checkpoint {ckpt} ({os.path.getsize(ckpt)} bytes)")

model = fuse_model(load(ckpt))
fused_ckpt = os.path.join(workdir, "model-fused.pusr")
save(model, fused_ckpt)
print(f"wrote fused checkpoint    {fused_ckpt} ({os.path.getsize(fused_ckpt)} bytes)")

x = load_png(src)
sr = forward_fused(model, x[None])[0]
out = os.path.join(workdir, "output.png")
save_png(sr, out)
print(f"{x.shape[1]}x{x.shape[2]} -> {sr.shape[1]}x{sr.shape[2]} saved to {out}")

reference = bilinear_resize(x[None], h * scale, w * scale)[0]
sr_clipped = np.clip(sr, 0.0, 1.0)
print(f"\nagainst the bilinear upscale of the input:")
print(f"  PSNR {psnr(reference, sr_clipped):6.2f} dB   "
      f"SSIM {ssim(reference, sr_clipped):.4f}")
print("(random weights; train the model before expecting fidelity)")
