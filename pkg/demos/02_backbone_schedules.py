"""One backbone, two bookkeepings.

During training the channel-wise U-Net explicitly splits features after each
descending block and concatenates the held channels back on the way up.  At
deployment the same arithmetic runs in place over a single buffer: block i
just reads and writes channels [0, C_i).  The two schedules are not merely
close -- they are bit-identical, because they touch the same values in the
same order.
"""

import numpy as np

from pusr import ModelConfig, build_model, forward, fuse_model
from pusr.model_io import parameter_count

cfg = ModelConfig(stage_channels=(32, 16, 8), scale=4)
model = build_model(cfg, seed=42)

print(f"stages {cfg.stage_channels} -> block widths {cfg.block_widths()}")
print(f"({cfg.stages} stages, {len(model.blocks)} blocks: descend, bottom, ascend)")

x = np.random.default_rng(7).random((1, 3, 48, 48), dtype=np.float32)
y_split = forward(model, x, schedule="split")
y_index = forward(model, x, schedule="index")
print(f"split/concat vs channel-index: bit-identical = "
      f"{np.array_equal(y_split, y_index)}")

fused = fuse_model(model)
y_fused = forward(fused, x)
print(f"training model: {parameter_count(model)} params")
print(f"fused model:    {parameter_count(fused)} params")
print(f"max |train - fused| end to end: {np.abs(y_split - y_fused).max():.3e}")
print(f"output shape: {y_fused.shape} (scale {cfg.scale})")
