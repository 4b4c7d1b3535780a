"""What the local importance attention actually computes.

The attention weighs each pixel by two cheap single-channel maps: a local
importance measured on a 4x-downscaled copy (softpool + two small convs,
sigmoid, bilinear upsample) and a gate taken from the input's first channel.
Both maps live in (0, 1), so attention can only attenuate.  The variant
ladder below degrades the mechanism piece by piece: I strips everything,
II keeps the gate, III keeps the importance, IV swaps softpool for maxpool,
V swaps the sigmoid/upsample order, VI is the full form.
"""

import numpy as np

from pusr import ConvParams
from pusr.lia import LIAParams, VARIANTS, lia_modulators, lia_variant

rng = np.random.default_rng(3)
C = 8

# A feature map with structure: a bright block on noise.
x = (rng.random((1, C, 32, 32)) * 0.2).astype(np.float32)
x[:, :, 8:20, 10:24] += 1.5

sn = lambda *shape: (rng.standard_normal(shape) * 0.4).astype(np.float32)
params = LIAParams(
    conv_a=ConvParams(sn(C // 4, C, 3, 3), sn(C // 4), stride=2),
    conv_b=ConvParams(sn(1, C // 4, 3, 3), sn(1)))

gate, importance = lia_modulators(x, params)
print(f"input {x.shape} -> gate {gate.shape}, importance {importance.shape}")
print(f"gate range        [{gate.min():.3f}, {gate.max():.3f}]")
print(f"importance range  [{importance.min():.3f}, {importance.max():.3f}]")

inside = importance[0, 0, 8:20, 10:24].mean()
outside = (importance[0, 0].sum() - importance[0, 0, 8:20, 10:24].sum()) \
    / (32 * 32 - 12 * 14)
print(f"mean importance inside bright block {inside:.3f} vs outside {outside:.3f}")

print("\nvariant ladder (mean |output| as a fraction of mean |input|):")
ref = np.abs(x).mean()
for v in VARIANTS:
    out = lia_variant(x, params, v)
    print(f"  {v:>3}: {np.abs(out).mean() / ref:.3f}")
