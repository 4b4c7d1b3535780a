"""Footprint of every variant, at a 256x256 input.

Parameter, multiply-accumulate, and activation counts for the fused
(deployment) form of each preset, plus the attention-free ablation of the
base variant.  MACs count convolution multiplies only; activations count
convolution output elements only.
"""

from pusr import ModelConfig, VARIANTS, build_model, fuse_model
from pusr.metrics import profile

H = W = 256

print(f"{'variant':>8} {'stages':>14} {'params':>10} {'MACs':>10} {'acts':>10}")
for name in "UTSMBL":
    cfg = ModelConfig.for_variant(name, scale=4)
    rep = profile(fuse_model(build_model(cfg, seed=0)), H, W)
    print(f"{name:>8} {str(cfg.stage_channels):>14} {rep.params:>10,} "
          f"{rep.macs / 1e9:>9.2f}G {rep.activations / 1e6:>9.2f}M")

cfg = ModelConfig.for_variant("B", scale=4, use_attention=False)
rep = profile(fuse_model(build_model(cfg, seed=0)), H, W)
print(f"{'B (noatt)':>8} {str(cfg.stage_channels):>14} {rep.params:>10,} "
      f"{rep.macs / 1e9:>9.2f}G {rep.activations / 1e6:>9.2f}M")

print("\nper-layer breakdown of variant U (fused):")
cfg = ModelConfig.for_variant("U", scale=4)
rep = profile(fuse_model(build_model(cfg, seed=0)), H, W)
for layer in rep.per_layer:
    print(f"  {layer.name:<24} params {layer.params:>7,}  "
          f"MACs {layer.macs / 1e6:>9.1f}M  out {layer.output_shape}")
