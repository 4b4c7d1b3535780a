"""Toy-scale trainer producing PUSR checkpoints the inference engine loads
without remapping."""

from .data import PatchSampler, bicubic_upscale
from .export import export_checkpoint, model_config_dict, named_tensors
from .model import LIA, HBlock, PlainSRNet, RepMBConv, VARIANTS, softpool2d
from .train import TrainConfig, TrainResult, build_net, train

__version__ = "0.1.0"
