"""pusr: a plain-convolution super-resolution engine.

Training-time models are built from fusable MBConv blocks, local
importance-based attention, and a channel-wise U-Net backbone; for
deployment every block collapses in closed form to a single convolution and
the backbone runs in place over one feature buffer.  The PUSR checkpoint
format carries both forms.
"""

from .backbone import (FUSED, TRAINING, HBlock, LIAConfig, ModelConfig,
                       SRModel, VARIANTS, build_model, forward, forward_fused,
                       forward_train, fuse_model)
from .bench import bench
from .lia import LIAParams, apply_lia, lia_modulators, lia_variant, local_importance
from .metrics import ProfileReport, profile, psnr, rgb_to_y, ssim
from .model_io import (CheckpointError, CheckpointFormatError,
                       TensorMismatchError, TensorOverlapError,
                       TruncatedFileError, UnsupportedVersionError, load,
                       named_tensors, parameter_count, save)
from .reparam import (RepMBConvParams, fuse, identity_kernel,
                      merge_kxk_into_pointwise, merge_pointwise_into_kxk,
                      se_vector)
from .tensor import (ConvParams, Tensor4, add, bilinear_resize, conv2d, gelu,
                     maxpool2d, pixel_shuffle, pixel_unshuffle, relu,
                     scale_channels, sigmoid, slice_channels, softpool2d,
                     write_channels)

__version__ = "0.1.0"
