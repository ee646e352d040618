"""Geometric warping and loss toolkit for garment transfer.

Core pieces: distance-field pose encodings, dense correspondence matching
and softmax warping, thin-plate-spline fitting with a lattice-regularity
penalty, segmentation-layout manipulation, attention fusion, the training
losses, SSIM/inception-score metrics, and a finite-difference oracle that
verifies every differentiable operator.
"""

from .autodiff import GradientTape, Traced
from .config import PipelineConfig
from .correspondence import (AggregatedFeatures, CorrespondenceMatrix,
                             FeatureMap, aggregate_features,
                             correspondence_matrix, encode_features)
from .errors import (NumericalError, ShapeError, StageError, TensorFileError,
                     TpsFitError, ValidationError, WindowError)
from .fusion import (AttentionMask, attention_regularizer, extract_nontarget,
                     fuse_attention, masked_clothes)
from .gradcheck import GradientCheckReport, fd_check_gradient
from .layout import (DEFAULT_PALETTE, LabelPalette, SegmentationMap,
                     cross_entropy_loss, merge_layout, one_hot_encode,
                     warp_layout)
from .losses import (FeaturePyramid, LossWeights, adversarial_loss,
                     contextual_loss, gram_matrix, l1_loss, perceptual_loss,
                     style_loss, total_loss, weighted_total)
from .metrics import inception_score, masked_ssim, ssim, ssim_map
from .pipeline import PipelineResult, run_pipeline
from .pose import (JOINT_NAMES, DistanceField, Joint, KeypointSet,
                   confidence_map, distance_fields)
from .tensor import (Tensor, WindowSpec, area_downsample, bilinear_sample,
                     bilinear_upsample, softmax_rows, unfold)
from .warping import (ControlGrid, TpsTransform, dense_warp, dense_warp_image,
                      second_order_constraint, soft_argmax_control_points,
                      tps_apply, tps_fit, tps_loss, uniform_lattice)

__version__ = "0.1.0"

__all__ = [
    "AggregatedFeatures", "AttentionMask", "ControlGrid",
    "CorrespondenceMatrix", "DEFAULT_PALETTE", "DistanceField", "FeatureMap",
    "FeaturePyramid", "GradientCheckReport", "GradientTape", "JOINT_NAMES",
    "Joint", "KeypointSet", "LabelPalette", "LossWeights", "NumericalError",
    "PipelineConfig", "PipelineResult", "SegmentationMap", "ShapeError",
    "StageError", "Tensor", "TensorFileError", "TpsFitError", "TpsTransform",
    "Traced", "ValidationError", "WindowError", "WindowSpec",
    "adversarial_loss", "aggregate_features", "area_downsample",
    "attention_regularizer", "bilinear_sample", "bilinear_upsample",
    "confidence_map", "contextual_loss", "correspondence_matrix",
    "cross_entropy_loss", "dense_warp", "dense_warp_image", "distance_fields",
    "encode_features", "extract_nontarget", "fd_check_gradient",
    "fuse_attention", "gram_matrix", "inception_score", "l1_loss",
    "masked_clothes", "masked_ssim", "merge_layout", "one_hot_encode",
    "perceptual_loss", "run_pipeline", "second_order_constraint", "ssim",
    "ssim_map", "softmax_rows", "soft_argmax_control_points", "style_loss",
    "total_loss", "tps_apply", "tps_fit", "tps_loss", "unfold",
    "uniform_lattice", "warp_layout", "weighted_total",
]
