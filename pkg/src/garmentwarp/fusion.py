"""Dynamic-fusion arithmetic: masking, body extraction, attention compositing.

The generator that would produce the initial synthesis and the attention mask
is out of scope; these operators take its outputs (or constants) and perform
the exact compositing math.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ShapeError, ValidationError
from .layout import SegmentationMap
from .tensor import Tensor, as_array, wrap


@dataclass(frozen=True)
class AttentionMask:
    """Soft H×W blending mask; values are clamped into [0, 1] on construction."""

    tensor: Tensor

    def __post_init__(self):
        arr = np.asarray(as_array(self.tensor))
        if arr.ndim != 2:
            raise ShapeError("attention mask must be H×W")
        object.__setattr__(self, "tensor", Tensor(np.clip(arr, 0.0, 1.0)))

    @property
    def shape(self):
        return self.tensor.dims

    @classmethod
    def constant(cls, value: float, shape) -> "AttentionMask":
        return cls(Tensor(np.full(shape, float(value))))


def _mask_values(mask):
    if isinstance(mask, AttentionMask):
        return mask.tensor.data
    return as_array(mask)


def masked_clothes(warped, clothing_mask):
    """Per-channel product with a binary clothing mask."""
    wa = as_array(warped)
    ma = _mask_values(clothing_mask)
    mv = ad.value_of(ma)
    if mv.size and not np.all((mv == 0.0) | (mv == 1.0)):
        raise ValidationError("clothing mask must be binary")
    wv = ad.value_of(wa)
    if wv.shape[:2] != mv.shape:
        raise ShapeError(f"mask {mv.shape} does not cover image {wv.shape}")
    m = ad.reshape(ma, mv.shape + (1,)) if wv.ndim == 3 else ma
    return wrap(wa * m)


def extract_nontarget(body, layout: SegmentationMap):
    """Keep body pixels outside the predicted clothes.

    Pixels labeled as preserved parts (head/shoes) or limbs survive; clothes
    and background go to zero.
    """
    ba = as_array(body)
    bv = ad.value_of(ba)
    if bv.shape[:2] != layout.shape:
        raise ShapeError(f"layout {layout.shape} does not cover body {bv.shape}")
    keep_labels = layout.palette.preserved | layout.palette.limbs
    keep = layout.mask(keep_labels)
    m = ad.reshape(keep, keep.shape + (1,)) if bv.ndim == 3 else keep
    return wrap(ba * m)


def fuse_attention(tps, generated, mask):
    """Convex per-pixel blend: tps ⊙ M + generated ⊙ (1 − M).

    The mask broadcasts across channels; M = 1 returns the TPS warp
    bit-exactly, M = 0 the generated image.
    """
    ta, ga = as_array(tps), as_array(generated)
    ma = _mask_values(mask)
    tv, gv, mv = ad.value_of(ta), ad.value_of(ga), ad.value_of(ma)
    if tv.shape != gv.shape:
        raise ShapeError(f"inputs differ: {tv.shape} vs {gv.shape}")
    if mv.shape != tv.shape[:2]:
        raise ShapeError(f"mask {mv.shape} does not match images {tv.shape}")
    if mv.size and (mv.min() < 0.0 or mv.max() > 1.0):
        raise ValidationError("attention mask values must lie in [0, 1]")
    m = ad.reshape(ma, mv.shape + (1,)) if tv.ndim == 3 else ma
    return wrap(ta * m + ga * (1.0 - m))


def attention_regularizer(mask):
    """Mean |1 − M|: pulls the mask toward trusting the TPS branch."""
    ma = _mask_values(mask)
    out = ad.mean(ad.absolute(1.0 - ma))
    return out if isinstance(out, ad.Traced) else float(out)
