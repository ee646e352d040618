"""Segmentation-map handling: encoding, warping, merging, and cross-entropy.

A fixed 10-label palette stands in for full human-parsing labels while
preserving the semantic groups a garment transfer needs: clothes (to be
replaced), limbs (to be preserved or inpainted), and head/shoes (never
transferred).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .correspondence import CorrespondenceMatrix
from .errors import ShapeError, ValidationError
from .tensor import Tensor, area_downsample, as_array, bilinear_upsample, wrap
from .warping import dense_warp

LABEL_NAMES = ("background", "head", "upper-clothes", "lower-clothes",
               "left-arm", "right-arm", "left-leg", "right-leg",
               "left-shoe", "right-shoe")


@dataclass(frozen=True)
class LabelPalette:
    """Dense label table with the semantic groupings used downstream."""

    names: tuple[str, ...] = LABEL_NAMES
    clothes: frozenset = frozenset({2, 3})
    limbs: frozenset = frozenset({4, 5, 6, 7})
    preserved: frozenset = frozenset({1, 8, 9})

    def __post_init__(self):
        groups = [self.clothes, self.limbs, self.preserved]
        seen = set()
        for g in groups:
            if seen & g:
                raise ValidationError("palette groupings must be disjoint")
            seen |= g
        if any(lbl >= len(self.names) for lbl in seen):
            raise ValidationError("grouping labels outside the palette")

    @property
    def num_labels(self) -> int:
        return len(self.names)


DEFAULT_PALETTE = LabelPalette()


@dataclass(frozen=True)
class SegmentationMap:
    """H×W integer label image over a palette."""

    labels: np.ndarray
    palette: LabelPalette = field(default=DEFAULT_PALETTE)

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 2:
            raise ShapeError("segmentation map must be H×W")
        if arr.size and (arr.min() < 0 or arr.max() >= self.palette.num_labels):
            raise ValidationError("labels outside the palette")
        arr = np.ascontiguousarray(arr.astype(np.uint8))
        arr.flags.writeable = False
        object.__setattr__(self, "labels", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def mask(self, labels) -> np.ndarray:
        """Binary float mask of pixels whose label is in ``labels``."""
        return np.isin(self.labels, list(labels)).astype(np.float64)


def one_hot_encode(seg: SegmentationMap) -> Tensor:
    """H×W×num_labels indicator stack: exactly one 1 per pixel."""
    n = seg.palette.num_labels
    return Tensor(np.eye(n)[seg.labels])


def warp_layout(m: CorrespondenceMatrix, seg: SegmentationMap,
                alpha: float = 100.0, workers: int = 1) -> SegmentationMap:
    """Align a model layout with the target side of a correspondence matrix.

    Head and shoes are not in the transfer list: their channels are removed
    before warping, so their pixels fall back to background.  The one-hot
    channels are warped at the matrix's grid resolution (resampling in/out
    when the map is larger) and re-discretized by per-pixel argmax with ties
    going to the lowest label.
    """
    if m.grid_b is None or m.grid_a is None:
        raise ValidationError("matrix lacks grid metadata for layout warping")
    channels = one_hot_encode(seg).data.copy()
    for lbl in sorted(seg.palette.preserved):
        channels[:, :, lbl] = 0.0
    h, w = seg.shape
    gh, gw = m.grid_b
    if (h, w) == (gh, gw):
        soft = as_array(dense_warp(m, channels, alpha, workers))
    else:
        if h % gh or w % gw or (h // gh) != (w // gw):
            raise ShapeError(f"layout {seg.shape} incompatible with grid {m.grid_b}")
        factor = h // gh
        small = area_downsample(channels, factor)
        warped = dense_warp(m, small, alpha, workers)
        soft = as_array(bilinear_upsample(warped, factor))
    labels = np.argmax(soft, axis=2)    # np.argmax takes the first (lowest) max
    return SegmentationMap(labels.astype(np.uint8), seg.palette)


def merge_layout(pred: SegmentationMap, target_preserved: SegmentationMap) -> SegmentationMap:
    """Overlay the target's preserved regions (head/shoes) onto a prediction."""
    if pred.shape != target_preserved.shape:
        raise ShapeError("layout dimensions differ")
    keep = np.isin(target_preserved.labels,
                   list(target_preserved.palette.preserved))
    out = pred.labels.copy()
    out[keep] = target_preserved.labels[keep]
    return SegmentationMap(out, pred.palette)


def cross_entropy_loss(logits, truth: SegmentationMap):
    """Mean pixel negative log-likelihood under row softmax of the logits.

    Stable log-sum-exp; uniform logits over n labels score exactly ln(n).
    """
    la = as_array(logits)
    lv = ad.value_of(la)
    if lv.ndim != 3:
        raise ShapeError("logits must be H×W×num_labels")
    if lv.shape[:2] != truth.shape or lv.shape[2] != truth.palette.num_labels:
        raise ShapeError(
            f"logits {lv.shape} inconsistent with truth {truth.shape}")
    m = ad.amax(la, axis=2, keepdims=True)
    lse = ad.log(ad.summ(ad.exp(la - m), axis=2, keepdims=True)) + m
    onehot = one_hot_encode(truth).data
    picked = ad.summ(la * onehot, axis=2, keepdims=True)
    loss = ad.mean(lse - picked)
    return loss if isinstance(loss, ad.Traced) else float(loss)
