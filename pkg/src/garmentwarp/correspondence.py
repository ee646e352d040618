"""Feature extraction stand-in and dense correspondence matrices.

The trained feature extractors of a full garment-transfer network are out of
scope here; instead a fixed-weight convolutional encoder with seeded
pseudo-random weights produces deterministic features.  Both encoders of a
pipeline share per-channel weight streams (see :func:`encode_features`), so
two inputs that agree on their shared channels produce strongly correlated
features — that is what makes self-transfer saturate towards the identity
correspondence.

Correlation of aggregated feature columns is mean-centered cosine similarity,
computed against the mean feature of each side over spatial positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ShapeError, ValidationError
from .parallel import run_blocks
from .tensor import Tensor, WindowSpec, as_array, unfold

ENCODER_STAGES = ((3, 2, 1, 32), (3, 2, 1, 64))   # (size, stride, pad, out channels)
_STAGE_GAINS = (0.15, 0.10)
CORRELATION_EPS = 1e-8
_ROW_BLOCK = 64


@dataclass(frozen=True)
class FeatureMap:
    """Encoder output at quarter resolution with its provenance."""

    tensor: Tensor                 # (h, w, C)
    image_shape: tuple[int, int]   # (H, W) of the encoded input
    source: str = ""
    seed: int = 0

    @property
    def grid(self) -> tuple[int, int]:
        return self.tensor.dims[0], self.tensor.dims[1]


@dataclass(frozen=True)
class AggregatedFeatures:
    """Unfolded feature columns plus the geometry needed for matrix metadata."""

    tensor: Tensor                 # (N, size²·C)
    grid: tuple[int, int]          # unfold output grid (gh, gw)
    window: WindowSpec
    feature_shape: tuple[int, int]
    image_shape: tuple[int, int]


def _stage_weights(seed: int, stage: int, slots, rows_per_slot: int,
                   out_channels: int, gain: float) -> np.ndarray:
    """Per-input-slot weight blocks from independent seeded substreams.

    Drawing each input channel's block from ``PCG64([seed, stage, slot])``
    makes encoders with different channel counts share weights wherever their
    slot assignments overlap; only the seed and the slot index matter.
    """
    blocks = []
    for slot in slots:
        rng = np.random.default_rng([seed, stage, slot])
        blocks.append(rng.normal(0.0, gain, size=(rows_per_slot, out_channels)))
    return np.concatenate(blocks, axis=0)


def _conv_stage(x: np.ndarray, seed: int, stage: int, slot_offset: int,
                spec_tuple) -> np.ndarray:
    size, stride, pad, out_channels = spec_tuple
    h, w, k = x.shape
    window = WindowSpec(size, stride, pad)
    cols = unfold(Tensor(x), window).data            # (N, size²·k), channels innermost
    gh, gw = window.grid_shape(h, w)
    # unfold rows order cell-major/channel-minor; weights must match: build
    # per-slot blocks of shape (size², C) then interleave to channel-minor.
    per_slot = _stage_weights(seed, stage, range(slot_offset, slot_offset + k),
                              size * size, out_channels, _STAGE_GAINS[stage])
    weights = (per_slot.reshape(k, size * size, out_channels)
               .transpose(1, 0, 2).reshape(size * size * k, out_channels))
    return np.tanh(cols @ weights).reshape(gh, gw, out_channels)


def encode_features(inputs, seed: int, slot_offset: int = 0,
                    source: str = "") -> FeatureMap:
    """Deterministic fixed-weight conv encoder: two stride-2 stages to H/4, C=64.

    Weights come from numpy's PCG64 seeded per (seed, stage, input slot), and
    tanh bounds every activation.  ``slot_offset`` shifts which weight streams
    the input channels use: a 21-channel encoder at offset 0 and an 18-channel
    encoder at offset 3 apply identical weights to the 18 shared channels.
    Identical (inputs, seed, slot_offset) give bit-identical features.
    """
    arr = as_array(inputs)
    if arr.ndim != 3:
        raise ShapeError("encode_features expects an H×W×K tensor")
    h, w, _ = arr.shape
    if h % 4 or w % 4:
        raise ShapeError(f"input extents {h}x{w} must be divisible by 4")
    stage1 = _conv_stage(np.asarray(arr, dtype=np.float64), seed, 0,
                         slot_offset, ENCODER_STAGES[0])
    stage2 = _conv_stage(stage1, seed, 1, 0, ENCODER_STAGES[1])
    return FeatureMap(Tensor(stage2), (h, w), source=source, seed=seed)


def encoder_pyramid(inputs, seed: int, slot_offset: int = 0) -> list[Tensor]:
    """Input plus both encoder stage activations (used as loss features)."""
    arr = np.asarray(as_array(inputs), dtype=np.float64)
    stage1 = _conv_stage(arr, seed, 0, slot_offset, ENCODER_STAGES[0])
    stage2 = _conv_stage(stage1, seed, 1, 0, ENCODER_STAGES[1])
    return [Tensor(arr), Tensor(stage1), Tensor(stage2)]


def aggregate_features(features: FeatureMap, window: WindowSpec) -> AggregatedFeatures:
    """Unfold the feature map and keep the window for matrix metadata."""
    h, w = features.grid
    grid = window.grid_shape(h, w)
    cols = unfold(features.tensor, window)
    return AggregatedFeatures(cols, grid, window, (h, w), features.image_shape)


@dataclass(frozen=True)
class CorrespondenceMatrix:
    """Mean-centered cosine correlations between two aggregated feature sets.

    In pipeline use rows index target-image positions and columns index
    source (model) positions; ``grid_*``/``window_*`` describe the unfold
    geometry of each side.  Entries lie in [-1, 1] up to rounding.
    """

    tensor: Tensor
    grid_a: Optional[tuple[int, int]] = None
    grid_b: Optional[tuple[int, int]] = None
    window_a: Optional[WindowSpec] = None
    window_b: Optional[WindowSpec] = None
    image_shape_a: Optional[tuple[int, int]] = None
    image_shape_b: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if self.tensor.ndim != 2:
            raise ShapeError("correspondence matrix must be rank 2")
        data = self.tensor.data
        if data.size and (data.min() < -1.0 - 1e-6 or data.max() > 1.0 + 1e-6):
            raise ValidationError("correlation entries outside [-1, 1] tolerance")
        for grid, n in ((self.grid_a, data.shape[0]), (self.grid_b, data.shape[1])):
            if grid is not None and grid[0] * grid[1] != n:
                raise ValidationError(
                    f"grid metadata {grid} inconsistent with matrix extent {n}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.tensor.dims


def correspondence_matrix(a, b, workers: int = 1) -> CorrespondenceMatrix:
    """Normalized correlation of every a-column against every b-column.

    Both sides are centered by their own mean over positions; entry (i, j) is
    the cosine of the centered rows with 1e-8 added to the denominator so
    constant features report ~0 instead of NaN.
    """
    a_agg = a if isinstance(a, AggregatedFeatures) else None
    b_agg = b if isinstance(b, AggregatedFeatures) else None
    am = np.asarray(as_array(a_agg.tensor if a_agg else a), dtype=np.float64)
    bm = np.asarray(as_array(b_agg.tensor if b_agg else b), dtype=np.float64)
    if am.ndim != 2 or bm.ndim != 2:
        raise ShapeError("aggregated features must be rank 2")
    if am.shape[1] != bm.shape[1]:
        raise ShapeError(
            f"feature depth mismatch: {am.shape[1]} vs {bm.shape[1]}")
    ac = am - am.mean(axis=0)
    bc = bm - bm.mean(axis=0)
    na = np.sqrt(np.sum(ac * ac, axis=1))
    nb = np.sqrt(np.sum(bc * bc, axis=1))
    bt = np.ascontiguousarray(bc.T)
    out = np.empty((am.shape[0], bm.shape[0]))

    def fill(start, stop):
        out[start:stop] = (ac[start:stop] @ bt) / (
            np.outer(na[start:stop], nb) + CORRELATION_EPS)

    run_blocks(am.shape[0], _ROW_BLOCK, fill, workers)
    meta = {}
    if a_agg is not None:
        meta.update(grid_a=a_agg.grid, window_a=a_agg.window,
                    image_shape_a=a_agg.image_shape)
    if b_agg is not None:
        meta.update(grid_b=b_agg.grid, window_b=b_agg.window,
                    image_shape_b=b_agg.image_shape)
    return CorrespondenceMatrix(Tensor(out), **meta)
