"""Keypoint pose encodings: confidence maps and normalized distance fields.

A pose is 18 joints in a fixed order.  Each present joint marks a single
rounded pixel; its distance-field channel stores the Euclidean distance of
every pixel to that mark, divided by the image diagonal so values stay in
[0, 1] at any resolution.  Channels of missing joints are the max-distance
sentinel 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import ValidationError
from .parallel import run_blocks
from .tensor import Tensor

JOINT_NAMES = (
    "nose", "neck", "r-shoulder", "r-elbow", "r-wrist",
    "l-shoulder", "l-elbow", "l-wrist", "r-hip", "r-knee",
    "r-ankle", "l-hip", "l-knee", "l-ankle", "r-eye",
    "l-eye", "r-ear", "l-ear",
)
NUM_JOINTS = len(JOINT_NAMES)


class Joint(NamedTuple):
    x: float
    y: float
    confidence: float = 1.0


@dataclass(frozen=True)
class KeypointSet:
    """18-joint annotation for one image; ``None`` marks a missing joint."""

    width: int
    height: int
    joints: tuple[Optional[Joint], ...]

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValidationError("image extents must be positive")
        if len(self.joints) != NUM_JOINTS:
            raise ValidationError(
                f"expected {NUM_JOINTS} joints, got {len(self.joints)}")
        for name, joint in zip(JOINT_NAMES, self.joints):
            if joint is None:
                continue
            if not (0 <= joint.x < self.width and 0 <= joint.y < self.height):
                raise ValidationError(
                    f"joint {name!r} at ({joint.x}, {joint.y}) lies outside "
                    f"{self.width}x{self.height}")
            if not (0.0 <= joint.confidence <= 1.0):
                raise ValidationError(f"joint {name!r} confidence not in [0, 1]")

    @classmethod
    def from_joints(cls, width, height, joints: Sequence):
        """Build from (x, y[, c]) tuples or ``None`` entries."""
        packed = tuple(None if j is None else Joint(*j) for j in joints)
        return cls(int(width), int(height), packed)


@dataclass(frozen=True)
class DistanceField:
    """Normalized per-joint distance encoding, H×W×18 in [0, 1]."""

    field: Tensor
    present: tuple[bool, ...]

    def __post_init__(self):
        if self.field.ndim != 3 or self.field.dims[2] != NUM_JOINTS:
            raise ValidationError("distance field must be H×W×18")
        if len(self.present) != NUM_JOINTS:
            raise ValidationError("presence flags must cover all 18 joints")


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def joint_pixel(joint: Joint, width: int, height: int) -> tuple[int, int]:
    """Rounded (row, col) pixel of a joint, clamped into the image."""
    col = min(max(_round_half_up(joint.x), 0), width - 1)
    row = min(max(_round_half_up(joint.y), 0), height - 1)
    return row, col


def confidence_map(keypoints: KeypointSet) -> Tensor:
    """Binary H×W×18 maps: one 1 at each present joint's rounded pixel."""
    h, w = keypoints.height, keypoints.width
    maps = np.zeros((h, w, NUM_JOINTS))
    for ch, joint in enumerate(keypoints.joints):
        if joint is None:
            continue
        row, col = joint_pixel(joint, w, h)
        maps[row, col, ch] = 1.0
    return Tensor(maps)


def distance_fields(keypoints: KeypointSet, workers: int = 1) -> DistanceField:
    """Per-joint Euclidean distance to the joint mark, / image diagonal.

    Exact per-pixel scan (the mark is a single pixel, so no transform tricks
    are needed); missing joints yield a constant-1 channel.
    """
    h, w = keypoints.height, keypoints.width
    diagonal = math.sqrt(w * w + h * h)
    rows = np.arange(h, dtype=np.float64)[:, None]
    cols = np.arange(w, dtype=np.float64)[None, :]
    out = np.empty((h, w, NUM_JOINTS))

    def fill(start, stop):
        for ch in range(start, stop):
            joint = keypoints.joints[ch]
            if joint is None:
                out[:, :, ch] = 1.0
                continue
            jr, jc = joint_pixel(joint, w, h)
            out[:, :, ch] = np.sqrt((rows - jr) ** 2 + (cols - jc) ** 2) / diagonal

    run_blocks(NUM_JOINTS, 1, fill, workers)
    present = tuple(j is not None for j in keypoints.joints)
    return DistanceField(Tensor(out), present)
