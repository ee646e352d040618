"""Bundled synthetic fixtures: procedural figures with colored garments.

Two kinds ship with the package.  The *smoke* pair is a stylized person in
two poses with patterned garments; it exercises every pipeline stage.  The
*identity* pair is a self-transfer case built for warp-fidelity checks: model
and target are the same "garment sheet" whose image is an exactly bilinear
color gradient, so the feature-resolution round trip (area downsample,
bilinear upsample) reproduces it exactly and any residual Warp-SSIM loss is
attributable to the warp itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import io as gio
from .errors import ValidationError
from .layout import DEFAULT_PALETTE, SegmentationMap
from .pose import KeypointSet
from .tensor import Tensor


@dataclass(frozen=True)
class FixturePair:
    model_image: Tensor
    model_keypoints: KeypointSet
    model_layout: SegmentationMap
    target_keypoints: KeypointSet
    target_body: Tensor
    target_preserved: SegmentationMap
    gt_clothes: Optional[Tensor] = None


def _scaled_joints(size: int, dx: float = 0.0):
    """Keypoints of the canonical standing figure, in the fixed joint order."""
    pts = {
        "nose": (0.50, 0.12), "neck": (0.50, 0.22),
        "r-shoulder": (0.35, 0.24), "r-elbow": (0.28, 0.38), "r-wrist": (0.28, 0.50),
        "l-shoulder": (0.65, 0.24), "l-elbow": (0.72, 0.38), "l-wrist": (0.72, 0.50),
        "r-hip": (0.42, 0.56), "r-knee": (0.42, 0.74), "r-ankle": (0.42, 0.89),
        "l-hip": (0.58, 0.56), "l-knee": (0.58, 0.74), "l-ankle": (0.58, 0.89),
        "r-eye": (0.47, 0.10), "l-eye": (0.53, 0.10),
        "r-ear": (0.44, 0.13), "l-ear": (0.56, 0.13),
    }
    joints = []
    from .pose import JOINT_NAMES
    for name in JOINT_NAMES:
        x, y = pts[name]
        px = min(max(x * size + dx, 0.0), size - 1.0)
        joints.append((px, y * size, 1.0))
    return KeypointSet.from_joints(size, size, joints)


def _figure_layout(size: int, dx: int = 0) -> SegmentationMap:
    labels = np.zeros((size, size), dtype=np.uint8)

    def rect(x0, x1, y0, y1, label):
        c0, c1 = int(x0 * size) + dx, int(x1 * size) + dx
        r0, r1 = int(y0 * size), int(y1 * size)
        labels[max(r0, 0):r1, max(c0, 0):min(c1, size)] = label

    rect(0.24, 0.34, 0.24, 0.52, 4)      # left arm (viewer left)
    rect(0.66, 0.76, 0.24, 0.52, 5)      # right arm
    rect(0.38, 0.48, 0.72, 0.90, 6)      # left leg
    rect(0.52, 0.62, 0.72, 0.90, 7)      # right leg
    rect(0.36, 0.50, 0.90, 0.96, 8)      # left shoe
    rect(0.50, 0.64, 0.90, 0.96, 9)      # right shoe
    rect(0.34, 0.66, 0.22, 0.56, 2)      # upper clothes
    rect(0.36, 0.64, 0.56, 0.72, 3)      # lower clothes

    # head disc
    cy, cx, radius = 0.13 * size, 0.5 * size + dx, 0.085 * size
    rows, cols = np.ogrid[:size, :size]
    labels[(rows - cy) ** 2 + (cols - cx) ** 2 <= radius ** 2] = 1
    return SegmentationMap(labels, DEFAULT_PALETTE)


def _figure_image(layout: SegmentationMap, size: int) -> Tensor:
    img = np.zeros((size, size, 3))
    lab = layout.labels
    skin = (0.85, 0.70, 0.58)
    for label in (1, 4, 5, 6, 7):
        img[lab == label] = skin
    img[np.isin(lab, (8, 9))] = (0.25, 0.15, 0.08)

    rows = np.arange(size)[:, None] * np.ones((1, size))
    upper = lab == 2
    # striped jersey: smooth enough to survive resampling, patterned enough
    # to make misalignment visible
    stripe = 0.5 + 0.5 * np.sin(rows * (2 * np.pi / 16.0))
    img[..., 0] = np.where(upper, 0.15 + 0.25 * stripe, img[..., 0])
    img[..., 1] = np.where(upper, 0.25 + 0.20 * stripe, img[..., 1])
    img[..., 2] = np.where(upper, 0.70 - 0.20 * stripe, img[..., 2])
    lower = lab == 3
    img[..., 0] = np.where(lower, 0.15, img[..., 0])
    img[..., 1] = np.where(lower, 0.50, img[..., 1])
    img[..., 2] = np.where(lower, 0.25, img[..., 2])
    return Tensor(img)


def _preserved_only(layout: SegmentationMap) -> SegmentationMap:
    keep = np.isin(layout.labels, list(layout.palette.preserved))
    return SegmentationMap(np.where(keep, layout.labels, 0).astype(np.uint8),
                           layout.palette)


def _check_size(size: int):
    if size < 32 or size % 16:
        raise ValidationError("fixture size must be a multiple of 16, >= 32")


def smoke_fixture(size: int = 64) -> FixturePair:
    """Two different figures: model garments transfer onto a shifted target."""
    _check_size(size)
    shift = max(2, size // 32)
    model_layout = _figure_layout(size)
    target_layout = _figure_layout(size, dx=shift)
    model_image = _figure_image(model_layout, size)
    target_image = _figure_image(target_layout, size)
    clothes_mask = target_layout.mask(target_layout.palette.clothes)
    gt = Tensor(target_image.data * clothes_mask[:, :, None])
    return FixturePair(
        model_image=model_image,
        model_keypoints=_scaled_joints(size),
        model_layout=model_layout,
        target_keypoints=_scaled_joints(size, dx=float(shift)),
        target_body=target_image,
        target_preserved=_preserved_only(target_layout),
        gt_clothes=gt,
    )


def identity_fixture(size: int = 64) -> FixturePair:
    """Self-transfer pair on a bilinear-gradient garment sheet.

    The whole frame is upper-clothes, so the clothes image has no mask edge
    and the grid-resolution round trip is exact; a perfect warp therefore
    reproduces the model clothes almost everywhere.
    """
    _check_size(size)
    rows = np.arange(size, dtype=np.float64)[:, None] / (size - 1.0)
    cols = np.arange(size, dtype=np.float64)[None, :] / (size - 1.0)
    img = np.stack([
        0.25 + 0.5 * cols * np.ones_like(rows),
        0.30 + 0.4 * rows * np.ones_like(cols),
        0.75 - 0.3 * rows * cols,
    ], axis=2)
    image = Tensor(img)
    layout = SegmentationMap(np.full((size, size), 2, dtype=np.uint8),
                             DEFAULT_PALETTE)
    keypoints = _scaled_joints(size)
    empty = SegmentationMap(np.zeros((size, size), dtype=np.uint8), DEFAULT_PALETTE)
    return FixturePair(
        model_image=image,
        model_keypoints=keypoints,
        model_layout=layout,
        target_keypoints=keypoints,
        target_body=image,
        target_preserved=empty,
        gt_clothes=image,
    )


def write_fixture(pair: FixturePair, out_dir) -> dict:
    """Write the pair as the files the pipeline consumes; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "model_image": out / "model_image.png",
        "model_keypoints": out / "model_keypoints.json",
        "model_layout": out / "model_layout.png",
        "target_keypoints": out / "target_keypoints.json",
        "target_body": out / "target_body.png",
        "target_preserved": out / "target_preserved.png",
    }
    gio.save_image(pair.model_image, paths["model_image"])
    gio.save_keypoints(pair.model_keypoints, paths["model_keypoints"])
    gio.save_segmentation(pair.model_layout, paths["model_layout"])
    gio.save_keypoints(pair.target_keypoints, paths["target_keypoints"])
    gio.save_image(pair.target_body, paths["target_body"])
    gio.save_segmentation(pair.target_preserved, paths["target_preserved"])
    if pair.gt_clothes is not None:
        paths["gt_clothes"] = out / "gt_clothes.png"
        gio.save_image(pair.gt_clothes, paths["gt_clothes"])
    return {k: str(v) for k, v in paths.items()}


FIXTURES = {"smoke": smoke_fixture, "identity": identity_fixture}
