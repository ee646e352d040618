"""Evaluation metrics: windowed SSIM (plain and masked) and inception score.

SSIM uses an 11×11 Gaussian window with σ=1.5 at unit dynamic range, with
stabilizing constants C1=0.01 and C2=0.03 (used directly, not squared: a
constant 0.5 image against a constant 0.6 image scores exactly 0.61/0.62).
The map covers only fully valid windows, so it is (H-10)×(W-10) for an H×W
input.  Color images are converted to luma first.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, ValidationError
from .tensor import Tensor, as_array

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01
SSIM_C2 = 0.03
LUMA = (0.299, 0.587, 0.114)


def to_luma(img) -> np.ndarray:
    """Grayscale view of an image: H×W passes through, H×W×3 converts."""
    arr = np.asarray(as_array(img))
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[2] == 1:
        return arr[:, :, 0]
    if arr.ndim == 3 and arr.shape[2] == 3:
        return LUMA[0] * arr[:, :, 0] + LUMA[1] * arr[:, :, 1] + LUMA[2] * arr[:, :, 2]
    raise ShapeError("expected an H×W or H×W×3 image")


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    one_d = np.exp(-(coords ** 2) / (2.0 * sigma * sigma))
    window = np.outer(one_d, one_d)
    return window / window.sum()


def _windowed_mean(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    size = window.shape[0]
    view = np.lib.stride_tricks.sliding_window_view(img, (size, size))
    return np.tensordot(view, window, axes=([2, 3], [0, 1]))


def ssim_map(a, b) -> Tensor:
    """Per-window SSIM over the valid interior of two [0, 1] images."""
    xa = to_luma(a).astype(np.float64)
    xb = to_luma(b).astype(np.float64)
    if xa.shape != xb.shape:
        raise ShapeError("ssim inputs must share a shape")
    if xa.shape[0] < SSIM_WINDOW or xa.shape[1] < SSIM_WINDOW:
        raise ValidationError(
            f"image {xa.shape} smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} window")
    for name, v in (("first", xa), ("second", xb)):
        if v.min() < -1e-9 or v.max() > 1.0 + 1e-9:
            raise ValidationError(f"{name} image values must lie in [0, 1]")
    window = _gaussian_window()
    c1 = SSIM_C1
    c2 = SSIM_C2
    mu_a = _windowed_mean(xa, window)
    mu_b = _windowed_mean(xb, window)
    var_a = _windowed_mean(xa * xa, window) - mu_a * mu_a
    var_b = _windowed_mean(xb * xb, window) - mu_b * mu_b
    cov = _windowed_mean(xa * xb, window) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return Tensor(num / den)


def ssim(a, b):
    """Mean SSIM plus the per-window map."""
    smap = ssim_map(a, b)
    return float(np.mean(smap.data)), smap


def masked_ssim(a, b, mask) -> float:
    """Mean of the SSIM map restricted to mask pixels.

    The mask is given at image resolution; it is cropped by the window margin
    to align with the valid map.  An effectively empty mask is an error.
    """
    marr = np.asarray(as_array(mask))
    xa = to_luma(a)
    if marr.shape != xa.shape:
        raise ShapeError(f"mask {marr.shape} does not match image {xa.shape}")
    if marr.size and not np.all((marr == 0.0) | (marr == 1.0)):
        raise ValidationError("mask must be binary")
    if marr.sum() == 0:
        raise ValidationError("mask selects no pixels")
    smap = ssim_map(a, b).data
    margin = (SSIM_WINDOW - 1) // 2
    inner = marr[margin:margin + smap.shape[0], margin:margin + smap.shape[1]]
    selected = smap[inner > 0]
    if selected.size == 0:
        raise ValidationError("mask selects no pixels inside the windowed interior")
    return float(np.mean(selected))


def inception_score(probs) -> float:
    """exp(mean KL(row ‖ marginal)) over per-sample class distributions.

    Rows must be distributions (nonnegative, summing to 1 within 1e-5); the
    0·log 0 convention applies.  Uniform rows score 1, balanced one-hot rows
    score the class count.
    """
    p = np.asarray(as_array(probs), dtype=np.float64)
    if p.ndim != 2:
        raise ShapeError("probabilities must be N×K")
    if p.size and p.min() < 0.0:
        raise ValidationError("probabilities must be nonnegative")
    sums = p.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-5):
        raise ValidationError("each probability row must sum to 1 (within 1e-5)")
    marginal = p.mean(axis=0)
    ratio = np.divide(p, marginal[None, :],
                      out=np.ones_like(p), where=(p > 0.0) & (marginal > 0.0))
    kl = np.sum(np.where(p > 0.0, p * np.log(ratio), 0.0), axis=1)
    return float(np.exp(np.mean(kl)))
