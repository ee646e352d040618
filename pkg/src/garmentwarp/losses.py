"""Training-loss formulas: perceptual, style, contextual, adversarial, L1, total.

Every norm written as an unqualified L1/L2 uses the mean-over-elements
convention so the default weights are resolution independent.  All losses are
differentiable through the tape primitives and pass the finite-difference
check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .errors import NumericalError, ShapeError, ValidationError
from .tensor import Tensor, as_array, wrap

CONTEXTUAL_EPS = 1e-5
SCORE_CLAMP = 1e-7

LOSS_TERMS = ("l1", "tps", "layout", "perceptual", "style", "contextual",
              "adversarial", "regularizer")


@dataclass(frozen=True)
class FeaturePyramid:
    """Ordered multi-level features with per-level weights (default 1/N)."""

    levels: tuple[Tensor, ...]
    weights: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        levels = tuple(lvl if isinstance(lvl, Tensor) else Tensor(lvl)
                       for lvl in self.levels)
        if not levels:
            raise ValidationError("feature pyramid needs at least one level")
        object.__setattr__(self, "levels", levels)
        if self.weights is None:
            object.__setattr__(self, "weights",
                               tuple([1.0 / len(levels)] * len(levels)))
        else:
            w = tuple(float(v) for v in self.weights)
            if len(w) != len(levels):
                raise ValidationError("one weight per pyramid level required")
            if any(v < 0 for v in w):
                raise ValidationError("pyramid weights must be nonnegative")
            object.__setattr__(self, "weights", w)


def _levels_of(pyramid):
    if isinstance(pyramid, FeaturePyramid):
        return [lvl.data for lvl in pyramid.levels], pyramid.weights
    if isinstance(pyramid, (list, tuple)):
        arrays = [as_array(lvl) for lvl in pyramid]
        return arrays, tuple([1.0 / len(arrays)] * len(arrays))
    arr = as_array(pyramid)
    return [arr], (1.0,)


def _scalar(x):
    return x if isinstance(x, ad.Traced) else float(x)


def perceptual_loss(a, b):
    """Weighted sum over levels of the root-mean-square feature difference."""
    la, wa = _levels_of(a)
    lb, _ = _levels_of(b)
    if len(la) != len(lb):
        raise ShapeError("pyramids have different depths")
    total = 0.0
    for weight, fa, fb in zip(wa, la, lb):
        if ad.value_of(fa).shape != ad.value_of(fb).shape:
            raise ShapeError("pyramid level shapes differ")
        diff = fa - fb
        total = total + weight * ad.sqrt(ad.mean(diff * diff))
    return _scalar(total)


def gram_matrix(features):
    """Channel co-activation matrix G(c, c') = mean over pixels of f_c f_c'."""
    fa = as_array(features)
    fv = ad.value_of(fa)
    if fv.ndim != 3:
        raise ShapeError("gram_matrix expects h×w×C features")
    h, w, c = fv.shape
    flat = ad.reshape(fa, (h * w, c))
    return wrap(ad.matmul(ad.transpose(flat), flat) / float(h * w))


def style_loss(a, b):
    """Sum over levels of the Frobenius distance between Gram matrices."""
    la, _ = _levels_of(a)
    lb, _ = _levels_of(b)
    if len(la) != len(lb):
        raise ShapeError("pyramids have different depths")
    total = 0.0
    for fa, fb in zip(la, lb):
        if ad.value_of(fa).shape[-1] != ad.value_of(fb).shape[-1]:
            raise ShapeError("channel counts differ between pyramid levels")
        diff = as_array(gram_matrix(fa)) - as_array(gram_matrix(fb))
        total = total + ad.sqrt(ad.summ(diff * diff))
    return _scalar(total)


def contextual_loss(x, y, bandwidth: float = 0.5, eps: float = CONTEXTUAL_EPS):
    """Best-match similarity between two feature sets (rows are features).

    Both sets are centered by y's mean; relative cosine distances are turned
    into row-normalized affinities A, and the loss is
    ``-log(mean_j max_i A_ij)`` — near 0 when every y row has a close,
    unambiguous partner in x.
    """
    xa, ya = as_array(x), as_array(y)
    xv, yv = ad.value_of(xa), ad.value_of(ya)
    if xv.ndim != 2 or yv.ndim != 2:
        raise ShapeError("contextual loss expects N×D feature sets")
    if xv.shape[1] != yv.shape[1]:
        raise ShapeError("feature depths differ")
    if bandwidth <= 0:
        raise ValidationError("bandwidth must be positive")
    mu = ad.mean(ya, axis=0, keepdims=True)
    xc = xa - mu
    yc = ya - mu
    nx = ad.sqrt(ad.summ(xc * xc, axis=1, keepdims=True))
    ny = ad.sqrt(ad.summ(yc * yc, axis=1, keepdims=True))
    cos = ad.matmul(xc, ad.transpose(yc)) / (ad.matmul(nx, ad.transpose(ny)) + eps)
    dist = 1.0 - cos
    rel = dist / (ad.amin(dist, axis=1, keepdims=True) + eps)
    w = ad.exp((1.0 - rel) / bandwidth)
    affinity = w / ad.summ(w, axis=1, keepdims=True)
    score = ad.mean(ad.amax(affinity, axis=0))
    return _scalar(-ad.log(score))


def adversarial_loss(real_scores, fake_scores):
    """Discriminator log-likelihood: mean log D(real) + mean log(1 - D(fake)).

    Scores are probabilities in [0, 1]; both logs are clamped at 1e-7, so the
    value is bounded below by 2·ln(1e-7) instead of diverging.
    """
    ra, fa = as_array(real_scores), as_array(fake_scores)
    for name, v in (("real", ad.value_of(ra)), ("fake", ad.value_of(fa))):
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ValidationError(f"{name} scores must lie in [0, 1]")
    real_term = ad.mean(ad.log(ad.maximum(ra, SCORE_CLAMP)))
    fake_term = ad.mean(ad.log(ad.maximum(1.0 - fa, SCORE_CLAMP)))
    return _scalar(real_term + fake_term)


def l1_loss(a, b):
    """Mean absolute difference."""
    aa, ba = as_array(a), as_array(b)
    if ad.value_of(aa).shape != ad.value_of(ba).shape:
        raise ShapeError("l1_loss shapes differ")
    return _scalar(ad.mean(ad.absolute(aa - ba)))


@dataclass(frozen=True)
class LossWeights:
    """Total-objective weights; reconstruction-style terms default to 10."""

    l1: float = 10.0
    tps: float = 10.0
    layout: float = 10.0
    perceptual: float = 1.0
    style: float = 1.0
    contextual: float = 1.0
    adversarial: float = 10.0
    regularizer: float = 10.0

    def __post_init__(self):
        for name in LOSS_TERMS:
            if getattr(self, name) < 0:
                raise ValidationError(f"loss weight {name!r} must be nonnegative")

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in LOSS_TERMS])

    def to_dict(self):
        return {name: getattr(self, name) for name in LOSS_TERMS}

    @classmethod
    def from_dict(cls, d):
        extra = set(d) - set(LOSS_TERMS)
        if extra:
            raise ValidationError(f"unknown loss-weight keys {sorted(extra)}")
        return cls(**{k: float(v) for k, v in d.items()})


def weighted_total(values, weight_vector):
    """Inner product of loss values with their weights (the Eq-11 core)."""
    va = as_array(values)
    wa = as_array(weight_vector)
    if ad.value_of(va).shape != ad.value_of(wa).shape:
        raise ShapeError("values and weights must have matching shapes")
    return _scalar(ad.summ(va * wa))


def total_loss(components, weights: LossWeights = LossWeights()):
    """Weighted sum of the eight named loss terms plus an itemized report.

    ``components`` maps every name in :data:`LOSS_TERMS` to a finite value.
    Returns ``(total, report)`` where the report lists value, weight, and the
    weighted contribution of each term.
    """
    missing = set(LOSS_TERMS) - set(components)
    if missing:
        raise ValidationError(f"missing loss components {sorted(missing)}")
    extra = set(components) - set(LOSS_TERMS)
    if extra:
        raise ValidationError(f"unknown loss components {sorted(extra)}")
    values = []
    for name in LOSS_TERMS:
        value = float(components[name])
        if not np.isfinite(value):
            raise NumericalError(f"loss component {name!r} is not finite")
        values.append(value)
    wvec = weights.as_vector()
    total = weighted_total(np.array(values), wvec)
    report = {name: {"value": v, "weight": float(w), "weighted": float(w) * v}
              for name, v, w in zip(LOSS_TERMS, values, wvec)}
    report["total"] = total
    return total, report
