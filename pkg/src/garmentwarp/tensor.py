"""Dense tensor value type and the shared numeric operators.

Conventions used everywhere in the package: row-major layout, channels last
for images and feature maps, zero-valued padding and out-of-bounds samples,
and (row, col) ordering for sampling coordinates with the origin at the
center of pixel (0, 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import NumericalError, ShapeError, ValidationError, WindowError

_DTYPES = {"float32": np.float32, "float64": np.float64}


class Tensor:
    """Immutable dense real array (row-major), 32- or 64-bit.

    Every public operation returns a fresh ``Tensor`` whose elements are
    checked finite, so NaN/Inf cannot propagate silently.
    """

    __slots__ = ("_data",)

    def __init__(self, data, precision: str | None = None):
        if isinstance(data, Tensor):
            data = data._data
        if precision is not None and precision not in _DTYPES:
            raise ValidationError(f"unknown precision {precision!r}")
        arr = np.array(data, copy=True, order="C")
        if precision is not None:
            arr = arr.astype(_DTYPES[precision])
        elif arr.dtype != np.float32:
            arr = arr.astype(np.float64)
        if arr.size and not np.all(np.isfinite(arr)):
            raise NumericalError("tensor contains non-finite values")
        arr.flags.writeable = False
        self._data = arr

    @property
    def data(self) -> np.ndarray:
        """Read-only numpy view of the contents."""
        return self._data

    @property
    def dims(self) -> tuple[int, ...]:
        return self._data.shape

    shape = dims

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return self._data.size

    @property
    def precision(self) -> str:
        return "float32" if self._data.dtype == np.float32 else "float64"

    def astype(self, precision: str) -> "Tensor":
        return Tensor(self._data, precision=precision)

    def tolist(self):
        return self._data.tolist()

    def __repr__(self):
        return f"Tensor(dims={self.dims}, precision={self.precision})"


def as_array(x) -> np.ndarray:
    """Unwrap to ndarray; traced handles pass through untouched."""
    if isinstance(x, ad.Traced):
        return x
    if isinstance(x, Tensor):
        return x.data
    arr = np.asarray(x)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    return arr


def wrap(x):
    """Wrap a computed value as Tensor; traced results stay traced."""
    return x if isinstance(x, ad.Traced) else Tensor(x)


@dataclass(frozen=True)
class WindowSpec:
    """Sliding-window geometry: side length, stride, zero-filled padding."""

    size: int
    stride: int
    padding: int = 0

    def __post_init__(self):
        if self.size < 1 or self.stride < 1 or self.padding < 0:
            raise ValidationError(f"invalid window spec {self}")

    def grid_shape(self, h: int, w: int) -> tuple[int, int]:
        """Output grid extents; raises when the window exceeds the padded input."""
        gh = (h + 2 * self.padding - self.size) // self.stride + 1
        gw = (w + 2 * self.padding - self.size) // self.stride + 1
        if gh < 1 or gw < 1:
            raise WindowError(
                f"window size {self.size} exceeds padded input {h}x{w} "
                f"(padding {self.padding})")
        return gh, gw

    def to_dict(self):
        return {"size": self.size, "stride": self.stride, "padding": self.padding}

    @classmethod
    def from_dict(cls, d):
        extra = set(d) - {"size", "stride", "padding"}
        if extra:
            raise ValidationError(f"unknown window keys {sorted(extra)}")
        return cls(int(d["size"]), int(d["stride"]), int(d.get("padding", 0)))


def unfold(x, window: WindowSpec) -> Tensor:
    """Flatten every sliding window of an H×W×C map into one row.

    Row k holds the window at output cell k (cells scanned row-major); inside
    a row the window cells are row-major with channels innermost.  Reads that
    fall outside the input are zero.
    """
    arr = as_array(x)
    if isinstance(arr, ad.Traced):
        raise ValidationError("unfold does not support traced inputs")
    if arr.ndim != 3:
        raise ShapeError(f"unfold expects rank 3, got {arr.ndim}")
    h, w, c = arr.shape
    gh, gw = window.grid_shape(h, w)
    p = window.padding
    padded = np.pad(arr, ((p, p), (p, p), (0, 0)))
    view = np.lib.stride_tricks.sliding_window_view(
        padded, (window.size, window.size), axis=(0, 1))
    view = view[::window.stride, ::window.stride]          # (gh, gw, C, s, s)
    view = view.transpose(0, 1, 3, 4, 2)                   # cells outer, channels inner
    return Tensor(np.ascontiguousarray(view).reshape(gh * gw,
                                                     window.size * window.size * c))


def softmax_rows(s, alpha: float = 1.0):
    """Row-wise softmax of ``alpha * s`` with max-subtraction for stability."""
    if alpha <= 0:
        raise ValidationError("alpha must be positive")
    z = as_array(s)
    if ad.value_of(z).ndim != 2:
        raise ShapeError("softmax_rows expects a rank-2 tensor")
    z = z * float(alpha)
    m = ad.amax(z, axis=1, keepdims=True)
    e = ad.exp(z - m)
    out = e / ad.summ(e, axis=1, keepdims=True)
    return wrap(out)


def bilinear_sample(img, coords):
    """Bilinear interpolation of ``img`` at continuous (row, col) coordinates.

    Coordinates live in the pixel-center frame: (i, j) hits ``img[i, j]``
    exactly.  Anything outside [0, H-1] x [0, W-1] blends with (or returns)
    the zero-padded exterior.
    """
    iarr, carr = as_array(img), as_array(coords)
    iv, cv = ad.value_of(iarr), ad.value_of(carr)
    if iv.ndim != 3:
        raise ShapeError("bilinear_sample expects an H×W×C image")
    if cv.shape[-1] != 2:
        raise ShapeError("coords must have a trailing axis of length 2 (row, col)")
    return wrap(ad.bilinear(iarr, carr))


def area_downsample(img, factor: int):
    """Mean over non-overlapping ``factor``×``factor`` blocks of an H×W×C map."""
    arr = as_array(img)
    v = ad.value_of(arr)
    if v.ndim != 3:
        raise ShapeError("area_downsample expects rank 3")
    h, w, c = v.shape
    if factor < 1 or h % factor or w % factor:
        raise ShapeError(f"extent {h}x{w} not divisible by factor {factor}")
    blocked = ad.reshape(arr, (h // factor, factor, w // factor, factor, c))
    return wrap(ad.mean(blocked, axis=(1, 3)))


def bilinear_upsample(img, factor: int):
    """Bilinear enlargement by an integer factor (pixel-center alignment).

    Sample coordinates are clipped to the source rectangle so the border is
    extended, not darkened; this is a resize, not a warp.
    """
    arr = as_array(img)
    v = ad.value_of(arr)
    if v.ndim != 3:
        raise ShapeError("bilinear_upsample expects rank 3")
    if factor < 1:
        raise ValidationError("factor must be >= 1")
    h, w, _ = v.shape
    rows = (np.arange(h * factor, dtype=np.float64) + 0.5) / factor - 0.5
    cols = (np.arange(w * factor, dtype=np.float64) + 0.5) / factor - 0.5
    rows = np.clip(rows, 0.0, h - 1.0)
    cols = np.clip(cols, 0.0, w - 1.0)
    grid = np.stack(np.meshgrid(rows, cols, indexing="ij"), axis=-1)
    return wrap(ad.bilinear(arr, grid))
