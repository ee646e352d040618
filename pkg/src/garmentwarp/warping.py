"""The two complementary warps: dense correspondence warping and TPS.

Dense warping (high freedom) averages source pixels under a sharpened
row-softmax of the correspondence matrix.  TPS warping (few parameters) fits
a thin-plate spline through control-point pairs read off the coarse
correspondence matrix by soft-argmax, and applies it backwards: every output
pixel evaluates the target-frame -> source-frame map and samples the input,
so the result has no holes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .correspondence import CorrespondenceMatrix
from .errors import ShapeError, TpsFitError, ValidationError
from .parallel import run_blocks
from .tensor import (Tensor, area_downsample, as_array, bilinear_upsample,
                     softmax_rows, wrap)

SLOPE_EPS = 1e-5
_ROW_BLOCK = 32


# ---------------------------------------------------------------------------
# dense (correspondence-driven) warping

def _matrix_parts(m):
    if isinstance(m, CorrespondenceMatrix):
        return m.tensor.data, m.grid_a, m.grid_b
    return as_array(m), None, None


def dense_warp(m, x, alpha: float = 100.0, workers: int = 1):
    """Per-pixel softmax-weighted average of source values.

    Output position u (scanning the target grid row-major) is
    ``sum_v softmax_v(alpha * M(u, v)) * x(v)``; ``x`` must live at the
    matrix's source-grid resolution.  ``alpha`` sharpens the softmax; at the
    default 100 a clearly dominant row maximum behaves like a hard gather.
    """
    if alpha <= 0:
        raise ValidationError("alpha must be positive")
    scores, grid_a, grid_b = _matrix_parts(m)
    xa = as_array(x)
    xv = ad.value_of(xa)
    sv = ad.value_of(scores)
    if xv.ndim == 3:
        if grid_b is not None and (xv.shape[0], xv.shape[1]) != tuple(grid_b):
            raise ShapeError(
                f"source {xv.shape[:2]} does not match matrix grid {grid_b}")
        flat_shape = (xv.shape[0] * xv.shape[1], xv.shape[2])
    elif xv.ndim == 2:
        flat_shape = xv.shape
    else:
        raise ShapeError("dense_warp source must be rank 2 or 3")
    if flat_shape[0] != sv.shape[1]:
        raise ShapeError(
            f"source has {flat_shape[0]} cells but matrix has {sv.shape[1]} columns")

    xflat = ad.reshape(xa, flat_shape)
    if isinstance(scores, ad.Traced) or isinstance(xflat, ad.Traced):
        probs = softmax_rows(scores, alpha)
        probs = probs if isinstance(probs, ad.Traced) else probs.data
        out = ad.matmul(probs, xflat)
    else:
        out = np.empty((sv.shape[0], flat_shape[1]))

        def fill(start, stop):
            out[start:stop] = softmax_rows(sv[start:stop], alpha).data @ xflat

        run_blocks(sv.shape[0], _ROW_BLOCK, fill, workers)
    if grid_a is not None:
        out = ad.reshape(out, (grid_a[0], grid_a[1], flat_shape[1]))
    return wrap(out)


def dense_warp_image(m: CorrespondenceMatrix, img, alpha: float = 100.0,
                     workers: int = 1):
    """Warp a full-resolution image through a feature-resolution matrix.

    The image is area-downsampled to the matrix's source grid, warped, and
    bilinearly upsampled back; the matrix itself never sees full resolution.
    """
    if m.grid_a is None or m.grid_b is None:
        raise ValidationError("matrix lacks grid metadata for image warping")
    arr = as_array(img)
    v = ad.value_of(arr)
    if v.ndim != 3:
        raise ShapeError("dense_warp_image expects an H×W×C image")
    gh, gw = m.grid_b
    if v.shape[0] % gh or v.shape[1] % gw:
        raise ShapeError(f"image {v.shape[:2]} not divisible by source grid {m.grid_b}")
    factor = v.shape[0] // gh
    if v.shape[1] // gw != factor:
        raise ShapeError("anisotropic image/grid factors are not supported")
    if factor == 1:
        return dense_warp(m, arr, alpha, workers)
    small = area_downsample(arr, factor)
    warped = dense_warp(m, small, alpha, workers)
    return wrap(bilinear_upsample(warped, factor))


# ---------------------------------------------------------------------------
# control grids and soft-argmax reading

def uniform_lattice(grid_size: int, width: int, height: int) -> np.ndarray:
    """G×G axis-aligned lattice of (x, y) points spanning [0, W-1] x [0, H-1]."""
    if grid_size < 2:
        raise ValidationError("control lattice needs at least 2 points per side")
    xs = np.linspace(0.0, width - 1.0, grid_size)
    ys = np.linspace(0.0, height - 1.0, grid_size)
    gx, gy = np.meshgrid(xs, ys)            # row-major: y outer, x inner
    return np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1)


def _is_uniform_lattice(source: np.ndarray, g: int) -> bool:
    pts = source.reshape(g, g, 2)
    xs, ys = pts[..., 0], pts[..., 1]
    scale = max(1.0, float(np.abs(source).max()))
    tol = 1e-6 * scale
    x_row = xs[0]
    y_col = ys[:, 0]
    if np.abs(xs - x_row[None, :]).max() > tol:
        return False
    if np.abs(ys - y_col[:, None]).max() > tol:
        return False
    return (np.abs(np.diff(x_row, 2)).max() if g > 2 else 0.0) <= tol and \
           (np.abs(np.diff(y_col, 2)).max() if g > 2 else 0.0) <= tol


@dataclass(frozen=True)
class ControlGrid:
    """Paired control points: a uniform source lattice and its targets.

    Source points live in the output (target-image) frame as a row-major
    G×G lattice; target points are the matched positions in the source-image
    frame.  Coordinates are continuous (x, y) pixels.
    """

    source: np.ndarray        # (K, 2) xy
    target: np.ndarray        # (K, 2) xy
    grid_size: int

    def __post_init__(self):
        src = np.asarray(self.source, dtype=np.float64)
        tgt = np.asarray(self.target, dtype=np.float64)
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "target", tgt)
        k = self.grid_size * self.grid_size
        if src.shape != (k, 2) or tgt.shape != (k, 2):
            raise ValidationError(
                f"control grid expects {k}×2 source and target points")
        if not _is_uniform_lattice(src, self.grid_size):
            raise ValidationError("source points must form a uniform axis-aligned lattice")


def soft_argmax_control_points(m: CorrespondenceMatrix, grid_size: int = 5,
                               alpha: float = 100.0,
                               rect: tuple = None) -> ControlGrid:
    """Read TPS control targets from a coarse correspondence matrix.

    Each source lattice point (target-image frame) selects the matrix row of
    the cell containing it; the softmaxed row then gives the expectation of
    source-side cell-center coordinates, which becomes the point's target.
    The lattice spans ``rect`` = (x0, y0, x1, y1), by default the whole
    target image; lattice points outside the matrix grid are an error.
    """
    if m.grid_a is None or m.grid_b is None or m.image_shape_a is None \
            or m.image_shape_b is None:
        raise ValidationError("matrix lacks the grid metadata soft-argmax needs")
    ha, wa = m.image_shape_a
    cell_ha = ha / m.grid_a[0]
    cell_wa = wa / m.grid_a[1]
    if rect is None:
        source = uniform_lattice(grid_size, wa, ha)
    else:
        x0, y0, x1, y1 = rect
        xs = np.linspace(x0, x1, grid_size)
        ys = np.linspace(y0, y1, grid_size)
        gx, gy = np.meshgrid(xs, ys)
        source = np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1)

    rows = []
    for x, y in source:
        ci = int(np.floor(y / cell_ha))
        cj = int(np.floor(x / cell_wa))
        if not (0 <= ci < m.grid_a[0] and 0 <= cj < m.grid_a[1]):
            raise ValidationError(
                f"lattice point ({x}, {y}) falls outside the matrix grid")
        rows.append(ci * m.grid_a[1] + cj)

    hb, wb = m.image_shape_b
    cell_hb = hb / m.grid_b[0]
    cell_wb = wb / m.grid_b[1]
    bi, bj = np.divmod(np.arange(m.shape[1]), m.grid_b[1])
    centers_x = (bj + 0.5) * cell_wb - 0.5
    centers_y = (bi + 0.5) * cell_hb - 0.5

    probs = softmax_rows(m.tensor.data[rows], alpha).data
    target = np.stack([probs @ centers_x, probs @ centers_y], axis=1)
    return ControlGrid(source, target, grid_size)


# ---------------------------------------------------------------------------
# thin-plate-spline fit and application

@dataclass(frozen=True)
class TpsTransform:
    """Solved TPS map f(p) = affine·[1, x, y] + sum_k w_k U(|p - s_k|)."""

    control: ControlGrid
    affine: np.ndarray           # (2, 3): per output coord, (const, x, y)
    weights: np.ndarray          # (K, 2) kernel coefficients
    lambda_kernel: float

    @property
    def params(self) -> np.ndarray:
        """(K+3, 2) stacked solve result: kernel weights then affine rows."""
        return np.vstack([self.weights, self.affine.T])


def _kernel_u(r2):
    """TPS radial kernel U(r) = r² log(r²) with U(0) = 0."""
    r2v = ad.value_of(r2) if isinstance(r2, ad.Traced) else np.asarray(r2)
    safe = np.where(r2v > 0.0, r2v, 1.0)
    return np.where(r2v > 0.0, r2v * np.log(safe), 0.0)


def _tps_system(source: np.ndarray, lam: float) -> np.ndarray:
    k = source.shape[0]
    diff = source[:, None, :] - source[None, :, :]
    kern = _kernel_u(np.sum(diff * diff, axis=2)) + lam * np.eye(k)
    p = np.concatenate([np.ones((k, 1)), source], axis=1)
    top = np.concatenate([kern, p], axis=1)
    bottom = np.concatenate([p.T, np.zeros((3, 3))], axis=1)
    return np.concatenate([top, bottom], axis=0)


def _tps_basis(source: np.ndarray, query_xy: np.ndarray) -> np.ndarray:
    """Evaluation matrix Φ with rows [U(|q - s_1|) ... U(|q - s_K|), 1, x, y]."""
    diff = query_xy[:, None, :] - source[None, :, :]
    kern = _kernel_u(np.sum(diff * diff, axis=2))
    ones = np.ones((query_xy.shape[0], 1))
    return np.concatenate([kern, ones, query_xy], axis=1)


def _check_fit_preconditions(source: np.ndarray):
    k = source.shape[0]
    if k < 3:
        raise TpsFitError("TPS needs at least 3 control points")
    diff = source[:, None, :] - source[None, :, :]
    d2 = np.sum(diff * diff, axis=2)
    iu = np.triu_indices(k, 1)
    dup = np.nonzero(d2[iu] == 0.0)[0]
    if dup.size:
        i, j = iu[0][dup[0]], iu[1][dup[0]]
        raise TpsFitError(f"control points {i} and {j} coincide")
    p = np.concatenate([np.ones((k, 1)), source], axis=1)
    if np.linalg.matrix_rank(p) < 3:
        raise TpsFitError("source control points are collinear")


def _tps_params(source: np.ndarray, targets, lam: float):
    """Solve the TPS linear system; differentiable in the targets."""
    ell = _tps_system(source, lam)
    k = source.shape[0]
    embed = np.concatenate([np.eye(k), np.zeros((3, k))], axis=0)
    rhs = ad.matmul(embed, targets)
    try:
        return ad.solve(ell, rhs)
    except np.linalg.LinAlgError as exc:
        raise TpsFitError(f"TPS system is singular: {exc}") from exc


def tps_fit(control: ControlGrid, lambda_kernel: float = 1e-6) -> TpsTransform:
    """Fit the spline mapping each source control point onto its target.

    ``lambda_kernel`` is added to the kernel-block diagonal; at 0 the fit
    interpolates exactly, small positive values keep near-degenerate grids
    solvable (the residual at a control point is exactly λ·w).  Affine target
    configurations are reproduced with zero kernel weights for any λ.
    """
    _check_fit_preconditions(control.source)
    params = _tps_params(control.source, control.target, lambda_kernel)
    weights = params[:control.source.shape[0]]
    affine = params[control.source.shape[0]:].T
    return TpsTransform(control, np.ascontiguousarray(affine), weights,
                        lambda_kernel)


def tps_point_map(transform: TpsTransform, points_xy) -> np.ndarray:
    """Map (x, y) points through the fitted spline."""
    pts = np.asarray(points_xy, dtype=np.float64)
    return _tps_basis(transform.control.source, pts) @ transform.params


def tps_apply(transform: TpsTransform, img):
    """Backward-warp ``img`` through the spline.

    Every output pixel evaluates the target-frame -> source-frame map and
    bilinearly samples the input there; samples outside the input read 0.
    """
    arr = as_array(img)
    v = ad.value_of(arr)
    if v.ndim != 3:
        raise ShapeError("tps_apply expects an H×W×C image")
    h, w, _ = v.shape
    cols, rows = np.meshgrid(np.arange(w, dtype=np.float64),
                             np.arange(h, dtype=np.float64))
    query = np.stack([cols.reshape(-1), rows.reshape(-1)], axis=1)
    mapped = tps_point_map(transform, query)
    coords = np.stack([mapped[:, 1], mapped[:, 0]], axis=1).reshape(h, w, 2)
    return wrap(ad.bilinear(arr, coords))


def tps_warp_from_targets(source: np.ndarray, targets, img, lambda_kernel: float,
                          out_shape: tuple[int, int]):
    """Fit-and-apply as one differentiable function of the target points.

    Gradient flows from the warped image back through bilinear sampling, the
    basis evaluation, and the linear solve into the control targets.
    """
    h, w = out_shape
    iv = ad.value_of(as_array(img))
    params = _tps_params(source, targets, lambda_kernel)
    cols, rows = np.meshgrid(np.arange(w, dtype=np.float64),
                             np.arange(h, dtype=np.float64))
    query = np.stack([cols.reshape(-1), rows.reshape(-1)], axis=1)
    basis = _tps_basis(source, query)
    mapped_xy = ad.matmul(basis, params)
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    coords = ad.reshape(ad.matmul(mapped_xy, swap), (h, w, 2))
    return ad.bilinear(iv, coords)


# ---------------------------------------------------------------------------
# lattice-regularity penalty and the TPS training loss

def _targets_as_grid(control, grid_size):
    if isinstance(control, ControlGrid):
        return control.target, control.grid_size
    arr = as_array(control)
    v = ad.value_of(arr)
    if grid_size is None:
        grid_size = int(round(np.sqrt(v.shape[0]))) if v.ndim == 2 else v.shape[0]
    return arr, grid_size


def _segment_slope(delta):
    """Slope of an undirected segment: dy/(dx + eps) after canonical flip.

    The direction is normalized so dx >= 0 (ties: dy >= 0), making the slope
    a property of the segment's line rather than of traversal order —
    opposite neighbors on any affine lattice then report identical slopes.
    """
    dv = ad.value_of(delta)
    flip = (dv[..., 0] < 0) | ((dv[..., 0] == 0) & (dv[..., 1] < 0))
    sign = np.where(flip, -1.0, 1.0)[..., None]
    canon = delta * sign
    two = (slice(None), slice(None))
    dx = canon[two + (0,)] if isinstance(canon, ad.Traced) else canon[..., 0]
    dy = canon[two + (1,)] if isinstance(canon, ad.Traced) else canon[..., 1]
    return dy / (dx + SLOPE_EPS)


def _dist(delta):
    return ad.sqrt(ad.summ(delta * delta, axis=-1))


def second_order_constraint(control, lambda_radius: float = 1.0,
                            lambda_slope: float = 1.0, grid_size: int = None):
    """Penalty against uneven spacing and bending of the warped lattice.

    For every interior target point with horizontal neighbors (p0, p1) and
    vertical neighbors (p2, p3), accumulates
    ``λ_r (| |p-p0| - |p-p1| | + | |p-p2| - |p-p3| |)`` plus
    ``λ_s (|S(p,p0) - S(p,p1)| + |S(p,p2) - S(p,p3)|)`` with the segment
    slope of :func:`_segment_slope`.  Uniform and affinely mapped lattices
    score 0; the value is translation invariant.
    """
    targets, g = _targets_as_grid(control, grid_size)
    if g < 3:
        raise ValidationError("second-order constraint needs a grid of at least 3x3")
    pts = ad.reshape(targets, (g, g, 2))

    def cut(rs, cs):
        return pts[(rs, cs)] if isinstance(pts, ad.Traced) else pts[rs, cs]

    inner = slice(1, -1)
    p = cut(inner, inner)
    left = cut(inner, slice(None, -2))
    right = cut(inner, slice(2, None))
    up = cut(slice(None, -2), inner)
    down = cut(slice(2, None), inner)

    radius = (ad.absolute(_dist(left - p) - _dist(right - p))
              + ad.absolute(_dist(up - p) - _dist(down - p)))
    slope = (ad.absolute(_segment_slope(left - p) - _segment_slope(right - p))
             + ad.absolute(_segment_slope(up - p) - _segment_slope(down - p)))
    total = ad.summ(lambda_radius * radius) + ad.summ(lambda_slope * slope)
    return total if isinstance(total, ad.Traced) else float(total)


def tps_loss(warped, truth, control, l1_weight: float = 10.0,
             constraint_weight: float = 10.0, lambda_radius: float = 1.0,
             lambda_slope: float = 1.0, grid_size: int = None):
    """Mean-absolute reconstruction error plus the lattice penalty.

    ``l1_weight * mean|truth - warped| + constraint_weight * L_constraint``;
    the L1 term averages over elements so the default weight of 10 is
    resolution independent.
    """
    wa, ta = as_array(warped), as_array(truth)
    if ad.value_of(wa).shape != ad.value_of(ta).shape:
        raise ShapeError("warped and truth shapes differ")
    data_term = ad.mean(ad.absolute(ta - wa))
    reg = second_order_constraint(control, lambda_radius, lambda_slope,
                                  grid_size=grid_size)
    total = l1_weight * data_term + constraint_weight * reg
    return total if isinstance(total, ad.Traced) else float(total)
