"""Minimal reverse-mode tape for gradient verification.

Differentiable operators in this package are written against the generic
primitives below (``exp``, ``summ``, ``matmul``, ...).  Each primitive accepts
either plain ``numpy`` arrays or :class:`Traced` handles.  On plain arrays it
is ordinary numpy; on traced inputs it records a node on the owning
:class:`GradientTape` holding the operation id, parent node ids, the saved
forward value, a vector-Jacobian product, and a forward closure used to replay
the tape.  The same source line therefore computes the production value and
the autodiff graph, so the finite-difference check in :mod:`gradcheck`
exercises the real implementation.

This is deliberately not a general autodiff system: only the primitives the
package needs exist, matmul/solve are 2-D only, and there is no higher-order
differentiation.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import NumericalError, ValidationError


class Node:
    """One tape entry: operation id, parent ids, saved value, vjp, forward."""

    __slots__ = ("op", "parents", "value", "vjp", "forward")

    def __init__(self, op, parents, value, vjp, forward):
        self.op = op
        self.parents = parents          # tuple of node indices
        self.value = value              # saved forward value (ndarray)
        self.vjp = vjp                  # cotangent -> tuple of parent cotangents
        self.forward = forward          # parent values -> recomputed value


class Traced:
    """Handle to a tape node; supports arithmetic so generic code reads naturally."""

    __slots__ = ("tape", "index")

    # make numpy defer to the reflected operators below instead of building
    # object arrays out of handles
    __array_ufunc__ = None

    def __init__(self, tape, index):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.index].value

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    def reshape(self, shape):
        return reshape(self, shape)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

    def __repr__(self):
        return f"Traced(node={self.index}, shape={self.value.shape})"


class GradientTape:
    """Ordered record of operations with reverse-mode accumulation.

    Nodes are appended in execution order, which is a topological order of the
    graph; :meth:`gradient` walks it once in reverse, and :meth:`replay`
    re-executes every forward closure and insists on bit-identical results.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def watch(self, value) -> Traced:
        """Register an input (leaf) value and return its handle."""
        arr = np.asarray(value)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.nodes.append(Node("input", (), arr, None, None))
        return Traced(self, len(self.nodes) - 1)

    def record(self, op: str, parents: Sequence[Traced], value, vjp: Callable,
               forward: Callable) -> Traced:
        """Append an operation node.

        ``vjp`` maps the output cotangent to one cotangent per parent (in
        order); ``forward`` recomputes the value from the parents' values and
        must be bit-reproducible for :meth:`replay`.
        """
        idx = tuple(p.index for p in parents)
        for p in parents:
            if p.tape is not self:
                raise ValidationError("traced operands belong to different tapes")
        self.nodes.append(Node(op, idx, np.asarray(value), vjp, forward))
        return Traced(self, len(self.nodes) - 1)

    def replay(self) -> None:
        """Re-run every recorded forward and verify bit-exact reproduction."""
        values = []
        for i, node in enumerate(self.nodes):
            if node.forward is None:
                values.append(node.value)
                continue
            redone = np.asarray(node.forward(tuple(values[p] for p in node.parents)))
            same = (redone.shape == node.value.shape
                    and redone.dtype == node.value.dtype
                    and redone.tobytes() == node.value.tobytes())
            if not same:
                raise NumericalError(f"tape replay mismatch at node {i} ({node.op})")
            values.append(redone)

    def gradient(self, output: Traced, inputs: Sequence[Traced],
                 cotangent=None) -> list[np.ndarray]:
        """Reverse-accumulate; returns one cotangent array per requested input.

        Visits each node at most once, in reverse topological (= reverse
        recording) order, so accumulation order is deterministic.
        """
        if output.tape is not self:
            raise ValidationError("output does not belong to this tape")
        out_val = output.value
        if cotangent is None:
            cot = np.ones_like(out_val)
        else:
            cot = np.asarray(cotangent, dtype=out_val.dtype)
            if cot.shape != out_val.shape:
                raise ValidationError(
                    f"cotangent shape {cot.shape} != output shape {out_val.shape}")
        adjoint: dict[int, np.ndarray] = {output.index: cot}
        for i in range(output.index, -1, -1):
            g = adjoint.pop(i, None)
            if g is None:
                continue
            node = self.nodes[i]
            if node.vjp is None:
                adjoint[i] = g  # leaf: keep for collection below
                continue
            for pid, pg in zip(node.parents, node.vjp(g)):
                if pg is None:
                    continue
                prev = adjoint.get(pid)
                adjoint[pid] = pg if prev is None else prev + pg
        grads = []
        for inp in inputs:
            g = adjoint.get(inp.index)
            grads.append(np.zeros_like(inp.value) if g is None else np.asarray(g))
        return grads


def is_traced(x) -> bool:
    return isinstance(x, Traced)


def value_of(x) -> np.ndarray:
    """Concrete array behind ``x`` (peeks through Traced; no graph edge)."""
    return x.value if isinstance(x, Traced) else np.asarray(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (adjoint of numpy broadcasting)."""
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _binary(op, a, b, fw, vjp_a, vjp_b):
    """Record a broadcasting binary op; constants are captured, not traced."""
    ta, tb = isinstance(a, Traced), isinstance(b, Traced)
    if not ta and not tb:
        return fw(a, b)
    av, bv = value_of(a), value_of(b)
    out = fw(av, bv)
    parents, pulls = [], []
    if ta:
        parents.append(a)
        pulls.append(lambda g: _unbroadcast(vjp_a(g, av, bv, out), av.shape))
    if tb:
        parents.append(b)
        pulls.append(lambda g: _unbroadcast(vjp_b(g, av, bv, out), bv.shape))

    def forward(vals, _fw=fw, _ta=ta, _tb=tb, _av=av, _bv=bv):
        left = vals[0] if _ta else _av
        right = (vals[1] if _ta else vals[0]) if _tb else _bv
        return _fw(left, right)

    tape = (a if ta else b).tape
    return tape.record(op, tuple(parents), out,
                       lambda g: tuple(p(g) for p in pulls), forward)


def add(a, b):
    return _binary("add", a, b, lambda x, y: x + y,
                   lambda g, x, y, o: g, lambda g, x, y, o: g)


def sub(a, b):
    return _binary("sub", a, b, lambda x, y: x - y,
                   lambda g, x, y, o: g, lambda g, x, y, o: -g)


def mul(a, b):
    return _binary("mul", a, b, lambda x, y: x * y,
                   lambda g, x, y, o: g * y, lambda g, x, y, o: g * x)


def div(a, b):
    return _binary("div", a, b, lambda x, y: x / y,
                   lambda g, x, y, o: g / y, lambda g, x, y, o: -g * x / (y * y))


def maximum(a, b):
    # ties send the gradient to the first operand
    return _binary("maximum", a, b, np.maximum,
                   lambda g, x, y, o: g * (x >= y), lambda g, x, y, o: g * (x < y))


def matmul(a, b):
    av, bv = value_of(a), value_of(b)
    if av.ndim != 2 or bv.ndim != 2:
        raise ValidationError("matmul primitive is 2-D only")
    return _binary("matmul", a, b, lambda x, y: x @ y,
                   lambda g, x, y, o: g @ y.T, lambda g, x, y, o: x.T @ g)


def _unary(op, x, fw, vjp):
    """``vjp(g, x_value, out_value)`` pulls the cotangent back."""
    if not isinstance(x, Traced):
        return fw(x)
    xv = x.value
    out = fw(xv)
    return x.tape.record(op, (x,), out, lambda g: (vjp(g, xv, out),),
                         lambda vals, _fw=fw: _fw(vals[0]))


def neg(x):
    return _unary("neg", x, lambda v: -v, lambda g, v, o: -g)


def exp(x):
    return _unary("exp", x, np.exp, lambda g, v, o: g * o)


def log(x):
    return _unary("log", x, np.log, lambda g, v, o: g / v)


def sqrt(x):
    return _unary("sqrt", x, np.sqrt, lambda g, v, o: 0.5 * g / o)


def absolute(x):
    # subgradient 0 at the kink
    return _unary("abs", x, np.abs, lambda g, v, o: g * np.sign(v))


def power(x, p: float):
    return _unary(f"pow[{p}]", x, lambda v: v ** p,
                  lambda g, v, o: g * p * v ** (p - 1))


def _axis_count(shape, axis):
    if axis is None:
        return int(np.prod(shape, dtype=np.int64)) if shape else 1
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    n = 1
    for ax in axes:
        n *= shape[ax]
    return n


def _expand_reduced(g, shape, axis, keepdims):
    """Reshape a reduced cotangent so it broadcasts back over ``shape``."""
    g = np.asarray(g)
    if axis is None:
        return np.broadcast_to(np.reshape(g, (1,) * len(shape)), shape)
    if not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % len(shape) for ax in axes)
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def summ(x, axis=None, keepdims=False):
    if not isinstance(x, Traced):
        return np.sum(x, axis=axis, keepdims=keepdims)
    xv = x.value
    out = np.sum(xv, axis=axis, keepdims=keepdims)

    def vjp(g):
        return (np.ascontiguousarray(_expand_reduced(np.asarray(g), xv.shape, axis, keepdims)),)

    return x.tape.record("sum", (x,), out, vjp,
                         lambda vals: np.sum(vals[0], axis=axis, keepdims=keepdims))


def mean(x, axis=None, keepdims=False):
    if not isinstance(x, Traced):
        return np.mean(x, axis=axis, keepdims=keepdims)
    n = _axis_count(value_of(x).shape, axis)
    return div(summ(x, axis=axis, keepdims=keepdims), float(n))


def _extreme(op, x, axis, keepdims, np_fn, np_arg):
    """Shared max/min; gradient flows to the first attaining element."""
    if not isinstance(x, Traced):
        return np_fn(x, axis=axis, keepdims=keepdims)
    xv = x.value
    out = np_fn(xv, axis=axis, keepdims=keepdims)

    if axis is None:
        mask = np.zeros_like(xv)
        mask[np.unravel_index(np_arg(xv), xv.shape)] = 1.0
    else:
        idx = np.expand_dims(np_arg(xv, axis=axis), axis)
        mask = np.zeros_like(xv)
        np.put_along_axis(mask, idx, 1.0, axis=axis)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (mask * g,)

    return x.tape.record(op, (x,), out, vjp,
                         lambda vals: np_fn(vals[0], axis=axis, keepdims=keepdims))


def amax(x, axis=None, keepdims=False):
    return _extreme("max", x, axis, keepdims, np.max, np.argmax)


def amin(x, axis=None, keepdims=False):
    return _extreme("min", x, axis, keepdims, np.min, np.argmin)


def reshape(x, shape):
    if not isinstance(x, Traced):
        return np.reshape(x, shape)
    xv = x.value
    return x.tape.record("reshape", (x,), np.reshape(xv, shape),
                         lambda g: (np.reshape(g, xv.shape),),
                         lambda vals: np.reshape(vals[0], shape))


def transpose(x, axes=None):
    if not isinstance(x, Traced):
        return np.transpose(x, axes)
    xv = x.value
    inv = None if axes is None else np.argsort(axes)
    return x.tape.record("transpose", (x,), np.transpose(xv, axes),
                         lambda g: (np.transpose(g, inv),),
                         lambda vals: np.transpose(vals[0], axes))


def getitem(x, key):
    if not isinstance(x, Traced):
        return x[key]
    xv = x.value

    def vjp(g):
        z = np.zeros_like(xv)
        np.add.at(z, key, g)
        return (z,)

    return x.tape.record("getitem", (x,), xv[key], vjp, lambda vals: vals[0][key])


def solve(a: np.ndarray, b):
    """Linear solve with a constant matrix; differentiable in ``b`` only."""
    if isinstance(a, Traced):
        raise ValidationError("solve supports gradients w.r.t. the right-hand side only")
    a = np.asarray(a)
    if not isinstance(b, Traced):
        return np.linalg.solve(a, b)
    out = np.linalg.solve(a, b.value)
    return b.tape.record("solve", (b,), out,
                         lambda g: (np.linalg.solve(a.T, np.asarray(g)),),
                         lambda vals: np.linalg.solve(a, vals[0]))


def _bilinear_pieces(img: np.ndarray, coords: np.ndarray):
    """Corner indices, validity masks and fractional offsets for sampling."""
    h, w = img.shape[0], img.shape[1]
    r, c = coords[..., 0], coords[..., 1]
    r0 = np.floor(r)
    c0 = np.floor(c)
    fr = r - r0
    fc = c - c0
    r0 = r0.astype(np.int64)
    c0 = c0.astype(np.int64)
    corners = []
    for dr in (0, 1):
        for dc in (0, 1):
            ri = r0 + dr
            ci = c0 + dc
            valid = (ri >= 0) & (ri < h) & (ci >= 0) & (ci < w)
            corners.append((np.clip(ri, 0, h - 1), np.clip(ci, 0, w - 1),
                            valid, dr, dc))
    return corners, fr, fc


def bilinear_forward(img: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Sample ``img`` (H,W,C) at continuous (row, col) ``coords`` (...,2).

    Interpolates the four neighbours; neighbours outside the image read 0, so
    coordinates far outside return exactly 0 (zero-padded exterior).
    """
    corners, fr, fc = _bilinear_pieces(img, coords)
    out = None
    for ri, ci, valid, dr, dc in corners:
        wgt = (fr if dr else 1.0 - fr) * (fc if dc else 1.0 - fc) * valid
        term = wgt[..., None] * img[ri, ci]
        out = term if out is None else out + term
    return out


def bilinear(img, coords):
    """Differentiable bilinear sampling in both the image and the coordinates."""
    if not isinstance(img, Traced) and not isinstance(coords, Traced):
        return bilinear_forward(img, coords)
    iv, cv = value_of(img), value_of(coords)
    out = bilinear_forward(iv, cv)
    corners, fr, fc = _bilinear_pieces(iv, cv)
    parents, pulls = [], []
    if isinstance(img, Traced):
        def pull_img(g):
            gi = np.zeros_like(iv)
            for ri, ci, valid, dr, dc in corners:
                wgt = (fr if dr else 1.0 - fr) * (fc if dc else 1.0 - fc) * valid
                np.add.at(gi, (ri, ci), wgt[..., None] * g)
            return gi
        parents.append(img)
        pulls.append(pull_img)
    if isinstance(coords, Traced):
        def pull_coords(g):
            gr = np.zeros(cv.shape[:-1], dtype=iv.dtype)
            gc = np.zeros(cv.shape[:-1], dtype=iv.dtype)
            for ri, ci, valid, dr, dc in corners:
                pix = iv[ri, ci] * valid[..., None]
                dot = np.sum(pix * g, axis=-1)
                dwr = (1.0 if dr else -1.0) * (fc if dc else 1.0 - fc)
                dwc = (fr if dr else 1.0 - fr) * (1.0 if dc else -1.0)
                gr += dwr * dot
                gc += dwc * dot
            return np.stack([gr, gc], axis=-1)
        parents.append(coords)
        pulls.append(pull_coords)

    ti = isinstance(img, Traced)
    tc = isinstance(coords, Traced)

    def forward(vals):
        left = vals[0] if ti else iv
        right = (vals[1] if ti else vals[0]) if tc else cv
        return bilinear_forward(left, right)

    tape = (img if ti else coords).tape
    return tape.record("bilinear", tuple(parents), out,
                       lambda g: tuple(p(g) for p in pulls), forward)
