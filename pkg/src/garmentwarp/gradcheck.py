"""Finite-difference verification of tape gradients.

Central differences with step 1e-3 against the recorded vector-Jacobian
products, in 64-bit only.  This is the oracle every differentiable operator
in the package must pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import NumericalError, ValidationError
from .tensor import Tensor

STEP = 1e-3
TOLERANCE = 1e-4
FLOOR = 1e-8


@dataclass
class GradientCheckReport:
    """Outcome of one finite-difference sweep."""

    passed: bool
    max_rel_error: float
    tolerance: float = TOLERANCE
    step: float = STEP
    input_errors: tuple[float, ...] = field(default_factory=tuple)
    worst_input: int = -1

    def __str__(self):
        verdict = "pass" if self.passed else "FAIL"
        return (f"gradient check {verdict}: max rel error {self.max_rel_error:.3e} "
                f"(tol {self.tolerance:.1e}, worst input {self.worst_input})")


def _prepare(point) -> list[np.ndarray]:
    pts = point if isinstance(point, (tuple, list)) else (point,)
    arrays = []
    for p in pts:
        arr = p.data if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64)
        if arr.dtype != np.float64:
            raise ValidationError("fd_check_gradient requires 64-bit inputs")
        arrays.append(np.array(arr, copy=True))
    return arrays


def fd_check_gradient(op, point, cotangent=None, *, step: float = STEP,
                      tolerance: float = TOLERANCE,
                      floor: float = FLOOR) -> GradientCheckReport:
    """Compare the tape gradient of ``op`` against central differences.

    ``op`` is called once with traced inputs to record the graph, then twice
    per input coordinate on plain arrays for the numeric derivative.  The
    cotangent (defaults to all ones) contracts the output to a scalar so a
    single reverse sweep covers every input coordinate.  Error is relative
    with an absolute floor: |a - n| / max(|a|, |n|, floor).
    """
    arrays = _prepare(point)
    tape = ad.GradientTape()
    leaves = [tape.watch(a) for a in arrays]
    out = op(*leaves)
    if not isinstance(out, ad.Traced):
        raise ValidationError("operation did not propagate traced inputs; "
                              "nothing was recorded on the tape")
    out_val = out.value
    if not np.all(np.isfinite(out_val)):
        raise NumericalError("gradient check aborted: non-finite forward value")

    if cotangent is None:
        cot = np.ones_like(out_val)
    else:
        cot = cotangent.data if isinstance(cotangent, Tensor) else np.asarray(cotangent)
        cot = cot.astype(np.float64)
        if cot.shape != out_val.shape:
            raise ValidationError(
                f"cotangent shape {cot.shape} != output shape {out_val.shape}")

    analytic = tape.gradient(out, leaves, cot)

    def scalar_eval(args):
        val = op(*args)
        if isinstance(val, Tensor):
            val = val.data
        val = ad.value_of(val)
        if not np.all(np.isfinite(val)):
            raise NumericalError("gradient check aborted: non-finite forward value")
        return float(np.sum(cot * val))

    input_errors = []
    for k, base in enumerate(arrays):
        numeric = np.zeros_like(base)
        flat = base.reshape(-1)
        num_flat = numeric.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            f_plus = scalar_eval(arrays)
            flat[j] = orig - step
            f_minus = scalar_eval(arrays)
            flat[j] = orig
            num_flat[j] = (f_plus - f_minus) / (2.0 * step)
        denom = np.maximum(np.maximum(np.abs(analytic[k]), np.abs(numeric)), floor)
        rel = np.abs(analytic[k] - numeric) / denom
        input_errors.append(float(rel.max()) if rel.size else 0.0)

    worst = int(np.argmax(input_errors)) if input_errors else -1
    max_err = max(input_errors) if input_errors else 0.0
    return GradientCheckReport(passed=max_err < tolerance, max_rel_error=max_err,
                               tolerance=tolerance, step=step,
                               input_errors=tuple(input_errors), worst_input=worst)
