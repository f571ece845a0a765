"""Finite-difference verification of tape gradients."""

import numpy as np

from .autodiff import ShapeError, Tape, Tensor


def grad_check(fn, point, epsilon=1e-5):
    """Max relative error between tape and central-difference gradients.

    ``fn`` maps one Tensor to a scalar Tensor and must be deterministic;
    it is re-evaluated 2*point.size times with ``point.data`` perturbed in
    place.  The relative error of each component uses the denominator
    max(1, |analytic|, |numeric|).
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon {epsilon} outside [1e-7, 1e-3]")
    if not isinstance(point, Tensor):
        point = Tensor(point, requires_grad=True)
    point.requires_grad = True

    tape = Tape()
    with tape:
        out = fn(point)
    if out.ndim != 0:
        raise ShapeError(f"grad_check: fn must return a scalar, got shape {out.shape}")
    tape.backward(out)
    analytic = np.zeros_like(point.data) if point.grad is None else point.grad.copy()

    numeric = np.zeros_like(point.data)
    flat = point.data.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        hi = fn(point).item()
        flat[i] = orig - epsilon
        lo = fn(point).item()
        flat[i] = orig
        num_flat[i] = (hi - lo) / (2.0 * epsilon)

    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / denom))
