"""Dense tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a C-contiguous float64 ndarray.  Operations executed
while a :class:`Tape` is active are recorded; ``tape.backward(loss)`` replays
the record once in reverse execution order and accumulates gradients
additively into ``Tensor.grad``.  Without an active tape the same functions
are plain forward math, which is how inference runs.

Shapes are explicit everywhere: binary operations require exactly equal
shapes and there is no broadcasting.  All math is float64.
"""

import threading

import numpy as np

from . import kernels as K


class ShapeError(ValueError):
    """Operands with incompatible shapes; message carries both shapes."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64, order="C")
        if arr.ndim > 0 and not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data):
    """Leaf tensor that collects gradients."""
    return Tensor(data, requires_grad=True)


# --------------------------------------------------------------------------
# tape
# --------------------------------------------------------------------------

_TLS = threading.local()


def _active_tape():
    return getattr(_TLS, "tape", None)


class Tape:
    """Ordered record of executed operations for one forward pass.

    The tape is confined to the thread that recorded it.  ``backward`` may be
    called repeatedly; every call first clears the gradients of all touched
    tensors, so replays are bit-identical.
    """

    def __init__(self):
        self._entries = []   # (output, backward_fn)
        self._touched = []   # every tensor that participates in this pass

    def __enter__(self):
        if _active_tape() is not None:
            raise RuntimeError("a tape is already active on this thread")
        _TLS.tape = self
        return self

    def __exit__(self, *exc):
        _TLS.tape = None
        return False

    def __len__(self):
        return len(self._entries)

    def record(self, out, inputs, backward):
        self._entries.append((out, backward))
        self._touched.append(out)
        self._touched.extend(inputs)

    def backward(self, root):
        """Propagate d(root)/d(tensor) into ``.grad`` of every participant."""
        if root.ndim != 0:
            raise ShapeError(f"backward root must be a scalar, got shape {root.shape}")
        for t in self._touched:
            t.grad = None
        root.grad = np.ones((), dtype=np.float64)
        for out, backward in reversed(self._entries):
            if out.grad is not None:
                backward(out.grad)


def _grad_buf(t):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    return t.grad


def _finish(out_data, inputs, make_backward):
    """Wrap a forward result; record the op when a tape is active."""
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs)
    tape = _active_tape()
    if needs and tape is not None:
        tape.record(out, inputs, make_backward(out))
    return out


# --------------------------------------------------------------------------
# primitives
# --------------------------------------------------------------------------

def channel_projection(x, w, b=None):
    """Per-row linear map across channels: out[i] = x[i] . w (+ b).

    ``x`` is a (m, q) matrix or a single (q,) row; ``w`` is (q, n); the
    optional bias ``b`` is (n,) and is added to every row.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim not in (1, 2) or w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ShapeError(f"channel_projection: x {x.shape} incompatible with w {w.shape}")
    if b is not None:
        b = as_tensor(b)
        if b.shape != (w.shape[1],):
            raise ShapeError(f"channel_projection: bias {b.shape}, expected ({w.shape[1]},)")

    if x.ndim == 1:
        out_data = K.matvec_t(w.data, x.data)
    else:
        out_data = K.matmul(x.data, w.data)
    if b is not None:
        out_data = out_data + b.data

    inputs = (x, w) if b is None else (x, w, b)

    def make_backward(out):
        def backward(g):
            if x.ndim == 1:
                if x.requires_grad:
                    _grad_buf(x)[...] += K.matvec(w.data, g)
                if w.requires_grad:
                    K.acc_outer(_grad_buf(w), x.data, g)
                if b is not None and b.requires_grad:
                    _grad_buf(b)[...] += g
            else:
                if x.requires_grad:
                    _grad_buf(x)[...] += K.matmul_nt(g, w.data)
                if w.requires_grad:
                    _grad_buf(w)[...] += K.matmul_tn(x.data, g)
                if b is not None and b.requires_grad:
                    _grad_buf(b)[...] += g.sum(axis=0)
        return backward

    return _finish(out_data, inputs, make_backward)


def circular_conv(kernel, signal):
    """out[i] = sum_j kernel[j] * signal[(i - j) mod n]."""
    kernel, signal = as_tensor(kernel), as_tensor(signal)
    if kernel.ndim != 1 or signal.ndim != 1 or kernel.shape != signal.shape:
        raise ShapeError(f"circular_conv: kernel {kernel.shape} vs signal {signal.shape}")
    out_data = K.circ_conv(kernel.data, signal.data)

    def make_backward(out):
        def backward(g):
            if kernel.requires_grad:
                _grad_buf(kernel)[...] += K.circ_corr(g, signal.data)
            if signal.requires_grad:
                _grad_buf(signal)[...] += K.circ_corr(g, kernel.data)
        return backward

    return _finish(out_data, (kernel, signal), make_backward)


def softmax(x):
    """Max-subtracted softmax of a vector."""
    x = as_tensor(x)
    if x.ndim != 1 or x.size == 0:
        raise ShapeError(f"softmax: need a nonempty vector, got shape {x.shape}")
    y = K.softmax_vec(x.data)

    def make_backward(out):
        def backward(g):
            if x.requires_grad:
                dot = float(g @ out.data)
                _grad_buf(x)[...] += out.data * (g - dot)
        return backward

    return _finish(y, (x,), make_backward)


def tanh(x):
    x = as_tensor(x)
    out_data = np.tanh(x.data)

    def make_backward(out):
        def backward(g):
            if x.requires_grad:
                _grad_buf(x)[...] += g * (1.0 - out.data * out.data)
        return backward

    return _finish(out_data, (x,), make_backward)


def sigmoid(x):
    x = as_tensor(x)
    # evaluated via tanh for overflow safety at large |x|
    out_data = 0.5 * (np.tanh(0.5 * x.data) + 1.0)

    def make_backward(out):
        def backward(g):
            if x.requires_grad:
                _grad_buf(x)[...] += g * out.data * (1.0 - out.data)
        return backward

    return _finish(out_data, (x,), make_backward)


def relu(x):
    x = as_tensor(x)
    out_data = np.maximum(x.data, 0.0)

    def make_backward(out):
        def backward(g):
            if x.requires_grad:
                # subgradient 0 at exactly 0
                _grad_buf(x)[...] += g * (x.data > 0.0)
        return backward

    return _finish(out_data, (x,), make_backward)


def _check_same_shape(op, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ (no broadcasting)")


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape("add", a, b)

    def make_backward(out):
        def backward(g):
            if a.requires_grad:
                _grad_buf(a)[...] += g
            if b.requires_grad:
                _grad_buf(b)[...] += g
        return backward

    return _finish(a.data + b.data, (a, b), make_backward)


def mul(a, b):
    """Elementwise (Hadamard) product."""
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape("mul", a, b)

    def make_backward(out):
        def backward(g):
            if a.requires_grad:
                _grad_buf(a)[...] += g * b.data
            if b.requires_grad:
                _grad_buf(b)[...] += g * a.data
        return backward

    return _finish(a.data * b.data, (a, b), make_backward)


def scale(x, alpha):
    """Multiply by a python constant (not a tracked tensor)."""
    x = as_tensor(x)
    alpha = float(alpha)

    def make_backward(out):
        def backward(g):
            if x.requires_grad:
                _grad_buf(x)[...] += g * alpha
        return backward

    return _finish(x.data * alpha, (x,), make_backward)


def concat(a, b):
    """Concatenate two vectors along the channel axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 1 or b.ndim != 1:
        raise ShapeError(f"concat: need vectors, got {a.shape} and {b.shape}")
    na = a.shape[0]

    def make_backward(out):
        def backward(g):
            if a.requires_grad:
                _grad_buf(a)[...] += g[:na]
            if b.requires_grad:
                _grad_buf(b)[...] += g[na:]
        return backward

    return _finish(np.concatenate([a.data, b.data]), (a, b), make_backward)


def reduce_sum(x):
    x = as_tensor(x)

    def make_backward(out):
        def backward(g):
            if x.requires_grad:
                _grad_buf(x)[...] += g
        return backward

    return _finish(x.data.sum(), (x,), make_backward)


def reduce_mean(x):
    x = as_tensor(x)
    inv = 1.0 / x.size

    def make_backward(out):
        def backward(g):
            if x.requires_grad:
                _grad_buf(x)[...] += g * inv
        return backward

    return _finish(x.data.mean(), (x,), make_backward)


def mean_rows(x):
    """Arithmetic mean over the rows of a (m, n) matrix -> (n,) vector."""
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeError(f"mean_rows: need a nonempty matrix, got shape {x.shape}")
    inv = 1.0 / x.shape[0]

    def make_backward(out):
        def backward(g):
            if x.requires_grad:
                _grad_buf(x)[...] += g * inv
        return backward

    return _finish(x.data.mean(axis=0), (x,), make_backward)


PROB_FLOOR = 1e-12


def cross_entropy(probs, target):
    """-log(probs[target]), with the probability clamped below at 1e-12."""
    probs = as_tensor(probs)
    if probs.ndim != 1:
        raise ShapeError(f"cross_entropy: need a probability vector, got {probs.shape}")
    target = int(target)
    if not 0 <= target < probs.shape[0]:
        raise IndexError(f"cross_entropy: target {target} outside [0, {probs.shape[0]})")
    p = max(float(probs.data[target]), PROB_FLOOR)
    clamped = probs.data[target] < PROB_FLOOR

    def make_backward(out):
        def backward(g):
            if probs.requires_grad and not clamped:
                _grad_buf(probs)[target] += -float(g) / p
        return backward

    return _finish(np.float64(-np.log(p)), (probs,), make_backward)


def embedding_lookup(table, index):
    """Row ``index`` of a (vocab, n) matrix."""
    table = as_tensor(table)
    if table.ndim != 2:
        raise ShapeError(f"embedding_lookup: need a matrix, got {table.shape}")
    index = int(index)
    if not 0 <= index < table.shape[0]:
        raise IndexError(f"embedding_lookup: row {index} outside [0, {table.shape[0]})")

    def make_backward(out):
        def backward(g):
            if table.requires_grad:
                _grad_buf(table)[index] += g
        return backward

    return _finish(table.data[index].copy(), (table,), make_backward)
