"""Cross-convolution fusion of the visual mean vector and a word embedding.

Each modality is linearly mapped into a length-n kernel that is circularly
convolved over the other modality; the two rectified results are summed.
The circular form keeps the output at length n with no padding convention.
"""

import numpy as np

from . import kernels as K
from .autodiff import ShapeError, Tensor, add, circular_conv, relu


class CrossConvFusionParams:
    """The two square kernel-construction maps."""

    def __init__(self, w1, w2):
        self.w1 = w1  # (n, n), visual -> kernel
        self.w2 = w2  # (n, n), lexical -> kernel

    @classmethod
    def create(cls, n, rng):
        bound = 1.0 / np.sqrt(n)
        return cls(
            Tensor(rng.uniform(-bound, bound, (n, n)), requires_grad=True),
            Tensor(rng.uniform(-bound, bound, (n, n)), requires_grad=True),
        )

    def named(self, prefix="fusion"):
        yield f"{prefix}.W1", self.w1
        yield f"{prefix}.W2", self.w2


def _row_times_transpose(v, m):
    """v . m^T as a tape op; m is (n, n), v is (n,)."""
    out_data = K.matvec(m.data, v.data)
    from .autodiff import _active_tape, _grad_buf  # local to avoid cycle at import

    needs = v.requires_grad or m.requires_grad
    out = Tensor(out_data, requires_grad=needs)
    tape = _active_tape()
    if needs and tape is not None:
        def backward(g):
            if v.requires_grad:
                _grad_buf(v)[...] += K.matvec_t(m.data, g)
            if m.requires_grad:
                K.acc_outer(_grad_buf(m), g, v.data)

        tape.record(out, (v, m), backward)
    return out


def cross_conv_fuse(visual, lexical, params):
    """Fuse two width-n vectors into the decoder input vector.

    kernel1 = visual . W1^T, kernel2 = lexical . W2^T; each kernel is
    circularly convolved over the *other* modality and the rectified
    results are summed, so every output entry is nonnegative.
    """
    if visual.shape != lexical.shape or visual.ndim != 1:
        raise ShapeError(f"cross_conv_fuse: visual {visual.shape} vs lexical {lexical.shape}")
    if params.w1.shape != (visual.shape[0],) * 2:
        raise ShapeError(f"cross_conv_fuse: maps {params.w1.shape} vs width {visual.shape[0]}")
    kernel1 = _row_times_transpose(visual, params.w1)
    kernel2 = _row_times_transpose(lexical, params.w2)
    a = circular_conv(kernel2, visual)
    b = circular_conv(kernel1, lexical)
    return add(relu(a), relu(b))
