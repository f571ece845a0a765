"""Numpy implementation of the hot numeric kernels.

This is the fallback backend: every function here has a signature-identical
twin in the compiled extension ``memcap.kernels._ckern``.  Callers (the
autodiff layer) guarantee C-contiguous float64 arrays and consistent shapes,
so the functions stay check-free and allocation-light.
"""

import numpy as np

NAME = "python"

# (i - j) mod n gather tables, keyed by n.  Shared by conv and corr.
_SHIFT_IDX: dict[int, np.ndarray] = {}


def _shift_index(n: int) -> np.ndarray:
    idx = _SHIFT_IDX.get(n)
    if idx is None:
        r = np.arange(n)
        idx = (r[:, None] - r[None, :]) % n
        _SHIFT_IDX[n] = idx
    return idx


def matmul(a, b):
    return a @ b


def matmul_tn(a, b):
    # a^T @ b without materializing the transpose
    return a.T @ b


def matmul_nt(a, b):
    return a @ b.T


def matvec(a, x):
    return a @ x


def matvec_t(a, x):
    # a^T @ x
    return x @ a


def circ_conv(kernel, signal):
    # out[i] = sum_j kernel[j] * signal[(i - j) mod n]
    n = kernel.shape[0]
    return signal[_shift_index(n)] @ kernel


def circ_corr(a, b):
    # out[k] = sum_i a[i] * b[(i - k) mod n]; the adjoint of circ_conv
    n = a.shape[0]
    return a @ b[_shift_index(n)]


def softmax_vec(x):
    e = np.exp(x - x.max())
    return e / e.sum()


def acc_outer(acc, u, v):
    # acc += u (outer) v, in place
    acc += np.multiply.outer(u, v)


def adam_update(p, g, m, v, lr, beta1, beta2, eps, t):
    """Bias-corrected Adam step, all four flat arrays updated in place."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mc = 1.0 - beta1 ** t
    vc = 1.0 - beta2 ** t
    p -= lr * (m / mc) / (np.sqrt(v / vc) + eps)
