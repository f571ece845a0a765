"""Parity between the compiled kernel backend and the numpy fallback."""

import numpy as np
import pytest

from memcap.kernels import pykernels

try:
    from memcap.kernels import _ckern
    BACKENDS = [pykernels, _ckern]
except ImportError:
    _ckern = None
    BACKENDS = [pykernels]

needs_ext = pytest.mark.skipif(_ckern is None, reason="compiled kernels not built")

rng = np.random.default_rng(7)


def _rand(*shape):
    return np.ascontiguousarray(rng.standard_normal(shape))


@needs_ext
@pytest.mark.parametrize("r,inner,c", [(1, 1, 1), (3, 5, 2), (17, 9, 13)])
def test_matmul_parity(r, inner, c):
    a, b = _rand(r, inner), _rand(inner, c)
    np.testing.assert_allclose(_ckern.matmul(a, b), pykernels.matmul(a, b), rtol=1e-12)


@needs_ext
@pytest.mark.parametrize("r,inner,c", [(3, 5, 2), (8, 8, 8)])
def test_matmul_transposed_variants_parity(r, inner, c):
    at, b = _rand(inner, r), _rand(inner, c)
    np.testing.assert_allclose(_ckern.matmul_tn(at, b), pykernels.matmul_tn(at, b), rtol=1e-12)
    a, bt = _rand(r, inner), _rand(c, inner)
    np.testing.assert_allclose(_ckern.matmul_nt(a, bt), pykernels.matmul_nt(a, bt), rtol=1e-12)


@needs_ext
def test_matvec_parity():
    a, x = _rand(6, 4), _rand(4)
    np.testing.assert_allclose(_ckern.matvec(a, x), pykernels.matvec(a, x), rtol=1e-12)
    y = _rand(6)
    np.testing.assert_allclose(_ckern.matvec_t(a, y), pykernels.matvec_t(a, y), rtol=1e-12)


@needs_ext
@pytest.mark.parametrize("n", [1, 2, 5, 64])
def test_circular_parity(n):
    a, b = _rand(n), _rand(n)
    np.testing.assert_allclose(_ckern.circ_conv(a, b), pykernels.circ_conv(a, b), rtol=1e-11, atol=1e-12)
    np.testing.assert_allclose(_ckern.circ_corr(a, b), pykernels.circ_corr(a, b), rtol=1e-11, atol=1e-12)


@needs_ext
def test_softmax_and_outer_parity():
    x = _rand(9)
    np.testing.assert_allclose(_ckern.softmax_vec(x), pykernels.softmax_vec(x), rtol=1e-13)
    acc1, acc2 = np.zeros((3, 4)), np.zeros((3, 4))
    u, v = _rand(3), _rand(4)
    _ckern.acc_outer(acc1, u, v)
    pykernels.acc_outer(acc2, u, v)
    np.testing.assert_allclose(acc1, acc2, rtol=1e-13)


@needs_ext
def test_adam_update_parity():
    p1 = _rand(11)
    p2 = p1.copy()
    g = _rand(11)
    m1, v1 = np.zeros(11), np.zeros(11)
    m2, v2 = np.zeros(11), np.zeros(11)
    for t in (1, 2, 3):
        _ckern.adam_update(p1, g, m1, v1, 1e-3, 0.9, 0.999, 1e-8, t)
        pykernels.adam_update(p2, g, m2, v2, 1e-3, 0.9, 0.999, 1e-8, t)
    np.testing.assert_allclose(p1, p2, rtol=1e-12)
    np.testing.assert_allclose(m1, m2, rtol=1e-12)
    np.testing.assert_allclose(v1, v2, rtol=1e-12)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda b: b.NAME)
def test_circ_conv_definition(impl):
    # brute-force double loop is the oracle
    n = 6
    k, s = _rand(n), _rand(n)
    expected = np.zeros(n)
    for i in range(n):
        for j in range(n):
            expected[i] += k[j] * s[(i - j) % n]
    np.testing.assert_allclose(impl.circ_conv(k, s), expected, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda b: b.NAME)
def test_circ_corr_definition(impl):
    n = 5
    a, b = _rand(n), _rand(n)
    expected = np.zeros(n)
    for kk in range(n):
        for i in range(n):
            expected[kk] += a[i] * b[(i - kk) % n]
    np.testing.assert_allclose(impl.circ_corr(a, b), expected, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda b: b.NAME)
def test_softmax_overflow_safe(impl):
    out = impl.softmax_vec(np.array([1000.0, 1000.0, 999.0]))
    assert np.isfinite(out).all()
    assert abs(out.sum() - 1.0) < 1e-12
