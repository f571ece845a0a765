import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memcap import autodiff as ad
from memcap.attention import (
    AttentionParams,
    additive_scores,
    dot_attention,
    dot_scores,
    pool_slots,
    soft_attention,
)
from memcap.autodiff import ShapeError, Tensor
from memcap.gradcheck import grad_check

rng = np.random.default_rng(11)


def _params(n, d_a, seed=0):
    return AttentionParams.create(n, d_a, np.random.default_rng(seed))


def _slots(k, n, seed=1):
    r = np.random.default_rng(seed)
    return [Tensor(r.standard_normal(n)) for _ in range(k)]


def test_single_slot_gets_full_weight():
    slots = _slots(1, 6)
    res = soft_attention(Tensor(rng.standard_normal(6)), slots, _params(6, 3))
    np.testing.assert_allclose(res.weights.data, [1.0])
    np.testing.assert_allclose(res.pooled.data, slots[0].data, rtol=1e-12)


def test_identical_slots_give_uniform_weights():
    base = rng.standard_normal(5)
    slots = [Tensor(base.copy()) for _ in range(4)]
    res = soft_attention(Tensor(rng.standard_normal(5)), slots, _params(5, 3))
    np.testing.assert_allclose(res.weights.data, np.full(4, 0.25), rtol=1e-12)
    np.testing.assert_allclose(res.pooled.data, base, rtol=1e-12)


def test_scalar_closed_form():
    # n = d_a = 1 with unit maps: e = (tanh(0), tanh(10))
    params = AttentionParams(
        Tensor([1.0]), Tensor([[1.0]]), Tensor([[1.0]]), Tensor([0.0])
    )
    res = soft_attention(Tensor([0.0]), [Tensor([0.0]), Tensor([10.0])], params)
    e0, e1 = 0.0, math.tanh(10.0)
    z = math.exp(e0) + math.exp(e1)
    np.testing.assert_allclose(res.weights.data, [math.exp(e0) / z, math.exp(e1) / z], rtol=1e-12)
    np.testing.assert_allclose(res.weights.data, [0.2689, 0.7311], atol=5e-5)


def test_empty_slot_set_rejected():
    with pytest.raises(ShapeError):
        soft_attention(Tensor(np.zeros(3)), [], _params(3, 2))
    with pytest.raises(ShapeError):
        dot_attention(Tensor(np.zeros(3)), [])


def test_dot_single_slot():
    res = dot_attention(Tensor(rng.standard_normal(4)), _slots(1, 4))
    np.testing.assert_allclose(res.weights.data, [1.0])


def test_dot_orthogonal_query_uniform():
    q = np.zeros(4)
    q[0] = 1.0
    slots = [Tensor([0.0, a, b, c]) for a, b, c in rng.standard_normal((3, 3))]
    res = dot_attention(Tensor(q), slots)
    np.testing.assert_allclose(res.weights.data, np.full(3, 1 / 3), rtol=1e-12)


def test_dot_closed_form_scores():
    s0 = np.array([1.0, 1.0, 1.0, 1.0])  # |s0|^2 = 4
    slots = [Tensor(s0), Tensor(-s0)]
    res = dot_attention(Tensor(s0), slots)
    z = math.exp(2.0) + math.exp(-2.0)
    np.testing.assert_allclose(res.weights.data, [math.exp(2.0) / z, math.exp(-2.0) / z], rtol=1e-12)


@given(st.integers(min_value=1, max_value=8), st.integers(min_value=0, max_value=2**31))
@settings(max_examples=25, deadline=None)
def test_weights_normalized_positive_and_pooled_in_hull(k, seed):
    r = np.random.default_rng(seed)
    n = 5
    slots = [Tensor(r.standard_normal(n)) for _ in range(k)]
    q = Tensor(r.standard_normal(n))
    for res in (soft_attention(q, slots, _params(n, 3, seed)), dot_attention(q, slots)):
        w = res.weights.data
        assert abs(w.sum() - 1.0) < 1e-6
        assert (w > 0).all()
        stacked = np.stack([s.data for s in slots])
        assert (res.pooled.data <= stacked.max(axis=0) + 1e-12).all()
        assert (res.pooled.data >= stacked.min(axis=0) - 1e-12).all()


@given(st.integers(min_value=2, max_value=8), st.integers(min_value=0, max_value=2**31))
@settings(max_examples=25, deadline=None)
def test_slot_permutation_equivariance(k, seed):
    r = np.random.default_rng(seed)
    n = 4
    slots = [Tensor(r.standard_normal(n)) for _ in range(k)]
    q = Tensor(r.standard_normal(n))
    params = _params(n, 3, seed)
    perm = r.permutation(k)
    res = soft_attention(q, slots, params)
    res_p = soft_attention(q, [slots[i] for i in perm], params)
    np.testing.assert_allclose(res_p.weights.data, res.weights.data[perm], rtol=1e-10, atol=1e-15)
    np.testing.assert_allclose(res_p.pooled.data, res.pooled.data, rtol=1e-10, atol=1e-12)


def test_argmax_invariant_under_constant_score_shift():
    e = rng.standard_normal(6)
    w1 = ad.softmax(Tensor(e)).data
    w2 = ad.softmax(Tensor(e + 17.5)).data
    np.testing.assert_allclose(w1, w2, rtol=1e-10)
    assert w1.argmax() == w2.argmax() == e.argmax()


def test_matrix_slots_match_list_slots():
    k, n = 4, 5
    raw = rng.standard_normal((k, n))
    q = Tensor(rng.standard_normal(n))
    params = _params(n, 3)
    as_list = soft_attention(q, [Tensor(row) for row in raw], params)
    as_matrix = soft_attention(q, Tensor(raw), params)
    np.testing.assert_allclose(as_matrix.weights.data, as_list.weights.data, rtol=1e-12)
    np.testing.assert_allclose(as_matrix.pooled.data, as_list.pooled.data, rtol=1e-12)


# --------------------------------------------------------------------------
# gradients
# --------------------------------------------------------------------------

def _pooled_sum_loss(q, slots, params):
    res = soft_attention(q, slots, params)
    return ad.reduce_sum(ad.tanh(res.pooled))


def test_grad_check_soft_attention_query_and_params():
    n, d_a, k = 4, 3, 3
    params = _params(n, d_a, seed=5)
    slots = _slots(k, n, seed=6)
    q = Tensor(rng.standard_normal(n))

    assert grad_check(lambda t: _pooled_sum_loss(t, slots, params), q) < 1e-4
    for tensor in (params.w, params.wa, params.ua, params.ba):
        err = grad_check(lambda t, tt=tensor: _pooled_sum_loss(q, slots, params), tensor)
        assert err < 1e-4


def test_grad_check_soft_attention_slots():
    n = 4
    params = _params(n, 3, seed=7)
    fixed = _slots(2, n, seed=8)
    point = Tensor(rng.standard_normal(n))
    q = Tensor(rng.standard_normal(n))
    err = grad_check(lambda t: _pooled_sum_loss(q, [fixed[0], t, fixed[1]], params), point)
    assert err < 1e-4


def test_grad_check_dot_attention():
    n = 4
    fixed = _slots(3, n, seed=9)
    q = Tensor(rng.standard_normal(n))

    def loss(t):
        res = dot_attention(t, fixed)
        return ad.reduce_sum(ad.tanh(res.pooled))

    assert grad_check(loss, q) < 1e-4

    point = Tensor(rng.standard_normal(n))

    def loss_slot(t):
        res = dot_attention(q, [fixed[0], t])
        return ad.reduce_sum(ad.tanh(res.pooled))

    assert grad_check(loss_slot, point) < 1e-4


def test_grad_check_score_and_pool_primitives():
    n, d_a, k = 4, 2, 3
    params = _params(n, d_a, seed=10)
    slots = _slots(k, n, seed=11)
    q = Tensor(rng.standard_normal(n))

    assert grad_check(lambda t: ad.reduce_sum(additive_scores(t, slots, params)), q) < 1e-4
    assert grad_check(lambda t: ad.reduce_sum(dot_scores(t, slots)), q) < 1e-4
    w0 = Tensor(rng.standard_normal(k))
    assert grad_check(lambda t: ad.reduce_sum(pool_slots(t, slots)), w0) < 1e-4
