"""Soft additive attention and the dot-product variant used for ablations.

Both attention types score a query against a set of slot vectors, normalize
the scores with softmax, and return the weighted sum of the slots.  The slot
set may be a (k, n) matrix Tensor or a sequence of (n,) vector Tensors (the
growing per-layer memory banks are kept as lists).

Scoring and pooling are fused tape operations: one pass over the stacked
slots through the kernel backend instead of one tape entry per slot.
"""

import numpy as np

from . import kernels as K
from .autodiff import ShapeError, Tensor, _active_tape, _grad_buf, softmax


class AttentionParams:
    """Learnable additive-attention parameters for one attention site."""

    def __init__(self, w, wa, ua, ba):
        self.w = w        # (d_a,) score projection
        self.wa = wa      # (d_a, n) query map
        self.ua = ua      # (d_a, n) slot map
        self.ba = ba      # (d_a,) bias

    @classmethod
    def create(cls, n, d_a, rng):
        def uni(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)

        return cls(uni(d_a, d_a), uni((d_a, n), n), uni((d_a, n), n), uni(d_a, n))

    def named(self, prefix):
        yield f"{prefix}.w", self.w
        yield f"{prefix}.Wa", self.wa
        yield f"{prefix}.Ua", self.ua
        yield f"{prefix}.ba", self.ba


class AttentionResult:
    __slots__ = ("weights", "pooled")

    def __init__(self, weights, pooled):
        self.weights = weights  # (k,) Tensor, sums to 1
        self.pooled = pooled    # (n,) Tensor, convex combination of slots


def _gather_slots(slots):
    """Normalize the slot argument to (stacked data, tensor list or matrix)."""
    if isinstance(slots, Tensor):
        if slots.ndim != 2 or slots.shape[0] == 0:
            raise ShapeError(f"attention: slot matrix must be nonempty 2-d, got {slots.shape}")
        return slots.data, slots
    slots = list(slots)
    if not slots:
        raise ShapeError("attention: empty slot set (step 1 must take the cold-start path)")
    return np.stack([s.data for s in slots]), slots


def _scatter_slot_grads(slots, ds):
    if isinstance(slots, Tensor):
        if slots.requires_grad:
            _grad_buf(slots)[...] += ds
    else:
        for i, s in enumerate(slots):
            if s.requires_grad:
                _grad_buf(s)[...] += ds[i]


def _slots_require_grad(slots):
    if isinstance(slots, Tensor):
        return slots.requires_grad
    return any(s.requires_grad for s in slots)


def additive_scores(query, slots, params):
    """e_i = w . tanh(Wa q + Ua s_i + ba), one fused op over all slots."""
    sdata, slots = _gather_slots(slots)
    if query.ndim != 1 or sdata.shape[1] != query.shape[0]:
        raise ShapeError(f"attention: query {query.shape} vs slots {sdata.shape}")
    w, wa, ua, ba = params.w, params.wa, params.ua, params.ba

    q_part = K.matvec(wa.data, query.data) + ba.data          # (d_a,)
    u = np.tanh(K.matmul_nt(sdata, ua.data) + q_part)         # (k, d_a)
    e_data = K.matvec(u, w.data)                              # (k,)

    needs = any(t.requires_grad for t in (query, w, wa, ua, ba)) or _slots_require_grad(slots)
    out = Tensor(e_data, requires_grad=needs)
    tape = _active_tape()
    if needs and tape is not None:
        def backward(ge):
            c = ge[:, None] * (1.0 - u * u) * w.data          # (k, d_a)
            csum = c.sum(axis=0)
            if w.requires_grad:
                _grad_buf(w)[...] += K.matvec_t(u, ge)
            if ba.requires_grad:
                _grad_buf(ba)[...] += csum
            if query.requires_grad:
                _grad_buf(query)[...] += K.matvec_t(wa.data, csum)
            if wa.requires_grad:
                K.acc_outer(_grad_buf(wa), csum, query.data)
            if ua.requires_grad:
                _grad_buf(ua)[...] += K.matmul_tn(c, sdata)
            if _slots_require_grad(slots):
                _scatter_slot_grads(slots, K.matmul(c, ua.data))

        ins = [query, w, wa, ua, ba]
        ins.extend([slots] if isinstance(slots, Tensor) else slots)
        tape.record(out, ins, backward)
    return out


def dot_scores(query, slots):
    """e_i = (q . s_i) / sqrt(n)."""
    sdata, slots = _gather_slots(slots)
    if query.ndim != 1 or sdata.shape[1] != query.shape[0]:
        raise ShapeError(f"attention: query {query.shape} vs slots {sdata.shape}")
    inv = 1.0 / np.sqrt(query.shape[0])
    e_data = K.matvec(sdata, query.data) * inv

    needs = query.requires_grad or _slots_require_grad(slots)
    out = Tensor(e_data, requires_grad=needs)
    tape = _active_tape()
    if needs and tape is not None:
        def backward(ge):
            if query.requires_grad:
                _grad_buf(query)[...] += K.matvec_t(sdata, ge) * inv
            if _slots_require_grad(slots):
                _scatter_slot_grads(slots, np.multiply.outer(ge * inv, query.data))

        ins = [query]
        ins.extend([slots] if isinstance(slots, Tensor) else slots)
        tape.record(out, ins, backward)
    return out


def pool_slots(weights, slots):
    """Weighted sum of the slots: sum_i weights[i] * s_i."""
    sdata, slots = _gather_slots(slots)
    if weights.ndim != 1 or weights.shape[0] != sdata.shape[0]:
        raise ShapeError(f"attention: weights {weights.shape} vs slots {sdata.shape}")
    out_data = K.matvec_t(sdata, weights.data)

    needs = weights.requires_grad or _slots_require_grad(slots)
    out = Tensor(out_data, requires_grad=needs)
    tape = _active_tape()
    if needs and tape is not None:
        def backward(g):
            if weights.requires_grad:
                _grad_buf(weights)[...] += K.matvec(sdata, g)
            if _slots_require_grad(slots):
                _scatter_slot_grads(slots, np.multiply.outer(weights.data, g))

        ins = [weights]
        ins.extend([slots] if isinstance(slots, Tensor) else slots)
        tape.record(out, ins, backward)
    return out


def soft_attention(query, slots, params):
    e = additive_scores(query, slots, params)
    weights = softmax(e)
    return AttentionResult(weights, pool_slots(weights, slots))


def dot_attention(query, slots):
    e = dot_scores(query, slots)
    weights = softmax(e)
    return AttentionResult(weights, pool_slots(weights, slots))
