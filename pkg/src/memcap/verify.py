"""Gradient verification suite: every primitive plus the end-to-end loss.

Each check compares tape gradients against central finite differences and
reports the max relative error.  The end-to-end check walks every parameter
tensor of a tiny decoder (n=8, d_a=4, vocab 11, 4 steps, 3 frames).
"""

import numpy as np

from . import autodiff as ad
from .attention import AttentionParams, additive_scores, dot_scores, pool_slots
from .autodiff import Tensor
from .decoder import DecoderConfig, MemoryDecoder, multilayer_loss
from .fusion import CrossConvFusionParams, cross_conv_fuse
from .gradcheck import grad_check

TOLERANCE = 1e-4


def _primitive_checks(rng):
    n = 5
    other = Tensor(rng.standard_normal(n))
    mat = Tensor(rng.standard_normal((n, n)))
    vec = Tensor(rng.standard_normal(n))
    rows = Tensor(rng.standard_normal((3, n)))
    attn = AttentionParams.create(n, 3, rng)
    slots = [Tensor(rng.standard_normal(n)) for _ in range(3)]
    fusion = CrossConvFusionParams.create(n, rng)

    away_from_kink = Tensor(rng.standard_normal(n) + np.sign(rng.standard_normal(n)) * 0.5)

    return [
        ("channel_projection/x", Tensor(rng.standard_normal(n)),
         lambda t: ad.reduce_sum(ad.channel_projection(t, mat, vec))),
        ("channel_projection/W", Tensor(rng.standard_normal((n, n))),
         lambda t: ad.reduce_sum(ad.channel_projection(rows, t, vec))),
        ("channel_projection/b", Tensor(rng.standard_normal(n)),
         lambda t: ad.reduce_sum(ad.channel_projection(rows, mat, t))),
        ("circular_conv/kernel", Tensor(rng.standard_normal(n)),
         lambda t: ad.reduce_sum(ad.circular_conv(t, other))),
        ("circular_conv/signal", Tensor(rng.standard_normal(n)),
         lambda t: ad.reduce_sum(ad.circular_conv(other, t))),
        ("softmax+cross_entropy", Tensor(rng.standard_normal(n)),
         lambda t: ad.cross_entropy(ad.softmax(t), 2)),
        ("tanh", Tensor(rng.standard_normal(n)),
         lambda t: ad.reduce_sum(ad.tanh(t))),
        ("sigmoid", Tensor(rng.standard_normal(n)),
         lambda t: ad.reduce_sum(ad.sigmoid(t))),
        ("relu", away_from_kink,
         lambda t: ad.reduce_sum(ad.relu(t))),
        ("add", Tensor(rng.standard_normal(n)),
         lambda t: ad.reduce_sum(ad.add(t, other))),
        ("mul", Tensor(rng.standard_normal(n)),
         lambda t: ad.reduce_sum(ad.mul(t, other))),
        ("concat", Tensor(rng.standard_normal(n)),
         lambda t: ad.reduce_sum(ad.tanh(ad.concat(t, other)))),
        ("reduce_mean", Tensor(rng.standard_normal(n)),
         lambda t: ad.reduce_mean(t)),
        ("mean_rows", Tensor(rng.standard_normal((3, n))),
         lambda t: ad.reduce_sum(ad.tanh(ad.mean_rows(t)))),
        ("scale", Tensor(rng.standard_normal(n)),
         lambda t: ad.scale(ad.reduce_sum(t), 0.37)),
        ("embedding_lookup", Tensor(rng.standard_normal((4, n))),
         lambda t: ad.reduce_sum(ad.tanh(ad.embedding_lookup(t, 2)))),
        ("additive_scores/query", Tensor(rng.standard_normal(n)),
         lambda t: ad.reduce_sum(additive_scores(t, slots, attn))),
        ("dot_scores/query", Tensor(rng.standard_normal(n)),
         lambda t: ad.reduce_sum(dot_scores(t, slots))),
        ("pool_slots/weights", Tensor(rng.standard_normal(3)),
         lambda t: ad.reduce_sum(pool_slots(t, slots))),
        ("cross_conv_fuse/visual", Tensor(rng.standard_normal(n)),
         lambda t: ad.reduce_sum(cross_conv_fuse(t, other, fusion))),
        ("gated_activation", Tensor(rng.standard_normal(n)),
         lambda t: ad.reduce_sum(ad.mul(
             ad.tanh(ad.channel_projection(t, mat, vec)),
             ad.sigmoid(ad.channel_projection(t, mat, vec))))),
    ]


def run_primitive_checks(seed=0):
    """[(name, max relative error)] for every primitive at a random point."""
    rng = np.random.default_rng(seed)
    return [(name, grad_check(fn, point)) for name, point, fn in _primitive_checks(rng)]


def run_end_to_end_check(seed=0):
    """Max relative error per parameter tensor of the tiny decoder loss."""
    rng = np.random.default_rng(seed)
    config = DecoderConfig(vocab_size=11, feature_dim=5, n=8, d_a=4, seed=seed)
    model = MemoryDecoder.create(config)
    features = rng.standard_normal((3, 5))
    tokens = [1, 4, 7, 5, 2]  # four supervised steps

    def loss(_):
        fwd = model.forward(features, tokens, "gradcheck")
        total, _ = multilayer_loss([model.sequence_losses(fwd)], model.loss_weights)
        return total

    return [(f"loss/{name}", grad_check(loss, tensor, epsilon=1e-5))
            for name, tensor in model.params.named()]


def run_suite(seed=0, include_end_to_end=True):
    results = run_primitive_checks(seed)
    if include_end_to_end:
        results.extend(run_end_to_end_check(seed))
    return results
