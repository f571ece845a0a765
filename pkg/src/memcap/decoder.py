"""Five-layer gated memory decoder.

Each layer keeps a bank of its past inputs; at every step it attends over
that bank and passes its input through a gated activation
(tanh of the filter path times sigmoid of the gate path).  Layer 2 mixes in
visual attention through a concat projection, layer 5 adds visual attention
to its input, and word probabilities come from the output head applied to
the sum of the top layer and the second visual attention.  Layers 1 and 3
carry their own supervision heads.

Step 1 has no past to attend over: per-layer noise vectors (seeded from the
run seed and the video id) are added to the layer inputs and the memory
attention result is replaced by the input itself.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from .attention import AttentionParams, dot_attention, soft_attention
from .autodiff import (
    ShapeError,
    Tensor,
    add,
    channel_projection,
    concat,
    cross_entropy,
    embedding_lookup,
    mean_rows,
    mul,
    scale,
    sigmoid,
    softmax,
    tanh,
)
from .fusion import CrossConvFusionParams, cross_conv_fuse

NUM_LAYERS = 5
SUPERVISED_LAYERS = (1, 3, 5)


class ConfigError(ValueError):
    """Invalid decoder or run configuration."""


@dataclass
class DecoderConfig:
    vocab_size: int
    feature_dim: int
    n: int = 512
    d_a: int = 100
    lambda1: float = 0.2
    lambda3: float = 0.2
    lambda5: float = 0.6
    max_caption_len: int = 30
    seed: int = 0
    attention: str = "soft"

    def validate(self):
        if self.vocab_size < 5:
            raise ConfigError(f"vocab_size {self.vocab_size} too small (4 reserved tokens)")
        for field in ("feature_dim", "n", "d_a", "max_caption_len"):
            if getattr(self, field) < 1:
                raise ConfigError(f"{field} must be positive")
        lam_sum = self.lambda1 + self.lambda3 + self.lambda5
        if abs(lam_sum - 1.0) > 1e-9:
            raise ConfigError(
                f"loss weights must sum to 1: lambda1+lambda3+lambda5 = {lam_sum:g}"
            )
        if min(self.lambda1, self.lambda3, self.lambda5) < 0:
            raise ConfigError("loss weights must be nonnegative")
        if not (self.lambda5 > self.lambda1 and self.lambda5 > self.lambda3):
            raise ConfigError(
                f"lambda5 ({self.lambda5:g}) must exceed lambda1 ({self.lambda1:g}) "
                f"and lambda3 ({self.lambda3:g}): the output layer carries the main loss"
            )
        if self.attention not in ("soft", "dot"):
            raise ConfigError(f"attention must be 'soft' or 'dot', got {self.attention!r}")
        return self

    @property
    def loss_weights(self):
        return {1: self.lambda1, 3: self.lambda3, 5: self.lambda5}


def uniform_param(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)


class MemoryLayerParams:
    """Gate filters and memory-attention parameters of one layer."""

    def __init__(self, wf, wg, bf, bg, attn):
        self.wf = wf
        self.wg = wg
        self.bf = bf
        self.bg = bg
        self.attn = attn  # None under dot attention

    @classmethod
    def create(cls, n, d_a, rng, attention):
        return cls(
            uniform_param(rng, (n, n), n),
            uniform_param(rng, (n, n), n),
            uniform_param(rng, n, n),
            uniform_param(rng, n, n),
            AttentionParams.create(n, d_a, rng) if attention == "soft" else None,
        )

    def named(self, prefix):
        yield f"{prefix}.wf", self.wf
        yield f"{prefix}.wg", self.wg
        yield f"{prefix}.bf", self.bf
        yield f"{prefix}.bg", self.bg
        if self.attn is not None:
            yield from self.attn.named(f"{prefix}.attn")


class MemoryDecoderParams:
    """Complete learnable state of the memory decoder."""

    def __init__(self, config, rng):
        n, d_a = config.n, config.d_a
        soft = config.attention == "soft"
        self.feature_w = uniform_param(rng, (config.feature_dim, n), config.feature_dim)
        self.embedding = uniform_param(rng, (config.vocab_size, n), n)
        self.fusion = CrossConvFusionParams.create(n, rng)
        self.layers = [
            MemoryLayerParams.create(n, d_a, rng, config.attention) for _ in range(NUM_LAYERS)
        ]
        self.concat_w = uniform_param(rng, (2 * n, n), 2 * n)
        self.concat_b = uniform_param(rng, n, 2 * n)
        self.vis_attn1 = AttentionParams.create(n, d_a, rng) if soft else None
        self.vis_attn4 = AttentionParams.create(n, d_a, rng) if soft else None
        self.heads = {}
        for j in SUPERVISED_LAYERS:
            self.heads[j] = (
                uniform_param(rng, (n, config.vocab_size), n),
                uniform_param(rng, config.vocab_size, n),
            )

    def named(self):
        yield "feature_proj.W", self.feature_w
        yield "embedding.W", self.embedding
        yield from self.fusion.named("fusion")
        for i, layer in enumerate(self.layers, start=1):
            yield from layer.named(f"layer{i}")
        yield "concat.W", self.concat_w
        yield "concat.b", self.concat_b
        if self.vis_attn1 is not None:
            yield from self.vis_attn1.named("vis_attn1")
        if self.vis_attn4 is not None:
            yield from self.vis_attn4.named("vis_attn4")
        for j in SUPERVISED_LAYERS:
            yield f"head{j}.W", self.heads[j][0]
            yield f"head{j}.b", self.heads[j][1]


def cold_start_vectors(seed, video_id, n, num_layers=NUM_LAYERS):
    """Per-layer standard-normal vectors, reproducible from (seed, video id)."""
    digest = hashlib.sha256(video_id.encode("utf-8")).digest()
    rng = np.random.default_rng([seed, int.from_bytes(digest[:8], "little")])
    return [Tensor(rng.standard_normal(n)) for _ in range(num_layers)]


@dataclass
class ForwardResult:
    probs: dict          # layer j -> list of per-step probability Tensors
    targets: list        # target token per step
    banks: list          # per-layer list of stored input Tensors
    attention: list      # per-step dict of attention-weight lists


class MemoryDecoder:
    kind = "memory"

    def __init__(self, params, config):
        self.params = params
        self.config = config

    @property
    def loss_weights(self):
        return self.config.loss_weights

    @classmethod
    def create(cls, config, rng=None):
        config.validate()
        if rng is None:
            rng = np.random.default_rng(config.seed)
        return cls(MemoryDecoderParams(config, rng), config)

    # ---------------- building blocks ----------------

    def encode(self, features):
        """Project raw frame descriptors and mean-pool them: (Z, V)."""
        features = features if isinstance(features, Tensor) else Tensor(features)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ShapeError(f"encode: need a nonempty (m, q) matrix, got {features.shape}")
        z = channel_projection(features, self.params.feature_w)
        return z, mean_rows(z)

    def _attend(self, query, slots, site):
        if self.config.attention == "soft":
            return soft_attention(query, slots, site)
        return dot_attention(query, slots)

    def _gated(self, layer, x, a):
        f = tanh(channel_projection(x, layer.wf, layer.bf))
        g = sigmoid(channel_projection(a, layer.wg, layer.bg))
        return mul(f, g)

    def predict_word(self, h5, phi4):
        """Output-head probabilities from the top layer plus visual context."""
        w, b = self.params.heads[5]
        return softmax(channel_projection(add(h5, phi4), w, b))

    def _aux_probs(self, j, h):
        w, b = self.params.heads[j]
        return softmax(channel_projection(h, w, b))

    def _layer2_input(self, h1, z, record):
        res = self._attend(h1, z, self.params.vis_attn1)
        record["vis1"] = res.weights.data.tolist()
        return channel_projection(
            concat(h1, res.pooled), self.params.concat_w, self.params.concat_b
        ), res.pooled

    def _layer5_input(self, h4, z, record):
        res = self._attend(h4, z, self.params.vis_attn4)
        record["vis4"] = res.weights.data.tolist()
        return add(h4, res.pooled), res.pooled

    # ---------------- steps ----------------

    def layer_step(self, index, x, banks, record=None):
        """One memory layer: attend over the bank, gate, append the input.

        ``index`` is 0-based.  The bank must be nonempty (step 1 takes the
        cold-start path instead).
        """
        layer = self.params.layers[index]
        res = self._attend(x, banks[index], layer.attn)
        if record is not None:
            record[f"mem{index + 1}"] = res.weights.data.tolist()
        h = self._gated(layer, x, res.pooled)
        banks[index].append(x)
        return h

    def _cold_layer(self, index, x, banks):
        # attention result replaced by the layer input itself
        h = self._gated(self.params.layers[index], x, x)
        banks[index].append(x)
        return h

    def _cold_step(self, v, z, noise, banks, record):
        """Step 1: noise-offset inputs seeded into the empty banks."""
        h1 = self._cold_layer(0, add(noise[0], v), banks)
        i2, _ = self._layer2_input(add(noise[1], h1), z, record)
        h2 = self._cold_layer(1, i2, banks)
        h3 = self._cold_layer(2, add(noise[2], h2), banks)
        h4 = self._cold_layer(3, add(noise[3], h3), banks)
        i5, phi4 = self._layer5_input(add(noise[4], h4), z, record)
        h5 = self._cold_layer(4, i5, banks)
        return (h1, h2, h3, h4, h5), phi4

    def _step(self, prev_token, v, z, banks, record):
        """Steps t >= 2: fuse the previous word with the visual mean."""
        p = self.params
        c = embedding_lookup(p.embedding, prev_token)
        m_t = cross_conv_fuse(v, c, p.fusion)
        h1 = self.layer_step(0, m_t, banks, record)
        i2, _ = self._layer2_input(h1, z, record)
        h2 = self.layer_step(1, i2, banks, record)
        h3 = self.layer_step(2, h2, banks, record)
        h4 = self.layer_step(3, h3, banks, record)
        i5, phi4 = self._layer5_input(h4, z, record)
        h5 = self.layer_step(4, i5, banks, record)
        return (h1, h2, h3, h4, h5), phi4

    # ---------------- whole-sequence passes ----------------

    def forward(self, features, tokens, video_id):
        """Teacher-forced pass over a begin/end-marked token sequence."""
        tokens = list(tokens)
        if len(tokens) < 2:
            raise ValueError("caption must hold at least one step after the begin marker")
        for tok in tokens:
            if not 0 <= tok < self.config.vocab_size:
                raise IndexError(f"token index {tok} outside vocabulary")
        z, v = self.encode(features)
        noise = cold_start_vectors(self.config.seed, video_id, self.config.n)
        banks = [[] for _ in range(NUM_LAYERS)]
        targets = tokens[1:]
        probs = {j: [] for j in SUPERVISED_LAYERS}
        attention = []

        for t in range(1, len(targets) + 1):
            record = {"step": t}
            if t == 1:
                hs, phi4 = self._cold_step(v, z, noise, banks, record)
            else:
                hs, phi4 = self._step(tokens[t - 1], v, z, banks, record)
            probs[1].append(self._aux_probs(1, hs[0]))
            probs[3].append(self._aux_probs(3, hs[2]))
            probs[5].append(self.predict_word(hs[4], phi4))
            attention.append(record)

        return ForwardResult(probs, targets, banks, attention)

    def sequence_losses(self, fwd):
        """Per-supervised-layer sum of step cross-entropies."""
        losses = {}
        for j in SUPERVISED_LAYERS:
            total = cross_entropy(fwd.probs[j][0], fwd.targets[0])
            for t in range(1, len(fwd.targets)):
                total = add(total, cross_entropy(fwd.probs[j][t], fwd.targets[t]))
            losses[j] = total
        return losses

    def greedy(self, features, video_id, bos, eos):
        """Argmax decoding; ties resolve to the lowest token index."""
        z, v = self.encode(features)
        noise = cold_start_vectors(self.config.seed, video_id, self.config.n)
        banks = [[] for _ in range(NUM_LAYERS)]
        generated = []
        attention = []
        prev = bos
        for t in range(1, self.config.max_caption_len + 1):
            record = {"step": t}
            if t == 1:
                hs, phi4 = self._cold_step(v, z, noise, banks, record)
            else:
                hs, phi4 = self._step(prev, v, z, banks, record)
            word = int(np.argmax(self.predict_word(hs[4], phi4).data))
            attention.append(record)
            if word == eos:
                break
            generated.append(word)
            prev = word
        return generated, attention


def multilayer_loss(per_item_losses, loss_weights):
    """Weighted total over layer components, each a batch mean.

    ``per_item_losses`` is one dict per batch item mapping the supervised
    layer to its summed step loss.  Returns (total, {layer: component}).
    """
    if not per_item_losses:
        raise ValueError("multilayer_loss: empty batch")
    inv = 1.0 / len(per_item_losses)
    components = {}
    for j in per_item_losses[0]:
        acc = per_item_losses[0][j]
        for item in per_item_losses[1:]:
            acc = add(acc, item[j])
        components[j] = scale(acc, inv)
    total = None
    for j, lam in loss_weights.items():
        term = scale(components[j], lam)
        total = term if total is None else add(total, term)
    return total, components
