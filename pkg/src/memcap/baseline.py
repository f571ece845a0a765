"""One-layer attention-LSTM caption decoder, the comparison baseline.

The cell is a standard LSTM.  Its hidden and cell states are initialized
from the visual mean through two learned maps, and each step consumes the
previous word embedding concatenated with the visual mean and the attended
visual context.
"""

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
    sigmoid,
    softmax,
    tanh,
)
from .decoder import uniform_param

GATES = ("i", "f", "g", "o")


class LstmGate:
    def __init__(self, wx, uh, b):
        self.wx = wx  # (x_dim, n)
        self.uh = uh  # (n, n)
        self.b = b    # (n,)

    @classmethod
    def create(cls, x_dim, n, rng):
        return cls(
            uniform_param(rng, (x_dim, n), x_dim),
            uniform_param(rng, (n, n), n),
            uniform_param(rng, n, n),
        )

    def preact(self, x, h):
        return add(channel_projection(x, self.wx, self.b), channel_projection(h, self.uh))

    def named(self, prefix):
        yield f"{prefix}.Wx", self.wx
        yield f"{prefix}.Uh", self.uh
        yield f"{prefix}.b", self.b


def lstm_step(prev_h, prev_c, x, gates):
    """Standard LSTM cell update for one step."""
    i = sigmoid(gates["i"].preact(x, prev_h))
    f = sigmoid(gates["f"].preact(x, prev_h))
    g = tanh(gates["g"].preact(x, prev_h))
    o = sigmoid(gates["o"].preact(x, prev_h))
    c = add(mul(f, prev_c), mul(i, g))
    h = mul(o, tanh(c))
    return h, c


class LstmBaselineParams:
    def __init__(self, config, rng):
        n = config.n
        soft = config.attention == "soft"
        self.feature_w = uniform_param(rng, (config.feature_dim, n), config.feature_dim)
        self.embedding = uniform_param(rng, (config.vocab_size, n), n)
        self.init_h_w = uniform_param(rng, (n, n), n)
        self.init_h_b = uniform_param(rng, n, n)
        self.init_c_w = uniform_param(rng, (n, n), n)
        self.init_c_b = uniform_param(rng, n, n)
        self.vis_attn = AttentionParams.create(n, config.d_a, rng) if soft else None
        self.gates = {name: LstmGate.create(3 * n, n, rng) for name in GATES}
        self.head_w = uniform_param(rng, (n, config.vocab_size), n)
        self.head_b = uniform_param(rng, config.vocab_size, n)

    def named(self):
        yield "feature_proj.W", self.feature_w
        yield "embedding.W", self.embedding
        yield "init_h.W", self.init_h_w
        yield "init_h.b", self.init_h_b
        yield "init_c.W", self.init_c_w
        yield "init_c.b", self.init_c_b
        if self.vis_attn is not None:
            yield from self.vis_attn.named("vis_attn")
        for name in GATES:
            yield from self.gates[name].named(f"gate_{name}")
        yield "head.W", self.head_w
        yield "head.b", self.head_b


class AttentionLstmDecoder:
    kind = "lstm"
    loss_weights = {5: 1.0}  # single supervised output, keyed like the top layer

    def __init__(self, params, config):
        self.params = params
        self.config = config

    @classmethod
    def create(cls, config, rng=None):
        config.validate()
        if rng is None:
            rng = np.random.default_rng(config.seed)
        return cls(LstmBaselineParams(config, rng), config)

    def encode(self, features):
        features = features if isinstance(features, Tensor) else Tensor(features)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ShapeError(f"encode: need a nonempty (m, q) matrix, got {features.shape}")
        z = channel_projection(features, self.params.feature_w)
        return z, mean_rows(z)

    def _attend(self, query, z):
        if self.config.attention == "soft":
            return soft_attention(query, z, self.params.vis_attn)
        return dot_attention(query, z)

    def _init_state(self, v):
        p = self.params
        h = tanh(channel_projection(v, p.init_h_w, p.init_h_b))
        c = tanh(channel_projection(v, p.init_c_w, p.init_c_b))
        return h, c

    def _step(self, prev_token, v, z, h, c, record):
        p = self.params
        res = self._attend(h, z)
        record["vis"] = res.weights.data.tolist()
        emb = embedding_lookup(p.embedding, prev_token)
        x = concat(concat(emb, v), res.pooled)
        return lstm_step(h, c, x, p.gates)

    def predict_word(self, h):
        return softmax(channel_projection(h, self.params.head_w, self.params.head_b))

    def forward(self, features, tokens, video_id=None):
        from .decoder import ForwardResult

        tokens = list(tokens)
        if len(tokens) < 2:
            raise ValueError("caption must hold at least one step after the begin marker")
        for tok in tokens:
            if not 0 <= tok < self.config.vocab_size:
                raise IndexError(f"token index {tok} outside vocabulary")
        z, v = self.encode(features)
        h, c = self._init_state(v)
        targets = tokens[1:]
        probs = {5: []}
        attention = []
        for t in range(1, len(targets) + 1):
            record = {"step": t}
            h, c = self._step(tokens[t - 1], v, z, h, c, record)
            probs[5].append(self.predict_word(h))
            attention.append(record)
        return ForwardResult(probs, targets, [], attention)

    def sequence_losses(self, fwd):
        total = cross_entropy(fwd.probs[5][0], fwd.targets[0])
        for t in range(1, len(fwd.targets)):
            total = add(total, cross_entropy(fwd.probs[5][t], fwd.targets[t]))
        return {5: total}

    def greedy(self, features, video_id, bos, eos):
        z, v = self.encode(features)
        h, c = self._init_state(v)
        generated = []
        attention = []
        prev = bos
        for t in range(1, self.config.max_caption_len + 1):
            record = {"step": t}
            h, c = self._step(prev, v, z, h, c, record)
            word = int(np.argmax(self.predict_word(h).data))
            attention.append(record)
            if word == eos:
                break
            generated.append(word)
            prev = word
        return generated, attention
