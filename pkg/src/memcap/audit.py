"""Parameter counting with an itemized breakdown.

Counts are derived from the same constructors that build the trainable
parameters; a zero allocator stands in for the initializer so the audit
costs no real memory or entropy.  The "decoder-core" scope covers the
memory layers (with their attention sites), both visual attention sites,
the concat projection, and the fusion maps; "full" adds the embedding,
the feature projection, and all output/supervision heads.  The
"lstm-baseline" scope is the cell's analogue: gates, attention site,
and state-init maps.
"""

from .baseline import LstmBaselineParams
from .decoder import MemoryDecoderParams

SCOPES = ("decoder-core", "full", "lstm-baseline")

_CORE_PREFIXES = ("fusion.", "layer", "concat.", "vis_attn")
_LSTM_CORE_PREFIXES = ("gate_", "vis_attn", "init_h", "init_c")


class _ZeroAlloc:
    """rng stand-in whose draws are all-zero arrays."""

    @staticmethod
    def uniform(low, high, shape=None):
        import numpy as np

        return np.zeros(shape if shape is not None else ())


def _items(params):
    return [(name, tuple(t.shape), int(t.size)) for name, t in params.named()]


def audit(config, scope):
    """(total, items) where items are (name, shape, count) rows in scope."""
    if scope not in SCOPES:
        raise ValueError(f"scope must be one of {SCOPES}, got {scope!r}")
    if scope == "lstm-baseline":
        rows = _items(LstmBaselineParams(config, _ZeroAlloc()))
        rows = [r for r in rows if r[0].startswith(_LSTM_CORE_PREFIXES)]
    else:
        rows = _items(MemoryDecoderParams(config, _ZeroAlloc()))
        if scope == "decoder-core":
            rows = [r for r in rows if r[0].startswith(_CORE_PREFIXES)]
    return sum(r[2] for r in rows), rows


def format_breakdown(config, scopes=SCOPES):
    """Human-readable audit across scopes, one line per named parameter."""
    lines = []
    for scope in scopes:
        total, rows = audit(config, scope)
        lines.append(f"[{scope}]  n={config.n} d_a={config.d_a} "
                     f"vocab={config.vocab_size} q={config.feature_dim}")
        for name, shape, count in rows:
            dims = "x".join(str(s) for s in shape) if shape else "scalar"
            lines.append(f"  {name:<24} {dims:>12}  {count:>12,}")
        lines.append(f"  {'total':<24} {'':>12}  {total:>12,}  ({total / 1e6:.2f} M)")
        lines.append("")
    return "\n".join(lines)


def human_count(count):
    return f"{count / 1e6:.2f} M" if count >= 1e5 else str(count)
