"""Adam optimization with teacher forcing, plus checkpoint round-trips.

Checkpoint layout (binary, little-endian):
    magic "MDCK" | version u32 (=1) | metadata-length u32 | metadata JSON |
    repeated records [name-length u32, UTF-8 name, rank u32,
                      extents u32 * rank, float64 payload].

Records hold every named parameter followed by the Adam moments under
``adam.m.`` / ``adam.v.`` name prefixes, so reloading reproduces forward
results and optimizer state bit-exactly.
"""

import json
import struct
from dataclasses import asdict

import numpy as np

from . import kernels as K
from .autodiff import Tape
from .baseline import AttentionLstmDecoder
from .decoder import DecoderConfig, MemoryDecoder, multilayer_loss

CKPT_MAGIC = b"MDCK"
CKPT_VERSION = 1
CLIP_NORM = 5.0


class NanGradientError(RuntimeError):
    """A non-finite gradient appeared; training must not continue."""


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


class AdamState:
    """First/second moments mirroring the named parameter tensors."""

    def __init__(self, named_params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(t.data) for name, t in named_params}
        self.v = {name: np.zeros_like(t.data) for name, t in named_params}

    def step(self, named_params):
        """Bias-corrected update; a missing gradient counts as zero."""
        self.step_count += 1
        for name, t in named_params:
            grad = t.grad if t.grad is not None else np.zeros_like(t.data)
            K.adam_update(
                t.data.reshape(-1), grad.reshape(-1),
                self.m[name].reshape(-1), self.v[name].reshape(-1),
                self.lr, self.beta1, self.beta2, self.eps, self.step_count,
            )


def clip_gradients(named_params, max_norm=CLIP_NORM):
    """Scale all gradients by max_norm/norm when the global norm exceeds it."""
    total = 0.0
    for _, t in named_params:
        if t.grad is not None:
            total += float(np.sum(t.grad * t.grad))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        factor = max_norm / norm
        for _, t in named_params:
            if t.grad is not None:
                t.grad *= factor
    return norm


def check_finite_gradients(named_params):
    for name, t in named_params:
        if t.grad is not None and not np.isfinite(t.grad).all():
            raise NanGradientError(f"non-finite gradient in parameter {name!r}")


def train_batch(model, batch, adam):
    """One forward/backward/update over a batch of caption items."""
    named = list(model.params.named())
    tape = Tape()
    with tape:
        per_item = [
            model.sequence_losses(model.forward(it.features, it.tokens, it.video_id))
            for it in batch
        ]
        total, comps = multilayer_loss(per_item, model.loss_weights)
    tape.backward(total)
    check_finite_gradients(named)
    clip_gradients(named)
    adam.step(named)
    return total.item(), {j: c.item() for j, c in comps.items()}


def train_epoch(model, batches, adam):
    """One pass over a batch stream; returns per-item weighted means."""
    total_sum = 0.0
    comp_sums = {}
    count = 0
    for batch in batches:
        loss, comps = train_batch(model, batch, adam)
        total_sum += loss * len(batch)
        for j, value in comps.items():
            comp_sums[j] = comp_sums.get(j, 0.0) + value * len(batch)
        count += len(batch)
    if count == 0:
        raise ValueError("empty batch stream")
    return {
        "loss": total_sum / count,
        "components": {j: s / count for j, s in comp_sums.items()},
        "items": count,
    }


def evaluation_loss(model, items):
    """Mean total loss over items without recording a tape."""
    if not items:
        raise ValueError("empty split")
    per_item = [
        model.sequence_losses(model.forward(it.features, it.tokens, it.video_id))
        for it in items
    ]
    total, _ = multilayer_loss(per_item, model.loss_weights)
    return total.item()


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------

def _write_record(fh, name, array):
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<I", len(encoded)))
    fh.write(encoded)
    shape = array.shape
    fh.write(struct.pack("<I", len(shape)))
    for extent in shape:
        fh.write(struct.pack("<I", extent))
    fh.write(np.ascontiguousarray(array, dtype=np.float64).tobytes())


def _read_records(raw, offset):
    records = {}
    n = len(raw)
    while offset < n:
        (name_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        name = raw[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        shape = struct.unpack_from(f"<{rank}I", raw, offset) if rank else ()
        offset += 4 * rank
        count = int(np.prod(shape)) if shape else 1
        payload = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        records[name] = payload.reshape(shape).copy()
    return records


def save_checkpoint(path, model, adam, epoch=0, best_val_loss=None):
    meta = {
        "model": model.kind,
        "config": asdict(model.config),
        "adam": {
            "lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2,
            "eps": adam.eps, "step": adam.step_count,
        },
        "epoch": epoch,
        "best_val_loss": best_val_loss,
        "seed": model.config.seed,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name, t in model.params.named():
            _write_record(fh, name, t.data)
        for name, moment in adam.m.items():
            _write_record(fh, f"adam.m.{name}", moment)
        for name, moment in adam.v.items():
            _write_record(fh, f"adam.v.{name}", moment)


def load_checkpoint(path):
    """Rebuild (model, adam, meta) bit-exactly from a checkpoint file."""
    raw = open(path, "rb").read()
    if len(raw) < 12 or raw[:4] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != CKPT_VERSION:
        raise CheckpointVersionError(f"{path}: unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack_from("<I", raw, 8)
    meta = json.loads(raw[12:12 + meta_len].decode("utf-8"))
    records = _read_records(raw, 12 + meta_len)

    config = DecoderConfig(**meta["config"])
    model_cls = MemoryDecoder if meta["model"] == "memory" else AttentionLstmDecoder
    model = model_cls.create(config)
    named = list(model.params.named())
    for name, t in named:
        if name not in records:
            raise CheckpointError(f"{path}: missing tensor {name!r}")
        if records[name].shape != t.data.shape:
            raise CheckpointShapeError(
                f"{path}: tensor {name!r} has shape {records[name].shape}, "
                f"config expects {t.data.shape}"
            )
        t.data[...] = records[name]

    opt = meta["adam"]
    adam = AdamState(named, lr=opt["lr"], beta1=opt["beta1"], beta2=opt["beta2"], eps=opt["eps"])
    adam.step_count = opt["step"]
    for name, _ in named:
        adam.m[name][...] = records[f"adam.m.{name}"]
        adam.v[name][...] = records[f"adam.v.{name}"]
    return model, adam, meta
