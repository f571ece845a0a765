"""Ingestion: feature files, caption manifests, vocabulary, batching.

Feature file layout (binary, little-endian):
    magic "VFF1" | version u32 (=1) | id-length u32 | UTF-8 video id |
    m u32 | q u32 | m*q float32, row-major.

Caption manifest: one JSON object per line with keys
    {"video_id": str, "split": "train"|"val"|"test", "captions": [str, ...]}.

Vocabulary file: one "token<TAB>count" line per token, reserved tokens first.
"""

import json
import string
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"VFF1"
VERSION = 1
_MAX_ELEMENTS = 1 << 30  # refuse to allocate payloads past 4 GiB of float32

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")


class FeatureFileError(ValueError):
    """Base class for feature-file problems."""


class FeatureFormatError(FeatureFileError):
    """Bad magic or unsupported version."""


class FeatureTruncatedError(FeatureFileError):
    """Payload shorter than the header promises."""


class FeatureOverflowError(FeatureFileError):
    """Header dimensions exceed sane/encodable bounds."""


@dataclass
class FeatureFile:
    video_id: str
    values: np.ndarray  # (m, q) float32

    @property
    def m(self):
        return self.values.shape[0]

    @property
    def q(self):
        return self.values.shape[1]


def write_feature_file(feat, path):
    values = np.asarray(feat.values, dtype=np.float32)
    if values.ndim != 2 or values.shape[0] < 1:
        raise FeatureFileError(f"need a nonempty (m, q) matrix, got shape {values.shape}")
    m, q = values.shape
    if m >= 1 << 32 or q >= 1 << 32:
        raise FeatureOverflowError(f"dimensions ({m}, {q}) do not fit u32 header fields")
    vid = feat.video_id.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(vid)))
        fh.write(vid)
        fh.write(struct.pack("<II", m, q))
        fh.write(np.ascontiguousarray(values).tobytes())


def read_feature_file(path):
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise FeatureFormatError(f"{path}: bad magic, not a feature file")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise FeatureFormatError(f"{path}: unsupported version {version}")
    (id_len,) = struct.unpack_from("<I", raw, 8)
    offset = 12
    if len(raw) < offset + id_len + 8:
        raise FeatureTruncatedError(f"{path}: truncated header")
    video_id = raw[offset:offset + id_len].decode("utf-8")
    offset += id_len
    m, q = struct.unpack_from("<II", raw, offset)
    offset += 8
    if m < 1 or q < 1:
        raise FeatureFormatError(f"{path}: empty dimensions ({m}, {q})")
    if m * q > _MAX_ELEMENTS:
        raise FeatureOverflowError(f"{path}: header claims {m}x{q} elements")
    need = m * q * 4
    if len(raw) - offset < need:
        raise FeatureTruncatedError(
            f"{path}: truncated payload ({len(raw) - offset} bytes, need {need})"
        )
    values = np.frombuffer(raw[offset:offset + need], dtype="<f4").reshape(m, q)
    return FeatureFile(video_id, values.copy())


# --------------------------------------------------------------------------
# tokenization and vocabulary
# --------------------------------------------------------------------------

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def tokenize(text):
    """Strip ASCII punctuation, lowercase, split on whitespace."""
    return text.translate(_PUNCT_TABLE).lower().split()


@dataclass
class Vocabulary:
    tokens: list
    counts: dict
    index: dict = field(init=False)

    def __post_init__(self):
        self.index = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def encode(self, text):
        """Token indices wrapped in begin/end markers; unknowns map to UNK."""
        return [BOS] + [self.index.get(t, UNK) for t in tokenize(text)] + [EOS]

    def decode(self, indices):
        """Text from indices, markers and padding stripped."""
        words = []
        for i in indices:
            if i in (PAD, BOS):
                continue
            if i == EOS:
                break
            words.append(self.tokens[i])
        return " ".join(words)


def build_vocab(texts, min_count=1):
    """First-occurrence-ordered vocabulary over tokenized texts."""
    texts = list(texts)
    if not texts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts = {}
    order = []
    for text in texts:
        for tok in tokenize(text):
            if tok not in counts:
                counts[tok] = 0
                order.append(tok)
            counts[tok] += 1
    kept = [t for t in order if counts[t] >= min_count]
    tokens = list(RESERVED) + kept
    vocab_counts = {t: 0 for t in RESERVED}
    vocab_counts.update({t: counts[t] for t in kept})
    return Vocabulary(tokens, vocab_counts)


def save_vocab(vocab, path):
    with open(path, "w", encoding="utf-8") as fh:
        for tok in vocab.tokens:
            fh.write(f"{tok}\t{vocab.counts[tok]}\n")


def load_vocab(path):
    tokens, counts = [], {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            tok, cnt = line.split("\t")
            tokens.append(tok)
            counts[tok] = int(cnt)
    if tuple(tokens[:4]) != RESERVED:
        raise ValueError(f"{path}: reserved tokens must come first")
    return Vocabulary(tokens, counts)


# --------------------------------------------------------------------------
# manifests and batching
# --------------------------------------------------------------------------

@dataclass
class ManifestEntry:
    video_id: str
    split: str
    captions: list


def load_manifest(path):
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if obj.get("split") not in ("train", "val", "test"):
                raise ValueError(f"{path}:{lineno}: split must be train/val/test")
            entries.append(ManifestEntry(obj["video_id"], obj["split"], list(obj["captions"])))
    return entries


def save_manifest(entries, path):
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps(
                {"video_id": e.video_id, "split": e.split, "captions": e.captions},
                sort_keys=True,
            ) + "\n")


@dataclass
class CaptionItem:
    """One training pair: a video's features and one encoded caption."""
    video_id: str
    features: np.ndarray
    tokens: list  # BOS ... EOS


def load_split(features_dir, entries, vocab, split):
    """All (video, caption) pairs of a split, one item per caption."""
    features_dir = Path(features_dir)
    items = []
    for entry in entries:
        if entry.split != split:
            continue
        feat = read_feature_file(features_dir / f"{entry.video_id}.vff")
        for caption in entry.captions:
            items.append(CaptionItem(entry.video_id, feat.values, vocab.encode(caption)))
    return items


def pad_batch(items):
    """Right-pad token lists to the batch maximum with PAD.

    Returns (padded index matrix, true lengths).  PAD positions are outside
    every true length and never reach a loss term.
    """
    lengths = [len(it.tokens) for it in items]
    width = max(lengths)
    padded = np.full((len(items), width), PAD, dtype=np.int64)
    for row, it in enumerate(items):
        padded[row, :len(it.tokens)] = it.tokens
    return padded, lengths


def batch_iter(items, batch_size, seed, epoch=0):
    """Deterministic shuffled batches; order depends only on (seed, epoch)."""
    if not items:
        raise ValueError("empty split: nothing to iterate")
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    order = np.random.default_rng([seed, epoch]).permutation(len(items))
    for start in range(0, len(items), batch_size):
        yield [items[i] for i in order[start:start + batch_size]]
