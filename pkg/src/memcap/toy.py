"""Synthetic overfit corpus: ten videos, one fixed caption each.

Features are seeded standard-normal matrices; the captions share a small
vocabulary so the whole pipeline (train to near-zero loss, then decode the
training split verbatim) runs in seconds.
"""

from pathlib import Path

import numpy as np

from .data import FeatureFile, ManifestEntry, build_vocab, save_manifest, save_vocab, write_feature_file

TOY_CAPTIONS = [
    ("toy00", "a man rides a horse"),
    ("toy01", "a woman slices an onion"),
    ("toy02", "a dog runs on grass"),
    ("toy03", "a cat plays with a ball"),
    ("toy04", "a man plays a guitar"),
    ("toy05", "a woman rides a bike"),
    ("toy06", "a dog chases a cat"),
    ("toy07", "a man slices a tomato"),
    ("toy08", "a cat sits on a chair"),
    ("toy09", "a woman walks on grass"),
]

TOY_FRAMES = 5
TOY_FEATURE_DIM = 16


def make_toy_corpus(out_dir, seed=0):
    """Write features/, manifest.jsonl and vocab.txt under ``out_dir``."""
    out_dir = Path(out_dir)
    features_dir = out_dir / "features"
    features_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([seed, 917])
    entries = []
    for video_id, caption in TOY_CAPTIONS:
        values = rng.standard_normal((TOY_FRAMES, TOY_FEATURE_DIM)).astype(np.float32)
        write_feature_file(FeatureFile(video_id, values), features_dir / f"{video_id}.vff")
        entries.append(ManifestEntry(video_id, "train", [caption]))
    save_manifest(entries, out_dir / "manifest.jsonl")
    vocab = build_vocab([c for _, c in TOY_CAPTIONS], min_count=1)
    save_vocab(vocab, out_dir / "vocab.txt")
    return {
        "features_dir": str(features_dir),
        "manifest": str(out_dir / "manifest.jsonl"),
        "vocab": str(out_dir / "vocab.txt"),
        "videos": len(TOY_CAPTIONS),
        "vocab_size": len(vocab),
    }
