"""Greedy caption generation and corpus metrics (BLEU-4, CIDEr).

BLEU here is corpus-level, unsmoothed, with uniform 1..4-gram weights:
modified n-gram precision with per-video reference clipping and the
closest-reference-length brevity penalty.  An order whose candidate n-gram
total is zero scores 0 when the references do contain n-grams of that
order, and counts as vacuously perfect when they do not (so a short
candidate identical to its short reference still scores 100).  A separate
sentence-level helper applies add-one smoothing to the 3/4-gram orders and
is labeled as smoothed.

CIDEr is the plain tf-idf n-gram cosine (n = 1..4, averaged, scaled by 10,
no length penalty).  Document frequency counts the videos whose reference
set contains the n-gram; idf = log((#videos + 1) / df) so that a
single-video corpus still produces nonzero vectors.
"""

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass

from .data import tokenize

MAX_ORDER = 4


@dataclass
class GenerationResult:
    video_id: str
    tokens: list      # generated indices, markers stripped
    text: str
    attention: list   # per-step dict of attention-weight lists


def greedy_decode(model, features, video_id, vocab):
    """Decode one video with argmax steps; ties go to the lowest index."""
    from .data import BOS, EOS

    token_ids, attention = model.greedy(features, video_id, bos=BOS, eos=EOS)
    text = " ".join(vocab.tokens[i] for i in token_ids)
    return GenerationResult(video_id, token_ids, text, attention)


# --------------------------------------------------------------------------
# BLEU
# --------------------------------------------------------------------------

def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_len(cand_len, refs):
    # ties resolve to the shorter reference
    return min((abs(len(r) - cand_len), len(r)) for r in refs)[1]


def bleu4_stats(candidates, references):
    """(precisions, brevity penalty, score in [0, 100]) at corpus level."""
    if not candidates:
        raise ValueError("bleu4: empty candidate set")
    if len(candidates) != len(references) or any(not refs for refs in references):
        raise ValueError("bleu4: every candidate needs at least one reference")

    clipped = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    ref_totals = [0] * MAX_ORDER
    cand_len = 0
    ref_len = 0
    for cand, refs in zip(candidates, references):
        cand_len += len(cand)
        ref_len += _closest_ref_len(len(cand), refs)
        for n in range(1, MAX_ORDER + 1):
            counts = _ngrams(cand, n)
            max_ref = Counter()
            for ref in refs:
                for gram, cnt in _ngrams(ref, n).items():
                    if cnt > max_ref[gram]:
                        max_ref[gram] = cnt
            clipped[n - 1] += sum(min(cnt, max_ref[g]) for g, cnt in counts.items())
            totals[n - 1] += max(0, len(cand) - n + 1)
            ref_totals[n - 1] += sum(max(0, len(r) - n + 1) for r in refs)

    precisions = []
    for n in range(MAX_ORDER):
        if totals[n] > 0:
            precisions.append(clipped[n] / totals[n])
        else:
            precisions.append(1.0 if ref_totals[n] == 0 else 0.0)

    if cand_len == 0:
        return precisions, 0.0, 0.0
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    if min(precisions) <= 0.0:
        return precisions, bp, 0.0
    log_mean = sum(math.log(p) for p in precisions) / MAX_ORDER
    return precisions, bp, 100.0 * bp * math.exp(log_mean)


def bleu4(candidates, references):
    """Corpus BLEU with uniform 1..4-gram weights, no smoothing."""
    return bleu4_stats(candidates, references)[2]


def sentence_bleu4(candidate, references, smooth=True):
    """Single-sentence BLEU; with ``smooth`` the 3/4-gram precisions get
    add-one smoothing (for display only: corpus scores stay unsmoothed)."""
    if not smooth:
        return bleu4([candidate], [references])
    if not references:
        raise ValueError("sentence_bleu4: need at least one reference")
    precisions = []
    for n in range(1, MAX_ORDER + 1):
        counts = _ngrams(candidate, n)
        max_ref = Counter()
        for ref in references:
            for gram, cnt in _ngrams(ref, n).items():
                if cnt > max_ref[gram]:
                    max_ref[gram] = cnt
        hit = sum(min(cnt, max_ref[g]) for g, cnt in counts.items())
        total = max(0, len(candidate) - n + 1)
        if n >= 3:
            hit, total = hit + 1, total + 1
        precisions.append(hit / total if total else 0.0)
    if len(candidate) == 0 or min(precisions) <= 0.0:
        return 0.0
    ref_len = _closest_ref_len(len(candidate), references)
    bp = 1.0 if len(candidate) > ref_len else math.exp(1.0 - ref_len / len(candidate))
    return 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / MAX_ORDER)


# --------------------------------------------------------------------------
# CIDEr
# --------------------------------------------------------------------------

def _tfidf_vector(tokens, n, idf):
    vec = {}
    for gram, cnt in _ngrams(tokens, n).items():
        weight = idf.get(gram)
        if weight is not None:
            vec[gram] = cnt * weight
    return vec


def _cosine(a, b):
    norm_a = math.sqrt(sum(v * v for v in a.values()))
    norm_b = math.sqrt(sum(v * v for v in b.values()))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    dot = sum(v * b[g] for g, v in a.items() if g in b)
    return dot / (norm_a * norm_b)


def cider(candidates, references):
    """Corpus CIDEr: per video, the n-averaged tf-idf cosine against each
    reference, averaged over references, scaled by 10; then the corpus mean."""
    if not candidates:
        raise ValueError("cider: empty candidate set")
    if len(candidates) != len(references) or any(not refs for refs in references):
        raise ValueError("cider: every candidate needs at least one reference")

    num_videos = len(references)
    idf = {}
    for n in range(1, MAX_ORDER + 1):
        df = Counter()
        for refs in references:
            seen = set()
            for ref in refs:
                seen.update(_ngrams(ref, n).keys())
            df.update(seen)
        for gram, count in df.items():
            idf[gram] = math.log((num_videos + 1) / count)

    total = 0.0
    for cand, refs in zip(candidates, references):
        per_n = []
        for n in range(1, MAX_ORDER + 1):
            cand_vec = _tfidf_vector(cand, n, idf)
            sims = [_cosine(cand_vec, _tfidf_vector(ref, n, idf)) for ref in refs]
            per_n.append(sum(sims) / len(sims))
        total += 10.0 * sum(per_n) / MAX_ORDER
    return total / num_videos


# --------------------------------------------------------------------------
# split evaluation
# --------------------------------------------------------------------------

def config_hash(config, kind):
    from dataclasses import asdict

    blob = json.dumps({"model": kind, "config": asdict(config)}, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def evaluate_split(model, videos, vocab):
    """Greedy-decode every (video_id, features, captions) triple and score.

    Returns (report dict, list of GenerationResult).  Reference captions are
    tokenized with the shared tokenizer; candidates use the decoded words.
    """
    if not videos:
        raise ValueError("evaluate_split: empty split")
    generations = []
    candidates = []
    references = []
    for video_id, features, captions in videos:
        gen = greedy_decode(model, features, video_id, vocab)
        generations.append(gen)
        candidates.append(gen.text.split())
        references.append([tokenize(c) for c in captions])
    report = {
        "bleu4": bleu4(candidates, references),
        "cider": cider(candidates, references),
        "mean_len": sum(len(c) for c in candidates) / len(candidates),
        "config_hash": config_hash(model.config, model.kind),
    }
    return report, generations
