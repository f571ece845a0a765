import math

import numpy as np
import pytest

from memcap.data import build_vocab, tokenize
from memcap.decoder import DecoderConfig, MemoryDecoder
from memcap.evaluate import (
    bleu4,
    bleu4_stats,
    cider,
    evaluate_split,
    greedy_decode,
    sentence_bleu4,
)

rng = np.random.default_rng(17)


# --------------------------------------------------------------------------
# BLEU
# --------------------------------------------------------------------------

def test_identity_scores_100():
    cand = "a man rides a horse".split()
    assert bleu4([cand], [[list(cand)]]) == 100.0


def test_identity_scores_100_even_for_short_sentences():
    # three tokens: no 4-grams on either side
    cand = "the cat sat".split()
    assert bleu4([cand], [[list(cand)]]) == 100.0


def test_disjoint_unigrams_score_zero():
    assert bleu4([["x", "y"]], [[["a", "b", "c"]]]) == 0.0


def test_hand_computed_precisions_and_brevity_penalty():
    cand = "the cat sat".split()
    ref = "the cat sat down".split()
    precisions, bp, score = bleu4_stats([cand], [[ref]])
    assert precisions[:3] == [1.0, 1.0, 1.0]
    assert precisions[3] == 0.0           # no candidate 4-grams, reference has one
    np.testing.assert_allclose(bp, math.exp(1.0 - 4.0 / 3.0), rtol=1e-12)
    assert score == 0.0                   # unsmoothed: any zero precision zeroes the score


def test_clipping_counts_repeats_only_up_to_reference():
    # "the the the" vs "the cat": unigram clip = 1 of 3
    precisions, _, _ = bleu4_stats([["the", "the", "the"]], [[["the", "cat"]]])
    np.testing.assert_allclose(precisions[0], 1.0 / 3.0, rtol=1e-12)


def test_corpus_reordering_invariance():
    cands = [f"a b c{i}".split() for i in range(5)]
    refs = [[f"a b c{i} d".split(), "a b".split()] for i in range(5)]
    forward = bleu4(cands, refs)
    backward = bleu4(cands[::-1], refs[::-1])
    np.testing.assert_allclose(forward, backward, rtol=1e-12)


def test_empty_candidate_set_rejected():
    with pytest.raises(ValueError):
        bleu4([], [])
    with pytest.raises(ValueError):
        bleu4([["a"]], [[]])


def test_sentence_bleu_smoothing_labeled_variant():
    cand = "the cat sat".split()
    ref = "the cat sat down".split()
    smoothed = sentence_bleu4(cand, [ref], smooth=True)
    assert 0.0 < smoothed < 100.0
    assert sentence_bleu4(cand, [ref], smooth=False) == 0.0


# --------------------------------------------------------------------------
# CIDEr
# --------------------------------------------------------------------------

def test_single_video_identity_is_maximal():
    cand = "a red fox jumps high".split()
    assert cider([cand], [[list(cand)]]) == pytest.approx(10.0, abs=1e-12)


def test_disjoint_ngrams_score_zero():
    assert cider([["x", "y", "z"]], [[["a", "b", "c"]]]) == 0.0


def test_two_video_hand_oracle():
    # frozen from an independent per-n-gram table computation
    cands = ["a cat sits".split(), "a dog runs".split()]
    refs = [
        ["a cat sits".split(), "the cat sits down".split()],
        [["the", "dog", "runs", "fast"]],
    ]
    np.testing.assert_allclose(cider(cands, refs), 4.074396524545964, atol=1e-9)


def test_cider_empty_rejected():
    with pytest.raises(ValueError):
        cider([], [])


# --------------------------------------------------------------------------
# greedy decoding
# --------------------------------------------------------------------------

def _model(**kw):
    cfg = DecoderConfig(vocab_size=10, feature_dim=5, n=8, d_a=4, seed=1, **kw)
    return MemoryDecoder.create(cfg)


def _vocab():
    return build_vocab(["red fox jumps high over dog"], min_count=1)


def test_eos_dominant_head_gives_empty_caption():
    from memcap.data import EOS

    model = _model()
    vocab = _vocab()
    w, b = model.params.heads[5]
    w.data[...] = 0.0
    b.data[...] = 0.0
    b.data[EOS] = 10.0
    gen = greedy_decode(model, rng.standard_normal((3, 5)), "v0", vocab)
    assert gen.tokens == [] and gen.text == ""


def test_generation_respects_length_cap():
    model = _model(max_caption_len=7)
    vocab = _vocab()
    gen = greedy_decode(model, rng.standard_normal((3, 5)), "v0", vocab)
    assert len(gen.tokens) <= 7


def test_generation_deterministic():
    model = _model()
    vocab = _vocab()
    X = rng.standard_normal((3, 5))
    a = greedy_decode(model, X, "v0", vocab)
    b = greedy_decode(model, X, "v0", vocab)
    assert a.tokens == b.tokens and a.text == b.text


def test_attention_records_sum_to_one():
    model = _model()
    vocab = _vocab()
    gen = greedy_decode(model, rng.standard_normal((3, 5)), "v0", vocab)
    assert gen.attention, "expected at least one step record"
    for record in gen.attention:
        for key, weights in record.items():
            if key == "step":
                continue
            assert abs(sum(weights) - 1.0) < 1e-6


# --------------------------------------------------------------------------
# split evaluation
# --------------------------------------------------------------------------

def _toy_eval_setup():
    vocab = _vocab()
    videos = [
        ("v0", rng.standard_normal((3, 5)), ["red fox jumps", "fox jumps high"]),
        ("v1", rng.standard_normal((4, 5)), ["dog jumps over fox"]),
    ]
    return _model(), videos, vocab


def test_report_fields_and_determinism():
    model, videos, vocab = _toy_eval_setup()
    r1, gens1 = evaluate_split(model, videos, vocab)
    r2, _ = evaluate_split(model, videos, vocab)
    assert set(r1) == {"bleu4", "cider", "mean_len", "config_hash"}
    assert r1 == r2
    assert len(gens1) == 2


def test_report_cross_checks_against_dumped_generations():
    model, videos, vocab = _toy_eval_setup()
    report, gens = evaluate_split(model, videos, vocab)
    cands = [g.text.split() for g in gens]
    refs = [[tokenize(c) for c in captions] for _, _, captions in videos]
    assert report["bleu4"] == bleu4(cands, refs)
    assert report["cider"] == cider(cands, refs)
    assert report["mean_len"] == sum(len(c) for c in cands) / len(cands)


def test_empty_split_rejected():
    model, _, vocab = _toy_eval_setup()
    with pytest.raises(ValueError):
        evaluate_split(model, [], vocab)
