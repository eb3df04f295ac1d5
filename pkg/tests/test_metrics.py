"""Caption metrics against values worked out by hand on a fixed three-pair corpus.

Corpus (hypothesis | reference):
    the car stops        | the car stops now
    the car turns left   | the car turns right
    car the slows        | the car slows down
"""
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from drivecausal.metrics import (MetricError, align_exact, bleu, cider, count_chunks,
                                 meteor_lite, modified_precision, report, rouge_l, to_corpus)

CORPUS = to_corpus(["the car stops", "the car turns left", "car the slows"],
                   ["the car stops now", "the car turns right", "the car slows down"])
B2 = 1.2 ** 2


def test_modified_precisions_by_hand():
    counts = [[modified_precision(h, r, n) for h, r in CORPUS] for n in (1, 2, 3, 4)]
    assert counts[0] == [(3, 3), (3, 4), (3, 3)]
    assert counts[1] == [(2, 2), (2, 3), (0, 2)]
    assert counts[2] == [(1, 1), (1, 2), (0, 1)]
    assert counts[3] == [(0, 0), (0, 1), (0, 0)]


def test_bleu4_hand_value():
    # pooled precisions 9/10, 4/7, 2/4, and add-one 1/2 for the empty 4-gram order;
    # 10 hypothesis words against 12 reference words
    expected = math.exp(1 - 12 / 10) * (9 / 10 * 4 / 7 * 2 / 4 * 1 / 2) ** 0.25
    assert bleu(CORPUS) == pytest.approx(expected, abs=1e-6)


def test_rouge_l_hand_value():
    def f(p, r):
        return (1 + B2) * p * r / (r + B2 * p)
    # LCS lengths 3, 3, 2
    expected = (f(1, 3 / 4) + f(3 / 4, 3 / 4) + f(2 / 3, 2 / 4)) / 3
    assert rouge_l(CORPUS) == pytest.approx(expected, abs=1e-6)


def test_cider_hand_value():
    # "the" and "car" occur in every reference, so carry no weight.  Per-order cosines:
    #   pair 1: 1/sqrt2 for n = 1..3, no 4-gram in the hypothesis
    #   pair 2: 1/2 for n = 1..3, 4-grams differ
    #   pair 3: 1/sqrt2 for unigrams only
    s = 1 / math.sqrt(2)
    per_pair = [3 * s / 4, 3 * 0.5 / 4, s / 4]
    assert cider(CORPUS) == pytest.approx(10 * sum(per_pair) / 3, abs=1e-6)


def test_meteor_lite_hand_value():
    def f(p, r):
        return 10 * p * r / (r + 9 * p)
    # three matches each; one chunk, one chunk, three chunks
    expected = (f(1, 3 / 4) * (1 - 0.5 / 27) + f(3 / 4, 3 / 4) * (1 - 0.5 / 27)
                + f(1, 3 / 4) * (1 - 0.5)) / 3
    assert meteor_lite(CORPUS) == pytest.approx(expected, abs=1e-6)


def test_alignment_prefers_continuing_a_chunk():
    pairs = align_exact("a b a b".split(), "a b x a b".split())
    assert pairs == [(0, 0), (1, 1), (2, 3), (3, 4)]
    assert count_chunks(pairs) == 2
    assert count_chunks(align_exact("car the slows".split(), "the car slows down".split())) == 3


def test_identity_corpus_scores_one():
    texts = ["the car stops because the light is red", "the car speeds up on the open road",
             "the car slows down as the weather turns to rain"]
    same = to_corpus(texts, texts)
    assert bleu(same) == pytest.approx(1.0, abs=1e-12)
    assert rouge_l(same) == pytest.approx(1.0, abs=1e-12)
    # one chunk per sentence, so only the fragmentation penalty remains
    expected = sum(1 - 0.5 * (1 / m) ** 3 for m in (8, 8, 10)) / 3
    assert meteor_lite(same) == pytest.approx(expected, abs=1e-12)


def test_disjoint_corpus_scores_low():
    c = to_corpus(["alpha beta gamma delta"] * 2, ["one two three four", "five six seven eight"])
    assert rouge_l(c) == 0.0 and meteor_lite(c) == 0.0 and cider(c) == 0.0
    assert bleu(c) < 0.2


def test_best_reference_is_used():
    c = to_corpus(["the car stops"], [["a b c", "the car stops"]])
    assert rouge_l(c) == 1.0


def test_errors():
    with pytest.raises(MetricError):
        bleu([])
    with pytest.raises(MetricError):
        rouge_l([(["a"], [])])
    with pytest.raises(MetricError):
        cider(CORPUS[:1])
    with pytest.raises(MetricError):
        to_corpus(["a"], [])
    assert set(report(CORPUS)) == {"bleu1", "bleu2", "bleu3", "bleu4", "rouge_l", "cider",
                                   "meteor_lite"}


WORDS = st.lists(st.sampled_from("the car stops slows turns left right red light".split()),
                 min_size=1, max_size=7)


@given(st.lists(st.tuples(WORDS, WORDS), min_size=2, max_size=5), st.randoms())
def test_metrics_ignore_corpus_order(pairs, rnd):
    corpus = [(h, [r]) for h, r in pairs]
    shuffled = corpus[:]
    rnd.shuffle(shuffled)
    a, b = report(corpus), report(shuffled)
    for k in a:
        assert a[k] == pytest.approx(b[k], abs=1e-12)


@given(st.lists(st.tuples(WORDS, WORDS), min_size=2, max_size=5))
def test_metrics_are_bounded(pairs):
    rep = report([(h, [r]) for h, r in pairs])
    for k, v in rep.items():
        upper = 10.0 if k == "cider" else 1.0
        assert -1e-12 <= v <= upper + 1e-9
