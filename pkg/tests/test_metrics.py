import math
from collections import Counter

import numpy as np
import pytest

from diffcap.errors import InvalidInputError
from diffcap.metrics import bleu, cider, rouge_l


def toks(text):
    return text.split()


class TestBleu:
    def test_identical_corpus_scores_one(self):
        hyps = [toks("a small red car left the lot")]
        refs = [[toks("a small red car left the lot")]]
        for n in (1, 2, 3, 4):
            assert bleu(hyps, refs, n) == pytest.approx(1.0, abs=1e-12)

    def test_hand_worked_brevity_example(self):
        score = bleu([toks("the cat")], [[toks("the cat sat")]], 1)
        assert score == pytest.approx(math.exp(-0.5), abs=1e-6)

    def test_no_overlap_scores_zero(self):
        assert bleu([toks("x y z")], [[toks("a b c")]], 2) == 0.0

    def test_empty_corpus_rejected(self):
        with pytest.raises(InvalidInputError):
            bleu([], [], 1)

    def test_bad_order_rejected(self):
        with pytest.raises(InvalidInputError):
            bleu([toks("a")], [[toks("a")]], 5)

    def test_unigram_equal_lengths_reduces_to_clipped_precision(self):
        hyps = [toks("a b c"), toks("d e f")]
        refs = [[toks("a b x")], [toks("d y z")]]
        matched = 2 + 1
        guessed = 6
        assert bleu(hyps, refs, 1) == pytest.approx(matched / guessed, abs=1e-12)

    def test_bounded_in_unit_interval(self):
        rng = np.random.default_rng(0)
        vocab = list("abcdefg")
        for _ in range(20):
            hyps = [[vocab[i] for i in rng.integers(0, 7, size=rng.integers(1, 8))]
                    for _ in range(3)]
            refs = [[[vocab[i] for i in rng.integers(0, 7, size=rng.integers(1, 8))]]
                    for _ in range(3)]
            s = bleu(hyps, refs, 2)
            assert 0.0 <= s <= 1.0

    def test_token_relabeling_invariance(self):
        relabel = {"a": "zz", "b": "qq", "c": "kk"}
        hyps = [toks("a b c a")]
        refs = [[toks("a b c")]]
        mapped_h = [[relabel[t] for t in hyps[0]]]
        mapped_r = [[[relabel[t] for t in refs[0][0]]]]
        assert bleu(hyps, refs, 2) == pytest.approx(bleu(mapped_h, mapped_r, 2), abs=1e-12)


class TestRougeL:
    def test_identical_scores_one(self):
        hyps = [toks("the car moved away")]
        refs = [[toks("the car moved away")]]
        assert rouge_l(hyps, refs) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_scores_zero(self):
        assert rouge_l([toks("x y")], [[toks("a b")]]) == 0.0

    def test_hand_worked_example(self):
        score = rouge_l([toks("a b c d")], [[toks("a c d")]])
        beta2 = 1.2 ** 2
        p, r = 3 / 4, 3 / 3
        expect = (1 + beta2) * p * r / (r + beta2 * p)
        assert score == pytest.approx(expect, abs=1e-6)
        assert score == pytest.approx(1.83 / 2.08, abs=1e-6)

    def test_max_over_references(self):
        hyps = [toks("a b c")]
        refs = [[toks("z z z"), toks("a b c")]]
        assert rouge_l(hyps, refs) == pytest.approx(1.0, abs=1e-12)

    def test_empty_corpus_rejected(self):
        with pytest.raises(InvalidInputError):
            rouge_l([], [])


def oracle_cider(hyps, refsets):
    """Independently coded TF-IDF cosine scorer."""
    n_corpus = len(refsets)

    def grams(tokens, n):
        return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))

    total = []
    for hyp, refs in zip(hyps, refsets):
        per_n = []
        for n in range(1, 5):
            df = {}
            for rs in refsets:
                seen = set()
                for r in rs:
                    seen |= set(grams(r, n))
                for g in seen:
                    df[g] = df.get(g, 0) + 1

            def vec(tokens):
                return {g: c * math.log(n_corpus / max(df.get(g, 0), 1))
                        for g, c in grams(tokens, n).items()}

            hv = vec(hyp)
            hnorm = math.sqrt(sum(v * v for v in hv.values()))
            sims = []
            for r in refs:
                rv = vec(r)
                rnorm = math.sqrt(sum(v * v for v in rv.values()))
                if hnorm == 0.0 or rnorm == 0.0:
                    sims.append(0.0)
                    continue
                dot = sum(v * rv.get(g, 0.0) for g, v in hv.items())
                sims.append(dot / (hnorm * rnorm))
            per_n.append(sum(sims) / len(sims))
        total.append(10.0 * sum(per_n) / 4.0)
    return sum(total) / len(total)


class TestCider:
    def test_identical_with_unique_ngrams_scores_ten(self):
        hyps = [toks("a blue truck entered the upper lot"),
                toks("someone walked across the dark road")]
        refs = [[list(hyps[0])], [list(hyps[1])]]
        assert cider(hyps, refs) == pytest.approx(10.0, abs=1e-12)

    def test_no_overlap_scores_zero(self):
        hyps = [toks("x x x x"), toks("y y y y")]
        refs = [[toks("a b c d")], [toks("e f g h")]]
        assert cider(hyps, refs) == 0.0

    def test_matches_independent_oracle(self):
        hyps = [toks("the red car is gone"),
                toks("a person appeared near the car"),
                toks("the red truck moved a little")]
        refs = [
            [toks("the red car left the lot"), toks("a car is gone")],
            [toks("a person appeared by the white car")],
            [toks("the truck moved slightly"), toks("the red truck is elsewhere")],
        ]
        assert cider(hyps, refs) == pytest.approx(oracle_cider(hyps, refs), abs=1e-9)

    def test_small_corpus_rejected(self):
        with pytest.raises(InvalidInputError):
            cider([toks("a b")], [[toks("a b")]])

    def test_score_within_bounds(self):
        rng = np.random.default_rng(1)
        vocab = list("abcdef")
        hyps = [[vocab[i] for i in rng.integers(0, 6, size=6)] for _ in range(4)]
        refs = [[[vocab[i] for i in rng.integers(0, 6, size=6)]] for _ in range(4)]
        s = cider(hyps, refs)
        assert 0.0 <= s <= 10.0


def test_all_metrics_invariant_under_token_relabeling():
    relabel = {"a": "car", "b": "road", "c": "person", "d": "tree"}
    hyps = [toks("a b c"), toks("b d a c")]
    refs = [[toks("a b d")], [toks("b d a")]]
    mapped_h = [[relabel[t] for t in h] for h in hyps]
    mapped_r = [[[relabel[t] for t in r] for r in rs] for rs in refs]
    assert bleu(hyps, refs, 2) == pytest.approx(bleu(mapped_h, mapped_r, 2), abs=1e-12)
    assert rouge_l(hyps, refs) == pytest.approx(rouge_l(mapped_h, mapped_r), abs=1e-12)
    assert cider(hyps, refs) == pytest.approx(cider(mapped_h, mapped_r), abs=1e-12)
