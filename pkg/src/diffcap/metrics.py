"""Corpus-level caption metrics: BLEU, ROUGE-L, and CIDEr.

All three operate on pre-tokenized sequences and care only about token
identity; hypothesis i is scored against reference set i.
"""
from __future__ import annotations

import math
from collections import Counter

import numpy as np

from .errors import InvalidInputError

ROUGE_BETA = 1.2
CIDER_MAX_N = 4
CIDER_SCALE = 10.0


def _check_corpus(hypotheses, reference_sets):
    if not hypotheses or len(hypotheses) != len(reference_sets):
        raise InvalidInputError("need equal, nonzero counts of hypotheses and reference sets")
    if any(not refs for refs in reference_sets):
        raise InvalidInputError("every hypothesis needs at least one reference")


def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses, reference_sets, n: int = 4) -> float:
    """Corpus BLEU-n: geometric mean of clipped modified i-gram precisions for
    i = 1..n times the brevity penalty, with the closest-reference-length
    convention and no smoothing (any zero precision gives 0)."""
    _check_corpus(hypotheses, reference_sets)
    if not 1 <= n <= 4:
        raise InvalidInputError("bleu order must be between 1 and 4")
    matched = [0] * n
    guessed = [0] * n
    hyp_len = 0
    ref_len = 0
    for hyp, refs in zip(hypotheses, reference_sets):
        hyp_len += len(hyp)
        ref_len += min((abs(len(r) - len(hyp)), len(r)) for r in refs)[1]
        for i in range(1, n + 1):
            counts = _ngrams(hyp, i)
            max_ref = Counter()
            for r in refs:
                for gram, c in _ngrams(r, i).items():
                    max_ref[gram] = max(max_ref[gram], c)
            matched[i - 1] += sum(min(c, max_ref[gram]) for gram, c in counts.items())
            guessed[i - 1] += sum(counts.values())
    if hyp_len == 0 or any(g == 0 for g in guessed) or any(m == 0 for m in matched):
        return 0.0
    log_precision = sum(math.log(m / g) for m, g in zip(matched, guessed)) / n
    bp = math.exp(min(0.0, 1.0 - ref_len / hyp_len))
    return bp * math.exp(log_precision)


def _lcs_len(a, b) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(hypotheses, reference_sets) -> float:
    """Mean over the corpus of the best LCS F-measure (beta = 1.2) against
    each hypothesis's references."""
    _check_corpus(hypotheses, reference_sets)
    scores = []
    b2 = ROUGE_BETA * ROUGE_BETA
    for hyp, refs in zip(hypotheses, reference_sets):
        best = 0.0
        for ref in refs:
            if not hyp or not ref:
                continue
            lcs = _lcs_len(hyp, ref)
            if lcs == 0:
                continue
            p = lcs / len(hyp)
            r = lcs / len(ref)
            best = max(best, (1 + b2) * p * r / (r + b2 * p))
        scores.append(best)
    return float(np.mean(scores))


def _tfidf_vector(counts: Counter, idf: dict) -> dict:
    return {gram: c * idf.get(gram, idf["__unseen__"]) for gram, c in counts.items()}


def _cosine(u: dict, v: dict) -> float:
    nu = math.sqrt(sum(x * x for x in u.values()))
    nv = math.sqrt(sum(x * x for x in v.values()))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    dot = sum(x * v[g] for g, x in u.items() if g in v)
    return dot / (nu * nv)


def cider(hypotheses, reference_sets) -> float:
    """Consensus score: TF-IDF-weighted cosine similarity between hypothesis
    and reference n-gram vectors for n = 1..4, averaged over references and
    over n, scaled by 10, then averaged over the corpus. Document frequencies
    come from the reference corpus, floored at 1."""
    _check_corpus(hypotheses, reference_sets)
    ncorp = len(reference_sets)
    if ncorp < 2:
        raise InvalidInputError("cider needs a corpus of at least 2 examples")
    scores = []
    for n in range(1, CIDER_MAX_N + 1):
        df = Counter()
        for refs in reference_sets:
            seen = set()
            for ref in refs:
                seen.update(_ngrams(ref, n))
            df.update(seen)
        idf = {gram: math.log(ncorp / max(c, 1)) for gram, c in df.items()}
        idf["__unseen__"] = math.log(ncorp / 1.0)
        per_example = []
        for hyp, refs in zip(hypotheses, reference_sets):
            hvec = _tfidf_vector(_ngrams(hyp, n), idf)
            sims = [_cosine(hvec, _tfidf_vector(_ngrams(ref, n), idf)) for ref in refs]
            per_example.append(float(np.mean(sims)))
        scores.append(per_example)
    per_example_avg = np.mean(np.asarray(scores), axis=0) * CIDER_SCALE
    return float(per_example_avg.mean())
