"""Task metrics: accuracy, smoothed BLEU-4, keyword-weighted BLEU, CodeBLEU combiner.

All scores live in [0, 1]; multiply by 100 for the usual BLEU display scale.
Tokenization is a case-sensitive whitespace split.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Collection, Optional, Sequence

MAX_ORDER = 4
# Add-one applied only to orders whose clipped match count is zero.
SMOOTHING = "add-one-on-zero"


class MetricError(ValueError):
    pass


class LengthMismatch(MetricError):
    pass


class EmptyDataset(MetricError):
    pass


class EmptyReference(MetricError):
    pass


class OutOfRangeComponent(MetricError):
    pass


def accuracy(predictions: Sequence, truths: Sequence) -> float:
    if len(predictions) != len(truths):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(truths)} truths")
    if not truths:
        raise EmptyDataset("accuracy of an empty dataset")
    hits = sum(1 for y_hat, y in zip(predictions, truths) if y_hat == y)
    return hits / len(truths)


@dataclass(frozen=True)
class BleuBreakdown:
    p_n: tuple[float, ...]
    w_n: tuple[float, ...]
    bp: float
    c: int
    r: int
    score: float


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _bleu(cand: list[str], ref: list[str], unigram_weight=None) -> BleuBreakdown:
    if not ref:
        raise EmptyReference("reference has no tokens")
    c, r = len(cand), len(ref)
    weights = (1.0 / MAX_ORDER,) * MAX_ORDER
    if c == 0:
        return BleuBreakdown((0.0,) * MAX_ORDER, weights, 0.0, 0, r, 0.0)

    precisions = []
    for n in range(1, MAX_ORDER + 1):
        cand_counts, ref_counts = _ngrams(cand, n), _ngrams(ref, n)
        num = den = 0.0
        for gram, count in cand_counts.items():
            w = unigram_weight(gram[0]) if (n == 1 and unigram_weight) else 1.0
            num += w * min(count, ref_counts[gram])
            den += w * count
        if num == 0:
            num, den = num + 1, den + 1
        precisions.append(num / den)

    bp = 1.0 if c > r else math.exp(1 - r / c)
    score = bp * math.exp(sum(w * math.log(p) for w, p in zip(weights, precisions)))
    return BleuBreakdown(tuple(precisions), weights, bp, c, r, score)


def smoothed_bleu4(candidate: str, reference: str) -> BleuBreakdown:
    """Sentence-level BLEU-4 with uniform weights and add-one smoothing on empty orders.

    >>> round(smoothed_bleu4("a b c d", "a b c d e").score, 4)
    0.7788
    """
    return _bleu(candidate.split(), reference.split())


def weighted_ngram_bleu(
    candidate: str, reference: str, keywords: Collection[str] = (), keyword_weight: float = 1.0
) -> float:
    """BLEU-4 where unigrams that are keywords count ``keyword_weight`` times.

    The weight applies to both the clipped matches and the candidate total of
    the unigram precision; higher orders are unweighted.
    """
    if keyword_weight < 1:
        raise MetricError("keyword_weight must be >= 1")
    kw = frozenset(keywords)
    weight = (lambda tok: keyword_weight if tok in kw else 1.0) if kw else None
    return _bleu(candidate.split(), reference.split(), weight).score


@dataclass(frozen=True)
class CodeBleuWeights:
    alpha: float = 0.25
    beta: float = 0.25
    gamma: float = 0.25
    delta: float = 0.25

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma, self.delta) < 0:
            raise MetricError("CodeBLEU weights must be non-negative")


def codebleu(
    bleu: float,
    bleu_weight: float,
    match_ast: Optional[float] = None,
    match_df: Optional[float] = None,
    w: CodeBleuWeights = CodeBleuWeights(),
) -> float:
    """Weighted sum of the supplied CodeBLEU components.

    Missing syntax/dataflow scores are dropped and the remaining weights are
    renormalized to sum to one.
    """
    parts = [(w.alpha, bleu), (w.beta, bleu_weight), (w.gamma, match_ast), (w.delta, match_df)]
    parts = [(wt, v) for wt, v in parts if v is not None]
    for _, v in parts:
        if not 0.0 <= v <= 1.0:
            raise OutOfRangeComponent(f"component {v} outside [0, 1]")
    total = sum(wt for wt, _ in parts)
    if total <= 0:
        raise MetricError("weights of supplied components sum to zero")
    return sum(wt * v for wt, v in parts) / total
