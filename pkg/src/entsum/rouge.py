"""Self-contained ROUGE-1/2/L F1 scoring.

Counts clipped n-gram overlap for ROUGE-N and sentence-level longest common
subsequence for ROUGE-L (beta = 1). Tokens are lowercased here and only
here; the model pipeline preserves case. Scores from this module are
self-consistent within this artifact but not numerically comparable to the
official perl-script pipeline.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

__all__ = ["RougeScore", "rouge_n", "rouge_l", "lcs_length", "score_pair"]


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _lower(tokens):
    return [t.lower() for t in tokens]


def rouge_n(candidate, reference, n: int) -> RougeScore:
    """Clipped n-gram overlap: sum_g min(count_cand(g), count_ref(g))."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cand = _ngrams(_lower(candidate), n)
    ref = _ngrams(_lower(reference), n)
    overlap = sum(min(c, ref[g]) for g, c in cand.items())
    n_cand = sum(cand.values())
    n_ref = sum(ref.values())
    precision = overlap / n_cand if n_cand else 0.0
    recall = overlap / n_ref if n_ref else 0.0
    return RougeScore(precision, recall, _f1(precision, recall))


def lcs_length(a, b) -> int:
    """Longest common subsequence length, bottom-up dynamic programming."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, reference) -> RougeScore:
    """Sentence-level LCS recall/precision with beta = 1 F-measure."""
    cand = _lower(candidate)
    ref = _lower(reference)
    lcs = lcs_length(cand, ref)
    precision = lcs / len(cand) if cand else 0.0
    recall = lcs / len(ref) if ref else 0.0
    return RougeScore(precision, recall, _f1(precision, recall))


def score_pair(candidate, reference) -> dict[str, RougeScore]:
    """ROUGE-1, ROUGE-2 and ROUGE-L for one tokenized candidate/reference."""
    return {
        "rouge1": rouge_n(candidate, reference, 1),
        "rouge2": rouge_n(candidate, reference, 2),
        "rougeL": rouge_l(candidate, reference),
    }
