import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entsum.rouge import lcs_length, rouge_l, rouge_n, score_pair
from entsum.tensor import Rng


def oracle_ngram_overlap(cand, ref, n):
    """Quadratic match-marking oracle for clipped n-gram overlap."""
    cand_grams = [tuple(cand[i : i + n]) for i in range(len(cand) - n + 1)]
    ref_grams = [tuple(ref[i : i + n]) for i in range(len(ref) - n + 1)]
    used = [False] * len(ref_grams)
    overlap = 0
    for g in cand_grams:
        for j, r in enumerate(ref_grams):
            if not used[j] and r == g:
                used[j] = True
                overlap += 1
                break
    return overlap, len(cand_grams), len(ref_grams)


def oracle_lcs(a, b):
    """Memoized recursion — an independent route to the LCS length."""
    from functools import lru_cache

    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + go(i + 1, j + 1)
        return max(go(i + 1, j), go(i, j + 1))

    return go(0, 0)


class TestRougeN:
    def test_identity_scores_one(self):
        s = rouge_n(["the", "cat", "sat"], ["the", "cat", "sat"], 1)
        assert (s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0)

    def test_half_overlap(self):
        s = rouge_n("the cat".split(), "the dog".split(), 1)
        assert (s.precision, s.recall, s.f1) == (0.5, 0.5, 0.5)

    def test_candidate_shorter_than_n(self):
        s = rouge_n(["one"], ["one", "two"], 2)
        assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)

    def test_case_insensitive(self):
        assert rouge_n(["The"], ["the"], 1).f1 == 1.0

    def test_invalid_n(self):
        with pytest.raises(ValueError):
            rouge_n(["a"], ["a"], 0)


class TestLcs:
    def test_self(self):
        assert lcs_length(list("abcde"), list("abcde")) == 5

    def test_empty(self):
        assert lcs_length(list("abc"), []) == 0
        assert lcs_length([], []) == 0

    def test_hand_dp(self):
        assert lcs_length(list("abcd"), list("acbd")) == 3


class TestRougeL:
    def test_identical(self):
        assert rouge_l(list("abc"), list("abc")).f1 == 1.0

    def test_hand_case(self):
        s = rouge_l(list("abcd"), list("acbd"))
        assert (s.precision, s.recall, s.f1) == (0.75, 0.75, 0.75)

    def test_disjoint(self):
        assert rouge_l(list("ab"), list("cd")).f1 == 0.0


class TestProperties:
    def test_swap_swaps_p_r_keeps_f1(self):
        rng = Rng(0)
        vocab = [f"w{i}" for i in range(10)]
        for _ in range(50):
            a = [vocab[rng.integers(0, 10)] for _ in range(rng.integers(0, 15))]
            b = [vocab[rng.integers(0, 10)] for _ in range(rng.integers(0, 15))]
            for fn in (lambda x, y: rouge_n(x, y, 1), lambda x, y: rouge_n(x, y, 2), rouge_l):
                s1, s2 = fn(a, b), fn(b, a)
                assert s1.precision == s2.recall
                assert s1.recall == s2.precision
                assert s1.f1 == s2.f1

    def test_unigram_recall_is_bag_of_words(self):
        rng = Rng(1)
        vocab = [f"w{i}" for i in range(6)]
        cand = [vocab[rng.integers(0, 6)] for _ in range(12)]
        ref = [vocab[rng.integers(0, 6)] for _ in range(9)]
        base = rouge_n(cand, ref, 1).recall
        perm = [cand[i] for i in rng.permutation(len(cand))]
        assert rouge_n(perm, ref, 1).recall == base

    @settings(max_examples=150, deadline=None)
    @given(
        a=st.lists(st.sampled_from("abcdefghij"), max_size=30),
        b=st.lists(st.sampled_from("abcdefghij"), max_size=30),
    )
    def test_matches_oracles(self, a, b):
        for n in (1, 2):
            overlap, n_cand, n_ref = oracle_ngram_overlap(a, b, n)
            s = rouge_n(a, b, n)
            assert s.precision == (overlap / n_cand if n_cand else 0.0)
            assert s.recall == (overlap / n_ref if n_ref else 0.0)
        assert lcs_length(a, b) == oracle_lcs(tuple(a), tuple(b))
        for s in score_pair(a, b).values():
            assert 0.0 <= s.precision <= 1.0 and 0.0 <= s.recall <= 1.0 and 0.0 <= s.f1 <= 1.0
