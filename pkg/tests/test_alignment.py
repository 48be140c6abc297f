import itertools
from functools import lru_cache

import pytest

from evalkit import align


@lru_cache(maxsize=None)
def edit_distance(a, b):
    if not a or not b:
        return len(a) + len(b)
    return min(edit_distance(a[1:], b) + 1, edit_distance(a, b[1:]) + 1,
               edit_distance(a[1:], b[1:]) + (a[0] != b[0]))


def all_sequences(alphabet, max_len):
    for n in range(max_len + 1):
        yield from itertools.product(alphabet, repeat=n)


def test_identity():
    a = align("abc", "abc")
    assert (a.insertions, a.deletions, a.substitutions, a.hits) == (0, 0, 0, 3)


def test_one_substitution():
    a = align(["a", "b", "c"], ["a", "x", "c"])
    assert (a.insertions, a.deletions, a.substitutions) == (0, 0, 1)
    assert a.pairs == (("a", "a"), ("b", "x"), ("c", "c"))


def test_two_insertions():
    a = align(["a", "b"], ["a", "x", "b", "y"])
    assert (a.insertions, a.deletions, a.substitutions) == (2, 0, 0)


def test_empty_sides():
    assert align([], []).distance == 0
    assert align([], ["a", "b"]).insertions == 2
    assert align(["a"], []).deletions == 1


def test_tie_break_prefers_substitution_then_deletion():
    # "ab" -> "b": one deletion either way; "ab" -> "ba": S=2 or D+I=2
    a = align("ab", "ba")
    assert (a.substitutions, a.deletions, a.insertions) == (2, 0, 0)
    b = align("ab", "b")
    assert b.pairs == (("a", None), ("b", "b"))


def test_unit_accuracy_ignores_insertions():
    a = align(["a"], ["a", "x", "y", "z"])
    assert a.accuracy == 1.0 and a.insertions == 3


@pytest.mark.slow
def test_exhaustive_up_to_five_tokens():
    seqs = list(all_sequences("abc", 5))
    for ref in seqs:
        for hyp in seqs:
            a = align(ref, hyp)
            assert a.distance == edit_distance(ref, hyp)
            assert a.insertions - a.deletions == len(hyp) - len(ref)
            assert tuple(r for r, _ in a.pairs if r is not None) == ref
            assert tuple(h for _, h in a.pairs if h is not None) == hyp
