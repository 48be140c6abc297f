"""Slow, obviously-correct reference computations used to check the library."""

import math


def ec_by_loops(labels, decisions, cost, priors):
    """Expected cost from explicit per-class counting."""
    k = len(priors)
    total = 0.0
    for i in range(k):
        n_i = sum(1 for y in labels if y == i)
        if n_i == 0:
            assert priors[i] == 0
            continue
        for j in range(k):
            n_ij = sum(1 for y, d in zip(labels, decisions) if y == i and d == j)
            total += priors[i] * cost[i][j] * n_ij / n_i
    return total


def levenshtein_recursive(a, b):
    """Edit distance by plain recursion over the last symbols (no memo)."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(
        levenshtein_recursive(a[:-1], b) + 1,
        levenshtein_recursive(a, b[:-1]) + 1,
        levenshtein_recursive(a[:-1], b[:-1]) + (a[-1] != b[-1]),
    )


def percentile_by_definition(values, q):
    v = sorted(values)
    h = q * (len(v) - 1)
    lo = math.floor(h)
    hi = min(lo + 1, len(v) - 1)
    return v[lo] + (h - lo) * (v[hi] - v[lo])
