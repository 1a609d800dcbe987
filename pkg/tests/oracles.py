"""Slow, obviously-correct reference implementations used by the tests."""

from __future__ import annotations

import math
from fractions import Fraction


def brute_window_stats(values) -> tuple[float, float, float, float, float]:
    """Mean, population std, min, max and OLS slope in exact rational arithmetic."""
    xs = [Fraction(float(v)) for v in values]
    n = len(xs)
    mean = sum(xs) / n
    var = sum((x - mean) ** 2 for x in xs) / n
    t_mean = Fraction(n - 1, 2)
    sxx = sum((Fraction(t) - t_mean) ** 2 for t in range(n))
    sxy = sum((Fraction(t) - t_mean) * (x - mean) for t, x in enumerate(xs))
    return (float(mean), math.sqrt(var), float(min(xs)), float(max(xs)), float(sxy / sxx))


def pair_count_auroc(scores, truth) -> Fraction:
    """Fraction of (positive, negative) pairs ranked correctly, ties counting half."""
    pos = [s for s, t in zip(scores, truth) if t]
    neg = [s for s, t in zip(scores, truth) if not t]
    wins = Fraction(0)
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1
            elif p == q:
                wins += Fraction(1, 2)
    return wins / (len(pos) * len(neg))


def _gini(w, p):
    return 0.0 if w == 0 else 2.0 * p * (w - p) / (w * w)


def brute_root_split(X, a, b, mode, min_leaf=1, reg_lambda=1.0, gamma=0.0, tol=1e-12):
    """Exhaustive search over every feature and every midpoint between distinct values.

    For ``gini`` ``a`` holds row weights and ``b`` weighted positives. For
    ``newton`` ``a`` holds gradients and ``b`` hessians. Returns
    ``(gain, feature, threshold)`` of the first candidate (feature-major,
    threshold ascending) whose gain is within ``tol`` of the maximum, or None.
    """
    n = len(X)
    d = len(X[0])
    A, B = sum(a), sum(b)
    candidates = []
    for f in range(d):
        vals = sorted(set(row[f] for row in X))
        for lo, hi in zip(vals, vals[1:]):
            thr = 0.5 * (lo + hi)
            if thr >= hi:
                thr = lo
            left = [i for i in range(n) if X[i][f] <= thr]
            right = [i for i in range(n) if X[i][f] > thr]
            if mode == "gini":
                cl = sum(a[i] for i in left)
                cr = sum(a[i] for i in right)
            else:
                cl, cr = len(left), len(right)
            if cl < min_leaf or cr < min_leaf:
                continue
            al = sum(a[i] for i in left)
            bl = sum(b[i] for i in left)
            if mode == "gini":
                gain = _gini(A, B) - (al * _gini(al, bl) + (A - al) * _gini(A - al, B - bl)) / A
            else:
                gain = 0.5 * (
                    al**2 / (bl + reg_lambda) + (A - al) ** 2 / (B - bl + reg_lambda) - A**2 / (B + reg_lambda)
                ) - gamma
            candidates.append((gain, f, thr))
    if not candidates:
        return None
    top = max(c[0] for c in candidates)
    return next(c for c in candidates if c[0] >= top - tol)


def reference_tree(X, a, b, mode, max_depth, min_leaf=1, reg_lambda=1.0, gamma=0.0, tol=1e-12):
    """Depth-first greedy tree using :func:`brute_root_split` at every node.

    Returns nested tuples: ``("leaf", value)`` or ``("split", f, thr, left, right)``.
    """

    def grow(idx, depth):
        A = sum(a[i] for i in idx)
        B = sum(b[i] for i in idx)
        C = A if mode == "gini" else len(idx)
        value = B / A if mode == "gini" else -A / (B + reg_lambda)
        if depth >= max_depth or C < 2 * min_leaf:
            return ("leaf", value)
        if mode == "gini" and (B <= 0 or B >= A):
            return ("leaf", value)
        best = brute_root_split(
            [X[i] for i in idx], [a[i] for i in idx], [b[i] for i in idx], mode, min_leaf, reg_lambda, gamma, tol
        )
        if best is None or best[0] <= tol:
            return ("leaf", value)
        _, f, thr = best
        left = [i for i in idx if X[i][f] <= thr]
        right = [i for i in idx if X[i][f] > thr]
        return ("split", f, thr, grow(left, depth + 1), grow(right, depth + 1))

    return grow(list(range(len(X))), 0)


def reference_predict(node, x):
    while node[0] == "split":
        node = node[3] if x[node[1]] <= node[2] else node[4]
    return node[1]
