"""Greedy binary decision trees stored as flat node arrays.

Two split criteria share one builder:

* ``gini`` - classification trees for the forest. Rows carry integer
  weights (bootstrap multiplicities), so a resample never has to be
  materialised. Leaves hold the weighted positive fraction.
* ``newton`` - regression trees on per-row gradient/hessian pairs for
  second-order boosting. Split gain is
  ``0.5 * (GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam)) - gamma`` and leaves
  hold ``-G/(H+lam)``.

A sample goes left when ``x[feature] <= threshold``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyInput

LEAF = -1
# gains closer than this are treated as ties; the earlier candidate wins
GAIN_TOL = 1e-12


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = 12
    min_samples_leaf: int = 2
    max_features: int | None = None  # None -> all features
    reg_lambda: float = 1.0
    gamma: float = 0.0


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray  # int64, LEAF for leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # leaf positive fraction (gini) or leaf weight (newton)
    weight: np.ndarray  # weighted sample count reaching the node
    gain: np.ndarray  # split gain at internal nodes, 0 at leaves

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_leaves(self) -> int:
        return int((self.feature == LEAF).sum())

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "weight": self.weight.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Tree:
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=np.float64),
            weight=np.asarray(d["weight"], dtype=np.float64),
            gain=np.asarray(d["gain"], dtype=np.float64),
        )


def gini_split_gains(w_left, p_left, w_tot, p_tot):
    """Gini impurity decrease for candidate partitions (vectorised).

    ``w_*`` are weighted counts, ``p_*`` weighted positive counts.
    """
    w_right = w_tot - w_left
    p_right = p_tot - p_left
    parent = 2.0 * p_tot * (w_tot - p_tot) / (w_tot * w_tot)
    with np.errstate(divide="ignore", invalid="ignore"):
        children = 2.0 * (p_left * (w_left - p_left) / w_left + p_right * (w_right - p_right) / w_right) / w_tot
    return parent - children


def newton_split_gains(g_left, h_left, g_tot, h_tot, reg_lambda, gamma):
    g_right = g_tot - g_left
    h_right = h_tot - h_left
    return 0.5 * (
        g_left**2 / (h_left + reg_lambda) + g_right**2 / (h_right + reg_lambda) - g_tot**2 / (h_tot + reg_lambda)
    ) - gamma


def midpoint(a: float, b: float) -> float:
    mid = 0.5 * (a + b)
    # adjacent floats: the midpoint can round up onto b
    return a if mid >= b else mid


def presort(X: np.ndarray) -> np.ndarray:
    """(n_features, n_samples) row indices, each row ordering the samples by one feature."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)


def _node_dtype(k: int):
    # small integer keys let numpy's stable sort use radix sort
    return np.int16 if k < 2**15 else np.int64


def _scan_feature(x, sa, sb, sc, nodes, A, B, C, mode, cfg: TreeConfig):
    """Best cut of one feature for every node present in a (node, value)-sorted run.

    ``x``/``sa``/``sb``/``sc`` are the feature values and row statistics in
    that order (``sc=None`` means every row counts once) and ``nodes`` the (non-decreasing) node of each position.
    Returns ``(node_ids, top_gain, threshold)``; nodes without a legal cut
    get ``-inf``.
    """
    m = x.size
    starts = np.flatnonzero(np.concatenate(([True], nodes[1:] != nodes[:-1])))
    lengths = np.diff(np.append(starts, m))
    ids = nodes[starts]
    ca = np.cumsum(sa)
    al = ca - np.repeat(ca[starts] - sa[starts], lengths)
    cb = np.cumsum(sb)
    bl = cb - np.repeat(cb[starts] - sb[starts], lengths)
    if mode == "gini":
        cl = al
    elif sc is None:  # unit counts: the left count is the position within the node
        cl = np.arange(1, m + 1, dtype=np.float64) - np.repeat(starts, lengths)
    else:
        cc = np.cumsum(sc)
        cl = cc - np.repeat(cc[starts] - sc[starts], lengths)
    At = np.repeat(A[ids], lengths)
    Bt = np.repeat(B[ids], lengths)
    Ct = np.repeat(C[ids], lengths)
    valid = np.zeros(m, dtype=bool)
    valid[:-1] = (nodes[:-1] == nodes[1:]) & (x[:-1] < x[1:])
    valid &= (cl >= cfg.min_samples_leaf) & (Ct - cl >= cfg.min_samples_leaf)
    with np.errstate(divide="ignore", invalid="ignore"):
        if mode == "gini":
            gains = gini_split_gains(al, bl, At, Bt)
        else:
            gains = newton_split_gains(al, bl, At, Bt, cfg.reg_lambda, cfg.gamma)
    gains[~valid] = -np.inf
    top = np.maximum.reduceat(gains, starts)
    near = gains >= np.repeat(top, lengths) - GAIN_TOL
    near &= valid
    first = np.minimum.reduceat(np.where(near, np.arange(m), m), starts)
    has = first < m
    safe = np.where(has, first, 0)
    lo = x[safe]
    hi = x[np.minimum(safe + 1, m - 1)]
    mid = 0.5 * (lo + hi)
    thr = np.where(mid >= hi, lo, mid)  # adjacent floats can round onto hi
    return ids, np.where(has, top, -np.inf), thr


def _grow(X, stat_a, stat_b, count, order, mode, cfg: TreeConfig, rng) -> Tree:
    """Grow a tree breadth-first.

    ``order`` holds, per feature, the participating rows sorted by that
    feature. At every depth it is kept sorted by (frontier node, feature
    value), so each feature is scanned for all frontier nodes in one
    vectorised pass. Every node gets exactly the exhaustive midpoint scan of a
    greedy depth-first builder; only the node numbering (breadth-first) and
    the order of random feature draws differ.
    """
    n, d = X.shape
    k_feat = cfg.max_features if cfg.max_features is not None and cfg.max_features < d else None

    XT = np.ascontiguousarray(X.T)
    unit_count = mode == "newton" and bool(np.all(count == 1.0))
    node_of = np.full(n, -1, dtype=np.int64)
    node_of[order[0]] = 0
    cols: dict[str, list] = {k: [] for k in ("feature", "threshold", "left", "right", "value", "weight", "gain")}
    n_frontier, depth, base = 1, 0, 0
    while n_frontier:
        rows = order[0]
        A = np.bincount(node_of[rows], weights=stat_a[rows], minlength=n_frontier)
        B = np.bincount(node_of[rows], weights=stat_b[rows], minlength=n_frontier)
        C = np.bincount(node_of[rows], weights=count[rows], minlength=n_frontier)
        if mode == "gini":
            value = B / A
        else:
            value = -A / (B + cfg.reg_lambda)

        splittable = (C >= 2 * cfg.min_samples_leaf) & (depth < cfg.max_depth)
        if mode == "gini":
            splittable &= (B > 0.0) & (B < A)

        best_gain = np.full(n_frontier, -np.inf)
        best_feat = np.zeros(n_frontier, dtype=np.int64)
        best_thr = np.zeros(n_frontier)
        found = np.zeros(n_frontier, dtype=bool)
        if splittable.any():
            every = k_feat is None and splittable.all()
            if k_feat is None:
                cand = np.broadcast_to(splittable[:, None], (n_frontier, d))
            else:
                picks = np.argsort(rng.random((n_frontier, d)), axis=1)[:, :k_feat]
                cand = np.zeros((n_frontier, d), dtype=bool)
                np.put_along_axis(cand, picks, True, axis=1)
                cand &= splittable[:, None]
            for f in range(d):
                run = order[f]
                nodes = node_of[run]
                if not every:
                    keep = cand[:, f][nodes]
                    if not keep.any():
                        continue
                    if not keep.all():
                        run, nodes = run[keep], nodes[keep]
                ids, top, thr = _scan_feature(
                    XT[f][run], stat_a[run], stat_b[run], None if unit_count else count[run], nodes, A, B, C, mode, cfg
                )
                # features go in ascending order; a later one wins only by more than the tolerance
                take = (top > -np.inf) & (~found[ids] | (top > best_gain[ids] + GAIN_TOL))
                ids, top, thr = ids[take], top[take], thr[take]
                best_gain[ids] = top
                best_feat[ids] = f
                best_thr[ids] = thr
                found[ids] = True

        split = found & (best_gain > GAIN_TOL)
        rank = np.cumsum(split) - 1
        child_base = base + n_frontier
        left = np.where(split, child_base + 2 * rank, LEAF)
        cols["feature"].append(np.where(split, best_feat, LEAF))
        cols["threshold"].append(np.where(split, best_thr, 0.0))
        cols["left"].append(left)
        cols["right"].append(np.where(split, left + 1, LEAF))
        cols["value"].append(value)
        cols["weight"].append(C)
        cols["gain"].append(np.where(split, best_gain, 0.0))

        n_next = 2 * int(split.sum())
        if n_next == 0:
            break
        kk = node_of[rows]
        go_right = X[rows, best_feat[kk]] > best_thr[kk]
        node_of[rows] = np.where(split[kk], 2 * rank[kk] + go_right, -1)
        n_dropped = int((node_of[rows] < 0).sum())
        keys = node_of[order].astype(_node_dtype(n_next))
        idx = np.argsort(keys, axis=1, kind="stable")[:, n_dropped:]
        order = np.take_along_axis(order, idx, axis=1)
        base, n_frontier, depth = child_base, n_next, depth + 1

    return Tree(
        feature=np.concatenate(cols["feature"]).astype(np.int64),
        threshold=np.concatenate(cols["threshold"]).astype(np.float64),
        left=np.concatenate(cols["left"]).astype(np.int64),
        right=np.concatenate(cols["right"]).astype(np.int64),
        value=np.concatenate(cols["value"]).astype(np.float64),
        weight=np.concatenate(cols["weight"]).astype(np.float64),
        gain=np.concatenate(cols["gain"]).astype(np.float64),
    )


def _restrict(order: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Drop rows outside ``keep`` from a presorted order, keeping each feature's sort."""
    mask = keep[order]
    m = int(keep.sum())
    return order[mask].reshape(order.shape[0], m)


def train_gini_tree(
    X: np.ndarray,
    y: np.ndarray,
    config: TreeConfig = TreeConfig(),
    sample_weight: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
    order: np.ndarray | None = None,
) -> Tree:
    """Classification tree maximising the Gini impurity decrease.

    ``sample_weight`` holds non-negative integer multiplicities; rows with
    weight zero are ignored. ``order`` may pass a precomputed :func:`presort`
    of ``X`` so a forest sorts its columns only once.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyInput("cannot grow a tree on zero samples")
    w = np.ones(X.shape[0]) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    keep = w > 0
    if not keep.any():
        raise EmptyInput("all sample weights are zero")
    order = presort(X) if order is None else order
    if not keep.all():
        order = _restrict(order, keep)
    return _grow(X, w, w * y, w, order, "gini", config, rng or np.random.default_rng(0))


def train_newton_tree(
    X: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    config: TreeConfig = TreeConfig(max_depth=4, min_samples_leaf=1),
    rng: np.random.Generator | None = None,
    order: np.ndarray | None = None,
) -> Tree:
    """Regression tree fitted to gradient/hessian pairs (second-order boosting)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyInput("cannot grow a tree on zero samples")
    return _grow(
        X,
        np.asarray(grad, dtype=np.float64),
        np.asarray(hess, dtype=np.float64),
        np.ones(X.shape[0]),
        presort(X) if order is None else order,
        "newton",
        config,
        rng or np.random.default_rng(0),
    )
