"""Binary decision trees: entropy/Gini classification trees and the
second-order regression trees used by gradient boosting.

Growth and split search run in numba. Per-split feature sampling uses a
splitmix64 stream seeded from the caller's numpy Generator, so a tree is a
pure function of (data, config, seed).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .config import EmptyDataset, TrainConfig, check_xy, make_rng

MIN_GAIN = 1e-12


@njit(cache=True)
def _impurity(counts, total, gini):
    if total <= 0.0:
        return 0.0
    s = 1.0 if gini else 0.0
    for c in counts:
        if c > 0.0:
            p = c / total
            if gini:
                s -= p * p
            else:
                s -= p * np.log2(p)
    return s


@njit(cache=True)
def _midpoint(a, b):
    mid = 0.5 * (a + b)
    if mid >= b or mid < a:
        mid = a
    return mid


@njit(cache=True)
def best_class_split(X, y, idx, feats, n_classes, gini):
    """Best (feature, threshold, gain) over candidate features.

    gain is parent impurity minus size-weighted child impurity; feature is
    -1 when no split has positive gain. The first maximum wins, scanning
    features in the given order and thresholds ascending.
    """
    n = idx.shape[0]
    parent = np.zeros(n_classes)
    for j in range(n):
        parent[y[idx[j]]] += 1.0
    parent_imp = _impurity(parent, n, gini)
    best_f = -1
    best_t = 0.0
    best_gain = MIN_GAIN
    if parent_imp <= 0.0 or n < 2:
        return best_f, best_t, 0.0
    vals = np.empty(n)
    left = np.empty(n_classes)
    right = np.empty(n_classes)
    for f in feats:
        for j in range(n):
            vals[j] = X[idx[j], f]
        order = np.argsort(vals)
        left[:] = 0.0
        for j in range(n - 1):
            left[y[idx[order[j]]]] += 1.0
            a = vals[order[j]]
            b = vals[order[j + 1]]
            if a == b:
                continue
            nl = j + 1.0
            nr = n - nl
            for k in range(n_classes):
                right[k] = parent[k] - left[k]
            gain = parent_imp - (nl / n) * _impurity(left, nl, gini) \
                - (nr / n) * _impurity(right, nr, gini)
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_t = _midpoint(a, b)
    if best_f < 0:
        return -1, 0.0, 0.0
    return best_f, best_t, best_gain


@njit(cache=True)
def best_newton_split(X, g, h, idx, feats, lam, min_child_weight):
    """Best split by the second-order loss reduction
    0.5 * (GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam))."""
    n = idx.shape[0]
    G = 0.0
    H = 0.0
    for j in range(n):
        G += g[idx[j]]
        H += h[idx[j]]
    parent_score = G * G / (H + lam)
    best_f = -1
    best_t = 0.0
    best_gain = MIN_GAIN
    if n < 2:
        return best_f, best_t, 0.0
    vals = np.empty(n)
    for f in feats:
        for j in range(n):
            vals[j] = X[idx[j], f]
        order = np.argsort(vals)
        GL = 0.0
        HL = 0.0
        for j in range(n - 1):
            r = idx[order[j]]
            GL += g[r]
            HL += h[r]
            a = vals[order[j]]
            b = vals[order[j + 1]]
            if a == b:
                continue
            GR = G - GL
            HR = H - HL
            if HL < min_child_weight or HR < min_child_weight:
                continue
            gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent_score)
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_t = _midpoint(a, b)
    if best_f < 0:
        return -1, 0.0, 0.0
    return best_f, best_t, best_gain


@njit(cache=True)
def _apply(feature, threshold, left, right, X):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@dataclass
class TreeModel:
    """Array-encoded binary tree. ``feature[i] == -1`` marks a leaf.

    ``value`` holds class probabilities (classification) or the leaf
    output (regression); ``gain`` is the impurity (or loss) decrease of
    each internal node and ``n_samples`` the training rows reaching it.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    n_samples: np.ndarray
    n_features: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        X = check_xy(X, n_features=self.n_features)
        return _apply(self.feature, self.threshold, self.left, self.right, X)

    def predict_value(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def raw_importance(self) -> np.ndarray:
        imp = np.zeros(self.n_features)
        internal = self.feature >= 0
        np.add.at(imp, self.feature[internal],
                  self.gain[internal] * self.n_samples[internal])
        return imp

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
            "n_samples": self.n_samples.tolist(),
            "n_features": self.n_features,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeModel":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
            np.asarray(d["gain"], dtype=np.float64),
            np.asarray(d["n_samples"], dtype=np.int64),
            int(d["n_features"]),
        )


_U64 = np.uint64


@njit(cache=True)
def _next_random(state):
    """splitmix64 step; ``state`` is a one-element uint64 array."""
    state[0] += _U64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
    return z ^ (z >> _U64(31))


@njit(cache=True)
def _draw_features(state, perm, out):
    """Uniform random subset of range(len(perm)) of size len(out), sorted."""
    d = perm.shape[0]
    for i in range(d):
        perm[i] = i
    for i in range(out.shape[0]):
        j = i + np.int64(_next_random(state) % _U64(d - i))
        perm[i], perm[j] = perm[j], perm[i]
        out[i] = perm[i]
    out.sort()


@njit(cache=True)
def _partition(X, rows, s, e, f, t, scratch):
    """Stable in-place partition of rows[s:e] by X[:, f] <= t; returns the
    boundary index."""
    k = 0
    for j in range(s, e):
        if X[rows[j], f] <= t:
            scratch[k] = rows[j]
            k += 1
    mid = s + k
    for j in range(s, e):
        if X[rows[j], f] > t:
            scratch[k] = rows[j]
            k += 1
    for j in range(e - s):
        rows[s + j] = scratch[j]
    return mid


@njit(cache=True)
def _grow(X, y, g, h, rows, n_out, regression, gini, lam, mcw, bag, per_tree,
          max_depth, min_split, seed):
    """Depth-first tree growth over the row multiset ``rows``.

    Each node owns a contiguous slice of ``rows``. The left child is always
    expanded before the right one, which fixes the order of random draws.
    """
    n = rows.shape[0]
    d = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, n_out))
    gain = np.zeros(cap)
    nsamp = np.zeros(cap, dtype=np.int64)
    start = np.zeros(cap, dtype=np.int64)
    end = np.zeros(cap, dtype=np.int64)
    depth = np.zeros(cap, dtype=np.int64)
    stack = np.empty(cap, dtype=np.int64)
    scratch = np.empty(n, dtype=np.int64)
    state = np.empty(1, dtype=np.uint64)
    state[0] = _U64(seed)
    perm = np.empty(d, dtype=np.int64)
    feats = np.arange(min(bag, d))
    sampling = bag < d
    if sampling and per_tree:
        _draw_features(state, perm, feats)

    end[0] = n
    n_nodes = 1
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        s = start[node]
        e = end[node]
        seg = rows[s:e]
        nsamp[node] = e - s
        if regression:
            G = 0.0
            H = 0.0
            for r in seg:
                G += g[r]
                H += h[r]
            value[node, 0] = -G / (H + lam)
        else:
            for r in seg:
                value[node, y[r]] += 1.0
            for k in range(n_out):
                value[node, k] /= e - s
        if (max_depth >= 0 and depth[node] >= max_depth) or e - s < min_split:
            continue
        if sampling and not per_tree:
            _draw_features(state, perm, feats)
        if regression:
            f, t, gn = best_newton_split(X, g, h, seg, feats, lam, mcw)
        else:
            f, t, gn = best_class_split(X, y, seg, feats, n_out, gini)
        if f < 0:
            continue
        mid = _partition(X, rows, s, e, f, t, scratch)
        feature[node] = f
        threshold[node] = t
        gain[node] = gn
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        start[lc] = s
        end[lc] = mid
        start[rc] = mid
        end[rc] = e
        depth[lc] = depth[node] + 1
        depth[rc] = depth[node] + 1
        stack[sp] = rc
        stack[sp + 1] = lc
        sp += 2
    m = n_nodes
    return (feature[:m].copy(), threshold[:m].copy(), left[:m].copy(), right[:m].copy(),
            value[:m].copy(), gain[:m].copy(), nsamp[:m].copy())


def _tree_seed(rng) -> int:
    return int(rng.integers(0, 2**63 - 1))


def train_decision_tree(X, y, config: Optional[TrainConfig] = None, rng=None,
                        n_classes: Optional[int] = None, sample_idx=None,
                        bag_size: Optional[int] = None) -> TreeModel:
    """Grow a classification tree by greedy information-gain splitting.

    ``sample_idx`` (possibly with repeats) selects the training rows, which
    is how forests pass bootstrap samples. ``bag_size`` limits the features
    considered per split (or per tree); by default all are considered.
    """
    config = config or TrainConfig()
    X, y = check_xy(X, y)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if n_classes is None:
        n_classes = max(2, int(y.max()) + 1)
    rng = rng if rng is not None else make_rng(config.seed, "tree")
    idx = np.arange(len(X), dtype=np.int64) if sample_idx is None \
        else np.array(sample_idx, dtype=np.int64)
    if len(idx) == 0:
        raise EmptyDataset("no training rows")
    d = X.shape[1]
    dummy = np.zeros(1)
    arrays = _grow(
        X, y, dummy, dummy, idx, n_classes, False, config.criterion == "gini",
        0.0, 0.0, bag_size or d, config.bag_per == "tree",
        -1 if config.max_depth is None else config.max_depth,
        config.min_samples_split, _tree_seed(rng),
    )
    return TreeModel(*arrays, n_features=d)


def train_regression_tree(X, g, h, config: TrainConfig, max_depth: Optional[int],
                          rng=None, bag_size: Optional[int] = None) -> TreeModel:
    """Fit one boosting tree to gradients ``g`` and hessians ``h``.

    Leaves hold the Newton step -sum(g)/(sum(h)+lambda), not yet scaled by
    the learning rate.
    """
    X = check_xy(X)
    g = np.ascontiguousarray(g, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    d = X.shape[1]
    rng = rng if rng is not None else make_rng(config.seed, "regression-tree")
    arrays = _grow(
        X, np.zeros(1, dtype=np.int64), g, h, np.arange(len(X), dtype=np.int64), 1,
        True, False, float(config.reg_lambda), float(config.min_child_weight),
        bag_size or d, config.bag_per == "tree",
        -1 if max_depth is None else max_depth, config.min_samples_split,
        _tree_seed(rng),
    )
    return TreeModel(*arrays, n_features=d)


def class_entropy(labels, n_classes=None) -> float:
    """Shannon entropy in bits of a label multiset."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        return 0.0
    counts = np.bincount(labels, minlength=n_classes or 0).astype(float)
    p = counts[counts > 0] / len(labels)
    return float(-(p * np.log2(p)).sum())
