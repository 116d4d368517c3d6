"""Tree-based meta-classifiers built from scratch: CART, random forest, GBT."""

import numpy as np

from .learners import _one_hot, softmax_rows


class _Node:
    __slots__ = ("feature", "threshold", "left", "right", "counts")

    def __init__(self, counts=None):
        self.feature = None
        self.threshold = None
        self.left = None
        self.right = None
        self.counts = counts


def _gini_from_counts(counts, total):
    if total == 0:
        return 0.0
    p = counts / total
    return 1.0 - float(np.sum(p * p))


def _best_split(X, Y1h, idx, features):
    """Greedy CART split: minimum weighted Gini over midpoint thresholds.

    Ties keep the first (feature-order, then lowest threshold) candidate.
    """
    n = len(idx)
    total_counts = Y1h[idx].sum(axis=0)
    parent = _gini_from_counts(total_counts, n)
    best = None
    for f in features:
        vals = X[idx, f]
        order = np.argsort(vals, kind="stable")
        xs = vals[order]
        ys = Y1h[idx[order]]
        left_cum = np.cumsum(ys, axis=0)
        valid = np.flatnonzero(xs[:-1] < xs[1:])
        if len(valid) == 0:
            continue
        nl = (valid + 1).astype(float)
        nr = n - nl
        lc = left_cum[valid]
        rc = total_counts - lc
        gini_l = 1.0 - np.sum((lc / nl[:, None]) ** 2, axis=1)
        gini_r = 1.0 - np.sum((rc / nr[:, None]) ** 2, axis=1)
        weighted = (nl * gini_l + nr * gini_r) / n
        j = int(np.argmin(weighted))
        if weighted[j] < parent - 1e-12 and (best is None or weighted[j] < best[0] - 1e-12):
            thr = 0.5 * (xs[valid[j]] + xs[valid[j] + 1])
            best = (weighted[j], f, thr)
    return best


class DecisionTreeClassifier:
    """CART with Gini impurity; optional per-split feature subsampling."""

    def __init__(self, max_depth=None, max_features=None, min_samples_split=2, seed=0):
        self.max_depth = max_depth
        self.max_features = max_features
        self.min_samples_split = min_samples_split
        self.seed = seed
        self.root = None
        self.n_classes = None

    def _pick_features(self, rng, d):
        if self.max_features is None or self.max_features >= d:
            return np.arange(d)
        return np.sort(rng.choice(d, size=self.max_features, replace=False))

    def _build(self, X, Y1h, idx, depth, rng):
        node = _Node(counts=Y1h[idx].sum(axis=0))
        if (
            len(idx) < self.min_samples_split
            or (self.max_depth is not None and depth >= self.max_depth)
            or np.count_nonzero(node.counts) <= 1
        ):
            return node
        split = _best_split(X, Y1h, idx, self._pick_features(rng, X.shape[1]))
        if split is None:
            return node
        _, f, thr = split
        mask = X[idx, f] <= thr
        node.feature, node.threshold = f, thr
        node.left = self._build(X, Y1h, idx[mask], depth + 1, rng)
        node.right = self._build(X, Y1h, idx[~mask], depth + 1, rng)
        return node

    def fit(self, X, codes, n_classes):
        self.n_classes = n_classes
        Y1h = _one_hot(codes, n_classes)
        rng = np.random.default_rng(self.seed)
        self.root = self._build(X, Y1h, np.arange(X.shape[0]), 0, rng)
        return self

    def _leaf(self, x):
        node = self.root
        while node.feature is not None:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node

    def predict_proba(self, X):
        out = np.empty((X.shape[0], self.n_classes))
        for i, x in enumerate(X):
            counts = self._leaf(x).counts
            out[i] = counts / counts.sum()
        return out

    def decision(self, X):
        return self.predict_proba(X)


class RandomForestModel:
    """Bagged CART trees with per-split feature subsampling; averaged votes."""

    def __init__(self, trees=100, max_depth=None, max_features="sqrt", bootstrap=True, seed=0):
        self.trees = trees
        self.max_depth = max_depth
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed
        self.members = []

    def _resolve_features(self, d):
        if self.max_features == "sqrt":
            return max(1, int(np.sqrt(d)))
        return self.max_features

    def fit(self, X, codes, n_classes):
        rng = np.random.default_rng(self.seed)
        n = X.shape[0]
        m = self._resolve_features(X.shape[1])
        self.members = []
        for _ in range(self.trees):
            tree_seed = int(rng.integers(0, 2**31))
            sample = rng.integers(0, n, size=n) if self.bootstrap else np.arange(n)
            tree = DecisionTreeClassifier(
                max_depth=self.max_depth, max_features=m, seed=tree_seed
            ).fit(X[sample], codes[sample], n_classes)
            self.members.append(tree)
        return self

    def decision(self, X):
        total = self.members[0].predict_proba(X)
        for tree in self.members[1:]:
            total = total + tree.predict_proba(X)
        return total / len(self.members)


class _GNode:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, value=0.0):
        self.feature = None
        self.threshold = None
        self.left = None
        self.right = None
        self.value = value


class GradientTree:
    """Depth-limited regression tree on (gradient, hessian) with Newton leaves."""

    def __init__(self, max_depth=6, lam=1.0, min_gain=1e-12):
        self.max_depth = max_depth
        self.lam = lam
        self.min_gain = min_gain
        self.root = None

    def _leaf_value(self, G, H):
        return -G / (H + self.lam)

    def _build(self, X, g, h, idx, depth):
        G, H = float(g[idx].sum()), float(h[idx].sum())
        node = _GNode(value=self._leaf_value(G, H))
        if depth >= self.max_depth or len(idx) < 2:
            return node
        base = G * G / (H + self.lam)
        best = None
        for f in range(X.shape[1]):
            vals = X[idx, f]
            order = np.argsort(vals, kind="stable")
            xs = vals[order]
            gs = np.cumsum(g[idx[order]])
            hs = np.cumsum(h[idx[order]])
            valid = np.flatnonzero(xs[:-1] < xs[1:])
            if len(valid) == 0:
                continue
            GL, HL = gs[valid], hs[valid]
            GR, HR = G - GL, H - HL
            gain = GL**2 / (HL + self.lam) + GR**2 / (HR + self.lam) - base
            j = int(np.argmax(gain))
            if gain[j] > self.min_gain and (best is None or gain[j] > best[0] + 1e-12):
                thr = 0.5 * (xs[valid[j]] + xs[valid[j] + 1])
                best = (gain[j], f, thr)
        if best is None:
            return node
        _, f, thr = best
        mask = X[idx, f] <= thr
        node.feature, node.threshold = f, thr
        node.left = self._build(X, g, h, idx[mask], depth + 1)
        node.right = self._build(X, g, h, idx[~mask], depth + 1)
        return node

    def fit(self, X, g, h):
        self.root = self._build(X, g, h, np.arange(X.shape[0]), 0)
        return self

    def predict(self, X):
        out = np.empty(X.shape[0])
        for i, x in enumerate(X):
            node = self.root
            while node.feature is not None:
                node = node.left if x[node.feature] <= node.threshold else node.right
            out[i] = node.value
        return out


class GradientBoostedModel:
    """Multiclass softmax boosting: one Newton-step tree per class per round."""

    def __init__(self, trees=200, depth=6, lr=0.1, lam=1.0, seed=0):
        self.trees = trees
        self.depth = depth
        self.lr = lr
        self.lam = lam
        self.seed = seed  # accepted for interface symmetry; fitting is deterministic
        self.stages = []
        self.n_classes = None

    def fit(self, X, codes, n_classes):
        self.n_classes = n_classes
        Y = _one_hot(codes, n_classes)
        F = np.zeros((X.shape[0], n_classes))
        self.stages = []
        for _ in range(self.trees):
            P = softmax_rows(F)
            stage = []
            for c in range(n_classes):
                g = P[:, c] - Y[:, c]
                h = np.maximum(P[:, c] * (1.0 - P[:, c]), 1e-16)
                tree = GradientTree(max_depth=self.depth, lam=self.lam).fit(X, g, h)
                F[:, c] += self.lr * tree.predict(X)
                stage.append(tree)
            self.stages.append(stage)
        return self

    def decision(self, X):
        F = np.zeros((X.shape[0], self.n_classes))
        for stage in self.stages:
            for c, tree in enumerate(stage):
                F[:, c] += self.lr * tree.predict(X)
        return F
