"""Base collaborative-filtering learners: ALS, BPR, LMF and a popularity baseline."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .errors import DivergenceError

# Registry order is fixed; downstream tie-breaking depends on it.
BASE_LEARNERS = ("als", "bpr", "lmf", "most_popular")
ZEROES_LABEL = "zeroes"
META_CLASSES = BASE_LEARNERS + (ZEROES_LABEL,)

INIT_SCALE = 0.01  # factors start uniform in [-INIT_SCALE, INIT_SCALE]


@dataclass
class MFModel:
    learner: str
    user_factors: np.ndarray  # (n_users, f)
    item_factors: np.ndarray  # (n_items, f)

    @property
    def f(self):
        return self.user_factors.shape[1]

    def score(self, user):
        return self.user_factors[user] @ self.item_factors.T


@dataclass
class PopularityModel:
    item_order: np.ndarray  # item indices, most popular first, ties by index


def _init_factors(rng, n, f):
    return rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n, f))


def _check_finite(*arrays, what="factors"):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DivergenceError(f"non-finite {what} during training; try a smaller learning rate")


def als_objective(train, model, reg, alpha):
    """Confidence-weighted regularized squared loss, computed explicitly.

    c_ui = 1 + alpha * r_ui, targets are the binary interactions.
    """
    X, Y = model.user_factors, model.item_factors
    train = train.tocsr()
    total = 0.0
    for start in range(0, X.shape[0], 256):
        stop = min(start + 256, X.shape[0])
        S = X[start:stop] @ Y.T
        total += float(np.sum(S * S))  # background confidence 1, target 0
        block = train[start:stop].tocoo()
        s_pos = S[block.row, block.col]
        # positives: replace the background term with (1+alpha)(1-s)^2
        total += float(np.sum((1.0 + alpha) * (1.0 - s_pos) ** 2 - s_pos**2))
    total += reg * (float(np.sum(X * X)) + float(np.sum(Y * Y)))
    return total


def _als_half_sweep(mat_csr, this, other, reg, alpha):
    """Solve exact least squares for every row of `this`, holding `other` fixed."""
    f = other.shape[1]
    gram = other.T @ other
    eye = np.eye(f)
    for u in range(this.shape[0]):
        idx = mat_csr.indices[mat_csr.indptr[u]:mat_csr.indptr[u + 1]]
        if len(idx) == 0:
            this[u] = 0.0
            continue
        Yu = other[idx]
        A = gram + alpha * (Yu.T @ Yu) + reg * eye
        b = (1.0 + alpha) * Yu.sum(axis=0)
        this[u] = np.linalg.solve(A, b)


def train_als(train, f, reg=0.01, alpha=40.0, iters=15, seed=0):
    """Implicit-feedback ALS with confidence weights c = 1 + alpha * r."""
    if f < 1 or reg <= 0 or alpha <= 0 or iters < 1:
        raise ValueError("require f >= 1, reg > 0, alpha > 0, iters >= 1")
    train = train.tocsr()
    n_users, n_items = train.shape
    rng = np.random.default_rng(seed)
    X = _init_factors(rng, n_users, f)
    Y = _init_factors(rng, n_items, f)
    train_t = train.T.tocsr()
    for _ in range(iters):
        _als_half_sweep(train, X, Y, reg, alpha)
        _als_half_sweep(train_t, Y, X, reg, alpha)
        _check_finite(X, Y)
    return MFModel(learner="als", user_factors=X, item_factors=Y)


def _positive_pairs(train):
    coo = train.tocoo()
    return coo.row.astype(np.int64), coo.col.astype(np.int64)


def _sorted_pos_keys(pu, pi, n_items):
    return np.sort(pu * n_items + pi)


def _sample_negatives(rng, users, sorted_keys, n_items, size):
    """Uniform negatives per user; resample accidental positives.

    Returns (negatives, valid mask); entries stay invalid when a user has no
    negative item at all (e.g. they interacted with the full catalog).
    """
    neg = rng.integers(0, n_items, size=size)
    bad = np.zeros(size, dtype=bool)
    for _ in range(100):
        keys = users * n_items + neg
        pos = np.minimum(np.searchsorted(sorted_keys, keys), len(sorted_keys) - 1)
        bad = sorted_keys[pos] == keys
        if not bad.any():
            break
        neg[bad] = rng.integers(0, n_items, size=int(bad.sum()))
    return neg, ~bad


def train_bpr(train, f, lr=0.05, reg=0.01, epochs=30, seed=0, batch_size=4096):
    """Pairwise ranking SGD over sampled (user, positive, negative) triples."""
    if f < 1 or lr <= 0:
        raise ValueError("require f >= 1 and lr > 0")
    train = train.tocsr()
    n_users, n_items = train.shape
    rng = np.random.default_rng(seed)
    X = _init_factors(rng, n_users, f)
    Y = _init_factors(rng, n_items, f)
    pu, pi = _positive_pairs(train)
    pos_keys = _sorted_pos_keys(pu, pi, n_items)
    for _ in range(epochs):
        order = rng.permutation(len(pu))
        for start in range(0, len(order), batch_size):
            sel = order[start:start + batch_size]
            u, i = pu[sel], pi[sel]
            j, ok = _sample_negatives(rng, u, pos_keys, n_items, len(sel))
            u, i, j = u[ok], i[ok], j[ok]
            if len(u) == 0:
                continue
            Xu, Yi, Yj = X[u], Y[i], Y[j]
            x_uij = np.sum(Xu * (Yi - Yj), axis=1)
            g = expit(-x_uij)[:, None]
            np.add.at(X, u, lr * (g * (Yi - Yj) - reg * Xu))
            np.add.at(Y, i, lr * (g * Xu - reg * Yi))
            np.add.at(Y, j, lr * (-g * Xu - reg * Yj))
        _check_finite(X, Y)
    return MFModel(learner="bpr", user_factors=X, item_factors=Y)


def train_lmf(train, f, lr=0.05, reg=0.01, neg_ratio=4, epochs=30, seed=0, batch_size=4096):
    """Logistic matrix factorization: gradient ascent on a sampled logistic likelihood."""
    if f < 1 or lr <= 0:
        raise ValueError("require f >= 1 and lr > 0")
    train = train.tocsr()
    n_users, n_items = train.shape
    rng = np.random.default_rng(seed)
    X = _init_factors(rng, n_users, f)
    Y = _init_factors(rng, n_items, f)
    if epochs == 0:
        return MFModel(learner="lmf", user_factors=X, item_factors=Y)
    pu, pi = _positive_pairs(train)
    pos_keys = _sorted_pos_keys(pu, pi, n_items)
    for _ in range(epochs):
        order = rng.permutation(len(pu))
        for start in range(0, len(order), batch_size):
            sel = order[start:start + batch_size]
            u, i = pu[sel], pi[sel]
            # positives: d/ds log sigma(s) = 1 - sigma(s)
            Xu, Yi = X[u], Y[i]
            g_pos = (1.0 - expit(np.sum(Xu * Yi, axis=1)))[:, None]
            np.add.at(X, u, lr * (g_pos * Yi - reg * Xu))
            np.add.at(Y, i, lr * (g_pos * Xu - reg * Yi))
            # sampled negatives: d/ds log sigma(-s) = -sigma(s)
            un = np.repeat(u, neg_ratio)
            jn, ok = _sample_negatives(rng, un, pos_keys, n_items, len(un))
            un, jn = un[ok], jn[ok]
            if len(un) == 0:
                continue
            Xn, Yn = X[un], Y[jn]
            g_neg = -expit(np.sum(Xn * Yn, axis=1))[:, None]
            np.add.at(X, un, lr * (g_neg * Yn - reg * Xn))
            np.add.at(Y, jn, lr * (g_neg * Xn - reg * Yn))
        _check_finite(X, Y)
    return MFModel(learner="lmf", user_factors=X, item_factors=Y)


def train_most_popular(train):
    """Items sorted by descending training interaction count, ties by index."""
    train = train.tocsr()
    if train.nnz == 0:
        raise ValueError("cannot rank popularity of an empty matrix")
    counts = np.asarray(train.getnnz(axis=0))
    order = np.lexsort((np.arange(train.shape[1]), -counts))
    return PopularityModel(item_order=order)


def recommend_top_k(model, user, k, exclude=()):
    """Top-k items by score, excluding `exclude`; ties broken by item index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    exclude = set(exclude)
    if isinstance(model, PopularityModel):
        if user < 0:
            raise IndexError(f"user index {user} out of range")
        out = [int(i) for i in model.item_order if int(i) not in exclude]
        return out[:k]
    if not 0 <= user < model.user_factors.shape[0]:
        raise IndexError(f"user index {user} out of range")
    scores = model.score(user).astype(float)
    if exclude:
        scores[list(exclude)] = -np.inf
    order = np.lexsort((np.arange(len(scores)), -scores))
    out = []
    for i in order:
        if np.isinf(scores[i]) and scores[i] < 0:
            break
        out.append(int(i))
        if len(out) == k:
            break
    return out


def train_base_learner(name, train, params, seed):
    """Dispatch by registry name with per-learner hyperparameters."""
    if name == "als":
        return train_als(train, **params, seed=seed)
    if name == "bpr":
        return train_bpr(train, **params, seed=seed)
    if name == "lmf":
        return train_lmf(train, **params, seed=seed)
    if name == "most_popular":
        return train_most_popular(train)
    raise ValueError(f"unknown base learner {name!r}")
