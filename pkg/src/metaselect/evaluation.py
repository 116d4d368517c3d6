"""Ranking evaluation: per-user NDCG@K, metatarget labels, base-level impact."""

from dataclasses import dataclass

import numpy as np

from .cf import BASE_LEARNERS, ZEROES_LABEL, recommend_top_k


@dataclass
class EvalConfig:
    k: int = 30

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class NdcgTable:
    """Per-user NDCG@K for every base learner; column order = BASE_LEARNERS."""

    scores: np.ndarray  # (n_users, len(BASE_LEARNERS))
    k: int


def _discount(p):
    """1-based rank discount 1/log2(p+1)."""
    return 1.0 / np.log2(p + 1.0)


def ndcg_at_k(recommended, relevant, k):
    """Binary-relevance NDCG truncated at rank k; 0 when nothing is relevant."""
    if k < 1:
        raise ValueError("k must be >= 1")
    relevant = set(relevant)
    if not relevant:
        return 0.0
    dcg = 0.0
    for p, item in enumerate(recommended[:k], start=1):
        if item in relevant:
            dcg += 1.0 / np.log2(p + 1.0)
    n_ideal = min(k, len(relevant))
    idcg = float(np.sum(_discount(np.arange(1, n_ideal + 1, dtype=float))))
    return dcg / idcg


def ndcg_batch(rec_matrix, rel_masks, k):
    """Vectorized NDCG for many rankings at once.

    `rec_matrix` is (n, L) item indices (ranked); `rel_masks` is (n, n_items)
    boolean relevance. Matches ndcg_at_k row by row.
    """
    rec_matrix = np.asarray(rec_matrix)
    rel_masks = np.asarray(rel_masks, dtype=bool)
    n, L = rec_matrix.shape
    use = min(k, L)
    hits = np.take_along_axis(rel_masks, rec_matrix[:, :use], axis=1)
    disc = _discount(np.arange(1, use + 1, dtype=float))
    dcg = hits @ disc
    n_rel = rel_masks.sum(axis=1)
    cum = np.concatenate([[0.0], np.cumsum(_discount(np.arange(1, rel_masks.shape[1] + 1, dtype=float)))])
    idcg = cum[np.minimum(k, n_rel)]
    out = np.zeros(n)
    nz = n_rel > 0
    out[nz] = dcg[nz] / idcg[nz]
    return out


def evaluate_all(models, split, cfg):
    """NDCG@K of every base learner for every user.

    `models` maps base-learner name -> trained model. Seen (train + validation)
    items are excluded from recommendation; test items are the relevant set.
    """
    train, val, test = split.train.tocsr(), split.validation.tocsr(), split.test.tocsr()
    n_users = train.shape[0]
    scores = np.zeros((n_users, len(BASE_LEARNERS)))
    for u in range(n_users):
        seen = np.concatenate([
            train.indices[train.indptr[u]:train.indptr[u + 1]],
            val.indices[val.indptr[u]:val.indptr[u + 1]],
        ])
        relevant = test.indices[test.indptr[u]:test.indptr[u + 1]]
        assert len(relevant) > 0, "split invariant guarantees a nonempty test set"
        rel = set(relevant.tolist())
        exclude = set(seen.tolist())
        for b, name in enumerate(BASE_LEARNERS):
            recs = recommend_top_k(models[name], u, cfg.k, exclude)
            scores[u, b] = ndcg_at_k(recs, rel, cfg.k)
    return NdcgTable(scores=scores, k=cfg.k)


def compute_metatarget(table):
    """Best base learner per user; all-zero rows become the zeroes class.

    Ties take the first learner in registry order.
    """
    scores = table.scores
    if not np.all(np.isfinite(scores)):
        raise ValueError("NDCG table contains non-finite values")
    best = np.argmax(scores, axis=1)  # argmax already breaks ties by first index
    labels = [BASE_LEARNERS[b] for b in best]
    for u in np.flatnonzero(~scores.any(axis=1)):
        labels[u] = ZEROES_LABEL
    return labels


def base_level_impact(predictions, table, fallback="most_popular"):
    """Mean NDCG obtained by following per-user algorithm predictions.

    Zeroes predictions are routed to the fallback learner. Returns
    (mean, per-user vector).
    """
    if len(predictions) != table.scores.shape[0]:
        raise ValueError("one prediction per user required")
    col = {name: b for b, name in enumerate(BASE_LEARNERS)}
    per_user = np.empty(len(predictions))
    for u, pred in enumerate(predictions):
        if pred == ZEROES_LABEL:
            pred = fallback
        if pred not in col:
            raise ValueError(f"unknown label {pred!r}")
        per_user[u] = table.scores[u, col[pred]]
    return float(per_user.mean()), per_user


def oracle_impact(table):
    """Upper bound: mean of each user's best achievable NDCG."""
    return float(table.scores.max(axis=1).mean())


def constant_impacts(table, fallback="most_popular"):
    """Impact of always choosing one algorithm, for every class incl. zeroes."""
    n = table.scores.shape[0]
    out = {}
    for name in BASE_LEARNERS + (ZEROES_LABEL,):
        out[name], _ = base_level_impact([name] * n, table, fallback)
    return out
