"""Ratings ingestion: load, implicit conversion, sparsity filtering, per-user splits."""

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import EmptyDatasetError, ParseError, SplitError


@dataclass
class ExplicitDataset:
    """Deduplicated explicit ratings; (user, item, rating, timestamp-or-None)."""

    rows: list


@dataclass
class ImplicitDataset:
    """Binary user-item interactions with dense-index <-> external-id maps."""

    interactions: sp.csr_matrix
    user_ids: list
    item_ids: list

    @property
    def n_users(self):
        return self.interactions.shape[0]

    @property
    def n_items(self):
        return self.interactions.shape[1]


@dataclass
class PerUserSplit:
    """Disjoint train/validation/test cover of an interaction matrix."""

    train: sp.csr_matrix
    validation: sp.csr_matrix
    test: sp.csr_matrix
    ratios: tuple
    seed: int


def load_ratings(path, delimiter=",", skip_header=0):
    """Parse a delimited ratings file into an ExplicitDataset.

    Columns are user,item,rating[,timestamp]. Duplicate (user, item) pairs
    keep the last rating seen but the position of the first occurrence.
    """
    rows = {}
    order = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        for line_no, rec in enumerate(reader, start=1):
            if line_no <= skip_header:
                continue
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            if len(rec) < 3:
                raise ParseError(line_no, f"expected at least 3 columns, got {len(rec)}")
            user, item = rec[0].strip(), rec[1].strip()
            try:
                rating = float(rec[2])
            except ValueError:
                raise ParseError(line_no, f"rating {rec[2]!r} is not a number") from None
            if not math.isfinite(rating):
                raise ParseError(line_no, f"rating {rec[2]!r} is not finite")
            ts = None
            if len(rec) >= 4 and rec[3].strip():
                try:
                    ts = int(rec[3])
                except ValueError:
                    raise ParseError(line_no, f"timestamp {rec[3]!r} is not an integer") from None
            key = (user, item)
            if key not in rows:
                order.append(key)
            rows[key] = (rating, ts)
    if not order:
        raise EmptyDatasetError(f"no ratings found in {path}")
    return ExplicitDataset(rows=[(u, i, rows[(u, i)][0], rows[(u, i)][1]) for u, i in order])


def to_implicit(d, threshold):
    """Binarize ratings: an interaction exists iff rating > threshold (strict)."""
    if not math.isfinite(threshold):
        raise ValueError("threshold must be finite")
    kept = [(u, i) for u, i, r, _ in d.rows if r > threshold]
    user_ids, item_ids = [], []
    u_index, i_index = {}, {}
    coords = []
    for u, i in kept:
        if u not in u_index:
            u_index[u] = len(user_ids)
            user_ids.append(u)
        if i not in i_index:
            i_index[i] = len(item_ids)
            item_ids.append(i)
        coords.append((u_index[u], i_index[i]))
    shape = (len(user_ids), len(item_ids))
    if coords:
        r, c = zip(*coords)
        mat = sp.csr_matrix((np.ones(len(coords)), (r, c)), shape=shape)
    else:
        mat = sp.csr_matrix(shape)
    mat.data[:] = 1.0  # duplicates already removed upstream; keep entries binary
    return ImplicitDataset(interactions=mat, user_ids=user_ids, item_ids=item_ids)


def filter_min_interactions(d, min_count):
    """Iteratively drop users and items with fewer than min_count interactions.

    Removal repeats until a fixpoint: dropping an item can push a user below
    the threshold and vice versa.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    mat = d.interactions.tocsr()
    user_ids = list(d.user_ids)
    item_ids = list(d.item_ids)
    while True:
        row_nnz = mat.getnnz(axis=1)
        col_nnz = mat.getnnz(axis=0)
        keep_u = row_nnz >= min_count
        keep_i = col_nnz >= min_count
        if keep_u.all() and keep_i.all():
            break
        mat = mat[keep_u][:, keep_i].tocsr()
        user_ids = [uid for uid, k in zip(user_ids, keep_u) if k]
        item_ids = [iid for iid, k in zip(item_ids, keep_i) if k]
        if mat.shape[0] == 0 or mat.shape[1] == 0:
            raise EmptyDatasetError(f"no users/items survive min_count={min_count} filtering")
    return ImplicitDataset(interactions=mat, user_ids=user_ids, item_ids=item_ids)


def split_per_user(d, ratios, seed):
    """Split each user's interactions into train/validation/test by seeded shuffle.

    Sizes follow floor(ratio * n) with a floor of 1 interaction per partition;
    the remainder goes to test. If the floors leave test empty, train (then
    validation) gives up interactions so every partition stays nonempty.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    mat = d.interactions.tocsr()
    rng = np.random.default_rng(seed)
    buckets = {name: ([], []) for name in ("train", "validation", "test")}
    for u in range(mat.shape[0]):
        items = mat.indices[mat.indptr[u]:mat.indptr[u + 1]]
        n = len(items)
        if n < 3:
            raise SplitError(f"user {d.user_ids[u]!r} has {n} interactions, need >= 3 to split")
        n_train = max(1, int(math.floor(ratios[0] * n)))
        n_val = max(1, int(math.floor(ratios[1] * n)))
        while n - n_train - n_val < 1:
            if n_train > 1:
                n_train -= 1
            else:
                n_val -= 1
        perm = rng.permutation(items)
        for name, chunk in (
            ("train", perm[:n_train]),
            ("validation", perm[n_train:n_train + n_val]),
            ("test", perm[n_train + n_val:]),
        ):
            rows, cols = buckets[name]
            rows.extend([u] * len(chunk))
            cols.extend(chunk.tolist())
    parts = {}
    for name, (rows, cols) in buckets.items():
        parts[name] = sp.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=mat.shape
        )
    return PerUserSplit(
        train=parts["train"],
        validation=parts["validation"],
        test=parts["test"],
        ratios=tuple(ratios),
        seed=seed,
    )
