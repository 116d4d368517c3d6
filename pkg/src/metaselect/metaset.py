"""Metadataset assembly, normalization, SMOTE oversampling and CV folds."""

from dataclasses import dataclass

import numpy as np

from .cf import META_CLASSES, ZEROES_LABEL


@dataclass
class MetaDataset:
    features: np.ndarray  # (n_rows, k)
    labels: np.ndarray  # string labels, aligned to features
    class_names: list
    provenance: str = ""
    user_ids: list = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=object)
        if self.features.shape[0] != len(self.labels):
            raise ValueError("features and labels are not aligned")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("metafeatures contain non-finite values")


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray  # constant features keep std 0 and map to 0


@dataclass
class FoldPlan:
    folds: list  # disjoint row-index arrays covering all rows
    seed: int


def assemble(embeddings, labels, user_ids=None):
    """Row-aligned join of an EmbeddingMatrix and metatarget labels."""
    if embeddings.values.shape[0] != len(labels):
        raise ValueError(
            f"user-count mismatch: {embeddings.values.shape[0]} embeddings vs {len(labels)} labels"
        )
    present = [c for c in META_CLASSES if c in set(labels)]
    return MetaDataset(
        features=embeddings.values.copy(),
        labels=np.asarray(labels, dtype=object),
        class_names=present,
        provenance=embeddings.source,
        user_ids=user_ids,
    )


def zscore_fit(features):
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    return Scaler(mean=mean, std=std)


def zscore_apply(scaler, features):
    out = features - scaler.mean
    nz = scaler.std > 0
    out[:, nz] /= scaler.std[nz]
    out[:, ~nz] = 0.0
    return out


def zscore_fit_transform(features):
    scaler = zscore_fit(features)
    return scaler, zscore_apply(scaler, features)


def smote_oversample(ds, k_neighbors=5, seed=0):
    """Upsample every minority class to the majority count.

    Each synthetic row is x + r * (x_nn - x) with r ~ U[0,1] and x_nn one of
    the k nearest same-class neighbors. Original rows are preserved first.
    """
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be >= 1")
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(ds.labels, return_counts=True)
    majority = counts.max()
    feats = [ds.features]
    labels = [ds.labels]
    for cls in ds.class_names:
        if cls not in classes:
            continue
        Xc = ds.features[ds.labels == cls]
        n_c = Xc.shape[0]
        need = majority - n_c
        if need == 0:
            continue
        if n_c < 2:
            raise ValueError(f"class {cls!r} has {n_c} member(s); SMOTE needs >= 2")
        d2 = np.sum((Xc[:, None, :] - Xc[None, :, :]) ** 2, axis=2)
        np.fill_diagonal(d2, np.inf)
        k_eff = min(k_neighbors, n_c - 1)
        nn = np.argsort(d2, axis=1, kind="stable")[:, :k_eff]
        base = rng.integers(0, n_c, size=need)
        pick = rng.integers(0, k_eff, size=need)
        r = rng.random(need)[:, None]
        x = Xc[base]
        x_nn = Xc[nn[base, pick]]
        feats.append(x + r * (x_nn - x))
        labels.append(np.asarray([cls] * need, dtype=object))
    return MetaDataset(
        features=np.vstack(feats),
        labels=np.concatenate(labels),
        class_names=list(ds.class_names),
        provenance=ds.provenance,
    )


def remove_zeroes(ds):
    """Drop every row labeled zeroes; shrinks the class list accordingly."""
    keep = ds.labels != ZEROES_LABEL
    return MetaDataset(
        features=ds.features[keep],
        labels=ds.labels[keep],
        class_names=[c for c in ds.class_names if c != ZEROES_LABEL],
        provenance=ds.provenance,
        user_ids=[u for u, k in zip(ds.user_ids, keep) if k] if ds.user_ids else None,
    )


def make_folds(ds, n_folds=5, seed=0):
    """Stratified disjoint cover: per-class fold counts differ by at most one."""
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(n_folds)]
    for cls in ds.class_names:
        idx = np.flatnonzero(ds.labels == cls)
        if len(idx) < n_folds:
            raise ValueError(f"class {cls!r} has {len(idx)} rows, fewer than {n_folds} folds")
        idx = rng.permutation(idx)
        for pos, row in enumerate(idx):
            folds[pos % n_folds].append(int(row))
    return FoldPlan(folds=[np.sort(np.asarray(f)) for f in folds], seed=seed)
