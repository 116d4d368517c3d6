"""Meta-level training, grid search, cross-validation and classification reports."""

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import metaset as ms
from .errors import MetaselectError
from .evaluation import base_level_impact
from .learners import LinearSVMModel, LogisticRegressionModel, MLPModel
from .trees import GradientBoostedModel, RandomForestModel

log = logging.getLogger(__name__)

META_LEARNERS = (
    "logistic_regression",
    "linear_svm",
    "mlp",
    "random_forest",
    "gradient_boosted_trees",
)

_FAMILIES = {
    "logistic_regression": (LogisticRegressionModel, {"l2", "lr", "iters"}),
    "linear_svm": (LinearSVMModel, {"C", "lr", "epochs"}),
    "mlp": (MLPModel, {"hidden", "lr", "epochs", "l2", "batch_size"}),
    "random_forest": (RandomForestModel, {"trees", "max_depth", "max_features", "bootstrap"}),
    "gradient_boosted_trees": (GradientBoostedModel, {"trees", "depth", "lr", "lam"}),
}

DEFAULT_GRIDS = {
    "logistic_regression": {"l2": [1e-4, 1e-2, 1.0]},
    "linear_svm": {"C": [0.1, 1.0, 10.0]},
    "mlp": {"hidden": [32, 64], "lr": [1e-3, 1e-2]},
    "random_forest": {"trees": [100], "max_depth": [None, 16]},
    "gradient_boosted_trees": {"trees": [200], "depth": [6], "lr": [0.1]},
}


@dataclass
class MetaModel:
    learner: str
    estimator: object
    class_names: list
    scaler: object = None

    def predict(self, features):
        """One label per row; score ties resolve to the earlier class."""
        features = np.asarray(features, dtype=float)
        if self.scaler is not None:
            features = ms.zscore_apply(self.scaler, features.copy())
        scores = self.estimator.decision(features)
        if scores.shape[1] != len(self.class_names):
            raise ValueError("decision width does not match the class list")
        best = np.argmax(scores, axis=1)
        return np.asarray([self.class_names[c] for c in best], dtype=object)


@dataclass
class MetaReport:
    learner: str
    class_names: list
    confusion: np.ndarray  # rows = true class, columns = predicted
    accuracy: float
    per_class: dict  # class -> {precision, recall, f1, support}
    macro_avg: dict
    weighted_avg: dict
    fold_accuracies: list
    predictions: np.ndarray  # pooled out-of-fold labels, row-aligned to the dataset
    base_level: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    majority_accuracy: float = 0.0
    notes: list = field(default_factory=list)


def train_meta(learner, features, labels, class_names, params=None, seed=0):
    """Fit one meta-classifier family; unknown hyperparameter keys are rejected."""
    if learner not in _FAMILIES:
        raise ValueError(f"unknown meta learner {learner!r}; choose from {META_LEARNERS}")
    present = set(labels)
    if len(present) < 2:
        raise MetaselectError("meta training needs at least 2 classes present")
    cls, accepted = _FAMILIES[learner]
    params = dict(params or {})
    unknown = set(params) - accepted
    if unknown:
        raise ValueError(
            f"unknown hyperparameter(s) {sorted(unknown)} for {learner}; accepted: {sorted(accepted)}"
        )
    codes = np.asarray([class_names.index(l) for l in labels])
    est = cls(**params, seed=seed)
    est.fit(np.asarray(features, dtype=float), codes, len(class_names))
    return MetaModel(learner=learner, estimator=est, class_names=list(class_names))


def predict_majority(labels, class_names):
    """Constant predictor returning the most frequent label, ties by class order."""
    if len(labels) == 0:
        raise ValueError("empty training slice")
    counts = {c: 0 for c in class_names}
    for l in labels:
        counts[l] += 1
    best = max(class_names, key=lambda c: (counts[c], -class_names.index(c)))

    def predictor(features):
        return np.asarray([best] * len(features), dtype=object)

    predictor.label = best
    return predictor


def classification_report(confusion, class_names):
    """Per-class precision/recall/F1 plus macro and support-weighted averages.

    Zero denominators yield 0 for the affected metric.
    """
    confusion = np.asarray(confusion, dtype=float)
    if confusion.shape[0] != confusion.shape[1]:
        raise ValueError("confusion matrix must be square")
    per_class = {}
    supports = confusion.sum(axis=1)
    total = confusion.sum()
    for c, name in enumerate(class_names):
        tp = confusion[c, c]
        col = confusion[:, c].sum()
        row = supports[c]
        precision = tp / col if col > 0 else 0.0
        recall = tp / row if row > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        per_class[name] = {
            "precision": float(precision),
            "recall": float(recall),
            "f1": float(f1),
            "support": int(row),
        }
    macro = {
        m: float(np.mean([per_class[n][m] for n in class_names]))
        for m in ("precision", "recall", "f1")
    }
    weights = supports / total if total > 0 else supports
    weighted = {
        m: float(np.sum([per_class[n][m] * w for n, w in zip(class_names, weights)]))
        for m in ("precision", "recall", "f1")
    }
    accuracy = float(np.trace(confusion) / total) if total > 0 else 0.0
    return {
        "per_class": per_class,
        "macro_avg": macro,
        "weighted_avg": weighted,
        "accuracy": accuracy,
    }


def _inner_split(n, frac, rng):
    perm = rng.permutation(n)
    n_val = max(1, int(round(frac * n)))
    return perm[n_val:], perm[:n_val]


@dataclass
class GridSearchResult:
    best_params: dict
    trials: list  # (params, mean_score) in enumeration order


def grid_search(learner, ds, grid, folds, seed=0):
    """Exhaustive sweep scored by mean inner-validation (20%) accuracy.

    Configurations that raise are scored 0 and logged; ties keep the first
    configuration in enumeration order.
    """
    if not grid:
        raise ValueError("empty grid")
    keys = list(grid.keys())
    trials = []
    best = None
    for combo in itertools.product(*(grid[k] for k in keys)):
        params = dict(zip(keys, combo))
        scores = []
        try:
            for r, fold in enumerate(folds.folds):
                train_rows = np.setdiff1d(np.arange(len(ds.labels)), fold)
                rng = np.random.default_rng(seed + r)
                tr, va = _inner_split(len(train_rows), 0.2, rng)
                model = train_meta(
                    learner,
                    ds.features[train_rows[tr]],
                    ds.labels[train_rows[tr]],
                    ds.class_names,
                    params,
                    seed=seed,
                )
                pred = model.predict(ds.features[train_rows[va]])
                scores.append(float(np.mean(pred == ds.labels[train_rows[va]])))
            mean_score = float(np.mean(scores))
        except Exception as exc:  # noqa: BLE001 - a bad config must not kill the sweep
            log.warning("grid config %s failed: %s", params, exc)
            mean_score = 0.0
        trials.append((params, mean_score))
        if best is None or mean_score > best[1]:
            best = (params, mean_score)
    return GridSearchResult(best_params=best[0], trials=trials)


def cross_validate(learner, ds, folds, params=None, options=None,
                   ndcg_table=None, fallback="most_popular", seed=0):
    """K-fold evaluation with leakage-safe normalization and SMOTE.

    Scaler and SMOTE are fit on each training fold only; the pooled
    out-of-fold confusion matrix and metrics are returned.
    """
    options = dict(options or {})
    n = len(ds.labels)
    class_names = list(ds.class_names)
    idx = {c: i for i, c in enumerate(class_names)}
    predictions = np.empty(n, dtype=object)
    fold_accuracies = []
    for r, fold in enumerate(folds.folds):
        try:
            train_rows = np.setdiff1d(np.arange(n), fold)
            X_tr = ds.features[train_rows].copy()
            y_tr = ds.labels[train_rows]
            X_te = ds.features[fold].copy()
            scaler = None
            if options.get("normalize"):
                scaler, X_tr = ms.zscore_fit_transform(X_tr)
                X_te = ms.zscore_apply(scaler, X_te)
            if options.get("smote"):
                fold_ds = ms.MetaDataset(
                    features=X_tr, labels=y_tr, class_names=class_names
                )
                fold_ds = ms.smote_oversample(
                    fold_ds, k_neighbors=options.get("smote_k", 5), seed=seed + r
                )
                X_tr, y_tr = fold_ds.features, fold_ds.labels
            model = train_meta(learner, X_tr, y_tr, class_names, params, seed=seed)
            pred = model.predict(X_te)
            predictions[fold] = pred
            fold_accuracies.append(float(np.mean(pred == ds.labels[fold])))
        except MetaselectError as exc:
            raise MetaselectError(f"fold {r}: {exc}") from exc
    confusion = np.zeros((len(class_names), len(class_names)), dtype=int)
    for true, pred in zip(ds.labels, predictions):
        confusion[idx[true], idx[pred]] += 1
    rep = classification_report(confusion, class_names)
    report = MetaReport(
        learner=learner,
        class_names=class_names,
        confusion=confusion,
        accuracy=rep["accuracy"],
        per_class=rep["per_class"],
        macro_avg=rep["macro_avg"],
        weighted_avg=rep["weighted_avg"],
        fold_accuracies=fold_accuracies,
        predictions=predictions,
        options=options,
        majority_accuracy=float(
            np.mean(ds.labels == predict_majority(ds.labels, class_names).label)
        ),
    )
    if ndcg_table is not None:
        from .evaluation import constant_impacts, oracle_impact

        mean_impact, _ = base_level_impact(list(predictions), ndcg_table, fallback)
        report.base_level = {
            "impact": mean_impact,
            "oracle": oracle_impact(ndcg_table),
            "constant": constant_impacts(ndcg_table, fallback),
            "fallback": fallback,
        }
    return report
