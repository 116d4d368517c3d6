"""Acceptance suite: one test per shipped criterion, each printing a PASS/FAIL line."""

import collections
import contextlib
import itertools
import json
import math
import os
import sys
import time

import numpy as np
import pytest
import scipy.sparse as sp
import yaml

from metaselect import artifacts as art
from metaselect import cf, datagen, embeddings as emb, learners, metalearn as ml
from metaselect import metaset as ms, pipeline
from metaselect.config import load_config
from metaselect.embeddings import EmbeddingMatrix
from metaselect.evaluation import ndcg_at_k, ndcg_batch


from conftest import ACCEPTANCE_LINES


def _record(n, desc, passed):
    line = f"[acceptance] C{n} {desc}: {'PASS' if passed else 'FAIL'}"
    ACCEPTANCE_LINES.append(line)
    print(line, file=sys.__stdout__, flush=True)


@contextlib.contextmanager
def criterion(n, desc):
    try:
        yield
    except BaseException:
        _record(n, desc, False)
        raise
    _record(n, desc, True)


# ---------------------------------------------------------------------------
# Shared synthetic end-to-end run (criteria 4, 5, 6, 8).
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def big_run(tmp_path_factory):
    root = str(tmp_path_factory.mktemp("accept"))
    rows, _ = datagen.synthetic_ratings(n_users=2000, n_items=500, seed=5,
                                        drifter_items_range=(18, 24))
    ratings = os.path.join(root, "ratings.csv")
    datagen.write_ratings_csv(ratings, rows, seed=5)
    cfg_dict = {
        "ratings_file": ratings,
        "work_dir": os.path.join(root, "work"),
        "eval": {"k": 30},
        "base": {
            "als": {"f": 32, "reg": 0.01, "alpha": 40.0, "iters": 15},
            "bpr": {"f": 32, "lr": 0.05, "reg": 0.01, "epochs": 15},
            "lmf": {"f": 32, "lr": 0.05, "reg": 0.01, "neg_ratio": 4, "epochs": 15},
            "seed": 7,
        },
        "embeddings": [
            {"method": "vae", "size": 16, "hidden": 64, "epochs": 25, "seed": 13},
        ],
        "meta": {
            "learners": ["random_forest", "gradient_boosted_trees"],
            "params": {
                "random_forest": {"trees": 60, "max_depth": 12},
                "gradient_boosted_trees": {"trees": 40, "depth": 4, "lr": 0.2},
            },
            "n_folds": 5,
        },
    }
    config_path = os.path.join(root, "config.yaml")
    with open(config_path, "w") as fh:
        yaml.safe_dump(cfg_dict, fh)
    cfg = load_config(config_path)
    t0 = time.time()
    pipeline.cmd_prepare(cfg)
    pipeline.cmd_base(cfg)
    pipeline.cmd_embed(cfg)
    reports = pipeline.cmd_meta(cfg)
    elapsed = time.time() - t0
    # snapshot text reports before any later stage overwrites them
    rdir = os.path.join(cfg["work_dir"], "reports")
    texts = {}
    for (source, learner) in reports:
        texts[(source, learner)] = open(
            os.path.join(rdir, f"{source}__{learner}.txt")).read()
    _, labels, _ = art.load_ndcg_table(os.path.join(cfg["work_dir"], "ndcg.csv"))
    return {"cfg": cfg, "reports": reports, "texts": texts, "labels": labels,
            "elapsed": elapsed}


class TestCriterion1:
    def test_ndcg_oracle_equivalence(self):
        with criterion(1, "ndcg oracle equivalence"):
            t0 = time.time()
            n_items, k = 8, 8
            subsets = np.array([[(s >> i) & 1 for i in range(n_items)]
                                for s in range(256)], dtype=bool)
            pop = subsets.sum(axis=1)
            disc = np.array([1.0 / math.log2(p + 2.0) for p in range(n_items)])
            cum = np.concatenate([[0.0], np.cumsum(disc)])
            rng = np.random.default_rng(0)
            for L in range(1, n_items + 1):
                perms = np.array(list(itertools.permutations(range(n_items), L)),
                                 dtype=np.int64)
                # independent brute-force evaluator straight from the definition
                hits = subsets[:, perms]
                dcg = hits[:, :, :min(k, L)] @ disc[:min(k, L)]
                idcg = cum[np.minimum(k, pop)][:, None]
                oracle = np.divide(dcg, idcg, out=np.zeros_like(dcg),
                                   where=idcg > 0)
                for s in range(256):
                    rel = np.broadcast_to(subsets[s], (len(perms), n_items))
                    got = ndcg_batch(perms, rel, k)
                    assert np.max(np.abs(got - oracle[s])) <= 1e-12
                # scalar bridge: ndcg_at_k equals the vectorized path, fully
                # for short lists and on a deterministic sample for long ones
                if L <= 3:
                    probe = np.arange(len(perms))
                else:
                    probe = rng.choice(len(perms), size=60, replace=False)
                for row in probe:
                    perm = list(perms[row])
                    for s in range(0, 256, 5):
                        rel_set = set(np.flatnonzero(subsets[s]).tolist())
                        want = ndcg_batch(perms[row][None, :],
                                          subsets[s][None, :], k)[0]
                        assert abs(ndcg_at_k(perm, rel_set, k) - want) <= 1e-12
            assert time.time() - t0 < 10.0


class TestCriterion2:
    def test_gradient_checks(self):
        with criterion(2, "gradient finite-difference checks"):
            t0 = time.time()
            rng = np.random.default_rng(7)

            def check(loss_grad_fn, params, point_seed):
                prng = np.random.default_rng(point_seed)
                for key in params:
                    params[key] = prng.standard_normal(params[key].shape) * 0.4
                _, grads = loss_grad_fn(params)
                for key in params:
                    flat = params[key].reshape(-1)
                    gflat = np.asarray(grads[key]).reshape(-1)
                    pos = int(prng.integers(flat.size))
                    orig = flat[pos]
                    h = 1e-6
                    flat[pos] = orig + h
                    lp, _ = loss_grad_fn(params)
                    flat[pos] = orig - h
                    lm, _ = loss_grad_fn(params)
                    flat[pos] = orig
                    numeric = (lp - lm) / (2 * h)
                    denom = max(abs(numeric), abs(gflat[pos]), 1e-8)
                    assert abs(numeric - gflat[pos]) / denom < 1e-4

            x_cdae = (rng.random((6, 7)) < 0.5).astype(float)
            users = np.arange(6)
            keep = (rng.random(x_cdae.shape) < 0.7).astype(float)
            x_vae = (rng.random((6, 7)) < 0.6).astype(float)
            x_vae[x_vae.sum(axis=1) == 0, 0] = 1.0
            eps = rng.standard_normal((6, 3))
            X = rng.standard_normal((9, 5))
            Y = np.eye(3)[rng.integers(0, 3, 9)]

            for point in range(10):
                check(lambda p: emb.cdae_loss_and_grad(p, x_cdae, users, keep, 0.3),
                      emb.cdae_init(6, 7, 4, seed=0), 100 + point)
                check(lambda p: emb.vae_loss_and_grad(p, x_vae, eps, 0.6),
                      emb.vae_init(7, 3, 5, seed=0), 200 + point)

                def logreg(p):
                    loss, dW, db = learners.LogisticRegressionModel.loss_and_grad(
                        p["W"], p["b"], X, Y, 0.1)
                    return loss, {"W": dW, "b": db}

                check(logreg, {"W": np.zeros((5, 3)), "b": np.zeros(3)}, 300 + point)
                check(lambda p: learners.MLPModel.loss_and_grad(p, X, Y, l2=0.05),
                      learners.MLPModel.init_params(5, 6, 3, seed=0), 400 + point)
            assert time.time() - t0 < 60.0


class TestCriterion3:
    def test_als_objective_monotone(self):
        with criterion(3, "als objective monotonicity"):
            rng = np.random.default_rng(0)
            mat = sp.csr_matrix((rng.random((50, 40)) < 0.2).astype(float))
            reg, alpha = 0.05, 20.0
            X = rng.uniform(-0.01, 0.01, (50, 8))
            Y = rng.uniform(-0.01, 0.01, (40, 8))
            mat_t = mat.T.tocsr()
            prev = cf.als_objective(mat, cf.MFModel("als", X, Y), reg, alpha)
            for _ in range(10):
                cf._als_half_sweep(mat, X, Y, reg, alpha)
                cf._als_half_sweep(mat_t, Y, X, reg, alpha)
                cur = cf.als_objective(mat, cf.MFModel("als", X, Y), reg, alpha)
                assert cur <= prev + 1e-9
                prev = cur


class TestCriterion4:
    def test_synthetic_end_to_end_win(self, big_run):
        with criterion(4, "synthetic end-to-end accuracy win"):
            labels = big_run["labels"]
            majority = max(collections.Counter(labels).values()) / len(labels)
            accs = {learner: rep.accuracy
                    for (_, learner), rep in big_run["reports"].items()}
            best = max(accs.values())
            assert best >= majority + 0.03, (accs, majority)
            assert big_run["elapsed"] < 600.0


class TestCriterion5:
    def test_base_level_impact_bounds(self, big_run):
        with criterion(5, "base-level impact bounds"):
            best_rep = max(big_run["reports"].values(), key=lambda r: r.accuracy)
            bl = best_rep.base_level
            assert bl["oracle"] >= bl["impact"] >= 0.0
            for name, value in bl["constant"].items():
                assert bl["oracle"] > value, name
            # every text report prints all five constant-predictor impacts
            for text in big_run["texts"].values():
                for name in cf.BASE_LEARNERS + ("zeroes",):
                    assert f"choosing only {name}" in text


class TestCriterion6:
    def test_zeroes_ablation(self, big_run):
        with criterion(6, "zeroes-removal ablation"):
            labels = np.asarray(big_run["labels"], dtype=object)
            counts = collections.Counter(big_run["labels"])
            rep_full = next(iter(big_run["reports"].values()))
            for c, name in enumerate(rep_full.class_names):
                assert rep_full.confusion[c].sum() == counts[name]

            cfg = dict(big_run["cfg"])
            cfg["meta"] = dict(cfg["meta"], remove_zeroes=True,
                               learners=["random_forest"])
            reports2 = pipeline.cmd_meta(cfg)
            rep_nz = next(iter(reports2.values()))
            assert "zeroes" not in rep_nz.class_names
            kept = labels[labels != "zeroes"]
            assert rep_nz.confusion.sum() == len(kept)
            for c, name in enumerate(rep_nz.class_names):
                # proportions change exactly as recomputed from the label file
                assert rep_nz.confusion[c].sum() / len(kept) == pytest.approx(
                    counts[name] / len(kept))
            for rep in (rep_full, rep_nz):
                assert 0.0 <= rep.accuracy <= 1.0
                assert len(rep.fold_accuracies) == 5


class TestCriterion7:
    def test_smote_correctness(self):
        with criterion(7, "smote oversampling correctness"):
            rng = np.random.default_rng(2)
            feats, labels = [], []
            for c, (cls, n) in enumerate([("als", 50), ("bpr", 20), ("zeroes", 12)]):
                feats.append(rng.standard_normal((n, 6)) + 5.0 * c)
                labels.extend([cls] * n)
            ds = ms.assemble(EmbeddingMatrix(np.vstack(feats), "x"), labels)
            out = ms.smote_oversample(ds, k_neighbors=5, seed=9)
            result = collections.Counter(out.labels)
            assert set(result.values()) == {50}
            # every synthetic point lies on a segment between two same-class
            # originals, to within 1e-9
            n_orig = len(ds.labels)
            for x, cls in zip(out.features[n_orig:], out.labels[n_orig:]):
                originals = ds.features[ds.labels == cls]
                best = np.inf
                for i in range(len(originals)):
                    for j in range(len(originals)):
                        if i == j:
                            continue
                        a, d = originals[i], originals[j] - originals[i]
                        t = np.clip(np.dot(x - a, d) / np.dot(d, d), 0.0, 1.0)
                        best = min(best, float(np.linalg.norm(x - (a + t * d))))
                assert best < 1e-9


class TestCriterion8:
    def test_cv_integrity(self, big_run):
        with criterion(8, "cross-validation integrity"):
            rep = next(iter(big_run["reports"].values()))
            # every row predicted exactly once across the 5 folds
            assert len(rep.fold_accuracies) == 5
            assert not any(p is None for p in rep.predictions)
            assert rep.confusion.sum() == len(rep.predictions)
            assert rep.accuracy == pytest.approx(
                np.trace(rep.confusion) / rep.confusion.sum())
            for name in rep.class_names:
                m = rep.per_class[name]
                if m["precision"] + m["recall"] > 0:
                    harmonic = (2 * m["precision"] * m["recall"]
                                / (m["precision"] + m["recall"]))
                    assert abs(m["f1"] - harmonic) <= 1e-9
                else:
                    assert m["f1"] == 0.0
            # the published-table relation the harmonic identity reproduces
            assert round(2 * 0.31 * 0.55 / (0.31 + 0.55), 2) == 0.40


class TestCriterion9:
    def test_full_run_determinism(self, tmp_path):
        with criterion(9, "byte-identical reruns"):
            root = str(tmp_path)
            rows, _ = datagen.synthetic_ratings(
                n_users=220, n_items=140, seed=5, popular_frac=0.3,
                block_fracs=(0.25, 0.25), n_blocks_items=35, pop_pool=25,
                drifter_items_range=(14, 18))
            ratings = os.path.join(root, "ratings.csv")
            datagen.write_ratings_csv(ratings, rows, seed=5)
            digests = []
            for run in ("one", "two"):
                cfg_dict = {
                    "ratings_file": ratings,
                    "work_dir": os.path.join(root, run),
                    "eval": {"k": 10},
                    "base": {
                        "als": {"f": 16, "reg": 0.01, "alpha": 40.0, "iters": 6},
                        "bpr": {"f": 16, "lr": 0.05, "reg": 0.01, "epochs": 5},
                        "lmf": {"f": 16, "lr": 0.05, "reg": 0.01,
                                "neg_ratio": 4, "epochs": 5},
                        "seed": 7,
                    },
                    "embeddings": [
                        {"method": "cdae", "size": 8, "corruption": 0.3,
                         "epochs": 4, "seed": 11},
                        {"method": "vae", "size": 6, "hidden": 12, "beta": 0.1,
                         "epochs": 4, "seed": 13},
                    ],
                    "meta": {
                        "learners": ["logistic_regression", "random_forest"],
                        "params": {
                            "logistic_regression": {"iters": 120},
                            "random_forest": {"trees": 15, "max_depth": 6},
                        },
                        "n_folds": 3,
                    },
                }
                config_path = os.path.join(root, f"config-{run}.yaml")
                with open(config_path, "w") as fh:
                    yaml.safe_dump(cfg_dict, fh)
                cfg = load_config(config_path)
                pipeline.run_all(cfg)
                per_file = {}
                for dirpath, _, names in os.walk(cfg["work_dir"]):
                    for name in names:
                        path = os.path.join(dirpath, name)
                        rel = os.path.relpath(path, cfg["work_dir"])
                        per_file[rel] = art.sha256_file(path)
                # the manifest embeds the work-dir path; compare its recorded
                # artifact hashes instead of its raw bytes
                man = json.load(open(os.path.join(cfg["work_dir"], "manifest.json")))
                per_file["manifest.json"] = json.dumps(
                    {s: info["artifacts"] for s, info in man["stages"].items()},
                    sort_keys=True)
                digests.append(per_file)
            assert set(digests[0]) == set(digests[1])
            for rel in digests[0]:
                assert digests[0][rel] == digests[1][rel], rel


class TestCriterion10:
    def test_noise_collapse_to_majority(self):
        with criterion(10, "degenerate collapse on noise metafeatures"):
            rng = np.random.default_rng(0)
            n, k = 1500, 8
            classes = ["als", "bpr", "lmf", "most_popular"]
            codes = rng.choice(4, size=n, p=[0.45, 0.25, 0.18, 0.12])
            labels = [classes[c] for c in codes]
            X = rng.standard_normal((n, k))
            ds = ms.assemble(EmbeddingMatrix(values=X, source="noise"), labels)
            folds = ms.make_folds(ds, n_folds=5, seed=1)
            counts = collections.Counter(labels)
            majority_cls, majority_n = counts.most_common(1)[0]
            majority = majority_n / n
            params = {
                "logistic_regression": {"iters": 300},
                "linear_svm": {"C": 0.001, "epochs": 20, "lr": 0.001},
                "mlp": {"hidden": 16, "epochs": 60, "lr": 0.01},
                "random_forest": {"trees": 40, "max_depth": 2},
                "gradient_boosted_trees": {"trees": 20, "depth": 2, "lr": 0.1},
            }
            for learner in ml.META_LEARNERS:
                rep = ml.cross_validate(learner, ds, folds, params[learner],
                                        {"normalize": True}, seed=0)
                assert abs(rep.accuracy - majority) <= 0.02, learner
                col_sums = rep.confusion.sum(axis=0)
                assert rep.class_names[int(np.argmax(col_sums))] == majority_cls
