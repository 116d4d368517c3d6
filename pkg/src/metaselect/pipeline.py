"""End-to-end pipeline stages with file-based handoff and a run manifest."""

import json
import logging
import os
import pickle

import numpy as np

from . import artifacts as art
from . import ingest, metaset as ms, report as rpt
from .cf import BASE_LEARNERS, train_base_learner, recommend_top_k
from .config import config_hash
from .embeddings import train_cdae, train_vae, extract_embeddings
from .errors import StageOrderError
from .evaluation import (EvalConfig, NdcgTable, base_level_impact, compute_metatarget,
                         constant_impacts, evaluate_all, oracle_impact)
from .metalearn import DEFAULT_GRIDS, cross_validate, grid_search, train_meta
from .metaset import make_folds

log = logging.getLogger(__name__)

PREPARE_FILES = ("interactions.txt", "train.txt", "validation.txt", "test.txt",
                 "users.txt", "items.txt")


def _work(cfg, *parts):
    return os.path.join(cfg["work_dir"], *parts)


def _manifest(cfg):
    os.makedirs(cfg["work_dir"], exist_ok=True)
    man = art.Manifest(_work(cfg, "manifest.json"))
    return man


def _require(man, cfg, *stages):
    for stage in stages:
        if not man.stage_done(stage):
            raise StageOrderError(f"stage '{stage}' has not been run; run it first")
        man.verify_stage(stage, cfg["work_dir"])


def cmd_prepare(cfg):
    """Load ratings, binarize, filter to min interactions, split per user."""
    man = _manifest(cfg)
    chash = config_hash(cfg)
    if man.data.get("config_hash") == chash:
        try:
            if man.verify_stage("prepare", cfg["work_dir"]):
                log.info("prepare: artifacts up to date, skipping")
                return False
        except art.ArtifactIntegrityError:
            raise
    explicit = ingest.load_ratings(cfg["ratings_file"], cfg["delimiter"], cfg["skip_header"])
    implicit = ingest.to_implicit(explicit, cfg["implicit_threshold"])
    implicit = ingest.filter_min_interactions(implicit, cfg["min_interactions"])
    split = ingest.split_per_user(implicit, tuple(cfg["split"]["ratios"]), cfg["split"]["seed"])
    paths = [_work(cfg, name) for name in PREPARE_FILES]
    art.save_matrix(paths[0], implicit.interactions)
    art.save_matrix(paths[1], split.train)
    art.save_matrix(paths[2], split.validation)
    art.save_matrix(paths[3], split.test)
    art.save_id_map(paths[4], implicit.user_ids)
    art.save_id_map(paths[5], implicit.item_ids)
    man.data["config_hash"] = chash
    man.data["config"] = cfg
    man.record_stage("prepare", paths, cfg["work_dir"],
                     seeds={"split": cfg["split"]["seed"]})
    log.info("prepare: %d users x %d items", implicit.n_users, implicit.n_items)
    return True


def _load_split(cfg):
    train = art.load_matrix(_work(cfg, "train.txt"))
    val = art.load_matrix(_work(cfg, "validation.txt"))
    test = art.load_matrix(_work(cfg, "test.txt"))
    return ingest.PerUserSplit(train=train, validation=val, test=test,
                               ratios=tuple(cfg["split"]["ratios"]), seed=cfg["split"]["seed"])


def cmd_base(cfg):
    """Train the four base learners, score per-user NDCG, derive labels."""
    man = _manifest(cfg)
    _require(man, cfg, "prepare")
    split = _load_split(cfg)
    user_ids = art.load_id_map(_work(cfg, "users.txt"))
    os.makedirs(_work(cfg, "models"), exist_ok=True)
    models, paths = {}, []
    seed = cfg["base"]["seed"]
    for name in BASE_LEARNERS:
        params = dict(cfg["base"].get(name, {}))
        models[name] = train_base_learner(name, split.train, params, seed)
        path = _work(cfg, "models", f"{name}.mcf2")
        art.save_model(path, models[name], seed=seed)
        paths.append(path)
    table = evaluate_all(models, split, EvalConfig(k=cfg["eval"]["k"]))
    labels = compute_metatarget(table)
    ndcg_path = _work(cfg, "ndcg.csv")
    art.save_ndcg_table(ndcg_path, table, labels, user_ids)
    paths.append(ndcg_path)
    man.record_stage("base", paths, cfg["work_dir"], seeds={"base": seed})
    log.info("base: oracle impact %.4f", oracle_impact(table))
    return table, labels


def _embedding_source(spec):
    return f"{spec['method']}{spec['size']}"


def cmd_embed(cfg):
    """Train each configured representation model, export one embedding CSV each."""
    man = _manifest(cfg)
    _require(man, cfg, "prepare")
    train = art.load_matrix(_work(cfg, "train.txt"))
    user_ids = art.load_id_map(_work(cfg, "users.txt"))
    os.makedirs(_work(cfg, "embeddings"), exist_ok=True)
    paths = []
    for spec in cfg["embeddings"]:
        source = _embedding_source(spec)
        if spec["method"] == "cdae":
            model = train_cdae(train, h=spec["size"], corruption=spec.get("corruption", 0.5),
                               lr=spec.get("lr", 1e-3), epochs=spec.get("epochs", 30),
                               seed=spec.get("seed", 0),
                               batch_size=spec.get("batch_size", 64))
        else:
            model = train_vae(train, k=spec["size"], hidden=spec.get("hidden", 600),
                              beta=spec.get("beta", 0.2), lr=spec.get("lr", 1e-3),
                              epochs=spec.get("epochs", 50), seed=spec.get("seed", 0),
                              batch_size=spec.get("batch_size", 64))
        emb = extract_embeddings(model, train, source=source)
        path = _work(cfg, "embeddings", f"{source}.csv")
        art.save_embeddings(path, emb, user_ids)
        paths.append(path)
    man.record_stage("embed", paths, cfg["work_dir"],
                     seeds={s["method"] + str(s["size"]): s.get("seed", 0)
                            for s in cfg["embeddings"]})
    return paths


def _meta_dataset_for(cfg, emb, labels, user_ids, table):
    ds = ms.assemble(emb, labels, user_ids=user_ids)
    if cfg["meta"]["remove_zeroes"]:
        keep = ds.labels != "zeroes"
        ds = ms.remove_zeroes(ds)
        table = NdcgTable(scores=table.scores[keep], k=table.k)
    return ds, table


def cmd_meta(cfg):
    """Cross-validated meta-learning over every embedding x learner cell."""
    man = _manifest(cfg)
    _require(man, cfg, "base", "embed")
    table, labels, user_ids = art.load_ndcg_table(_work(cfg, "ndcg.csv"))
    report_dir = _work(cfg, "reports")
    os.makedirs(report_dir, exist_ok=True)
    meta_cfg = cfg["meta"]
    options = {"normalize": meta_cfg["normalize"], "smote": meta_cfg["smote"]}
    plot_rows = []
    paths = []
    best = None
    reports = {}
    for spec in cfg["embeddings"]:
        source = _embedding_source(spec)
        emb, emb_uids = art.load_embeddings(_work(cfg, "embeddings", f"{source}.csv"), source)
        ds, ds_table = _meta_dataset_for(cfg, emb, labels, user_ids, table)
        folds = make_folds(ds, n_folds=meta_cfg["n_folds"], seed=meta_cfg["seed"])
        for learner in meta_cfg["learners"]:
            params = dict(meta_cfg["params"].get(learner, {}))
            try:
                if meta_cfg["grid_search"]:
                    result = grid_search(learner, ds, DEFAULT_GRIDS[learner], folds,
                                         seed=meta_cfg["seed"])
                    params = result.best_params
                report = cross_validate(learner, ds, folds, params, options,
                                        ndcg_table=ds_table, fallback=cfg["fallback"],
                                        seed=meta_cfg["seed"])
            except Exception as exc:  # noqa: BLE001 - one cell must not kill the run
                log.warning("meta cell %s x %s failed: %s", source, learner, exc)
                continue
            stem = f"{source}__{learner}"
            jpath = os.path.join(report_dir, stem + ".json")
            tpath = os.path.join(report_dir, stem + ".txt")
            rpt.write_report_json(jpath, report, extra={"embedding": source, "params": params})
            rpt.write_report_text(tpath, report)
            paths.extend([jpath, tpath])
            plot_rows.append((learner, source, report.accuracy,
                              report.base_level.get("impact", 0.0)))
            reports[(source, learner)] = report
            if best is None or report.accuracy > best[0]:
                best = (report.accuracy, source, learner, params)
    if best is None:
        raise StageOrderError("every meta cell failed; see the log")
    plot_path = os.path.join(report_dir, "plot_data.csv")
    rpt.write_plot_data(plot_path, plot_rows)
    paths.append(plot_path)
    any_report = next(iter(reports.values()))
    baselines = {
        "majority_accuracy": any_report.majority_accuracy,
        "oracle": any_report.base_level.get("oracle", 0.0),
        "best_constant": max(any_report.base_level.get("constant", {"x": 0.0}).values()),
    }
    paths.extend(rpt.render_figures(report_dir, plot_rows, baselines))

    # retrain the winning cell on all rows and persist it for inference
    _, source, learner, params = best
    emb, emb_uids = art.load_embeddings(_work(cfg, "embeddings", f"{source}.csv"), source)
    ds, _ = _meta_dataset_for(cfg, emb, labels, user_ids, table)
    features = ds.features.copy()
    scaler = None
    if options["normalize"]:
        scaler, features = ms.zscore_fit_transform(features)
    final = train_meta(learner, features, ds.labels, ds.class_names, params,
                       seed=meta_cfg["seed"])
    final.scaler = scaler
    model_path = _work(cfg, "meta_model.pkl")
    art.atomic_write_bytes(model_path, pickle.dumps(final))
    best_path = os.path.join(report_dir, "best.json")
    art.atomic_write_text(best_path, json.dumps(
        {"embedding": source, "learner": learner, "params": params, "accuracy": best[0]},
        indent=2, sort_keys=True, default=str) + "\n")
    paths.extend([model_path, best_path])
    man.record_stage("meta", paths, cfg["work_dir"], seeds={"meta": meta_cfg["seed"]})
    return reports


def cmd_infer(cfg, user_id, item_ids, k=None):
    """Pick an algorithm for one user and serve top-K recommendations.

    Unknown users (or users without embeddings) fall back to the configured
    learner; a zeroes prediction is mapped to the fallback too.
    """
    man = _manifest(cfg)
    _require(man, cfg, "prepare", "base", "embed", "meta")
    k = k or cfg["eval"]["k"]
    user_ids = art.load_id_map(_work(cfg, "users.txt"))
    item_ids_map = art.load_id_map(_work(cfg, "items.txt"))
    item_index = {iid: i for i, iid in enumerate(item_ids_map)}
    user_index = {uid: u for u, uid in enumerate(user_ids)}

    known_items, warnings = [], []
    for iid in item_ids:
        if iid in item_index:
            known_items.append(item_index[iid])
        else:
            warnings.append(f"unknown item id {iid!r} ignored")

    algorithm = cfg["fallback"]
    user_known = user_id in user_index
    if user_known:
        best = json.load(open(os.path.join(_work(cfg, "reports"), "best.json")))
        emb, _ = art.load_embeddings(
            _work(cfg, "embeddings", f"{best['embedding']}.csv"), best["embedding"])
        final = pickle.loads(open(_work(cfg, "meta_model.pkl"), "rb").read())
        pred = final.predict(emb.values[user_index[user_id]][None, :])[0]
        algorithm = cfg["fallback"] if pred == "zeroes" else pred
    if item_ids and not known_items:
        algorithm = cfg["fallback"]
    model = art.load_model(_work(cfg, "models", f"{algorithm}.mcf2"))
    user_idx = user_index.get(user_id, 0)
    if not user_known and hasattr(model, "user_factors"):
        # no factors for unseen users; popularity is the only total model
        model = art.load_model(_work(cfg, "models", "most_popular.mcf2"))
        algorithm = "most_popular"
    recs = recommend_top_k(model, user_idx, k, exclude=set(known_items))
    return {
        "user_id": user_id,
        "user_known": user_known,
        "algorithm": algorithm,
        "items": [item_ids_map[i] for i in recs],
        "warnings": warnings,
    }


def run_all(cfg):
    cmd_prepare(cfg)
    cmd_base(cfg)
    cmd_embed(cfg)
    return cmd_meta(cfg)
