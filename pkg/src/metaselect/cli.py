"""Command-line entry point: prepare | base | embed | meta | infer.

Exit codes: 0 success, 1 config error, 2 stage failure, 3 artifact-integrity failure.
"""

import json
import logging
import sys

import click

from . import pipeline
from .config import load_config
from .errors import ArtifactIntegrityError, ConfigError, MetaselectError


def _load(config_path, seed, work_dir):
    overrides = {}
    if work_dir:
        overrides["work_dir"] = work_dir
    cfg = load_config(config_path, overrides)
    if seed is not None:
        cfg["split"]["seed"] = seed
        cfg["base"]["seed"] = seed
        cfg["meta"]["seed"] = seed
        for spec in cfg["embeddings"]:
            spec["seed"] = seed
    return cfg


def _run(stage_fn, config, seed, work_dir, **kwargs):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(config, seed, work_dir)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(1)
    try:
        return stage_fn(cfg, **kwargs)
    except ArtifactIntegrityError as exc:
        click.echo(f"artifact integrity error: {exc}", err=True)
        sys.exit(3)
    except MetaselectError as exc:
        click.echo(f"stage error: {exc}", err=True)
        sys.exit(2)


_common = [
    click.option("--config", required=True, type=click.Path(exists=True)),
    click.option("--seed", type=int, default=None, help="override every stage seed"),
    click.option("--work-dir", type=click.Path(), default=None),
]


def common_options(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Per-user CF algorithm selection: train, evaluate, embed, meta-learn, infer."""


@main.command()
@common_options
def prepare(config, seed, work_dir):
    """Ingest ratings, binarize, filter, and split per user."""
    _run(pipeline.cmd_prepare, config, seed, work_dir)


@main.command()
@common_options
def base(config, seed, work_dir):
    """Train base learners and score per-user NDCG."""
    _run(pipeline.cmd_base, config, seed, work_dir)


@main.command()
@common_options
def embed(config, seed, work_dir):
    """Train representation models and export user embeddings."""
    _run(pipeline.cmd_embed, config, seed, work_dir)


@main.command()
@common_options
def meta(config, seed, work_dir):
    """Cross-validate meta learners and emit reports and figures."""
    _run(pipeline.cmd_meta, config, seed, work_dir)


@main.command()
@common_options
@click.option("--user", "user_id", required=True, help="external user id")
@click.option("--items", default="", help="comma-separated item ids the user interacted with")
@click.option("--k", type=int, default=None, help="recommendation list length")
def infer(config, seed, work_dir, user_id, items, k):
    """Choose an algorithm for one user and print top-K recommendations."""
    item_ids = [i.strip() for i in items.split(",") if i.strip()]
    result = _run(pipeline.cmd_infer, config, seed, work_dir,
                  user_id=user_id, item_ids=item_ids, k=k)
    for warning in result.pop("warnings"):
        click.echo(f"warning: {warning}", err=True)
    click.echo(json.dumps(result, indent=2))


if __name__ == "__main__":
    main()
