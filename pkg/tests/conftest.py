import collections

import numpy as np
import pytest
import scipy.sparse as sp

from metaselect import datagen, ingest
from metaselect.cf import (train_als, train_bpr, train_lmf, train_most_popular)
from metaselect.evaluation import EvalConfig, compute_metatarget, evaluate_all


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def block_matrix(n_users=20, n_items=16, density=0.9, seed=0):
    """Two disjoint user/item blocks; rank-1-ish structure per block."""
    rng = np.random.default_rng(seed)
    mat = np.zeros((n_users, n_items))
    half_u, half_i = n_users // 2, n_items // 2
    mat[:half_u, :half_i] = rng.random((half_u, half_i)) < density
    mat[half_u:, half_i:] = rng.random((n_users - half_u, n_items - half_i)) < density
    # every user needs at least one positive and one negative
    mat[:half_u, 0] = 1
    mat[half_u:, half_i] = 1
    return sp.csr_matrix(mat)


@pytest.fixture(scope="session")
def blocks():
    return block_matrix()


@pytest.fixture(scope="session")
def synth_small():
    """~160-user synthetic dataset with trained base learners and labels."""
    rows, groups = datagen.synthetic_ratings(
        n_users=160, n_items=120, seed=3,
        popular_frac=0.3, block_fracs=(0.25, 0.25), n_blocks_items=30,
        pop_pool=25, drifter_items_range=(14, 18),
    )
    import tempfile, os
    path = os.path.join(tempfile.mkdtemp(), "ratings.csv")
    datagen.write_ratings_csv(path, rows, seed=3)
    im = ingest.filter_min_interactions(
        ingest.to_implicit(ingest.load_ratings(path), 3.5), 10
    )
    split = ingest.split_per_user(im, (0.7, 0.1, 0.2), 42)
    models = {
        "als": train_als(split.train, f=16, iters=8, seed=7),
        "bpr": train_bpr(split.train, f=16, epochs=6, seed=7),
        "lmf": train_lmf(split.train, f=16, epochs=6, seed=7),
        "most_popular": train_most_popular(split.train),
    }
    table = evaluate_all(models, split, EvalConfig(k=10))
    labels = compute_metatarget(table)
    return {
        "implicit": im,
        "split": split,
        "models": models,
        "table": table,
        "labels": labels,
        "ratings_path": path,
        "label_counts": collections.Counter(labels),
    }
