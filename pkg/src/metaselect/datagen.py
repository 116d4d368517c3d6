"""Synthetic ratings with planted user groups that favor different base learners.

Group regimes:
  * popularity followers: draw from a shared heavy-tailed item distribution,
    so the popularity baseline ranks their held-out items well;
  * niche blocks: dense interaction inside a small item block, which matrix
    factorization captures but global popularity does not;
  * drifters: near-uniform random items; no learner does well, producing a
    natural zeroes class.
"""

import numpy as np


def synthetic_ratings(n_users=2000, n_items=500, seed=0,
                      popular_frac=0.35, block_fracs=(0.25, 0.25), n_blocks_items=50,
                      pop_pool=40, pop_exponent=1.4,
                      pop_items_range=(10, 14), block_items_range=(26, 40),
                      drifter_items_range=(12, 16), in_block_frac=0.9):
    """Return (rows, group_of_user): rows are (user_id, item_id, rating) tuples.

    Ratings are 4.0 (above the 3.5 implicit threshold) for interactions and a
    sprinkle of 1.0 noise rows that the threshold removes. Popularity
    followers get few interactions (weak personal signal, strong baseline);
    block users get many (strong matrix-factorization signal); drifters are
    uniform-random (weak everywhere).
    """
    rng = np.random.default_rng(seed)
    sizes = [int(popular_frac * n_users)]
    sizes += [int(f * n_users) for f in block_fracs]
    sizes.append(n_users - sum(sizes))
    groups = []
    for g, size in enumerate(sizes):
        groups.extend([g] * size)
    groups = np.asarray(groups)

    # steep shared popularity profile over a small head of the catalog
    pop_items = np.arange(pop_pool)
    pop_weights = 1.0 / (np.arange(1, pop_pool + 1) ** pop_exponent)
    pop_weights /= pop_weights.sum()

    blocks = []
    start = pop_pool
    for _ in block_fracs:
        blocks.append(np.arange(start, min(start + n_blocks_items, n_items)))
        start += n_blocks_items

    rows = []
    for u in range(n_users):
        g = groups[u]
        if g == 0:
            n_i = int(rng.integers(*pop_items_range, endpoint=True))
            items = rng.choice(pop_items, size=n_i, replace=False, p=pop_weights)
        elif g <= len(blocks):
            n_i = int(rng.integers(*block_items_range, endpoint=True))
            block = blocks[g - 1]
            n_block = min(len(block), max(3, int(in_block_frac * n_i)))
            picked = rng.choice(block, size=n_block, replace=False)
            extra = rng.choice(pop_items, size=n_i - n_block, replace=False, p=pop_weights)
            items = np.concatenate([picked, extra])
        else:
            n_i = int(rng.integers(*drifter_items_range, endpoint=True))
            items = rng.choice(n_items, size=n_i, replace=False)
        for i in items:
            rows.append((f"u{u}", f"i{int(i)}", 4.0))
        # below-threshold noise, dropped by implicit conversion
        for i in rng.choice(n_items, size=2, replace=False):
            rows.append((f"u{u}", f"i{int(i)}", 1.0))
    return rows, groups


def write_ratings_csv(path, rows, seed=0, shuffle=True):
    rng = np.random.default_rng(seed)
    rows = list(rows)
    if shuffle:
        order = rng.permutation(len(rows))
        rows = [rows[i] for i in order]
    # duplicates collapse last-wins at load time; synthetic rows are unique
    with open(path, "w") as fh:
        for u, i, r in rows:
            fh.write(f"{u},{i},{r}\n")
