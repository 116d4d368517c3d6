import numpy as np
import pytest
import scipy.sparse as sp

from metaselect import ingest
from metaselect.errors import EmptyDatasetError, ParseError, SplitError


def write(tmp_path, text, name="r.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestLoadRatings:
    def test_identity_load(self, tmp_path):
        path = write(tmp_path, "u1,i1,4.0\nu1,i2,2.0\nu2,i1,5.0\n")
        ds = ingest.load_ratings(path)
        assert len(ds.rows) == 3
        assert ds.rows[0] == ("u1", "i1", 4.0, None)

    def test_duplicate_last_wins(self, tmp_path):
        path = write(tmp_path, "u1,i1,2.0\nu2,i1,3.0\nu1,i1,4.0\n")
        ds = ingest.load_ratings(path)
        assert len(ds.rows) == 2
        assert ds.rows[0] == ("u1", "i1", 4.0, None)  # first position, last rating

    def test_malformed_rating_names_line(self, tmp_path):
        path = write(tmp_path, "u1,i1,4.0\nu1,i1,abc\n")
        with pytest.raises(ParseError, match="line 2"):
            ingest.load_ratings(path)

    def test_empty_file(self, tmp_path):
        with pytest.raises(EmptyDatasetError):
            ingest.load_ratings(write(tmp_path, ""))

    def test_timestamp_and_header(self, tmp_path):
        path = write(tmp_path, "user,item,rating,ts\nu1,i1,4.0,123\nu2,i2,4.5,456\n")
        ds = ingest.load_ratings(path, skip_header=1)
        assert ds.rows[0][3] == 123

    def test_custom_delimiter(self, tmp_path):
        path = write(tmp_path, "u1\ti1\t4.0\nu2\ti2\t4.5\n")
        ds = ingest.load_ratings(path, delimiter="\t")
        assert len(ds.rows) == 2


class TestToImplicit:
    def test_above_threshold_present(self):
        d = ingest.ExplicitDataset(rows=[("u1", "i1", 4.0, None)])
        im = ingest.to_implicit(d, 3.5)
        assert im.interactions[0, 0] == 1.0

    def test_at_threshold_absent(self):
        d = ingest.ExplicitDataset(rows=[("u1", "i1", 3.5, None), ("u1", "i2", 4.0, None)])
        im = ingest.to_implicit(d, 3.5)
        assert im.item_ids == ["i2"]  # strict inequality drops the 3.5 rating

    def test_all_below_threshold_empty(self):
        d = ingest.ExplicitDataset(rows=[("u1", "i1", 1.0, None)])
        im = ingest.to_implicit(d, 3.5)
        assert im.n_users == 0 and im.n_items == 0

    def test_entries_binary(self):
        rows = [(f"u{i}", f"i{j}", 4.0, None) for i in range(3) for j in range(4)]
        im = ingest.to_implicit(ingest.ExplicitDataset(rows=rows), 3.5)
        assert set(np.unique(im.interactions.toarray())) <= {0.0, 1.0}


class TestFilter:
    def test_user_below_threshold_removed(self):
        rows = [("u1", f"i{j}", 4.0, None) for j in range(9)]
        rows += [(f"v{k}", f"i{j}", 4.0, None) for k in range(10) for j in range(10)]
        im = ingest.to_implicit(ingest.ExplicitDataset(rows=rows), 3.5)
        out = ingest.filter_min_interactions(im, 10)
        assert "u1" not in out.user_ids

    def test_fixpoint_identity(self):
        rows = [(f"u{k}", f"i{j}", 4.0, None) for k in range(4) for j in range(4)]
        im = ingest.to_implicit(ingest.ExplicitDataset(rows=rows), 3.5)
        out = ingest.filter_min_interactions(im, 3)
        again = ingest.filter_min_interactions(out, 3)
        assert (out.interactions != again.interactions).nnz == 0
        assert out.user_ids == again.user_ids

    def test_cascade_removal_matches_bruteforce(self):
        # removing a column can pull a user below threshold
        mat = np.array([
            [1, 1, 1, 0, 0],
            [1, 1, 0, 1, 0],
            [1, 1, 1, 0, 0],
            [0, 0, 1, 1, 1],
            [0, 0, 0, 1, 1],
        ], dtype=float)
        rows = [(f"u{r}", f"i{c}", 4.0, None)
                for r in range(5) for c in range(5) if mat[r, c]]
        im = ingest.to_implicit(ingest.ExplicitDataset(rows=rows), 3.5)

        # brute-force oracle: repeatedly mask until stable
        dense = im.interactions.toarray()
        keep_r = np.ones(5, bool)
        keep_c = np.ones(5, bool)
        while True:
            sub = dense[keep_r][:, keep_c]
            r_ok = sub.sum(axis=1) >= 2
            c_ok = sub.sum(axis=0) >= 2
            if r_ok.all() and c_ok.all():
                break
            keep_r[np.flatnonzero(keep_r)[~r_ok]] = False
            keep_c[np.flatnonzero(keep_c)[~c_ok]] = False

        out = ingest.filter_min_interactions(im, 2)
        expected_users = [im.user_ids[i] for i in np.flatnonzero(keep_r)]
        expected_items = [im.item_ids[i] for i in np.flatnonzero(keep_c)]
        assert out.user_ids == expected_users
        assert out.item_ids == expected_items
        np.testing.assert_array_equal(out.interactions.toarray(),
                                      dense[keep_r][:, keep_c])

    def test_empty_after_filter(self):
        rows = [("u1", "i1", 4.0, None)]
        im = ingest.to_implicit(ingest.ExplicitDataset(rows=rows), 3.5)
        with pytest.raises(EmptyDatasetError):
            ingest.filter_min_interactions(im, 5)


def dense_implicit(n_users, n_items, per_user, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for u in range(n_users):
        for j in rng.choice(n_items, size=per_user, replace=False):
            rows.append((f"u{u}", f"i{j}", 4.0, None))
    return ingest.to_implicit(ingest.ExplicitDataset(rows=rows), 3.5)


class TestSplit:
    def test_7_1_2_of_10(self):
        im = dense_implicit(5, 20, 10)
        split = ingest.split_per_user(im, (0.7, 0.1, 0.2), 1)
        assert list(split.train.getnnz(axis=1)) == [7] * 5
        assert list(split.validation.getnnz(axis=1)) == [1] * 5
        assert list(split.test.getnnz(axis=1)) == [2] * 5

    def test_thirds_of_three(self):
        im = dense_implicit(4, 10, 3)
        split = ingest.split_per_user(im, (1 / 3, 1 / 3, 1 / 3), 1)
        for part in (split.train, split.validation, split.test):
            assert list(part.getnnz(axis=1)) == [1] * 4

    def test_disjoint_cover(self):
        im = dense_implicit(8, 30, 12, seed=2)
        split = ingest.split_per_user(im, (0.7, 0.1, 0.2), 3)
        total = split.train + split.validation + split.test
        assert (total != im.interactions).nnz == 0
        assert total.max() == 1.0  # disjoint: no cell counted twice

    def test_seed_determinism(self):
        im = dense_implicit(8, 30, 12, seed=2)
        a = ingest.split_per_user(im, (0.7, 0.1, 0.2), 5)
        b = ingest.split_per_user(im, (0.7, 0.1, 0.2), 5)
        c = ingest.split_per_user(im, (0.7, 0.1, 0.2), 6)
        assert (a.train != b.train).nnz == 0
        assert (a.train != c.train).nnz > 0

    def test_too_few_interactions(self):
        mat = sp.csr_matrix(np.array([[1, 1, 0]], dtype=float))
        im = ingest.ImplicitDataset(interactions=mat, user_ids=["solo"], item_ids=list("abc"))
        with pytest.raises(SplitError, match="solo"):
            ingest.split_per_user(im, (0.7, 0.1, 0.2), 0)

    def test_bad_ratios(self):
        im = dense_implicit(2, 10, 5)
        with pytest.raises(ValueError):
            ingest.split_per_user(im, (0.5, 0.2, 0.2), 0)
