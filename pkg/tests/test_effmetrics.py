import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from userfair.common import DataError
from userfair.effmetrics import (
    MEASURES,
    RankedRun,
    canonical_measure,
    evaluate,
    evaluate_all,
    load_run,
    read_run_rows,
    run_items,
    scores_from_hits,
    utility_on_list,
    write_run,
)

from conftest import binary_dataset


def _single(hit_rank, k=10, n_relevant=1):
    hits = np.zeros((1, k), dtype=bool)
    if hit_rank is not None:
        hits[0, hit_rank - 1] = True
    return {m: float(scores_from_hits(hits, [n_relevant], m)[0]) for m in MEASURES}


def oracle(hits: tuple[int, ...], n_rel: int) -> dict:
    """Direct per-rank arithmetic, one user."""
    k = len(hits)
    dcg = 0.0
    for r, h in enumerate(hits, start=1):
        dcg += h / math.log2(r + 1)
    idcg = 0.0
    for r in range(1, min(k, n_rel) + 1):
        idcg += 1 / math.log2(r + 1)
    ap, seen = 0.0, 0
    for r, h in enumerate(hits, start=1):
        if h:
            seen += 1
            ap += seen / r
    first = next((r for r, h in enumerate(hits, start=1) if h), None)
    count = sum(hits)
    return {
        "HR": 1.0 if count else 0.0,
        "MRR": 1.0 / first if first else 0.0,
        "P": count / k,
        "R": count / n_rel,
        "MAP": ap / min(k, n_rel),
        "NDCG": dcg / idcg,
    }


class TestExamples:
    def test_perfect_single(self):
        assert _single(1) == {"HR": 1.0, "MRR": 1.0, "P": 0.1, "R": 1.0, "MAP": 1.0, "NDCG": 1.0}

    def test_no_hits(self):
        assert all(v == 0.0 for v in _single(None).values())

    def test_rank_two(self):
        s = _single(2)
        assert s["NDCG"] == pytest.approx(1 / math.log2(3), abs=1e-15)
        assert s["NDCG"] == pytest.approx(0.6309, abs=1e-4)
        assert s["MRR"] == 0.5

    def test_aliases(self):
        assert canonical_measure("prec") == "P" and canonical_measure("ndcg") == "NDCG"
        with pytest.raises(ValueError):
            canonical_measure("F1")


def test_brute_force_tables_exact():
    count = 0
    for k in range(1, 6):
        for n_rel in range(1, 4):
            for hits in itertools.product((0, 1), repeat=k):
                if sum(hits) > n_rel:
                    continue
                want = oracle(hits, n_rel)
                got = {m: float(scores_from_hits(np.array([hits], bool), [n_rel], m)[0]) for m in MEASURES}
                assert got == want, (hits, n_rel)
                count += 1
    assert count > 100


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 20).flatmap(lambda k: st.tuples(
    st.lists(st.booleans(), min_size=k, max_size=k), st.integers(1, 30))))
def test_hit_identity(case):
    hits, extra = case
    hits = np.array([hits])
    n_rel = int(hits.sum()) + extra - 1 if hits.sum() else extra
    k = hits.shape[1]
    p = scores_from_hits(hits, [n_rel], "P")[0]
    r = scores_from_hits(hits, [n_rel], "R")[0]
    assert round(p * k) == round(r * n_rel) == int(hits.sum())
    for m in MEASURES:
        v = scores_from_hits(hits, [n_rel], m)[0]
        assert 0.0 <= v <= 1.0


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 12).flatmap(lambda k: st.tuples(
    st.lists(st.booleans(), min_size=k, max_size=k), st.integers(0, k - 2), st.integers(1, 15))))
def test_promoting_a_hit_never_hurts(case):
    hits, pos, n_rel = case
    hits = list(hits)
    n_rel = max(n_rel, sum(hits))
    if not (hits[pos + 1] and not hits[pos]):
        return
    better = hits[:]
    better[pos], better[pos + 1] = True, False
    a = np.array([hits]), np.array([better])
    for m in ("MRR", "MAP", "NDCG"):
        assert scores_from_hits(a[1], [n_rel], m)[0] >= scores_from_hits(a[0], [n_rel], m)[0]
    for m in ("HR", "P", "R"):
        assert scores_from_hits(a[1], [n_rel], m)[0] == scores_from_hits(a[0], [n_rel], m)[0]


class TestEvaluate:
    def setup_method(self):
        # users 0..3; user 3 has no test items
        self.test = binary_dataset([[0, 1], [5], [2, 3, 4], []], n_items=10)
        self.run = RankedRun(3, [0, 1, 2, 3], [[0, 9, 1], [6, 5, 7], [8, 7, 6], [0, 1, 2]])

    def test_values_and_exclusion(self):
        ev = evaluate(self.run, self.test, "P")
        assert ev.users.tolist() == [0, 1, 2]
        np.testing.assert_allclose(ev.scores, [2 / 3, 1 / 3, 0.0])
        assert evaluate(self.run, self.test, "MRR").scores.tolist() == [1.0, 0.5, 0.0]

    def test_cutoff(self):
        assert evaluate(self.run, self.test, "HR", k=1).scores.tolist() == [1.0, 0.0, 0.0]
        with pytest.raises(ValueError):
            evaluate(self.run, self.test, "P", k=4)

    def test_missing_user_warns(self, caplog):
        run = self.run.restrict([0, 2])
        ev = evaluate(run, self.test, "P")
        assert ev.users.tolist() == [0, 2]
        assert "no list" in caplog.text

    def test_all_pure(self):
        a = evaluate_all(self.run, self.test)
        b = evaluate_all(self.run, self.test)
        assert all(np.array_equal(a[m].scores, b[m].scores) for m in MEASURES)

    def test_utility_on_list(self):
        own = utility_on_list(0, self.run.items[0], self.test, 3)
        assert own == evaluate(self.run, self.test, "P").scores[0]
        assert utility_on_list(1, [0, 1, 2], self.test, 3) == 0.0
        ten = binary_dataset([list(range(3))], n_items=20)
        assert utility_on_list(0, [0, 5, 1, 6, 7, 2, 8, 9, 10, 11], ten, 10) == 0.3

    def test_run_validation(self):
        with pytest.raises(DataError):
            RankedRun(2, [0], [[1, 1]])
        with pytest.raises(DataError):
            RankedRun(2, [0, 0], [[1, 2], [3, 4]])
        with pytest.raises(DataError):
            RankedRun(3, [0], [[1, 2]])
        train = binary_dataset([[4], [1]], n_items=10)
        with pytest.raises(DataError):
            RankedRun(2, [1], [[0, 1]]).check_no_train_items(train)
        RankedRun(2, [0], [[0, 1]]).check_no_train_items(train)


class TestRunFiles:
    def test_round_trip(self, tmp_path):
        ds = binary_dataset([[0], [1], [2]], n_items=6)
        run = RankedRun(2, [0, 2], [[3, 4], [5, 0]], [[2.5, 1.0], [0.1, 0.0]])
        write_run(tmp_path / "r.tsv", run, ds.user_ids(), ds.item_ids())
        text = (tmp_path / "r.tsv").read_text()
        assert text.splitlines()[:2] == ["user\titem\trank\tscore", "u0\ti3\t1\t2.5"]
        back = load_run(tmp_path / "r.tsv", ds.user_index, ds.item_index)
        assert np.array_equal(back.items, run.items) and np.array_equal(back.users, run.users)
        assert np.array_equal(back.scores, run.scores)
        assert run_items(tmp_path / "r.tsv") == ["i3", "i4", "i5", "i0"]

    @pytest.mark.parametrize(
        "body,msg",
        [
            ("u0\ti1\t1\t0\nu0\ti2\t3\t0\n", "contiguous"),
            ("u0\ti1\t1\t0\nu0\ti2\t1\t0\n", "duplicate ranks"),
            ("u0\ti1\t1\t0\nu0\ti1\t2\t0\n", "repeats"),
            ("u0\ti1\tx\t0\n", "bad rank"),
            ("u0\ti1\t1\n", "4 tab-separated"),
        ],
    )
    def test_rejects(self, tmp_path, body, msg):
        (tmp_path / "r.tsv").write_text(body)
        with pytest.raises(DataError, match=msg):
            read_run_rows(tmp_path / "r.tsv")

    def test_unknown_user_skipped_unknown_item_fails(self, tmp_path, caplog):
        ds = binary_dataset([[0], [1]], n_items=3)
        (tmp_path / "r.tsv").write_text("zz\ti0\t1\t0\nu0\ti2\t1\t0\n")
        run = load_run(tmp_path / "r.tsv", ds.user_index, ds.item_index)
        assert run.users.tolist() == [0] and "absent" in caplog.text
        (tmp_path / "r.tsv").write_text("u0\tnope\t1\t0\n")
        with pytest.raises(DataError, match="nope"):
            load_run(tmp_path / "r.tsv", ds.user_index, ds.item_index)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_run_rows(tmp_path / "none.tsv")
