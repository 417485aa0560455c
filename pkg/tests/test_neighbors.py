import math

import numpy as np
import pytest
import scipy.sparse as sp

from userfair import neighbors
from userfair.common import DataError
from userfair.neighbors import KnnConfig, recommend

from conftest import binary_dataset


def test_identical_twin_extra_item_first():
    train = binary_dataset([[0, 1, 2], [0, 1, 2, 3], [5, 6]], n_items=8)
    run = recommend(train, KnnConfig("user", 1, 1))
    assert run.items[0, 0] == 3


def test_isolated_user_gets_index_order():
    train = binary_dataset([[0, 1], [0, 1, 2], [5, 6]], n_items=8)
    run = recommend(train, KnnConfig("user", 2, 4))
    row = run.users.tolist().index(2)
    assert run.items[row].tolist() == [0, 1, 2, 3]
    assert np.all(run.scores[row] == 0.0)


def test_four_user_toy_by_hand():
    # u0={0,1} u1={0,1,2} u2={1,3} u3={4}
    # cos(u0,u1)=2/sqrt6, cos(u0,u2)=1/2, cos(u1,u2)=1/sqrt6, u3 orthogonal to all
    train = binary_dataset([[0, 1], [0, 1, 2], [1, 3], [4]], n_items=5)
    run = recommend(train, KnnConfig("user", 2, 2))
    c01, c02, c12 = 2 / math.sqrt(6), 0.5, 1 / math.sqrt(6)
    assert run.items.tolist() == [[2, 3], [3, 4], [0, 2], [0, 1]]
    np.testing.assert_allclose(run.scores[0], [c01, c02])
    np.testing.assert_allclose(run.scores[1], [c12, 0.0])
    np.testing.assert_allclose(run.scores[2], [c02 + c12, c12])
    np.testing.assert_allclose(run.scores[3], [0.0, 0.0])


def test_item_knn_by_hand():
    train = binary_dataset([[0, 1], [0, 1, 2], [1, 3], [4]], n_items=5)
    p = train.profiles.toarray()
    norms = np.linalg.norm(p, axis=0)
    sim = (p.T @ p) / np.outer(norms, norms)
    np.fill_diagonal(sim, 0)
    run = recommend(train, KnnConfig("item", 4, 2))
    scores = p @ sim.T
    for r, u in enumerate(run.users):
        s = scores[u].copy()
        s[p[u] > 0] = -np.inf
        want = sorted(range(5), key=lambda i: (-s[i], i))[:2]
        assert run.items[r].tolist() == want


def test_item_neighbour_truncation():
    p = sp.csr_matrix(np.array([[0.9, 0.5, 0.5, 0.1], [0.5, 0.9, 0.2, 0.0]]))
    top = neighbors.top_k_rows(p, 2)
    assert top.toarray().tolist() == [[0.9, 0.5, 0.0, 0.0], [0.5, 0.9, 0.0, 0.0]]


def test_popularity_reduction(monkeypatch):
    rng = np.random.default_rng(3)
    rows = [sorted(rng.choice(15, size=int(rng.integers(2, 7)), replace=False).tolist()) for _ in range(9)]
    train = binary_dataset(rows, n_items=15)

    def constant(x):
        m = x.shape[0]
        c = np.full((m, m), 0.5)
        np.fill_diagonal(c, 0.0)
        return sp.csr_matrix(c)

    monkeypatch.setattr(neighbors, "cosine_matrix", constant)
    run = recommend(train, KnnConfig("user", 8, 4))
    p = train.profiles.toarray()
    for r, u in enumerate(run.users):
        pop = p.sum(axis=0) - p[u]
        cand = [i for i in range(15) if p[u, i] == 0]
        want = sorted(cand, key=lambda i: (-pop[i], i))[:4]
        assert run.items[r].tolist() == want


@pytest.mark.parametrize("flavor", ["user", "item"])
def test_lists_valid_and_deterministic(small_split, flavor):
    train, _ = small_split
    cfg = KnnConfig(flavor, 20, 10)
    a = recommend(train, cfg, threads=1)
    b = recommend(train, cfg, threads=4)
    assert np.array_equal(a.items, b.items) and np.array_equal(a.scores, b.scores)
    assert a.items.shape == (train.n_users, 10)
    a.check_no_train_items(train)
    assert all(len(set(row)) == 10 for row in a.items.tolist())


def test_errors():
    with pytest.raises(ValueError):
        KnnConfig("graph")
    with pytest.raises(ValueError):
        KnnConfig("user", 0)
    train = binary_dataset([[0, 1, 2], [0]], n_items=4)
    with pytest.raises(DataError, match="candidate"):
        recommend(train, KnnConfig("user", 1, 2))
    with pytest.raises(DataError):
        recommend(binary_dataset([[], []], n_items=3))
