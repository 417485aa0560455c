"""User- and item-based KNN baselines producing top-k runs."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from userfair.common import DataError
from userfair.dataio import InteractionDataset
from userfair.effmetrics import RankedRun

_BLOCK = 128


@dataclass(frozen=True)
class KnnConfig:
    flavor: str = "user"
    neighbors: int = 50
    cutoff: int = 10

    def __post_init__(self):
        if self.flavor not in ("user", "item"):
            raise ValueError(f"flavor must be 'user' or 'item', got {self.flavor!r}")
        if self.neighbors < 1 or self.cutoff < 1:
            raise ValueError("neighbors and cutoff must be >= 1")


def cosine_matrix(x: sp.csr_matrix) -> sp.csr_matrix:
    """Row-wise cosine similarity with a zero diagonal (sparse)."""
    x = sp.csr_matrix(x, dtype=np.float64)
    norms = np.sqrt(np.asarray(x.multiply(x).sum(axis=1)).ravel())
    inv = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 0.0)
    xn = sp.csr_matrix(sp.diags(inv) @ x)
    sim = sp.csr_matrix(xn @ xn.T)
    sim.setdiag(0.0)
    sim.eliminate_zeros()
    sim.sort_indices()
    return sim


def top_k_rows(sim: sp.csr_matrix, k: int) -> sp.csr_matrix:
    """Keep each row's k largest entries; ties go to the lower column index."""
    sim = sp.csr_matrix(sim)
    rows, cols, vals = [], [], []
    for r in range(sim.shape[0]):
        lo, hi = sim.indptr[r], sim.indptr[r + 1]
        idx, val = sim.indices[lo:hi], sim.data[lo:hi]
        if idx.size > k:
            order = np.lexsort((idx, -val))[:k]
            idx, val = idx[order], val[order]
        rows.append(np.full(idx.size, r))
        cols.append(idx)
        vals.append(val)
    if not rows:
        return sp.csr_matrix(sim.shape)
    out = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=sim.shape)
    out.sort_indices()
    return out


def _top_items(scores: np.ndarray, seen: np.ndarray, cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    s = scores.astype(np.float64, copy=True)
    s[seen] = -np.inf
    order = np.argsort(-s, kind="stable")[:cutoff]
    return order, s[order]


def score_matrix(train: InteractionDataset, cfg: KnnConfig):
    """Return (left, right) with scores = left[rows] @ right, both sparse csr."""
    p = sp.csr_matrix(train.profiles)
    if cfg.flavor == "user":
        w = top_k_rows(cosine_matrix(p), cfg.neighbors)
        return w, p
    w = top_k_rows(cosine_matrix(p.T.tocsr()), cfg.neighbors)
    # score(u, i) = sum_j p(u, j) * w(i, j)
    return p, sp.csr_matrix(w.T)


def recommend(train: InteractionDataset, cfg: KnnConfig = KnnConfig(), threads: int = 1) -> RankedRun:
    """Top-``cutoff`` unseen items for every user with a train profile."""
    p = train.profiles
    m, n = p.shape
    if p.nnz == 0:
        raise DataError("train set is empty")
    users = np.flatnonzero(np.diff(p.indptr) > 0)
    too_small = users[n - np.diff(p.indptr)[users] < cfg.cutoff]
    if too_small.size:
        raise DataError(f"{too_small.size} users have fewer than {cfg.cutoff} candidate items (first: {too_small[0]})")
    left, right = score_matrix(train, cfg)
    items = np.empty((users.size, cfg.cutoff), dtype=np.int64)
    scores = np.empty((users.size, cfg.cutoff))

    def block(lo: int) -> None:
        hi = min(lo + _BLOCK, users.size)
        rows = users[lo:hi]
        dense = sp.csr_matrix(left[rows] @ right).toarray()
        for r, u in enumerate(rows.tolist()):
            seen = p.indices[p.indptr[u] : p.indptr[u + 1]]
            items[lo + r], scores[lo + r] = _top_items(dense[r], seen, cfg.cutoff)

    starts = range(0, users.size, _BLOCK)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(block, starts))
    else:
        for s in starts:
            block(s)
    return RankedRun(cfg.cutoff, users, items, scores)
