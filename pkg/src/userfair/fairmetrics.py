"""Individual user fairness: PUF plus SD, Gini, envy-based (ME/MME/PEU) and UF."""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import pdist

from userfair import simkit
from userfair.common import UNDEFINED, DataError, decode_value, encode_value, format_value
from userfair.dataio import InteractionDataset
from userfair.effmetrics import MEASURES, EffectivenessVector, RankedRun, evaluate_all, relevance_matrix
from userfair.simkit import PairwiseSimilarities

FAIRNESS_MEASURES = (
    "PUF-Prec-Cos",
    "PUF-Prec-Jacc",
    "PUF-NDCG-Cos",
    "PUF-NDCG-Jacc",
    "SD-P",
    "SD-NDCG",
    "Gini-P",
    "Gini-NDCG",
    "ME",
    "MME",
    "PEU",
    "UF",
)

_USER_BLOCK = 128
# largest dense user x feature matrix (entries) used for list distances
_DENSE_LIMIT = 60_000_000


def _values(scores) -> np.ndarray:
    if isinstance(scores, EffectivenessVector):
        scores = scores.scores
    return np.asarray(scores, dtype=np.float64)


def score_gaps(scores) -> np.ndarray:
    """|S(u) - S(u')| for every unordered pair, condensed order."""
    s = _values(scores)
    if s.shape[0] < 2:
        return np.empty(0)
    return pdist(s[:, None], "cityblock")


def puf(sims: PairwiseSimilarities, scores) -> float:
    """Mean over unordered user pairs of sim(u, u') * |S(u) - S(u')|.

    ``scores`` must lie in [0, 1] and be aligned with the users of ``sims``.
    """
    s = _values(scores)
    if s.ndim != 1 or s.shape[0] != sims.m:
        raise DataError(f"{s.shape[0] if s.ndim == 1 else s.shape} scores for {sims.m} users")
    if sims.m < 2:
        raise DataError("PUF needs at least two users")
    if s.size and (s.min() < 0.0 or s.max() > 1.0):
        raise DataError("effectiveness scores must lie in [0, 1]")
    if not sims.normalized:
        warnings.warn("PUF computed on similarities that are not min-max normalized", RuntimeWarning, stacklevel=2)
    return float(np.dot(sims.values, score_gaps(s)) / sims.values.shape[0])


def sd(scores) -> float:
    """Population standard deviation of per-user scores."""
    s = _values(scores)
    if s.size == 0:
        raise DataError("SD needs at least one user")
    return float(np.std(s))


def gini(scores):
    """Gini index of the score distribution; UNDEFINED when every score is zero."""
    x = np.sort(_values(scores))
    m = x.shape[0]
    if m == 0:
        raise DataError("Gini needs at least one user")
    total = x.sum()
    if total == 0.0:
        return UNDEFINED
    weights = 2.0 * np.arange(1, m + 1) - m - 1
    # rounding can push a perfectly equal distribution a hair below zero
    return max(0.0, float(np.dot(weights, x) / (m * total)))


class EnvyResult(NamedTuple):
    me: float
    mme: float
    peu: float


def _blocks(m: int):
    return [(a, min(a + _USER_BLOCK, m)) for a in range(0, m, _USER_BLOCK)]


def envy_from_relevance(
    items: np.ndarray,
    users: np.ndarray,
    relevance: sp.csr_matrix,
    epsilon: float = 0.05,
    threads: int = 1,
) -> EnvyResult:
    """Envy aggregates when each user may swap lists with every other listed user.

    Utility of user u on a list is P@k of u's relevant items on it. Row r of
    ``items`` is the list of user ``users[r]``; ``relevance`` holds each user's
    relevant items (row = internal user index).
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    items = np.asarray(items, dtype=np.int64)
    users = np.asarray(users, dtype=np.int64)
    m, k = items.shape
    if m < 2:
        raise DataError("envy needs at least two users")
    n_items = max(relevance.shape[1], int(items.max()) + 1)
    ip, ix = relevance.indptr, relevance.indices
    mean_envy = np.empty(m)
    max_envy = np.empty(m)

    def block(bounds):
        lo, hi = bounds
        mask = np.zeros(n_items, dtype=bool)
        for r in range(lo, hi):
            u = users[r]
            rel = ix[ip[u] : ip[u + 1]]
            mask[rel] = True
            hits = np.count_nonzero(mask[items], axis=1)
            mask[rel] = False
            gain = hits - hits[r]
            np.maximum(gain, 0, out=gain)
            mean_envy[r] = gain.sum() / (k * (m - 1))
            max_envy[r] = gain.max() / k

    parts = _blocks(m)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(block, parts))
    else:
        for b in parts:
            block(b)
    return EnvyResult(float(mean_envy.mean()), float(max_envy.mean()), float(np.mean(max_envy > epsilon)))


def envy_suite(run: RankedRun, test: InteractionDataset, k: int = 10, epsilon: float = 0.05, threads: int = 1) -> EnvyResult:
    """ME, MME and PEU over the run users that have test items."""
    run = run.truncate(k)
    rel = relevance_matrix(test)
    n_rel = np.diff(rel.indptr)
    keep = (run.users < rel.shape[0]) & (n_rel[np.minimum(run.users, rel.shape[0] - 1)] > 0)
    return envy_from_relevance(run.items[keep], run.users[keep], rel, epsilon, threads)


def _unit_rows(item_vectors) -> tuple[sp.csr_matrix, np.ndarray]:
    x = sp.csr_matrix(item_vectors, dtype=np.float64)
    norms = np.sqrt(np.asarray(x.multiply(x).sum(axis=1)).ravel())
    zero = norms == 0
    scale = np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, norms))
    return sp.csr_matrix(sp.diags(scale) @ x), zero


def list_distances(items: np.ndarray, item_vectors, pair_mask=None, threads: int = 1) -> np.ndarray:
    """Mean cosine distance over all cross-list item pairs, for every unordered user pair.

    An item with an all-zero representation is at distance 0 from itself and 1
    from any other item. Returns a condensed vector; entries outside
    ``pair_mask`` (if given) are left as NaN.
    """
    items = np.asarray(items, dtype=np.int64)
    m, k = items.shape
    xn, zero = _unit_rows(item_vectors)
    n = xn.shape[0]
    if items.size and items.max() >= n:
        raise DataError("run contains items without a representation vector")
    a = sp.csr_matrix((np.ones(m * k), (np.repeat(np.arange(m), k), items.ravel())), shape=(m, n))
    y = sp.csr_matrix(a @ xn)
    z = sp.csr_matrix(a[:, np.flatnonzero(zero)])
    if m * y.shape[1] <= _DENSE_LIMIT:
        y = y.toarray()
        yt = np.ascontiguousarray(y.T)
    else:
        yt = y.T.tocsc()
    zt = z.T.tocsc()
    out = np.full(simkit.n_pairs(m), np.nan)

    def block(bounds):
        lo, hi = bounds
        hi = min(hi, m - 1)
        if lo >= hi:
            return
        prod = y[lo:hi] @ yt
        sim_sum = prod if isinstance(prod, np.ndarray) else prod.toarray()
        if z.shape[1]:
            sim_sum = sim_sum + (z[lo:hi] @ zt).toarray()
        for r in range(lo, hi):
            start = simkit.condensed_index(r, r + 1, m)
            row = 1.0 - sim_sum[r - lo, r + 1 :] / (k * k)
            seg = slice(start, start + row.shape[0])
            if pair_mask is None:
                out[seg] = row
            else:
                sel = pair_mask[seg]
                out[seg][sel] = row[sel]

    parts = _blocks(m)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(block, parts))
    else:
        for b in parts:
            block(b)
    # unit-vector dot products of identical items land within a few ulps of 1
    out[np.abs(out) < 1e-12] = 0.0
    np.clip(out, 0.0, 1.0, out=out)
    return out


def uf(sims: PairwiseSimilarities, items: np.ndarray, item_vectors, threads: int = 1) -> float:
    """Distance-based unfairness over pairs at or above the mean similarity.

    Reference formulation (non-canonical): with B = m(m-1)/2,
    UF = min(1, log_B(1 + sum over thresholded pairs of sim * D)), where D is the
    mean cosine distance between the two users' recommended item vectors.
    Depends only on similarities and lists, never on relevance.
    """
    items = np.asarray(items, dtype=np.int64)
    m = items.shape[0]
    if sims.m != m:
        raise DataError(f"{sims.m} similarity users vs {m} lists")
    if m < 3:
        raise DataError("UF needs at least three users (log base must exceed 1)")
    # clamp so rounding in the mean cannot drop every pair of a constant vector
    tau = min(float(sims.values.mean()), float(sims.values.max()))
    mask = sims.values >= tau
    dist = list_distances(items, item_vectors, mask, threads)
    total = float(np.dot(sims.values[mask], dist[mask]))
    base = simkit.n_pairs(m)
    return min(1.0, math.log1p(total) / math.log(base))


@dataclass
class FairnessReport:
    entries: dict
    effectiveness: dict
    k: int
    epsilon: float
    n_users: int = 0
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "provenance": dict(self.provenance),
            "k": self.k,
            "epsilon": self.epsilon,
            "n_users": self.n_users,
            "effectiveness": {m: encode_value(v) for m, v in self.effectiveness.items()},
            "fairness": {m: encode_value(v) for m, v in self.entries.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "FairnessReport":
        return cls(
            entries={m: decode_value(v) for m, v in d["fairness"].items()},
            effectiveness={m: decode_value(v) for m, v in d.get("effectiveness", {}).items()},
            k=int(d["k"]),
            epsilon=float(d["epsilon"]),
            n_users=int(d.get("n_users", 0)),
            provenance=dict(d.get("provenance", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> "FairnessReport":
        return cls.from_dict(json.loads(text))

    def all_scores(self) -> dict:
        return {**self.effectiveness, **self.entries}

    def csv_header(self) -> list[str]:
        return ["run", "dataset", *self.effectiveness, *self.entries]

    def csv_row(self) -> list[str]:
        vals = [format_value(v) for v in self.effectiveness.values()] + [format_value(v) for v in self.entries.values()]
        return [str(self.provenance.get("run", "")), str(self.provenance.get("dataset", "")), *vals]


def user_similarities(train: InteractionDataset, users, threads: int = 1) -> dict[str, PairwiseSimilarities]:
    """Min-max normalized cosine and Jaccard similarities among ``users`` from train profiles."""
    prof = train.profiles[np.asarray(users, dtype=np.int64)]
    return {
        "Cos": simkit.minmax_normalize(simkit.cosine_similarities(prof, threads)),
        "Jacc": simkit.minmax_normalize(simkit.jaccard_similarities(prof, threads)),
    }


def full_report(
    run: RankedRun,
    test: InteractionDataset,
    train: InteractionDataset,
    k: int = 10,
    epsilon: float = 0.05,
    threads: int = 1,
    validate: bool = True,
    provenance: dict | None = None,
) -> FairnessReport:
    """Every fairness entry plus mean effectiveness for one run at cutoff k."""
    run = run.truncate(k)
    if validate:
        run.check_no_train_items(train)
    eff = evaluate_all(run, test, k)
    users = eff["P"].users
    if users.shape[0] < 3:
        raise DataError(f"need at least 3 evaluated users, got {users.shape[0]}")
    sub = run.restrict(users)
    sims = user_similarities(train, users, threads)
    p, ndcg = eff["P"].scores, eff["NDCG"].scores
    envy = envy_from_relevance(sub.items, sub.users, relevance_matrix(test), epsilon, threads)
    entries = {
        "PUF-Prec-Cos": puf(sims["Cos"], p),
        "PUF-Prec-Jacc": puf(sims["Jacc"], p),
        "PUF-NDCG-Cos": puf(sims["Cos"], ndcg),
        "PUF-NDCG-Jacc": puf(sims["Jacc"], ndcg),
        "SD-P": sd(p),
        "SD-NDCG": sd(ndcg),
        "Gini-P": gini(p),
        "Gini-NDCG": gini(ndcg),
        "ME": envy.me,
        "MME": envy.mme,
        "PEU": envy.peu,
        "UF": uf(sims["Jacc"], sub.items, train.profiles.T, threads),
    }
    effectiveness = {m: eff[m].mean() for m in MEASURES}
    return FairnessReport(entries, effectiveness, k, epsilon, int(users.shape[0]), dict(provenance or {}))
