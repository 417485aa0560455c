"""Per-user top-k effectiveness (HR, MRR, P, R, MAP, NDCG), run files, envy utility."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from userfair.common import DataError
from userfair.dataio import InteractionDataset

log = logging.getLogger(__name__)

MEASURES = ("HR", "MRR", "P", "R", "MAP", "NDCG")
_ALIASES = {"PREC": "P", "PRECISION": "P", "RECALL": "R", "HIT": "HR"}


def canonical_measure(name: str) -> str:
    key = name.upper()
    key = _ALIASES.get(key, key)
    if key not in MEASURES:
        raise ValueError(f"unknown effectiveness measure {name!r}; expected one of {MEASURES}")
    return key


@dataclass
class RankedRun:
    """Top-k lists: row r of ``items`` is the ranked list of internal user ``users[r]``."""

    k: int
    users: np.ndarray
    items: np.ndarray
    scores: np.ndarray | None = None

    def __post_init__(self):
        self.users = np.asarray(self.users, dtype=np.int64)
        self.items = np.asarray(self.items, dtype=np.int64).reshape(len(self.users), -1)
        if self.items.shape[1] != self.k:
            raise DataError(f"every list must have exactly k={self.k} items, got width {self.items.shape[1]}")
        if len(np.unique(self.users)) != len(self.users):
            raise DataError("a user appears twice in the run")
        srt = np.sort(self.items, axis=1)
        if self.k > 1 and np.any(srt[:, 1:] == srt[:, :-1]):
            raise DataError("a recommendation list repeats an item")
        if self.scores is not None:
            self.scores = np.asarray(self.scores, dtype=np.float64).reshape(self.items.shape)

    def __len__(self) -> int:
        return len(self.users)

    def truncate(self, k: int) -> "RankedRun":
        if k > self.k:
            raise ValueError(f"cutoff {k} exceeds list length {self.k}")
        scores = None if self.scores is None else self.scores[:, :k]
        return RankedRun(k, self.users, self.items[:, :k], scores)

    def restrict(self, users: Sequence[int]) -> "RankedRun":
        """Rows for ``users`` in the given order."""
        pos = {u: r for r, u in enumerate(self.users.tolist())}
        try:
            rows = np.array([pos[int(u)] for u in users], dtype=np.int64)
        except KeyError as exc:
            raise DataError(f"user {exc.args[0]} not in run") from None
        scores = None if self.scores is None else self.scores[rows]
        return RankedRun(self.k, self.users[rows], self.items[rows], scores)

    def check_no_train_items(self, train: InteractionDataset) -> None:
        p = train.profiles
        for r, u in enumerate(self.users.tolist()):
            seen = p.indices[p.indptr[u] : p.indptr[u + 1]]
            bad = np.intersect1d(self.items[r], seen)
            if bad.size:
                raise DataError(f"list of user {u} contains {bad.size} of their train items")


@dataclass
class EffectivenessVector:
    measure: str
    k: int
    scores: np.ndarray
    users: np.ndarray

    def mean(self) -> float:
        return float(self.scores.mean()) if self.scores.size else 0.0


def relevance_matrix(test: InteractionDataset) -> sp.csr_matrix:
    return test.profiles.tocsr()


def hit_matrix(items: np.ndarray, users: np.ndarray, relevance: sp.csr_matrix) -> np.ndarray:
    """Boolean (rows x k): whether the item at each rank is relevant to the row's user."""
    items = np.asarray(items)
    hits = np.zeros(items.shape, dtype=bool)
    ip, ix = relevance.indptr, relevance.indices
    for r, u in enumerate(np.asarray(users).tolist()):
        rel = ix[ip[u] : ip[u + 1]]
        if rel.size:
            hits[r] = np.isin(items[r], rel)
    return hits


def _discounts(k: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, k + 2, dtype=np.float64))


def scores_from_hits(hits: np.ndarray, n_relevant: np.ndarray, measure: str) -> np.ndarray:
    """Per-row score from a boolean hit matrix and each user's relevant-item count."""
    measure = canonical_measure(measure)
    hits = np.asarray(hits, dtype=bool)
    n_rel = np.asarray(n_relevant, dtype=np.float64)
    rows, k = hits.shape
    if np.any(n_rel <= 0):
        raise DataError("every evaluated user needs at least one relevant item")
    h = hits.astype(np.float64)
    count = h.sum(axis=1)
    if measure == "HR":
        return (count > 0).astype(np.float64)
    if measure == "P":
        return count / k
    if measure == "R":
        return count / n_rel
    if measure == "MRR":
        first = np.argmax(hits, axis=1)
        return np.where(count > 0, 1.0 / (first + 1.0), 0.0)
    ideal_len = np.minimum(n_rel, k).astype(np.int64)
    if measure == "MAP":
        ranks = np.arange(1, k + 1, dtype=np.float64)
        prec_at = np.cumsum(h, axis=1) / ranks
        return (prec_at * h).sum(axis=1) / ideal_len
    disc = _discounts(k)
    ideal = (np.arange(k) < ideal_len[:, None]).astype(np.float64)
    # same reduction for both so an ideal ranking scores exactly 1
    dcg = (h * disc).sum(axis=1)
    idcg = (ideal * disc).sum(axis=1)
    return dcg / idcg


def _evaluated_hits(run: RankedRun, test: InteractionDataset, k: int | None):
    k = run.k if k is None else k
    run = run.truncate(k)
    rel = relevance_matrix(test)
    n_rel = np.diff(rel.indptr)
    in_range = run.users < rel.shape[0]
    if not np.all(in_range):
        log.warning("%d run users are not in the test index; skipped", int((~in_range).sum()))
    keep = np.flatnonzero(in_range)
    keep = keep[n_rel[run.users[keep]] > 0]
    missing = np.setdiff1d(np.flatnonzero(n_rel > 0), run.users)
    if missing.size:
        log.warning("%d test users have no list in the run; skipped", missing.size)
    users = run.users[keep]
    return k, users, hit_matrix(run.items[keep], users, rel), n_rel[users]


def evaluate(run: RankedRun, test: InteractionDataset, measure: str, k: int | None = None) -> EffectivenessVector:
    """Score every run user that has at least one test item.

    Run users with no test items are not evaluated; test users missing from the
    run are reported and skipped.
    """
    measure = canonical_measure(measure)
    k, users, hits, n_rel = _evaluated_hits(run, test, k)
    return EffectivenessVector(measure, k, scores_from_hits(hits, n_rel, measure), users)


def evaluate_all(run: RankedRun, test: InteractionDataset, k: int | None = None) -> dict[str, EffectivenessVector]:
    k, users, hits, n_rel = _evaluated_hits(run, test, k)
    return {m: EffectivenessVector(m, k, scores_from_hits(hits, n_rel, m), users) for m in MEASURES}


def utility_on_list(user: int, items, test: InteractionDataset, k: int) -> float:
    """P@k of ``user``'s test relevance measured on an arbitrary list."""
    items = np.asarray(items)
    if items.shape[0] < k:
        raise ValueError(f"list shorter than cutoff {k}")
    rel = test.items_of(user)
    return float(np.isin(items[:k], rel).sum()) / k


def format_run(run: RankedRun, user_ids: Sequence[str], item_ids: Sequence[str]) -> str:
    """Tab-separated ``user item rank score`` rows with a header line; ranks are 1-based."""
    scores = run.scores if run.scores is not None else np.zeros(run.items.shape)
    lines = ["user\titem\trank\tscore\n"]
    for r, u in enumerate(run.users.tolist()):
        uid = user_ids[u]
        for pos in range(run.k):
            lines.append(f"{uid}\t{item_ids[run.items[r, pos]]}\t{pos + 1}\t{float(scores[r, pos])!r}\n")
    return "".join(lines)


def write_run(path: str | Path, run: RankedRun, user_ids: Sequence[str], item_ids: Sequence[str]) -> None:
    Path(path).write_text(format_run(run, user_ids, item_ids), encoding="utf-8", newline="")


def read_run_rows(path: str | Path) -> dict[str, list[tuple[int, str, float]]]:
    """Parse a run file into external user -> [(rank, item, score)] sorted by rank.

    Rejects rank gaps, duplicate ranks and duplicate items within a list.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"run file not found: {path}")
    per_user: dict[str, list[tuple[int, str, float]]] = defaultdict(list)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if lineno == 1 and parts[:3] == ["user", "item", "rank"]:
                continue
            if len(parts) != 4:
                raise DataError(f"{path}: line {lineno}: expected 4 tab-separated fields, got {len(parts)}")
            user, item, rank, score = parts
            try:
                per_user[user].append((int(rank), item, float(score)))
            except ValueError:
                raise DataError(f"{path}: line {lineno}: bad rank or score") from None
    for user, rows in per_user.items():
        rows.sort(key=lambda t: t[0])
        ranks = [t[0] for t in rows]
        if len(set(ranks)) != len(ranks):
            raise DataError(f"{path}: user {user!r} has duplicate ranks")
        if ranks != list(range(1, len(ranks) + 1)):
            raise DataError(f"{path}: user {user!r} ranks are not contiguous from 1")
        if len({t[1] for t in rows}) != len(rows):
            raise DataError(f"{path}: user {user!r} list repeats an item")
    return dict(per_user)


def load_run(
    path: str | Path,
    user_index: dict[str, int],
    item_index: dict[str, int],
    k: int | None = None,
) -> RankedRun:
    """Load a run file against a dataset index; unknown users are skipped with a warning."""
    rows = read_run_rows(path)
    lengths = {len(v) for v in rows.values()}
    if not rows:
        raise DataError(f"{path}: run file is empty")
    width = min(lengths)
    k = width if k is None else k
    if k > width:
        raise DataError(f"{path}: cutoff {k} exceeds the shortest list ({width})")
    users, lists, scores = [], [], []
    skipped = 0
    for ext, entries in rows.items():
        if ext not in user_index:
            skipped += 1
            continue
        try:
            lists.append([item_index[t[1]] for t in entries[:k]])
        except KeyError as exc:
            raise DataError(f"{path}: item {exc.args[0]!r} is not in the dataset index") from None
        users.append(user_index[ext])
        scores.append([t[2] for t in entries[:k]])
    if skipped:
        log.warning("%d run users are absent from the dataset index; skipped", skipped)
    order = np.argsort(np.asarray(users, dtype=np.int64), kind="stable")
    return RankedRun(
        k,
        np.asarray(users, dtype=np.int64)[order],
        np.asarray(lists, dtype=np.int64).reshape(len(users), k)[order],
        np.asarray(scores, dtype=np.float64).reshape(len(users), k)[order],
    )


def run_items(path: str | Path) -> list[str]:
    """Distinct item ids of a run file, in first-seen order."""
    seen: dict[str, None] = {}
    for entries in read_run_rows(path).values():
        for _, item, _ in entries:
            seen.setdefault(item, None)
    return list(seen)
