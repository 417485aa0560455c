"""Relevance sweep, similarity-distribution sweep and extreme similarity assignment."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
import scipy.sparse as sp

from userfair import simkit
from userfair.common import DataError
from userfair.dataio import InteractionDataset
from userfair.effmetrics import MEASURES, RankedRun, evaluate_all, hit_matrix, relevance_matrix, scores_from_hits
from userfair.fairmetrics import envy_from_relevance, gini, puf, score_gaps, sd, uf, user_similarities
from userfair.labs.trace import ExperimentTrace, TracePoint
from userfair.simkit import PairwiseSimilarities

DEFAULT_LAMBDAS = (0.5, 1.0, 2.0, 5.0, 10.0, 50.0)


@dataclass
class SweepPoint:
    """State of the relevance protocol at one degradation level."""

    fraction: float
    users: np.ndarray
    items: np.ndarray
    relevance: sp.csr_matrix
    n_relevant: np.ndarray
    scores: dict


def evaluated_users(test: InteractionDataset) -> np.ndarray:
    return np.flatnonzero(np.diff(test.profiles.indptr) > 0)


def ideal_lists(train: InteractionDataset, test: InteractionDataset, users: np.ndarray, k: int, rng) -> np.ndarray:
    """k relevant items per user (random subset if more), padded with random unseen irrelevant items."""
    n = test.n_items
    out = np.empty((users.size, k), dtype=np.int64)
    for r, u in enumerate(users.tolist()):
        rel = test.items_of(u)
        if rel.size >= k:
            out[r] = rng.choice(rel, size=k, replace=False)
            continue
        head = rng.permutation(rel)
        blocked = np.zeros(n, dtype=bool)
        blocked[rel] = True
        blocked[train.items_of(u)] = True
        pool = np.flatnonzero(~blocked)
        need = k - rel.size
        if pool.size < need:
            raise DataError(f"user {u}: only {pool.size} irrelevant unseen items to fill {need} slots")
        out[r, : rel.size] = head
        out[r, rel.size :] = rng.choice(pool, size=need, replace=False)
    return out


def _masked_relevance(base: sp.csr_matrix, users: np.ndarray, items: np.ndarray, degraded: np.ndarray) -> sp.csr_matrix:
    # a degraded user's own list items are judged irrelevant to them
    if degraded.size == 0:
        return base
    lil = base.tolil(copy=True)
    for r in degraded.tolist():
        u = users[r]
        keep = np.setdiff1d(np.asarray(lil.rows[u], dtype=np.int64), items[r])
        lil.rows[u] = keep.tolist()
        lil.data[u] = [1.0] * keep.size
    return lil.tocsr()


def _fractions(step: float) -> list[float]:
    if not 0 < step <= 1:
        raise ValueError("step_fraction must be in (0, 1]")
    n_steps = math.ceil(1.0 / step - 1e-9)
    return [min(1.0, round(j * step, 12)) for j in range(n_steps + 1)]


def relevance_points(
    train: InteractionDataset,
    test: InteractionDataset,
    k: int = 10,
    step_fraction: float = 0.1,
    seed: int = 0,
) -> Iterator[SweepPoint]:
    """Yield the protocol state at 0%, step, 2*step, ... 100% degraded users.

    Lists are fixed after the initial all-relevant construction; degrading a
    user zeroes the relevance of every item on their list (cumulatively, in a
    seeded random order).
    """
    rng = np.random.default_rng(seed)
    users = evaluated_users(test)
    if users.size < 3:
        raise DataError("relevance sweep needs at least 3 users with test items")
    items = ideal_lists(train, test, users, k, rng)
    order = rng.permutation(users.size)
    base = relevance_matrix(test)
    n_rel = np.diff(base.indptr)[users]
    for frac in _fractions(step_fraction):
        degraded = np.sort(order[: int(round(frac * users.size))])
        rel = _masked_relevance(base, users, items, degraded)
        hits = hit_matrix(items, users, rel)
        scores = {m: scores_from_hits(hits, n_rel, m) for m in MEASURES}
        yield SweepPoint(frac, users, items, rel, n_rel, scores)


def _distribution_entries(scores: dict) -> dict:
    return {
        "SD-P": sd(scores["P"]),
        "SD-NDCG": sd(scores["NDCG"]),
        "Gini-P": gini(scores["P"]),
        "Gini-NDCG": gini(scores["NDCG"]),
    }


def relevance_sweep(
    train: InteractionDataset,
    test: InteractionDataset,
    k: int = 10,
    step_fraction: float = 0.1,
    seed: int = 0,
    epsilon: float = 0.05,
    threads: int = 1,
) -> ExperimentTrace:
    """Effectiveness and fairness as a growing share of users receive only irrelevant items.

    PUF uses Jaccard similarities of the train profiles only.
    """
    points = []
    sims = None
    for pt in relevance_points(train, test, k, step_fraction, seed):
        if sims is None:
            sims = user_similarities(train, pt.users, threads)["Jacc"]
        envy = envy_from_relevance(pt.items, pt.users, pt.relevance, epsilon, threads)
        entries = {m: float(pt.scores[m].mean()) for m in MEASURES}
        entries.update(_distribution_entries(pt.scores))
        entries.update(
            {
                "ME": envy.me,
                "MME": envy.mme,
                "PEU": envy.peu,
                "UF": uf(sims, pt.items, train.profiles.T, threads),
                "PUF-Prec-Jacc": puf(sims, pt.scores["P"]),
                "PUF-NDCG-Jacc": puf(sims, pt.scores["NDCG"]),
            }
        )
        points.append(TracePoint(pt.fraction, entries, f"{pt.fraction:.0%}"))
    cfg = {"k": k, "step_fraction": step_fraction, "epsilon": epsilon, "users": 0 if sims is None else int(sims.m)}
    return ExperimentTrace("relevance_sweep", points, seed, cfg)


def _sampler(label: str):
    if label == "normal":
        return lambda count, s: simkit.sample_normal(count, s)
    lam = float(label.split("=")[1])
    return lambda count, s: simkit.sample_weibull(lam, count, s)


def similarity_sweep(
    run: RankedRun,
    test: InteractionDataset,
    train: InteractionDataset,
    lambdas=DEFAULT_LAMBDAS,
    include_normal: bool = True,
    include_observed: bool = False,
    seed: int = 0,
    k: int = 10,
    epsilon: float = 0.05,
    threads: int = 1,
) -> ExperimentTrace:
    """Fairness of one fixed run under synthetic similarity distributions of varying skew.

    Each distribution contributes one similarity per user pair, min-max
    normalized, then randomly placed on the pairs. x is the sample skewness.
    """
    run = run.truncate(k)
    eff = evaluate_all(run, test, k)
    users = eff["P"].users
    m = users.size
    if m < 3:
        raise DataError("similarity sweep needs at least 3 evaluated users")
    sub = run.restrict(users)
    p, ndcg = eff["P"].scores, eff["NDCG"].scores
    envy = envy_from_relevance(sub.items, sub.users, relevance_matrix(test), epsilon, threads)
    fixed = _distribution_entries({"P": p, "NDCG": ndcg})
    fixed.update({"ME": envy.me, "MME": envy.mme, "PEU": envy.peu})

    labels = [f"weibull={float(lam):g}" for lam in lambdas] + (["normal"] if include_normal else [])
    seeds = np.random.SeedSequence(seed).spawn(2 * len(labels))
    count = simkit.n_pairs(m)
    candidates = []
    for j, label in enumerate(labels):
        drawn = _sampler(label)(count, seeds[2 * j])
        norm = simkit.minmax_normalize(PairwiseSimilarities.from_values(drawn))
        placed = simkit.random_assign(norm.values, seeds[2 * j + 1])
        candidates.append((label, PairwiseSimilarities(m, placed.values, "synthetic", True)))
    if include_observed:
        candidates.append(("observed-jaccard", user_similarities(train, users, threads)["Jacc"]))

    points = []
    for label, sims in candidates:
        entries = {
            "PUF-Prec": puf(sims, p),
            "PUF-NDCG": puf(sims, ndcg),
            "UF": uf(sims, sub.items, train.profiles.T, threads),
        }
        entries.update(fixed)
        points.append(TracePoint(simkit.skewness(sims.values), entries, label))
    cfg = {"k": k, "epsilon": epsilon, "distributions": labels, "observed": include_observed, "users": int(m)}
    return ExperimentTrace("similarity_sweep", points, seed, cfg)


def extreme_case(
    train: InteractionDataset,
    test: InteractionDataset,
    k: int = 10,
    step_fraction: float = 0.1,
    lam: float = 2.0,
    mode: str = "most_fair",
    seed: int = 0,
    threads: int = 1,
) -> ExperimentTrace:
    """PUF and UF when a Weibull similarity multiset is sorted against effectiveness gaps.

    Reuses the relevance protocol's per-point scores. The similarity multiset at
    each point depends on (seed, point) only, so both modes see identical draws.
    """
    if mode not in ("most_fair", "most_unfair"):
        raise ValueError(f"unknown mode {mode!r}")
    points = []
    for j, pt in enumerate(relevance_points(train, test, k, step_fraction, seed)):
        m = pt.users.size
        drawn = simkit.sample_weibull(lam, simkit.n_pairs(m), np.random.SeedSequence([seed, j]))
        base = simkit.minmax_normalize(PairwiseSimilarities.from_values(drawn)).values
        entries = {}
        for name, key in (("Prec", "P"), ("NDCG", "NDCG")):
            placed = simkit.assign_sorted(base, score_gaps(pt.scores[key]), mode)
            sims = PairwiseSimilarities(m, placed.values, "synthetic", True)
            entries[f"PUF-{name}"] = puf(sims, pt.scores[key])
            entries[f"UF-{name}"] = uf(sims, pt.items, train.profiles.T, threads)
        points.append(TracePoint(pt.fraction, entries, f"{pt.fraction:.0%}"))
    cfg = {"k": k, "step_fraction": step_fraction, "lambda": lam, "mode": mode}
    return ExperimentTrace(f"extreme_case_{mode}", points, seed, cfg)
