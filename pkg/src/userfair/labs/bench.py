"""Wall-clock cost of each fairness measure on synthetic data."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from userfair.common import is_undefined
from userfair.dataio import InteractionDataset
from userfair.effmetrics import RankedRun, evaluate_all
from userfair.fairmetrics import FAIRNESS_MEASURES, envy_suite, gini, puf, sd, uf, user_similarities
from userfair.synth import synthetic_split


@dataclass
class BenchRow:
    measure: str
    seconds: float
    value: float | None


def random_run(train: InteractionDataset, k: int, seed: int) -> RankedRun:
    """k distinct unseen items per user, drawn uniformly."""
    rng = np.random.default_rng(seed)
    n = train.n_items
    users = np.flatnonzero(np.diff(train.profiles.indptr) > 0)
    items = np.empty((users.size, k), dtype=np.int64)
    for r, u in enumerate(users.tolist()):
        seen = set(train.items_of(u).tolist())
        picked: list[int] = []
        while len(picked) < k:
            for i in rng.integers(0, n, size=2 * k).tolist():
                if i not in seen and i not in picked:
                    picked.append(i)
                    if len(picked) == k:
                        break
        items[r] = picked
    return RankedRun(k, users, items)


def _timed(fn, repeats: int):
    times = []
    value = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        value = fn()
        times.append(time.perf_counter() - t0)
    return float(np.mean(times)), value


def bench(
    measures=FAIRNESS_MEASURES,
    m: int = 2000,
    k: int = 10,
    seed: int = 0,
    repeats: int = 3,
    n_items: int | None = None,
    threads: int = 1,
) -> list[BenchRow]:
    """Mean seconds per measure.

    Effectiveness vectors and the normalized similarities are built once,
    outside the timed region; envy measures and UF are timed end to end from
    the run.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    unknown = [x for x in measures if x not in FAIRNESS_MEASURES]
    if unknown:
        raise ValueError(f"unknown measures {unknown}; expected names from {FAIRNESS_MEASURES}")
    train, test = synthetic_split(m, n_items or 2 * m, seed)
    run = random_run(train, k, seed + 1)
    eff = evaluate_all(run, test, k)
    users = eff["P"].users
    sub = run.restrict(users)
    sims = user_similarities(train, users, threads)
    score = {"Prec": eff["P"].scores, "NDCG": eff["NDCG"].scores, "P": eff["P"].scores}
    item_vectors = train.profiles.T.tocsr()

    def job(name: str):
        if name.startswith("PUF-"):
            _, eff_name, sim_name = name.split("-")
            return lambda: puf(sims[sim_name], score[eff_name])
        if name.startswith("SD-"):
            return lambda: sd(score[name[3:]])
        if name.startswith("Gini-"):
            return lambda: gini(score[name[5:]])
        if name in ("ME", "MME", "PEU"):
            field = {"ME": 0, "MME": 1, "PEU": 2}[name]
            return lambda: envy_suite(run, test, k, 0.05, threads)[field]
        if name == "UF":
            return lambda: uf(sims["Jacc"], sub.items, item_vectors, threads)
        raise ValueError(f"unknown measure {name!r}")

    rows = []
    for name in measures:
        seconds, value = _timed(job(name), repeats)
        rows.append(BenchRow(name, seconds, None if is_undefined(value) else float(value)))
    return rows
