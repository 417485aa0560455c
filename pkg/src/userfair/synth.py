"""Seeded synthetic interaction data with clustered tastes and skewed item popularity."""

from __future__ import annotations

import numpy as np

from userfair.dataio import Interaction, InteractionDataset


def _profiles(m: int, n: int, rng: np.random.Generator, clusters: int, mean_size: int) -> list[np.ndarray]:
    popularity = 1.0 / np.arange(1, n + 1) ** 0.8
    rng.shuffle(popularity)
    home = rng.integers(0, clusters, size=n)
    user_cluster = rng.integers(0, clusters, size=m)
    max_size = max(12, n // 4)
    out = []
    for u in range(m):
        w = popularity * np.where(home == user_cluster[u], 8.0, 1.0)
        size = int(np.clip(rng.lognormal(np.log(mean_size), 0.5), 10, max_size))
        out.append(np.sort(rng.choice(n, size=size, replace=False, p=w / w.sum())))
    return out


def user_id(u: int) -> str:
    return f"u{u:05d}"


def item_id(i: int) -> str:
    return f"i{i:05d}"


def synthetic_split(
    m: int,
    n: int,
    seed: int,
    test_fraction: float = 0.25,
    clusters: int = 8,
    mean_size: int = 30,
) -> tuple[InteractionDataset, InteractionDataset]:
    """Train/test datasets over exactly ``m`` users and ``n`` items.

    Every user keeps at least 5 train and 1 test interaction.
    """
    rng = np.random.default_rng(seed)
    train_rows: list[Interaction] = []
    test_rows: list[Interaction] = []
    for u, prof in enumerate(_profiles(m, n, rng, clusters, mean_size)):
        prof = rng.permutation(prof)
        n_test = min(max(1, int(round(test_fraction * prof.size))), prof.size - 5)
        uid = user_id(u)
        test_rows += [Interaction(uid, item_id(i)) for i in np.sort(prof[:n_test])]
        train_rows += [Interaction(uid, item_id(i)) for i in np.sort(prof[n_test:])]
    user_index = {user_id(u): u for u in range(m)}
    item_index = {item_id(i): i for i in range(n)}
    return (
        InteractionDataset.build(train_rows, user_index, item_index),
        InteractionDataset.build(test_rows, user_index, item_index),
    )


def synthetic_log(
    m: int,
    n: int,
    seed: int,
    clusters: int = 6,
    mean_size: int = 30,
    duplicate_rate: float = 0.03,
) -> list[Interaction]:
    """Raw rating log with timestamps, duplicates and low ratings, as a public dataset would ship."""
    rng = np.random.default_rng(seed)
    rows = []
    t0 = 1_100_000_000
    for u, prof in enumerate(_profiles(m, n, rng, clusters, mean_size)):
        start = t0 + int(rng.integers(0, 50_000_000))
        times = start + np.sort(rng.integers(0, 40_000_000, size=prof.size))
        ratings = rng.choice([1.0, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0], size=prof.size, p=[0.05, 0.07, 0.05, 0.18, 0.15, 0.25, 0.1, 0.15])
        for i, t, r in zip(prof.tolist(), times.tolist(), ratings.tolist()):
            rows.append(Interaction(user_id(u), item_id(i), r, int(t)))
            if rng.random() < duplicate_rate:
                rows.append(Interaction(user_id(u), item_id(i), float(rng.choice([1.0, 4.0])), int(t) + int(rng.integers(1, 10**6))))
    order = np.argsort([x.timestamp for x in rows], kind="stable")
    return [rows[p] for p in order]
