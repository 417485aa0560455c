"""Interaction loading, preprocessing (dedup, binarize, k-core) and global splits."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from userfair.common import DataError


@dataclass(frozen=True)
class Interaction:
    user: str
    item: str
    rating: float | None = None
    timestamp: int | None = None

    def __post_init__(self):
        if not self.user or not self.item:
            raise DataError("user and item identifiers must be non-empty")


@dataclass(frozen=True)
class ColumnFormat:
    """Column mapping for a delimited interaction file.

    ``delimiter=None`` auto-detects tab vs comma from the header line.
    """

    user: str = "user"
    item: str = "item"
    rating: str | None = None
    timestamp: str | None = None
    delimiter: str | None = None


def _sniff_delimiter(header_line: str) -> str:
    return "\t" if "\t" in header_line else ","


def load_interactions(path: str | Path, fmt: ColumnFormat = ColumnFormat()) -> list[Interaction]:
    """Read one Interaction per data row, in file order.

    Row numbers in error messages are file line numbers (the header is line 1).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"interaction file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise DataError(f"{path}: missing header row")
        delimiter = fmt.delimiter or _sniff_delimiter(header_line)
        header = next(csv.reader([header_line.rstrip("\r\n")], delimiter=delimiter))
        wanted = {"user": fmt.user, "item": fmt.item, "rating": fmt.rating, "timestamp": fmt.timestamp}
        pos = {}
        for role, name in wanted.items():
            if name is None:
                continue
            if name not in header:
                raise DataError(f"{path}: column {name!r} ({role}) not in header {header}")
            pos[role] = header.index(name)

        out = []
        reader = csv.reader(fh, delimiter=delimiter)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            rating = timestamp = None
            if "rating" in pos:
                raw = row[pos["rating"]].strip()
                try:
                    rating = float(raw)
                except ValueError:
                    raise DataError(f"{path}: row {lineno}: unparsable rating {raw!r}") from None
                if not math.isfinite(rating):
                    raise DataError(f"{path}: row {lineno}: non-finite rating {raw!r}")
            if "timestamp" in pos:
                raw = row[pos["timestamp"]].strip()
                try:
                    timestamp = int(raw)
                except ValueError:
                    try:
                        as_float = float(raw)
                    except ValueError:
                        raise DataError(f"{path}: row {lineno}: unparsable timestamp {raw!r}") from None
                    if not as_float.is_integer():
                        raise DataError(f"{path}: row {lineno}: unparsable timestamp {raw!r}")
                    timestamp = int(as_float)
            try:
                out.append(Interaction(row[pos["user"]].strip(), row[pos["item"]].strip(), rating, timestamp))
            except DataError as exc:
                raise DataError(f"{path}: row {lineno}: {exc}") from None
    return out


def format_interactions(interactions: Iterable[Interaction]) -> str:
    """Tab-separated ``user item rating timestamp`` with a header row; absent fields are empty."""
    lines = ["user\titem\trating\ttimestamp\n"]
    for x in interactions:
        rating = "" if x.rating is None else repr(float(x.rating))
        ts = "" if x.timestamp is None else str(x.timestamp)
        lines.append(f"{x.user}\t{x.item}\t{rating}\t{ts}\n")
    return "".join(lines)


def write_interactions(path: str | Path, interactions: Iterable[Interaction]) -> None:
    Path(path).write_text(format_interactions(interactions), encoding="utf-8", newline="")


SPLIT_FORMAT = ColumnFormat("user", "item", None, None, "\t")


def load_split_file(path: str | Path) -> list[Interaction]:
    """Load a file written by :func:`write_interactions` (empty fields allowed)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"interaction file not found: {path}")
    out = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        missing = {"user", "item"} - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            rating = row.get("rating") or None
            ts = row.get("timestamp") or None
            try:
                out.append(
                    Interaction(
                        row["user"],
                        row["item"],
                        None if rating is None else float(rating),
                        None if ts is None else int(ts),
                    )
                )
            except ValueError as exc:
                raise DataError(f"{path}: row {lineno}: {exc}") from None
    return out


@dataclass
class InteractionDataset:
    """Interactions plus index maps and the binarized m x n profile matrix."""

    interactions: list[Interaction]
    user_index: dict[str, int]
    item_index: dict[str, int]
    profiles: sp.csr_matrix = field(repr=False)

    @classmethod
    def build(
        cls,
        interactions: Sequence[Interaction],
        user_index: dict[str, int] | None = None,
        item_index: dict[str, int] | None = None,
    ) -> "InteractionDataset":
        interactions = list(interactions)
        if user_index is None:
            user_index = _first_seen_index(x.user for x in interactions)
        if item_index is None:
            item_index = _first_seen_index(x.item for x in interactions)
        try:
            rows = np.fromiter((user_index[x.user] for x in interactions), dtype=np.int64, count=len(interactions))
            cols = np.fromiter((item_index[x.item] for x in interactions), dtype=np.int64, count=len(interactions))
        except KeyError as exc:
            raise DataError(f"identifier {exc.args[0]!r} missing from index") from None
        data = np.ones(len(interactions), dtype=np.float64)
        mat = sp.csr_matrix((data, (rows, cols)), shape=(len(user_index), len(item_index)))
        mat.sum_duplicates()
        mat.data[:] = 1.0
        mat.sort_indices()
        return cls(interactions, dict(user_index), dict(item_index), mat)

    @property
    def n_users(self) -> int:
        return len(self.user_index)

    @property
    def n_items(self) -> int:
        return len(self.item_index)

    def user_ids(self) -> list[str]:
        ids = [""] * len(self.user_index)
        for k, v in self.user_index.items():
            ids[v] = k
        return ids

    def item_ids(self) -> list[str]:
        ids = [""] * len(self.item_index)
        for k, v in self.item_index.items():
            ids[v] = k
        return ids

    def items_of(self, user: int) -> np.ndarray:
        p = self.profiles
        return p.indices[p.indptr[user] : p.indptr[user + 1]]

    def user_counts(self) -> np.ndarray:
        return np.diff(self.profiles.indptr)

    def stats(self) -> dict:
        """Counts in the layout of the dataset statistics table."""
        n_inter = int(self.profiles.nnz)
        users_with = int(np.count_nonzero(self.user_counts()))
        items_with = int(np.count_nonzero(np.asarray(self.profiles.sum(axis=0)).ravel()))
        cells = users_with * items_with
        sparsity = 100.0 * (1.0 - n_inter / cells) if cells else 100.0
        return {"users": users_with, "items": items_with, "interactions": n_inter, "sparsity_pct": round(sparsity, 4)}


def _first_seen_index(ids: Iterable[str]) -> dict[str, int]:
    index: dict[str, int] = {}
    for x in ids:
        if x not in index:
            index[x] = len(index)
    return index


def shared_datasets(*parts: Sequence[Interaction], extra_items: Iterable[str] = ()) -> list[InteractionDataset]:
    """Build datasets over a common user/item index taken from the union of ``parts``."""
    user_index = _first_seen_index(x.user for part in parts for x in part)
    item_index = _first_seen_index([x.item for part in parts for x in part] + list(extra_items))
    return [InteractionDataset.build(part, user_index, item_index) for part in parts]


def _dedup_keep_latest(raw: Sequence[Interaction]) -> list[Interaction]:
    # latest timestamp wins; ties (and missing timestamps) go to the later row
    best: dict[tuple[str, str], int] = {}
    for pos, x in enumerate(raw):
        key = (x.user, x.item)
        prev = best.get(key)
        if prev is None:
            best[key] = pos
            continue
        t_prev = raw[prev].timestamp
        if x.timestamp is None or t_prev is None or x.timestamp >= t_prev:
            best[key] = pos
    keep = sorted(best.values())
    return [raw[p] for p in keep]


def k_core(interactions: Sequence[Interaction], min_interactions: int) -> list[Interaction]:
    """Iteratively drop users and items below ``min_interactions`` until a fixed point."""
    current = list(interactions)
    while True:
        ucount = Counter(x.user for x in current)
        icount = Counter(x.item for x in current)
        kept = [x for x in current if ucount[x.user] >= min_interactions and icount[x.item] >= min_interactions]
        if len(kept) == len(current):
            return kept
        current = kept


def preprocess(
    raw: Sequence[Interaction],
    rating_threshold: float | None = None,
    min_interactions: int = 5,
) -> InteractionDataset:
    """Dedup (keep most recent), threshold ratings, then k-core filter.

    Ratings are kept verbatim on the retained interactions; binarization lives in
    ``profiles``. That keeps a second pass with the same threshold a no-op.
    """
    if min_interactions < 1:
        raise ValueError("min_interactions must be >= 1")
    deduped = _dedup_keep_latest(raw)
    if rating_threshold is not None:
        if any(x.rating is None for x in deduped):
            raise DataError("rating_threshold given but some interactions have no rating")
        deduped = [x for x in deduped if x.rating >= rating_threshold]
    kept = k_core(deduped, min_interactions)
    if not kept:
        raise DataError("preprocessing removed every user and item")
    return InteractionDataset.build(kept)


@dataclass
class DatasetSplit:
    train: InteractionDataset
    validation: InteractionDataset
    test: InteractionDataset
    split_mode: str
    seed: int
    boundary_counts: tuple[int, int, int] = (0, 0, 0)

    def stats(self) -> dict:
        union = InteractionDataset.build(
            self.train.interactions + self.validation.interactions + self.test.interactions,
            self.train.user_index,
            self.train.item_index,
        )
        s = union.stats()
        s["users_test"] = int(np.count_nonzero(self.test.user_counts()))
        s["split_mode"] = self.split_mode
        s["seed"] = self.seed
        s["parts"] = {
            "train": len(self.train.interactions),
            "validation": len(self.validation.interactions),
            "test": len(self.test.interactions),
        }
        return s

    def write(self, out_dir: str | Path) -> dict:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_interactions(out_dir / "train.tsv", self.train.interactions)
        write_interactions(out_dir / "valid.tsv", self.validation.interactions)
        write_interactions(out_dir / "test.tsv", self.test.interactions)
        stats = self.stats()
        (out_dir / "stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
        return stats


def split(
    ds: InteractionDataset,
    mode: str = "temporal",
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int = 0,
    min_train: int = 5,
) -> DatasetSplit:
    """Global (not per-user) train/validation/test split.

    Boundaries sit at floor(r0*N) and floor((r0+r1)*N). Users with fewer than
    ``min_train`` train interactions are then dropped from all three parts.
    """
    if mode not in ("temporal", "random"):
        raise ValueError(f"unknown split mode {mode!r}")
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0):
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    rows = list(ds.interactions)
    n = len(rows)
    if mode == "temporal":
        if any(x.timestamp is None for x in rows):
            raise DataError("temporal split needs a timestamp on every interaction")
        order = sorted(range(n), key=lambda p: rows[p].timestamp)  # stable: file order on ties
    else:
        order = np.random.default_rng(seed).permutation(n).tolist()
    b1 = math.floor(ratios[0] * n + 1e-9)
    b2 = math.floor((ratios[0] + ratios[1]) * n + 1e-9)
    parts = [[rows[p] for p in order[:b1]], [rows[p] for p in order[b1:b2]], [rows[p] for p in order[b2:]]]
    boundary = (b1, b2 - b1, n - b2)

    train_counts = Counter(x.user for x in parts[0])
    ok = {u for u, c in train_counts.items() if c >= min_train}
    parts = [[x for x in part if x.user in ok] for part in parts]
    if not parts[0]:
        raise DataError("train split is empty after removing users with too few train interactions")
    train, valid, test = shared_datasets(*parts)
    return DatasetSplit(train, valid, test, mode, seed, boundary)
