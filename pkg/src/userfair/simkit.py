"""Pairwise user similarities in condensed form, synthetic similarity draws, skewness."""

from __future__ import annotations

import math
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from userfair.common import DataError, UndefinedError

_BLOCK = 256


def n_pairs(m: int) -> int:
    return m * (m - 1) // 2


def users_from_pairs(n: int) -> int:
    """Invert ``n = m(m-1)/2``."""
    m = int(round((1 + math.sqrt(1 + 8 * n)) / 2))
    if n_pairs(m) != n:
        raise ValueError(f"{n} is not a triangular pair count")
    return m


def condensed_index(u, v, m: int):
    """Position of the unordered pair (u, v), u != v, in the condensed vector.

    Row-major upper triangle, the same layout as ``scipy.spatial.distance.pdist``.
    Works elementwise on arrays.
    """
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    if np.any(u == v):
        raise ValueError("diagonal pairs have no condensed index")
    i = np.minimum(u, v)
    j = np.maximum(u, v)
    idx = m * i - i * (i + 1) // 2 + (j - i - 1)
    return int(idx) if idx.ndim == 0 else idx


def pair_from_index(idx, m: int):
    """Inverse of :func:`condensed_index`; returns (u, v) with u < v."""
    idx = np.asarray(idx, dtype=np.int64)
    # row i starts at s(i) = i*(2m - i - 1)/2
    b = 2 * m - 1
    i = np.floor((b - np.sqrt(b * b - 8.0 * idx)) / 2).astype(np.int64)
    start = i * (2 * m - i - 1) // 2
    # guard float rounding at row boundaries
    over = start > idx
    i = np.where(over, i - 1, i)
    start = i * (2 * m - i - 1) // 2
    nxt = (i + 1) * (2 * m - i - 2) // 2
    under = idx >= nxt
    i = np.where(under, i + 1, i)
    start = i * (2 * m - i - 1) // 2
    j = idx - start + i + 1
    if i.ndim == 0:
        return int(i), int(j)
    return i, j


@dataclass(frozen=True)
class PairwiseSimilarities:
    """Similarities over unordered user pairs, condensed upper-triangular order."""

    m: int
    values: np.ndarray
    kind: str = "synthetic"
    normalized: bool = False
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.shape[0] != n_pairs(self.m):
            raise ValueError(f"expected {n_pairs(self.m)} pair values for m={self.m}, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("similarity values must be finite")

    @classmethod
    def from_values(cls, values, kind: str = "synthetic", normalized: bool = False) -> "PairwiseSimilarities":
        values = np.asarray(values, dtype=np.float64)
        return cls(users_from_pairs(values.shape[0]), values, kind, normalized)

    def get(self, u: int, v: int) -> float:
        if u == v:
            raise ValueError("self-similarity is not stored")
        return float(self.values[condensed_index(u, v, self.m)])

    def to_square(self, diagonal: float = 0.0) -> np.ndarray:
        out = np.zeros((self.m, self.m))
        iu, ju = np.triu_indices(self.m, 1)
        out[iu, ju] = self.values
        out[ju, iu] = self.values
        np.fill_diagonal(out, diagonal)
        return out

    def subset(self, users) -> "PairwiseSimilarities":
        """Restrict to ``users`` (in the given order)."""
        users = np.asarray(users, dtype=np.int64)
        k = users.shape[0]
        iu, ju = np.triu_indices(k, 1)
        idx = condensed_index(users[iu], users[ju], self.m) if k > 1 else np.empty(0, dtype=np.int64)
        return PairwiseSimilarities(k, self.values[idx], self.kind, self.normalized, self.warnings)


def _check_profiles(profiles) -> sp.csr_matrix:
    p = sp.csr_matrix(profiles, dtype=np.float64)
    if p.shape[0] < 2:
        raise DataError(f"need at least 2 users for pairwise similarity, got {p.shape[0]}")
    p = p.copy()
    p.sum_duplicates()
    p.data[:] = 1.0
    p.eliminate_zeros()
    return p


def _pairwise(profiles, combine, kind: str, threads: int = 1) -> PairwiseSimilarities:
    p = _check_profiles(profiles)
    m = p.shape[0]
    sizes = np.diff(p.indptr).astype(np.float64)
    pt = p.T.tocsc()
    out = np.empty(n_pairs(m))

    def block(start: int) -> None:
        stop = min(start + _BLOCK, m - 1)
        inter = (p[start:stop] @ pt).toarray()
        for r in range(start, stop):
            row = inter[r - start, r + 1 :]
            lo = condensed_index(r, r + 1, m)
            out[lo : lo + row.shape[0]] = combine(row, sizes[r], sizes[r + 1 :])

    starts = range(0, m - 1, _BLOCK)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(block, starts))
    else:
        for s in starts:
            block(s)
    return PairwiseSimilarities(m, out, kind, False)


def _cosine_combine(inter, size_u, sizes_v):
    denom = np.sqrt(size_u * sizes_v)
    with np.errstate(divide="ignore", invalid="ignore"):
        sim = np.where(denom > 0, inter / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(sim, 0.0, 1.0)


def _jaccard_combine(inter, size_u, sizes_v):
    union = size_u + sizes_v - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def cosine_similarities(profiles, threads: int = 1) -> PairwiseSimilarities:
    """Cosine similarity of binary user profiles; all-zero rows score 0 with everyone."""
    return _pairwise(profiles, _cosine_combine, "cosine", threads)


def jaccard_similarities(profiles, threads: int = 1) -> PairwiseSimilarities:
    """|A & B| / |A | B| of user item sets; two empty sets score 0."""
    return _pairwise(profiles, _jaccard_combine, "jaccard", threads)


def minmax_normalize(s: PairwiseSimilarities) -> PairwiseSimilarities:
    v = s.values
    if v.size == 0:
        return PairwiseSimilarities(s.m, v.copy(), s.kind, True, s.warnings)
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        msg = f"all {v.size} similarity values equal {lo!r}; min-max normalization maps them to 0"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        return PairwiseSimilarities(s.m, np.zeros_like(v), s.kind, True, s.warnings + (msg,))
    out = (v - lo) / (hi - lo)
    # pin the extremes exactly so a second pass is a no-op
    out[v == lo] = 0.0
    out[v == hi] = 1.0
    return PairwiseSimilarities(s.m, out, s.kind, True, s.warnings)


def sample_weibull(lam: float, count: int, seed) -> np.ndarray:
    """Unit-scale Weibull draws with density lam * x**(lam-1) * exp(-x**lam), by inverse CDF."""
    if not lam > 0:
        raise ValueError(f"Weibull shape must be > 0, got {lam}")
    if count < 1:
        raise ValueError("count must be >= 1")
    u = np.random.default_rng(seed).random(count)
    return (-np.log1p(-u)) ** (1.0 / lam)


def sample_normal(count: int, seed) -> np.ndarray:
    if count < 1:
        raise ValueError("count must be >= 1")
    return np.random.default_rng(seed).standard_normal(count)


def skewness(values) -> float:
    """Biased Fisher-Pearson coefficient m3 / m2**1.5."""
    x = np.asarray(values, dtype=np.float64)
    if x.size < 3:
        raise ValueError("skewness needs at least 3 values")
    if x.min() == x.max():
        raise UndefinedError("skewness is undefined for zero-variance input")
    d = x - x.mean()
    m2 = float(np.mean(d * d))
    m3 = float(np.mean(d * d * d))
    return m3 / m2**1.5


def place_sorted(sims, diffs, mode: str) -> np.ndarray:
    """Place a similarity multiset on pairs according to their effectiveness gap.

    ``most_fair`` gives the i-th largest similarity to the pair with the i-th
    smallest gap; ``most_unfair`` to the pair with the i-th largest gap. Ties in
    ``diffs`` keep original pair order (stable sort).
    """
    sims = np.asarray(sims.values if isinstance(sims, PairwiseSimilarities) else sims, dtype=np.float64)
    diffs = np.asarray(diffs, dtype=np.float64)
    if sims.shape != diffs.shape or sims.ndim != 1:
        raise ValueError(f"length mismatch: {sims.shape} similarities vs {diffs.shape} differences")
    desc = -np.sort(-sims, kind="stable")
    if mode == "most_fair":
        order = np.argsort(diffs, kind="stable")
    elif mode == "most_unfair":
        order = np.argsort(-diffs, kind="stable")
    else:
        raise ValueError(f"unknown assignment mode {mode!r}")
    out = np.empty_like(sims)
    out[order] = desc
    return out


def assign_sorted(sims, diffs, mode: str) -> PairwiseSimilarities:
    """:func:`place_sorted` on a condensed pair vector."""
    return PairwiseSimilarities.from_values(place_sorted(sims, diffs, mode), "synthetic", False)


def random_assign(values, seed) -> PairwiseSimilarities:
    """Randomly permute a similarity sample over the pairs."""
    values = np.asarray(values, dtype=np.float64)
    perm = np.random.default_rng(seed).permutation(values.shape[0])
    return PairwiseSimilarities.from_values(values[perm], "synthetic", False)


_HEADER = struct.Struct("<Q")


def write_condensed(path: str | Path, s: PairwiseSimilarities) -> None:
    """Binary export: little-endian uint64 value count, then float64 values."""
    with Path(path).open("wb") as fh:
        fh.write(_HEADER.pack(s.values.shape[0]))
        fh.write(s.values.astype("<f8").tobytes())


def read_condensed(path: str | Path, kind: str = "synthetic", normalized: bool = False) -> PairwiseSimilarities:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    (n,) = _HEADER.unpack_from(raw)
    body = raw[_HEADER.size :]
    if len(body) != 8 * n:
        raise DataError(f"{path}: header says {n} values, body holds {len(body) / 8:g}")
    values = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return PairwiseSimilarities.from_values(values, kind, normalized)


def write_triples(path: str | Path, s: PairwiseSimilarities, user_ids=None) -> None:
    """Tab-separated ``u  u'  sim`` rows for every unordered pair."""
    ids = user_ids if user_ids is not None else [str(i) for i in range(s.m)]
    iu, ju = np.triu_indices(s.m, 1)
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("user\tother\tsim\n")
        for a, b, v in zip(iu.tolist(), ju.tolist(), s.values.tolist()):
            fh.write(f"{ids[a]}\t{ids[b]}\t{v!r}\n")
