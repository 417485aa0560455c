"""Kendall tau-b and measure-by-measure agreement across models."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from userfair.common import UndefinedError, format_value, is_undefined
from userfair.effmetrics import MEASURES


def kendall_tau_b(x, y) -> float:
    """Tau-b: (C - D) / sqrt((n0 - n1)(n0 - n2)) with tie corrections n1, n2."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d and of equal length")
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two observations")
    iu, ju = np.triu_indices(n, 1)
    s = np.sign(x[iu] - x[ju]) * np.sign(y[iu] - y[ju])
    n0 = n * (n - 1) // 2
    n1 = sum(t * (t - 1) // 2 for t in Counter(x.tolist()).values())
    n2 = sum(t * (t - 1) // 2 for t in Counter(y.tolist()).values())
    denom = (n0 - n1) * (n0 - n2)
    if denom == 0:
        raise UndefinedError("tau-b is undefined when either ranking is constant")
    return float(s.sum()) / math.sqrt(denom)


@dataclass
class AgreementMatrix:
    """Pairwise tau-b between measures across models.

    ``tau`` correlates raw scores. ``tau_oriented`` flips the sign of every
    lower-is-better measure first, so positive values mean the two measures
    agree on which models are *better*. NaN marks an undefined cell.
    """

    measures: list[str]
    tau: np.ndarray
    tau_oriented: np.ndarray
    n_models: int
    excluded: list[str]

    def get(self, a: str, b: str, oriented: bool = False) -> float:
        mat = self.tau_oriented if oriented else self.tau
        return float(mat[self.measures.index(a), self.measures.index(b)])

    def to_csv(self, oriented: bool = False) -> str:
        mat = self.tau_oriented if oriented else self.tau
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["measure_a", "measure_b", "tau_b"])
        for i, a in enumerate(self.measures):
            for j, b in enumerate(self.measures):
                w.writerow([a, b, format_value(mat[i, j])])
        return buf.getvalue()

    def to_dict(self) -> dict:
        def enc(mat):
            return [[None if math.isnan(v) else float(v) for v in row] for row in mat.tolist()]

        return {
            "measures": self.measures,
            "n_models": self.n_models,
            "excluded": self.excluded,
            "tau": enc(self.tau),
            "tau_oriented": enc(self.tau_oriented),
        }


def agreement_matrix(scores: Mapping[str, Mapping[str, object]], measures: list[str] | None = None) -> AgreementMatrix:
    """Tau-b between every pair of measures, each a score vector over models.

    ``scores`` maps model name -> measure -> value. A measure with an undefined
    value for any model is excluded.
    """
    models = list(scores)
    if len(models) < 2:
        raise ValueError("agreement needs at least two models")
    if measures is None:
        measures = list(scores[models[0]])
    for m in models:
        if set(scores[m]) != set(scores[models[0]]):
            raise ValueError(f"model {m!r} reports a different measure set")
    excluded = [ms for ms in measures if any(is_undefined(scores[m][ms]) for m in models)]
    kept = [ms for ms in measures if ms not in excluded]
    vectors = {ms: np.array([float(scores[m][ms]) for m in models]) for ms in kept}
    size = len(kept)
    tau = np.full((size, size), np.nan)
    for i in range(size):
        for j in range(i, size):
            try:
                t = kendall_tau_b(vectors[kept[i]], vectors[kept[j]])
            except UndefinedError:
                continue
            tau[i, j] = tau[j, i] = t
    sign = np.array([1.0 if ms in MEASURES else -1.0 for ms in kept])
    return AgreementMatrix(kept, tau, tau * np.outer(sign, sign), len(models), excluded)
