"""Stress protocols, measure agreement and timing harness."""

from userfair.labs.agreement import AgreementMatrix, agreement_matrix, kendall_tau_b
from userfair.labs.bench import BenchRow, bench
from userfair.labs.sweeps import extreme_case, relevance_sweep, similarity_sweep
from userfair.labs.trace import ExperimentTrace, TracePoint

__all__ = [
    "AgreementMatrix",
    "BenchRow",
    "ExperimentTrace",
    "TracePoint",
    "agreement_matrix",
    "bench",
    "extreme_case",
    "kendall_tau_b",
    "relevance_sweep",
    "similarity_sweep",
]
