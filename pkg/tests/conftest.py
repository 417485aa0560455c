import numpy as np
import pytest
import scipy.sparse as sp

from userfair.dataio import Interaction, InteractionDataset
from userfair.synth import synthetic_split

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1][1:])):
        terminalreporter.write_line(line)


def binary_dataset(rows: list[list[int]], n_items: int | None = None) -> InteractionDataset:
    """Dataset whose user u has the items listed in rows[u]; ids are 'u{u}' / 'i{i}'."""
    n = n_items if n_items is not None else max((max(r) for r in rows if r), default=-1) + 1
    inter = [Interaction(f"u{u}", f"i{i}") for u, r in enumerate(rows) for i in r]
    return InteractionDataset.build(
        inter, {f"u{u}": u for u in range(len(rows))}, {f"i{i}": i for i in range(n)}
    )


def random_profiles(rng: np.random.Generator, m: int, n: int, density: float) -> sp.csr_matrix:
    return sp.csr_matrix((rng.random((m, n)) < density).astype(np.float64))


@pytest.fixture(scope="session")
def small_split():
    return synthetic_split(120, 400, seed=3)


@pytest.fixture(scope="session")
def desk_split():
    """The m=1000, n=2000 synthetic dataset used by the protocol criteria."""
    return synthetic_split(1000, 2000, seed=0)
