"""Shared fixtures and the acceptance-summary reporting hook."""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from anonrec import build_matrix, load_dataset, make_synthetic_ratings

# One pass/fail line per acceptance criterion, printed after the run.
ACCEPTANCE_LOG: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LOG:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for line in ACCEPTANCE_LOG:
            terminalreporter.write_line("  " + line)


# Rating matrix used throughout the unit tests:
#   user 1: i1=5 i2=3 | user 2: i1=4 i3=2 | user 3: i2=4 i3=5 | user 4: i1=1 i2=2 i3=4
TOY_TRIPLES = [
    (1, 1, 5.0), (1, 2, 3.0),
    (2, 1, 4.0), (2, 3, 2.0),
    (3, 2, 4.0), (3, 3, 5.0),
    (4, 1, 1.0), (4, 2, 2.0), (4, 3, 4.0),
]


@pytest.fixture
def toy():
    return build_matrix(TOY_TRIPLES, 4, 3)


def random_matrix(rng, n_max=6, m_max=5, integer=True):
    """Small random rating matrix; integer values keep item means exact."""
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(2, m_max + 1))
    density = float(rng.uniform(0.3, 0.95))
    triples = []
    for u in range(1, n + 1):
        for i in range(1, m + 1):
            if rng.random() < density:
                value = float(rng.integers(1, 6)) if integer else float(rng.uniform(1, 5))
                triples.append((u, i, value))
    if not triples:
        triples = [(1, 1, 3.0)]
    return build_matrix(triples, n, m)


def benchmark_100k():
    """The full-scale evaluation dataset.

    Uses the real rating file when ANONREC_ML100K points at it; otherwise
    falls back to the deterministic synthetic benchmark of the same shape.
    """
    path = os.environ.get("ANONREC_ML100K", "")
    if path and Path(path).exists():
        ds = load_dataset(path, "movielens-100k")
        return ds.matrix, f"movielens-100k at {path}"
    matrix = build_matrix(make_synthetic_ratings(), 943, 1682)
    return matrix, "synthetic stand-in (real dataset unavailable in this environment)"


@pytest.fixture(scope="session")
def benchmark():
    return benchmark_100k()
