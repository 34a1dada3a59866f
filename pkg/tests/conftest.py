"""Shared fixtures: random-table generators, the canonical synthetic dataset,
and the acceptance-summary hook that prints one PASS/FAIL line per criterion
at the end of the run."""

import numpy as np
import pytest

import fermi

# Worked 2x2 table used across the divergence tests; every derived value for
# it is recomputed independently where asserted.
WORKED = [[0.4, 0.1], [0.1, 0.4]]

_ACCEPTANCE_LINES = []


def dirichlet_table(rng, m=None, k=None, min_marginal=1e-2):
    """A random joint table with Dirichlet(1) cells, rejection-sampled until
    every marginal entry clears ``min_marginal`` (degenerate marginals are a
    separate error path, tested directly)."""
    m = m or int(rng.integers(2, 7))
    k = k or int(rng.integers(2, 7))
    while True:
        cells = rng.dirichlet(np.ones(m * k)).reshape(m, k)
        if cells.sum(axis=1).min() >= min_marginal and cells.sum(axis=0).min() >= min_marginal:
            return fermi.JointTable(cells)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(20240817))


@pytest.fixture
def python_kernel():
    """Pin the numpy backend for tests whose oracles are bitwise replicas of
    its operation order; restores the previous backend afterwards."""
    previous = fermi.kernels.select("python")
    yield "python"
    fermi.kernels.select(previous)


@pytest.fixture(scope="session")
def fixture_dataset():
    """The biased synthetic dataset the end-to-end checks run on."""
    return fermi.synthesize_biased(
        fermi.SynthConfig(n=2000, d=5, bias_strength=2.0, group_balance=0.5,
                          noise_sd=1.0, seed=1)
    )


@pytest.fixture
def criterion():
    """Record one acceptance line; the terminal summary prints them all."""

    def record(num, description, passed, detail=""):
        tag = "PASS" if passed else "FAIL"
        suffix = f" ({detail})" if detail else ""
        _ACCEPTANCE_LINES.append((num, f"criterion {num:2d}: {tag} - {description}{suffix}"))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
