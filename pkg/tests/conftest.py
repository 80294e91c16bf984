import numpy as np
import pytest

from decaybell.kaon import load_constants

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def physical():
    return load_constants("physical")


@pytest.fixture(scope="session")
def cp_conserving():
    return load_constants("cp-conserving")


@pytest.fixture(scope="session")
def no_decay():
    return load_constants("no-decay")


def random_density(rng, d, rank=None, trace=1.0):
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return trace * rho / np.trace(rho).real


def random_pure(rng, d):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def random_kraus_ops(rng, d, n_ops, scale=1.0):
    """Kraus operators from a random isometry, shrunk by ``scale`` <= 1."""
    g = rng.normal(size=(d * n_ops, d)) + 1j * rng.normal(size=(d * n_ops, d))
    q, _ = np.linalg.qr(g)
    return [np.sqrt(scale) * q[i * d:(i + 1) * d, :] for i in range(n_ops)]


def random_unit_vectors(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)
