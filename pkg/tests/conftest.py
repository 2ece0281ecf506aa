import numpy as np
import pytest

from mtdicl.core import ModelConfig, generate_sequence, make_rng, sample_mixture_weights, sample_transition_matrix

PI_2 = np.array([[0.9, 0.1], [0.2, 0.8]])


def random_instance(seed, q, m, T, *path):
    """(cfg, pi, lam, seq) drawn from the child stream (seed, *path)."""
    rng = make_rng(seed, *path)
    cfg = ModelConfig(q, m, T)
    pi = sample_transition_matrix(q, rng)
    lam = sample_mixture_weights(np.ones(m), rng)
    return cfg, pi, lam, generate_sequence(cfg, pi, lam, rng)


def random_instances(n, seed=0, q_range=(2, 5), m_range=(1, 5), T_range=(8, 128)):
    rng = make_rng(seed, 999)
    out = []
    for i in range(n):
        q = int(rng.integers(q_range[0], q_range[1] + 1))
        m = int(rng.integers(m_range[0], m_range[1] + 1))
        T = int(rng.integers(max(T_range[0], m + 2), T_range[1] + 1))
        out.append(random_instance(seed, q, m, T, i))
    return out


@pytest.fixture
def pi2():
    return PI_2.copy()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
