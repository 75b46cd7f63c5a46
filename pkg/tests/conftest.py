import itertools

import numpy as np
import pytest

from apricot.dists import Market, TriangularAgent

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(n: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[n] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {n}: {detail}")


def random_market(rng: np.random.Generator, k_max=8, types_max=50, count_max=1,
                  zero_quantile=False, point_mass=True) -> Market:
    """Random triangular market; revenues log-uniform so monopoly values spread out."""
    n = int(rng.integers(1, types_max + 1))
    k = int(rng.integers(1, k_max + 1))
    agents = []
    for _ in range(n):
        r = float(np.exp(rng.uniform(-3, 1)))
        u = rng.random()
        if point_mass and u < 0.1:
            q = 1.0
        elif zero_quantile and u < 0.2:
            q = 0.0
        else:
            q = float(rng.uniform(0.01, 1.0))
        c = int(rng.integers(1, count_max + 1))
        agents.append(TriangularAgent(r, q, c))
    return Market(k, tuple(agents))


def enumerate_counts(probs):
    """Exact distribution of the number of successes by walking all 2^n outcomes."""
    n = len(probs)
    pmf = np.zeros(n + 1)
    for bits in itertools.product((0, 1), repeat=n):
        w = 1.0
        for b, p in zip(bits, probs):
            w *= p if b else 1.0 - p
        pmf[sum(bits)] += w
    return pmf


def expand(market: Market):
    """Per-buyer list of agents (for brute-force oracles on small markets)."""
    return [a for a in market.agents for _ in range(a.count)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
