import numpy as np
import pytest

from sgne.graph import generate_power_law_graph
from sgne.model import SampleBatch, init_model


@pytest.fixture(scope="session")
def graph50():
    """Seeded 50-node scale-free graph shared by training-level tests."""
    return generate_power_law_graph(50, 2.5, min_degree=2, seed=11)


def random_batch(rng, n, b, k, weights=None):
    centers = rng.integers(n, size=b)
    contexts = rng.integers(n, size=b)
    w = rng.uniform(0.5, 2.0, size=b) if weights is None else weights
    negatives = rng.integers(n, size=(b, k))
    return SampleBatch(centers, contexts, w, negatives)


def random_model(rng, n, dim, activation, scale=1.0):
    model = init_model(n, dim, activation, seed=int(rng.integers(2**31)))
    model.center[:] = rng.normal(scale=scale, size=model.center.shape)
    model.context[:] = rng.normal(scale=scale, size=model.context.shape)
    if activation == "sine":
        model.w_t[:] = rng.normal(scale=scale, size=model.w_t.shape)
        model.running_mean[:] = rng.normal(size=dim)
        model.running_var[:] = rng.uniform(0.5, 2.0, size=dim)
    return model


ACCEPTANCE_LINES = []


def report_criterion(number, passed, detail):
    """Record one acceptance verdict; echoed immediately and in the session summary."""
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
