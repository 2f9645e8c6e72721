import numpy as np
import pytest

from pgst.graph import build_shift
from pgst.io import make_er


def random_shift(n, p=0.3, seed=0, kind="normalized_laplacian", weighted=False):
    """Connected-ish random graph; weights drawn from U(0.5, 1.5) when ``weighted``."""
    rng = np.random.default_rng(seed)
    edges, n = make_er(n, p, rng)
    # a path through all nodes keeps the graph connected
    pairs = {(u, v) for u, v, _ in edges} | {(i, i + 1) for i in range(n - 1)}
    w = rng.uniform(0.5, 1.5, size=len(pairs)) if weighted else np.ones(len(pairs))
    return build_shift([(u, v, wi) for (u, v), wi in zip(sorted(pairs), w)], n, kind)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


def record(number, title, ok, detail=""):
    """Store and print one acceptance line; the lines are repeated in the terminal summary."""
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
