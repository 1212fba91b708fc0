import numpy as np
import pytest

from dynbot.timegraph import SliceGraph


def random_slices(rng, n_nodes, n_slices, p=0.3):
    """Unit-weight random slice graphs on ``n_nodes`` vertices."""
    out = []
    for s in range(n_slices):
        edges = [(a, b) for a in range(n_nodes) for b in range(a + 1, n_nodes) if rng.random() < p]
        out.append(SliceGraph.from_edges(s, edges) if edges else SliceGraph.empty(s))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance verdicts, one line per criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
