import numpy as np
import pytest

from treewalk.maze import TreeMaze


def dense_operator(maze: TreeMaze, f_phase=None):
    """Dense step matrix built vertex by vertex from the scattering rule.

    Independent of the vectorised engine: states are enumerated from the
    maze's neighbour lists, ordered to match the live state labels.
    """
    from treewalk.walk import state_labels

    labels = state_labels(maze)
    index = {s: i for i, s in enumerate(labels)}
    live = {v for s in labels for v in s}
    phase_f = maze.f_phase if f_phase is None else f_phase
    off_node = maze.parent(maze.root)
    U = np.zeros((len(labels), len(labels)))
    for (j, a), col in ((s, index[s]) for s in labels):
        nbrs = [v for v in maze.neighbours(a) if v in live] if a != off_node else [j]
        n = len(nbrs)
        if n == 1:
            phase = phase_f if (a == maze.f_node and maze.f_live) else 1
            U[index[(a, j)], col] = phase
            continue
        t, r = 2.0 / n, (n - 2) / n
        for k in nbrs:
            U[index[(a, k)], col] = -r if k == j else t
    return U


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
