import math

import numpy as np
import pytest
from scipy import stats

from treewalk.analytics import REFERENCE_STEP_MODEL
from treewalk.errors import ConfigError
from treewalk.maze import TreeMaze, edge_count, freeze_below
from treewalk.reduced import class_probabilities, reduced_engine
from treewalk.search import (
    BenchmarkConfig, _measure_full, _measure_reduced, benchmark_csv, classical_dfs,
    dead_tree_exit_speed, dfs_steps, direct_f_search, f_peak, movement_search, path_peak,
    run_benchmark, speed_normalizer,
)
from treewalk.walk import initial_state, sample_measurement


def explicit_dfs(maze):
    """Stack-based walk from S; counts every arrival at a node not seen before."""
    seen = {0}
    stack = [0]
    moves = 0
    while stack:
        v = stack[-1]
        nxt = next((c for c in maze.children(v) if c not in seen), None)
        if nxt is None:
            stack.pop()
            continue
        seen.add(nxt)
        moves += 1
        if nxt == maze.f_node:
            return moves
        stack.append(nxt)
    raise AssertionError("F unreachable")


@pytest.mark.parametrize("N,M", [(2, 1), (2, 4), (3, 3), (4, 2)])
def test_dfs_matches_explicit_walk(N, M):
    for leaf in range(N ** M):
        maze = TreeMaze(N, M, leaf)
        tr = classical_dfs(maze)
        assert tr.found and tr.total_steps == explicit_dfs(maze)


@pytest.mark.parametrize("N,M", [(2, 4), (3, 5), (2, 15)])
def test_dfs_extremes(N, M):
    assert dfs_steps(N, M, 0) == M + 1
    assert dfs_steps(N, M, N ** M - 1) == edge_count(N, M)


def test_dfs_mean_over_leaves():
    N, M = 3, 4
    E = edge_count(N, M)
    mean = np.mean([dfs_steps(N, M, f) for f in range(N ** M)])
    assert mean == pytest.approx((E + M + 1) / 2)


def test_dfs_random_placement_mean(rng):
    N, M = 2, 10
    E = edge_count(N, M)
    steps = [classical_dfs(TreeMaze(N, M, int(rng.integers(N ** M)))).total_steps for _ in range(10_000)]
    assert np.mean(steps) == pytest.approx(E / 2, rel=0.02)


def test_dfs_success_curve_linear():
    N, M = 2, 10
    E = edge_count(N, M)
    steps = np.sort([dfs_steps(N, M, f) for f in range(N ** M)])
    frac = np.arange(1, steps.size + 1) / steps.size
    assert np.abs(frac - steps / E).max() < 0.02


def test_direct_certain_success(rng):
    maze = TreeMaze(2, 5, 3)
    tr = direct_f_search(maze, 20, 1.0, rng)
    assert tr.trials == 1 and tr.total_steps == 20 and tr.found
    assert tr.measurements[-1].edge == (maze.parent(maze.f_node), maze.f_node)


def test_direct_mean_trials(rng):
    maze = TreeMaze(2, 5, 3)
    p = 0.23
    trials = [direct_f_search(maze, 5, p, rng).trials for _ in range(100_000)]
    assert np.mean(trials) == pytest.approx(1 / p, rel=0.03)


def test_direct_cap(rng):
    tr = direct_f_search(TreeMaze(2, 5, 3), 100, 1e-6, rng, cap=1000)
    assert not tr.found and tr.total_steps <= 1000


def test_peak_schedules_match_full_engine():
    from treewalk.walk import find_first_peak

    for M in (3, 5):
        maze = TreeMaze(2, M, 1)
        assert path_peak(2, M) == pytest.approx(find_first_peak(maze, "path", 400))
        assert f_peak(2, M) == pytest.approx(find_first_peak(maze, "F", 400))


# -- movement --------------------------------------------------------------------

def test_movement_trace_invariants(rng):
    for _ in range(200):
        maze = TreeMaze(2, 6, int(rng.integers(64)))
        tr = movement_search(maze, rng=rng)
        assert tr.found
        last = tr.measurements[-1]
        assert last.edge == (maze.parent(maze.f_node), maze.f_node)
        assert tr.total_steps >= tr.trials == len(tr.measurements)
        assert all(m.on_path == (m.x is not None) for m in tr.measurements)


def test_movement_reduced_matches_full_engine():
    cfg = dict(N=2, M=4, runs=1500, algorithms=("movement",))
    red = run_benchmark(BenchmarkConfig(seed=1, engine="reduced", **cfg))[0]
    full = run_benchmark(BenchmarkConfig(seed=2, engine="full", **cfg))[0]
    assert abs(red.average_speed - full.average_speed) < 1.5 * math.hypot(red.ci95, full.ci95)


def test_reduced_sampling_matches_full_distribution(rng):
    full = TreeMaze(3, 4, 50)
    maze = freeze_below(full, (1, full.ancestor(full.f_node, 2)))
    assert maze.f_live and maze.live_depth == 3
    steps = REFERENCE_STEP_MODEL.steps(3, 3)
    n = 20_000
    a, b = {}, {}
    for _ in range(n):
        e = _measure_reduced(maze, steps, rng)
        a[e] = a.get(e, 0) + 1
        e = _measure_full(maze, steps, rng)
        b[e] = b.get(e, 0) + 1
    keys = sorted(set(a) | set(b))
    table = np.array([[a.get(k, 0) for k in keys], [b.get(k, 0) for k in keys]])
    table = table[:, table.sum(axis=0) >= 10]
    assert stats.chi2_contingency(table)[1] > 0.001


def test_base_case_m1(rng):
    full = TreeMaze(2, 3, 5)
    j = full.ancestor(full.f_node, 3)
    maze = freeze_below(full, (full.parent(j), j))
    assert maze.f_live and maze.live_depth == 1
    steps = REFERENCE_STEP_MODEL.steps(2, 1)
    basis, op = reduced_engine(2, 1)
    p_f = class_probabilities(op, steps)[basis.f_classes].sum()
    n = 20_000
    hits = sum(_measure_reduced(maze, steps, rng)[1] == maze.f_node for _ in range(n))
    assert abs(hits / n - p_f) < 4 * math.sqrt(p_f * (1 - p_f) / n)


def test_dead_tree_measurement_uniform(rng):
    maze = freeze_below(TreeMaze(2, 5, 0), (1, 3))
    assert maze.is_dead
    E = maze.live_edge_count
    edges = {e: i for i, e in enumerate(maze.live_edges())}
    counts = np.zeros(E)
    for _ in range(100_000):
        counts[edges[_measure_reduced(maze, 7, rng)]] += 1
    assert stats.chisquare(counts).pvalue > 0.001
    # the full engine measures directed states; they too are uniform
    s = initial_state(maze)
    labels = {}
    for _ in range(100_000):
        lab = sample_measurement(s, rng)
        labels[lab] = labels.get(lab, 0) + 1
    assert len(labels) == 2 * E
    assert stats.chisquare(list(labels.values())).pvalue > 0.001


def test_dead_tree_exit_probability(rng):
    maze = freeze_below(TreeMaze(2, 4, 0), (1, 3))
    assert maze.live_depth == 3 and maze.live_edge_count == 15
    n = 60_000
    leaf = sum(maze.role(_measure_reduced(maze, 5, rng)[1]) == "final" for _ in range(n))
    p = 8 / 15
    assert abs(leaf / n - p) < 4 * math.sqrt(p * (1 - p) / n)


@pytest.mark.parametrize("m", range(8, 13))
def test_dead_tree_exit_speed(m):
    assert 1.0 <= dead_tree_exit_speed(2, m) <= 1.6


def test_dead_tree_exit_speed_against_simulation(rng):
    """Monte Carlo of the dead-tree recursion agrees with the exact expectation."""
    N, m = 2, 6
    start = freeze_below(TreeMaze(N, m + 1, 0), (1, 3))
    assert start.live_depth == m
    total = 0
    runs = 4000
    for _ in range(runs):
        live = start
        while True:
            k = live.live_depth
            total += REFERENCE_STEP_MODEL.steps(N, k)
            e = _measure_reduced(live, 1, rng)
            if live.role(e[1]) == "final":
                break
            if e[1] != live.root:
                live = freeze_below(live, e)
    speed = total / runs / REFERENCE_STEP_MODEL.steps(N, m)
    assert speed == pytest.approx(dead_tree_exit_speed(N, m), rel=0.03)


@pytest.mark.parametrize("M", [4, 8, 12])
def test_movement_unfound_rate(M):
    r = run_benchmark(BenchmarkConfig(N=2, M=M, runs=1000, seed=M, algorithms=("movement",)))[0]
    assert r.unfound / r.runs < 1e-3


def test_movement_cap_flags_unfound(rng):
    tr = movement_search(TreeMaze(2, 10, 5), rng=rng, cap=10)
    assert not tr.found and tr.total_steps <= 10


# -- harness ----------------------------------------------------------------------

def test_single_run_report_is_trace_speed():
    cfg = BenchmarkConfig(N=2, M=5, runs=1, seed=42, algorithms=("classical",))
    r = run_benchmark(cfg)[0]
    base = np.random.default_rng(np.random.SeedSequence([42, 0]))
    maze = TreeMaze(2, 5, int(base.integers(32)))
    assert r.average_speed == classical_dfs(maze).total_steps / speed_normalizer(2, 5)
    assert r.ci95 == 0.0


def test_benchmark_deterministic_and_worker_independent():
    cfg = BenchmarkConfig(N=2, M=6, runs=64, seed=9)
    a = run_benchmark(cfg)
    b = run_benchmark(cfg)
    c = run_benchmark(cfg, workers=3)
    assert a == b == c
    assert benchmark_csv(a) == benchmark_csv(c)


def test_benchmark_rejects_unknown_algorithm():
    with pytest.raises(ConfigError):
        run_benchmark({"N": 2, "M": 4, "runs": 3, "seed": 0, "algorithms": ("grover",)})
    with pytest.raises(ConfigError):
        BenchmarkConfig(N=2, M=4, runs=0)


def test_quantum_speeds_at_least_one():
    for M in (3, 6, 9):
        for r in run_benchmark(BenchmarkConfig(N=2, M=M, runs=300, seed=M)):
            if r.algorithm != "classical":
                assert r.average_speed >= 1.0


def test_speedup_grows_with_m():
    ups = []
    for M in (6, 9, 12, 15):
        reps = run_benchmark(BenchmarkConfig(N=2, M=M, runs=600, seed=3, algorithms=("classical", "direct")))
        ups.append(next(r for r in reps if r.algorithm == "direct").speedup)
    assert all(b > a for a, b in zip(ups, ups[1:]))


@pytest.mark.parametrize("M", [8, 11, 14, 15])
def test_speed_ordering_n2(M):
    reps = {r.algorithm: r.average_speed for r in run_benchmark(BenchmarkConfig(N=2, M=M, runs=800, seed=5))}
    assert reps["movement"] <= reps["direct"] <= reps["classical"]


def test_csv_layout():
    reps = run_benchmark(BenchmarkConfig(N=2, M=4, runs=10, seed=1))
    lines = benchmark_csv(reps).split("\n")
    assert lines[0] == "N,M,algorithm,runs,mean_speed,ci95,mean_trials,reset_count"
    assert [l.split(",")[2] for l in lines[1:4]] == ["classical", "direct", "movement"]
