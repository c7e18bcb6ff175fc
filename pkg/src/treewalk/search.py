"""
Search strategies on an N-Tree maze and the Monte Carlo speed harness.

Speeds are total steps divided by U(N, M), the first path-probability
peak of the full maze found by scanning the reduced walk. Classical steps
are moves of the depth-first walker onto a node it has not visited yet;
quantum steps are unitary applications. Measurements cost nothing.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .analytics import REFERENCE_STEP_MODEL, StepModel
from .errors import ConfigError, InvalidParameters, NoPeakError
from .maze import Edge, TreeMaze, edge_count, freeze_below, level_offset
from .reduced import class_labels, reduced_engine, reduced_trace, class_probabilities
from .walk import evolve, first_peak, initial_state, sample_measurement

ALGORITHMS = ("classical", "direct", "movement")
DEFAULT_CAP = 10 ** 6


@dataclass
class Measurement:
    live_m: int
    edge: Edge
    on_path: bool
    x: Optional[int]


@dataclass
class SearchTrace:
    total_steps: int = 0
    trials: int = 0
    measurements: list = field(default_factory=list)
    found: bool = False
    resets: int = 0


@dataclass(frozen=True)
class SpeedReport:
    algorithm: str
    N: int
    M: int
    runs: int
    average_speed: float
    ci95: float
    mean_trials: float
    reset_count: int
    unfound: int
    normalizer: int
    classical_average_speed: Optional[float] = None

    @property
    def speedup(self) -> Optional[float]:
        if self.classical_average_speed is None:
            return None
        return self.classical_average_speed / self.average_speed


# -- schedules ----------------------------------------------------------------

@lru_cache(maxsize=None)
def path_peak(N: int, M: int) -> tuple[int, float]:
    """Scanned first peak (step, probability) of the path observable of the full maze."""
    return _scan(N, M, observable=1)


@lru_cache(maxsize=None)
def f_peak(N: int, M: int) -> tuple[int, float]:
    """Scanned first peak (step, probability) of F's edge in the full maze."""
    return _scan(N, M, observable=0)


def _scan(N: int, M: int, observable: int) -> tuple[int, float]:
    _, op = reduced_engine(N, M)
    guess = REFERENCE_STEP_MODEL.steps(N, M)
    n = max(64, 4 * guess)
    while True:
        trace = reduced_trace(op, n)[observable]
        try:
            return first_peak(trace)
        except NoPeakError:
            if n > 10 ** 7:
                raise
            n *= 2


def speed_normalizer(N: int, M: int) -> int:
    return path_peak(N, M)[0]


# -- classical ----------------------------------------------------------------

def leaf_digits(N: int, M: int, leaf: int) -> list[int]:
    """Branch choices of ``leaf`` from the first junction down."""
    return [(leaf // N ** (M - L)) % N for L in range(1, M + 1)]


def dfs_steps(N: int, M: int, leaf: int) -> int:
    """Moves onto new nodes made by a depth-first walker trying branches in order."""
    return (M + 1) + sum(
        c * edge_count(N, M - L) for L, c in enumerate(leaf_digits(N, M, leaf), start=1)
    )


def classical_dfs(maze: TreeMaze, rng=None) -> SearchTrace:
    """Depth-first search from S with a fixed branch order.

    ``rng`` is accepted for interface symmetry; F's placement is fixed by
    the maze, so the walk itself is deterministic.
    """
    if not maze.is_full:
        raise InvalidParameters("classical search starts from the full maze")
    steps = dfs_steps(maze.N, maze.M, maze.f_leaf)
    return SearchTrace(total_steps=steps, trials=1, found=True)


# -- direct F ---------------------------------------------------------------

def direct_f_search(maze: TreeMaze, f_schedule: int, p_f: float, rng,
                    cap: int = DEFAULT_CAP) -> SearchTrace:
    """Repeat prepare, evolve ``f_schedule`` steps, measure, until F's edge comes up.

    Only the successful measurement is recorded in the trace.
    """
    if f_schedule < 1 or not 0.0 < p_f <= 1.0:
        raise InvalidParameters("need f_schedule >= 1 and p_f in (0, 1]")
    trials = int(rng.geometric(p_f))
    max_trials = cap // f_schedule
    if trials > max_trials:
        return SearchTrace(total_steps=max_trials * f_schedule, trials=max_trials)
    f = maze.f_node
    m = Measurement(maze.M, (maze.parent(f), f), True, maze.M + 1)
    return SearchTrace(total_steps=trials * f_schedule, trials=trials,
                       measurements=[m], found=True)


# -- movement -----------------------------------------------------------------

@lru_cache(maxsize=None)
def _class_cdf(N: int, m: int, steps: int) -> np.ndarray:
    p = class_probabilities(reduced_engine(N, m)[1], steps)
    c = np.cumsum(p)
    return c / c[-1]


def _sample_class_edge(maze: TreeMaze, label, rng) -> int:
    """Local child node of a uniformly chosen concrete edge inside ``label``."""
    N, m = maze.N, maze.live_depth
    d, s, _ = label
    leaf = maze.local_f_leaf
    on = leaf // N ** (m + 1 - s)  # position of the on-path node at level s
    if s == d:
        pos = on
    else:
        k = int(rng.integers(N - 1))
        fd = (leaf // N ** (m - s)) % N
        branch = on * N + (k if k < fd else k + 1)
        width = N ** (d - 1 - s)
        pos = branch * width + int(rng.integers(width))
    return level_offset(N, d) + pos


def _measure_reduced(maze: TreeMaze, steps: int, rng) -> Edge:
    N, m = maze.N, maze.live_depth
    if maze.f_live:
        cdf = _class_cdf(N, m, steps)
        i = min(int(np.searchsorted(cdf, rng.random(), side="right")), cdf.size - 1)
        child = _sample_class_edge(maze, class_labels(m)[i], rng)
    else:
        # uniform fixed point: every live directed state is equally likely
        child = int(rng.integers(edge_count(N, m))) + 1
    g = maze.local_to_global(child)
    return (maze.parent(g), g)


def _measure_full(maze: TreeMaze, steps: int, rng) -> Edge:
    s = evolve(maze, initial_state(maze), steps)
    st = sample_measurement(s, rng)
    a, b = st
    return (a, b) if b != 0 and maze.parent(b) == a else (b, a)


def movement_search(maze: TreeMaze, step_model: StepModel = REFERENCE_STEP_MODEL, rng=None,
                    cap: int = DEFAULT_CAP, engine: str = "reduced") -> SearchTrace:
    """Measure-and-freeze search.

    Each preparation evolves the live sub-maze for U(N, M') steps from its
    uniform state and measures. F's edge ends the search, a wrong final
    node sends the walker back to the full maze, the live root edge costs
    a re-preparation, and any other edge becomes the new live root.
    """
    if engine not in ("reduced", "full"):
        raise ConfigError(f"unknown engine {engine!r}")
    if not maze.is_full:
        raise InvalidParameters("movement search starts from the full maze")
    measure = _measure_reduced if engine == "reduced" else _measure_full
    tr = SearchTrace()
    live = maze
    while True:
        m = live.live_depth
        steps = step_model.steps(maze.N, m)
        if tr.total_steps + steps > cap:
            return tr
        tr.total_steps += steps
        tr.trials += 1
        edge = measure(live, steps, rng)
        child = edge[1]
        on = live.on_live_path(child)
        x = live.level(child) - live.root_level + 1
        tr.measurements.append(Measurement(m, edge, on, x if on else None))
        if live.role(child) == "final":
            if child == maze.f_node:
                tr.found = True
                return tr
            tr.resets += 1
            live = live.reset()
        elif child == live.root:
            continue
        else:
            live = freeze_below(live, edge)


def dead_tree_exit_steps(N: int, m: int, step_model: StepModel = REFERENCE_STEP_MODEL) -> float:
    """Expected unitary steps spent inside a dead tree of depth ``m`` before a leaf is measured.

    Measurements are uniform over the live directed states, so an edge at
    depth d comes up with probability N^(d-1)/E'.
    """
    W = {}
    for k in range(1, m + 1):
        E = edge_count(N, k)
        p = [N ** (d - 1) / E for d in range(1, k + 2)]
        rest = sum(p[d - 1] * W[k + 1 - d] for d in range(2, k + 1))
        W[k] = (step_model.steps(N, k) + rest) / (1.0 - p[0])
    return W[m]


def dead_tree_exit_speed(N: int, m: int, step_model: StepModel = REFERENCE_STEP_MODEL) -> float:
    return dead_tree_exit_steps(N, m, step_model) / step_model.steps(N, m)


# -- benchmark harness --------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkConfig:
    N: int
    M: int
    runs: int
    seed: int = 0
    algorithms: tuple = ALGORITHMS
    engine: str = "reduced"
    cap: int = DEFAULT_CAP
    step_model: StepModel = REFERENCE_STEP_MODEL

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ConfigError(f"unknown algorithm(s) {bad}; choose from {list(ALGORITHMS)}")
        if self.engine not in ("reduced", "full"):
            raise ConfigError(f"unknown engine {self.engine!r}")
        if self.N < 2 or self.M < 1:
            raise ConfigError("need N >= 2 and M >= 1")


def _run_one(cfg: BenchmarkConfig, run: int) -> dict:
    base = np.random.default_rng(np.random.SeedSequence([cfg.seed, run]))
    maze = TreeMaze(cfg.N, cfg.M, int(base.integers(cfg.N ** cfg.M)))
    out = {}
    for alg in cfg.algorithms:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, run, ALGORITHMS.index(alg) + 1]))
        if alg == "classical":
            tr = classical_dfs(maze, rng)
        elif alg == "direct":
            step, p = f_peak(cfg.N, cfg.M)
            tr = direct_f_search(maze, step, p, rng, cfg.cap)
        else:
            tr = movement_search(maze, cfg.step_model, rng, cfg.cap, cfg.engine)
        out[alg] = (tr.total_steps, tr.trials, tr.resets, tr.found)
    return out


def _run_chunk(args):
    cfg, runs = args
    return [(r, _run_one(cfg, r)) for r in runs]


def run_benchmark(config, workers: int = 1) -> list[SpeedReport]:
    """Per-algorithm speed reports, in canonical algorithm order.

    Results are independent of ``workers``: each run has its own seeded
    stream and the reduction is done over runs sorted by index.
    """
    cfg = config if isinstance(config, BenchmarkConfig) else BenchmarkConfig(**config)
    idx = list(range(cfg.runs))
    if workers > 1 and cfg.runs > 1:
        chunks = [(cfg, idx[i::workers]) for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            pairs = [p for chunk in ex.map(_run_chunk, chunks) for p in chunk]
    else:
        pairs = _run_chunk((cfg, idx))
    pairs.sort(key=lambda p: p[0])
    U = speed_normalizer(cfg.N, cfg.M)
    reports = {}
    for alg in ALGORITHMS:
        if alg not in cfg.algorithms:
            continue
        rows = [res[alg] for _, res in pairs]
        speeds = np.array([r[0] for r in rows], dtype=float) / U
        ci = 1.96 * speeds.std(ddof=1) / math.sqrt(len(speeds)) if len(speeds) > 1 else 0.0
        reports[alg] = SpeedReport(
            algorithm=alg, N=cfg.N, M=cfg.M, runs=cfg.runs,
            average_speed=math.fsum(speeds) / len(speeds), ci95=float(ci),
            mean_trials=math.fsum(r[1] for r in rows) / len(rows),
            reset_count=sum(r[2] for r in rows),
            unfound=sum(1 for r in rows if not r[3]),
            normalizer=U,
        )
    if "classical" in reports:
        c = reports["classical"].average_speed
        reports = {k: _with_classical(v, c) for k, v in reports.items()}
    return list(reports.values())


def _with_classical(r: SpeedReport, c: float) -> SpeedReport:
    return replace(r, classical_average_speed=c)


BENCH_COLUMNS = ("N", "M", "algorithm", "runs", "mean_speed", "ci95", "mean_trials", "reset_count")


def benchmark_csv(reports: Sequence[SpeedReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for r in sorted(reports, key=lambda r: (r.N, r.M, r.algorithm)):
        w.writerow([r.N, r.M, r.algorithm, r.runs, repr(r.average_speed), repr(r.ci95),
                    repr(r.mean_trials), r.reset_count])
    return buf.getvalue()
