"""
Full Hilbert-space scattering walk on the live part of an N-Tree maze.

Amplitudes are real and indexed by local directed edge states of the live
sub-maze in its canonical BFS numbering: entry ``2k`` is the state heading
down edge ``k`` (towards the child node ``k + 1``), entry ``2k + 1`` the
state heading up the same edge. Junction ``v`` owns the child edges
``N(v-1)+1 .. N(v-1)+N``, which is what lets one step be written as a few
vectorised operations on an ``(junctions, N)`` view.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import InvalidState, NoPeakError
from .maze import DirectedEdgeState, TreeMaze, edge_count, level_offset

SNAPSHOT_MAGIC = b"QTW1"
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class LocalScattering:
    """Scattering coefficients of a vertex of degree ``n``."""

    n: int
    phase: int = 1

    @property
    def transmission(self) -> float:
        return 0.0 if self.n == 1 else 2.0 / self.n

    @property
    def reflection(self) -> float:
        return float(self.phase) if self.n == 1 else (self.n - 2) / self.n


class Layout:
    """Index arithmetic for the canonical maze of branching N and depth ``depth``."""

    def __init__(self, N: int, depth: int, marked: Optional[int]):
        self.N = N
        self.depth = depth
        self.marked = marked
        self.n_edges = edge_count(N, depth)
        self.n_states = 2 * self.n_edges
        self.n_junctions = (N ** depth - 1) // (N - 1)
        self.t = 2.0 / (N + 1)
        phases = np.ones(N ** depth)
        if marked is not None:
            phases[marked] = -1.0
        self.leaf_phases = phases

    def path_edges(self, leaf: int) -> np.ndarray:
        """Local edge indices of the root->leaf path, ordered by coordinate x."""
        d = self.depth
        return np.array(
            [level_offset(self.N, L) + leaf // self.N ** (d + 1 - L) - 1 for L in range(1, d + 2)],
            dtype=np.int64,
        )

    def leaf_edge(self, leaf: int) -> int:
        return self.n_junctions + leaf

    def edge_depths(self) -> np.ndarray:
        """Coordinate (depth) of every local edge."""
        out = np.empty(self.n_edges, dtype=np.int64)
        for L in range(1, self.depth + 2):
            out[level_offset(self.N, L) - 1: level_offset(self.N, L + 1) - 1] = L
        return out

    def state_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """(from, to) local node arrays for every directed state."""
        child = np.arange(1, self.n_edges + 1, dtype=np.int64)
        parent = np.where(child >= 2, (child - 2) // self.N + 1, 0)
        frm = np.empty(self.n_states, dtype=np.int64)
        to = np.empty(self.n_states, dtype=np.int64)
        frm[0::2], to[0::2] = parent, child
        frm[1::2], to[1::2] = child, parent
        return frm, to

    def step(self, amps: np.ndarray) -> np.ndarray:
        down, up = amps[0::2], amps[1::2]
        J, N = self.n_junctions, self.N
        child_up = up[1:].reshape(J, N)
        sigma_t = self.t * (down[:J] + child_up.sum(axis=1))
        out = np.empty_like(amps)
        new_down, new_up = out[0::2], out[1::2]
        new_down[0] = up[0]                      # switched-off root end reflects +1
        new_up[:J] = sigma_t - down[:J]         # t*sigma - incoming, since t + r = 1
        new_down[1:] = (sigma_t[:, None] - child_up).ravel()
        new_up[J:] = self.leaf_phases * down[J:]
        return out


@lru_cache(maxsize=64)
def _layout(N: int, depth: int, marked: Optional[int]) -> Layout:
    return Layout(N, depth, marked)


def layout_for(maze: TreeMaze) -> Layout:
    marked = maze.local_f_leaf if (maze.f_live and maze.f_phase == -1) else None
    return _layout(maze.N, maze.live_depth, marked)


@dataclass
class WalkState:
    maze: TreeMaze
    amplitudes: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def probabilities(self) -> np.ndarray:
        return self.amplitudes ** 2


def _check(maze: TreeMaze, s: WalkState) -> Layout:
    lay = layout_for(maze)
    if s.amplitudes.shape != (lay.n_states,):
        raise InvalidState(
            f"state has {s.amplitudes.shape[0]} amplitudes, live maze needs {lay.n_states}"
        )
    return lay


def initial_state(maze: TreeMaze) -> WalkState:
    n = 2 * maze.live_edge_count
    return WalkState(maze, np.full(n, 1.0 / np.sqrt(n)))


def step(maze: TreeMaze, s: WalkState) -> WalkState:
    lay = _check(maze, s)
    return WalkState(maze, lay.step(s.amplitudes))


def evolve(maze: TreeMaze, s: WalkState, n_steps: int) -> WalkState:
    if n_steps < 0:
        raise InvalidState("n_steps must be >= 0")
    lay = _check(maze, s)
    a = s.amplitudes
    for _ in range(n_steps):
        a = lay.step(a)
    return WalkState(maze, a.copy() if n_steps == 0 else a)


def state_labels(maze: TreeMaze) -> list[DirectedEdgeState]:
    frm, to = layout_for(maze).state_nodes()
    frm, to = maze.local_to_global_array(frm), maze.local_to_global_array(to)
    return [DirectedEdgeState(int(a), int(b)) for a, b in zip(frm, to)]


def _canonical_parent(N: int, child: int) -> int:
    return (child - 2) // N + 1 if child >= 2 else 0


def state_index(maze: TreeMaze, state: DirectedEdgeState) -> int:
    a, b = maze.global_to_local(state.from_node), maze.global_to_local(state.to_node)
    if b >= 1 and _canonical_parent(maze.N, b) == a:
        return 2 * (b - 1)
    if a >= 1 and _canonical_parent(maze.N, a) == b:
        return 2 * (a - 1) + 1
    raise InvalidState(f"{state} is not a live directed edge state")


def label_of(maze: TreeMaze, index: int) -> DirectedEdgeState:
    k = index // 2
    child = k + 1
    parent = _canonical_parent(maze.N, child)
    a, b = (parent, child) if index % 2 == 0 else (child, parent)
    return DirectedEdgeState(maze.local_to_global(a), maze.local_to_global(b))


def f_probability(maze: TreeMaze, s: WalkState) -> float:
    """Probability on the two states of F's edge (or its analogue in a dead tree)."""
    lay = _check(maze, s)
    k = lay.leaf_edge(maze.local_f_leaf)
    return float(s.amplitudes[2 * k] ** 2 + s.amplitudes[2 * k + 1] ** 2)


def path_probability(maze: TreeMaze, s: WalkState, include_root_edge: bool = False) -> float:
    lay = _check(maze, s)
    if not maze.f_live:
        return 0.0
    edges = lay.path_edges(maze.local_f_leaf)
    if not include_root_edge:
        edges = edges[1:]
    a = s.amplitudes
    return float(np.sum(a[2 * edges] ** 2) + np.sum(a[2 * edges + 1] ** 2))


def probability_trace(maze: TreeMaze, n_steps: int, include_root_edge: bool = False):
    """(f_prob, path_prob) arrays for steps 0..n_steps from the uniform state."""
    s = initial_state(maze)
    lay = layout_for(maze)
    f_out = np.empty(n_steps + 1)
    p_out = np.empty(n_steps + 1)
    a = s.amplitudes
    for n in range(n_steps + 1):
        st = WalkState(maze, a)
        f_out[n] = f_probability(maze, st)
        p_out[n] = path_probability(maze, st, include_root_edge)
        if n < n_steps:
            a = lay.step(a)
    return f_out, p_out


def first_peak(trace, floor: float = 1e-9) -> tuple[int, float]:
    """Step and value of the first peak of a periodic probability trace.

    The first lobe starts where the trace first climbs above half of its
    largest rise over the initial value, and ends where it falls back
    below a tenth of that rise. The peak is the maximum inside the lobe,
    which ignores the fast small-amplitude wiggles that ride on the slow
    envelope (the F observable has them from step 3 on).
    """
    x = np.asarray(trace, dtype=float)
    x0 = x[0]
    rise = x.max() - x0
    if rise <= floor:
        raise NoPeakError("observable never rises above its initial value")
    start = int(np.argmax(x > x0 + 0.5 * rise))
    below = np.nonzero(x[start:] <= x0 + 0.1 * rise)[0]
    end = start + int(below[0]) if below.size else x.size
    i = start + int(np.argmax(x[start:end]))
    if i == x.size - 1:
        raise NoPeakError("observable still rising at the end of the scan")
    return i, float(x[i])


def find_first_peak(maze: TreeMaze, observable: str, max_steps: int,
                    include_root_edge: bool = False) -> tuple[int, float]:
    if observable not in ("F", "path"):
        raise ValueError("observable must be 'F' or 'path'")
    f, p = probability_trace(maze, max_steps, include_root_edge)
    return first_peak(f if observable == "F" else p)


def sample_measurement(s: WalkState, rng: np.random.Generator) -> DirectedEdgeState:
    p = s.probabilities
    total = p.sum()
    if abs(total - 1.0) > 1e-6:
        raise InvalidState(f"state norm^2 is {total}, expected 1")
    u = rng.random()
    i = int(np.searchsorted(np.cumsum(p), u * total, side="right"))
    return label_of(s.maze, min(i, p.size - 1))


def write_trace_csv(out, f_prob, path_prob) -> None:
    """Write (step, f_prob, path_prob) rows with a header to a path or text stream."""
    own = isinstance(out, (str, bytes)) or hasattr(out, "__fspath__")
    fh = open(out, "w", newline="") if own else out
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "f_prob", "path_prob"])
        for n, (fp, pp) in enumerate(zip(f_prob, path_prob)):
            w.writerow([n, repr(float(fp)), repr(float(pp))])
    finally:
        if own:
            fh.close()


def trace_csv_text(f_prob, path_prob) -> str:
    buf = io.StringIO()
    write_trace_csv(buf, f_prob, path_prob)
    return buf.getvalue()


def save_snapshot(path, s: WalkState) -> None:
    m = s.maze
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, m.N, m.live_depth, m.live_edge_count))
        fh.write(s.amplitudes.astype("<f8").tobytes())


def load_snapshot(path, maze: TreeMaze) -> WalkState:
    with open(path, "rb") as fh:
        magic, N, M, E = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != SNAPSHOT_MAGIC:
            raise InvalidState("not a walk snapshot")
        if (N, M, E) != (maze.N, maze.live_depth, maze.live_edge_count):
            raise InvalidState(f"snapshot is for N={N}, M={M}, E={E}")
        amps = np.frombuffer(fh.read(), dtype="<f8").astype(float)
    if amps.size != 2 * E:
        raise InvalidState("truncated snapshot")
    return WalkState(maze, amps)
