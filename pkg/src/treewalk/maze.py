"""
N-Tree maze graphs.

Nodes are numbered in breadth-first level order. The start node S is 0,
the single first junction is 1, and level ``l >= 1`` holds ``N**(l-1)``
nodes. Junctions occupy levels 1..M and the final nodes (leaves) sit on
level M+1. Every node other than S owns exactly one edge, the one to its
parent, so an undirected edge is identified by its child node.

A maze keeps a single "active root" child node. The live graph is the
subtree below that node plus its parent, which acts as a degree-1 end
node (the switched-off junction, or S itself for the full maze). Frozen
nodes are implied by the root and never deleted, so resetting is just
restoring the root to 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterator, NamedTuple, Optional

import numpy as np

from .errors import InvalidEdge, InvalidMove, InvalidParameters

START = 0
FIRST_JUNCTION = 1


class DirectedEdgeState(NamedTuple):
    """Basis state |from_node, to_node>: the particle heading into ``to_node``."""

    from_node: int
    to_node: int


Edge = tuple[int, int]


def edge_count(N: int, M: int) -> int:
    """Edges of a fully active maze, (N^(M+1) - 1) / (N - 1)."""
    return (N ** (M + 1) - 1) // (N - 1)


def level_offset(N: int, level: int) -> int:
    """Index of the first node on ``level``."""
    if level == 0:
        return 0
    return 1 + (N ** (level - 1) - 1) // (N - 1)


@dataclass(frozen=True)
class TreeMaze:
    """An N-Tree maze with branching ``N``, depth ``M`` and marked leaf ``f_leaf``.

    ``root`` is the child node of the active root edge (1 for the fully
    active maze). ``f_phase`` is the reflection phase of the final node F;
    setting it to +1 removes the mark.
    """

    N: int
    M: int
    f_leaf: int
    root: int = FIRST_JUNCTION
    f_phase: int = -1

    def __post_init__(self):
        if self.N < 2:
            raise InvalidParameters(f"branching N must be >= 2, got {self.N}")
        if self.M < 1:
            raise InvalidParameters(f"depth M must be >= 1, got {self.M}")
        if not 0 <= self.f_leaf < self.N ** self.M:
            raise InvalidParameters(
                f"f_leaf must lie in [0, {self.N ** self.M}), got {self.f_leaf}"
            )
        if self.f_phase not in (1, -1):
            raise InvalidParameters("f_phase must be +1 or -1")
        if not FIRST_JUNCTION <= self.root < self.n_nodes:
            raise InvalidParameters(f"root node {self.root} out of range")
        if self.level(self.root) > self.M:
            raise InvalidParameters("the active root edge cannot be a final-node edge")

    # -- node arithmetic -------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return edge_count(self.N, self.M) + 1

    @property
    def n_edges(self) -> int:
        """Edges of the fully active maze."""
        return edge_count(self.N, self.M)

    @property
    def n_leaves(self) -> int:
        return self.N ** self.M

    def level(self, v: int) -> int:
        if v == START:
            return 0
        level = 1
        while level_offset(self.N, level + 1) <= v:
            level += 1
        return level

    def position(self, v: int) -> int:
        return v - level_offset(self.N, self.level(v))

    def node(self, level: int, position: int) -> int:
        return level_offset(self.N, level) + position

    def parent(self, v: int) -> int:
        if v == START:
            raise InvalidParameters("S has no parent")
        if v == FIRST_JUNCTION:
            return START
        return (v - 2) // self.N + 1

    def children(self, v: int) -> range:
        if v == START:
            return range(1, 2)
        if self.level(v) > self.M:
            return range(0)
        first = self.N * (v - 1) + 2
        return range(first, first + self.N)

    def neighbours(self, v: int) -> list[int]:
        out = [] if v == START else [self.parent(v)]
        out.extend(self.children(v))
        return out

    def degree(self, v: int) -> int:
        return len(self.neighbours(v))

    def leaf_node(self, leaf: int) -> int:
        return level_offset(self.N, self.M + 1) + leaf

    @property
    def f_node(self) -> int:
        return self.leaf_node(self.f_leaf)

    def ancestor(self, v: int, level: int) -> int:
        """Ancestor of ``v`` on ``level`` (``v`` itself when on that level)."""
        lv = self.level(v)
        if level > lv:
            raise InvalidParameters("ancestor level below the node")
        if level == 0:
            return START
        return self.node(level, self.position(v) // self.N ** (lv - level))

    def role(self, v: int) -> str:
        if v == START:
            return "start"
        return "final" if self.level(v) == self.M + 1 else "junction"

    # -- live sub-maze ----------------------------------------------------

    @property
    def root_edge(self) -> Edge:
        return (self.parent(self.root), self.root)

    @property
    def root_level(self) -> int:
        return self.level(self.root)

    @property
    def live_depth(self) -> int:
        """Junction layers of the live sub-maze."""
        return self.M + 1 - self.root_level

    @property
    def is_full(self) -> bool:
        return self.root == FIRST_JUNCTION

    @property
    def f_live(self) -> bool:
        return self.ancestor(self.f_node, self.root_level) == self.root

    @property
    def is_dead(self) -> bool:
        return not self.f_live

    @property
    def local_f_leaf(self) -> int:
        """F's leaf index inside the live sub-maze.

        For a dead tree this is the leaf reached by F's trailing choices,
        i.e. the leaf occupying F's place in the analogous subtree.
        """
        span = self.N ** self.live_depth
        return self.f_leaf % span

    @property
    def live_edge_count(self) -> int:
        return edge_count(self.N, self.live_depth)

    def is_live_node(self, v: int) -> bool:
        if v == self.parent(self.root):
            return True
        lv = self.level(v)
        return lv >= self.root_level and self.ancestor(v, self.root_level) == self.root

    def is_live_edge(self, edge: Edge) -> bool:
        try:
            child = self.edge_child(edge)
        except InvalidEdge:
            return False
        return self.is_live_node(child) and child != self.parent(self.root)

    def frozen_mask(self) -> np.ndarray:
        """Per-node boolean, True for nodes outside the live graph."""
        mask = np.ones(self.n_nodes, dtype=bool)
        for v in self.live_nodes():
            mask[v] = False
        return mask

    def live_nodes(self) -> Iterator[int]:
        yield self.parent(self.root)
        r_lvl, r_pos = self.root_level, self.position(self.root)
        for depth in range(self.live_depth + 1):
            width = self.N ** depth
            start = self.node(r_lvl + depth, r_pos * width)
            yield from range(start, start + width)

    def live_edges(self) -> Iterator[Edge]:
        for v in self.live_nodes():
            if v != self.parent(self.root):
                yield (self.parent(v), v)

    # -- local <-> global indexing ----------------------------------------

    def local_to_global(self, local: int) -> int:
        """Map a node index of the canonical (N, live_depth) maze to this maze."""
        if local == START:
            return self.parent(self.root)
        lvl = 1
        while level_offset(self.N, lvl + 1) <= local:
            lvl += 1
        pos = local - level_offset(self.N, lvl)
        r_pos = self.position(self.root)
        return self.node(self.root_level + lvl - 1, r_pos * self.N ** (lvl - 1) + pos)

    def local_to_global_array(self, local: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`local_to_global` for the canonical BFS numbering."""
        local = np.asarray(local, dtype=np.int64)
        out = np.empty_like(local)
        out[local == START] = self.parent(self.root)
        r_lvl, r_pos = self.root_level, self.position(self.root)
        for lvl in range(1, self.live_depth + 2):
            lo, hi = level_offset(self.N, lvl), level_offset(self.N, lvl + 1)
            sel = (local >= lo) & (local < hi)
            if sel.any():
                width = self.N ** (lvl - 1)
                out[sel] = (level_offset(self.N, r_lvl + lvl - 1)
                            + r_pos * width + (local[sel] - lo))
        return out

    def global_to_local(self, v: int) -> int:
        if v == self.parent(self.root):
            return START
        if not self.is_live_node(v):
            raise InvalidEdge(f"node {v} is frozen")
        lvl = self.level(v) - self.root_level + 1
        r_pos = self.position(self.root)
        pos = self.position(v) - r_pos * self.N ** (lvl - 1)
        return level_offset(self.N, lvl) + pos

    def edge_child(self, edge: Edge) -> int:
        a, b = edge
        if a != START and self.parent(a) == b:
            return a
        if b != START and self.parent(b) == a:
            return b
        raise InvalidEdge(f"{edge} is not an edge of the maze")

    def on_live_path(self, child: int) -> bool:
        """True if the edge owned by ``child`` lies on the live root->F path."""
        if not self.f_live:
            return False
        return self.ancestor(self.f_node, self.level(child)) == child

    # -- mutation (returns new values) ------------------------------------

    def reset(self) -> "TreeMaze":
        return replace(self, root=FIRST_JUNCTION)

    def unmarked(self) -> "TreeMaze":
        return replace(self, f_phase=1)

    # -- serialisation ----------------------------------------------------

    def to_dict(self) -> dict:
        d = {"N": self.N, "M": self.M, "f_leaf": self.f_leaf}
        if not self.is_full:
            d["frozen_root"] = list(self.root_edge)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "TreeMaze":
        maze = cls(int(d["N"]), int(d["M"]), int(d["f_leaf"]))
        if d.get("frozen_root") is not None:
            maze = replace(maze, root=maze.edge_child(tuple(d["frozen_root"])))
        return maze

    @classmethod
    def from_json(cls, text: str) -> "TreeMaze":
        return cls.from_dict(json.loads(text))


def build_maze(N: int, M: int, f_leaf: int) -> TreeMaze:
    return TreeMaze(N, M, f_leaf)


def path_coordinate(maze: TreeMaze, edge: Edge) -> Optional[int]:
    """Coordinate x of ``edge`` along the live root->F path, None if off-path.

    x = 1 is the live root edge and x = live_depth + 1 the edge into F.
    """
    if not maze.is_live_edge(edge):
        raise InvalidEdge(f"{edge} is frozen or not an edge")
    child = maze.edge_child(edge)
    if not maze.on_live_path(child):
        return None
    return maze.level(child) - maze.root_level + 1


def freeze_below(maze: TreeMaze, edge: Edge) -> TreeMaze:
    """Switch off the root-side node of ``edge`` and make ``edge`` the new root edge."""
    if not maze.is_live_edge(edge):
        raise InvalidEdge(f"{edge} is frozen or not an edge")
    child = maze.edge_child(edge)
    if maze.role(child) == "final":
        raise InvalidMove("final-node edges are checked, not moved to")
    return replace(maze, root=child)
