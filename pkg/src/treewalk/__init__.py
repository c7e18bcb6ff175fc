"""Scattering quantum walks and search strategies on N-Tree mazes."""

from .analytics import REFERENCE_STEP_MODEL, StepModel, TrialModel, fit_step_model, u_steps
from .maze import DirectedEdgeState, TreeMaze, build_maze, edge_count, freeze_below, path_coordinate
from .reduced import build_reduced, eigensystem, reduced_engine
from .search import classical_dfs, direct_f_search, movement_search, run_benchmark
from .walk import (
    WalkState, evolve, f_probability, find_first_peak, initial_state, path_probability, step,
)

__version__ = "0.1.0"
