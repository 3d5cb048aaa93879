"""Numerical BSDE solver built on truncated Wiener chaos decompositions."""

from .brownian import BrownianBatch, SeedSpec, sample_batch
from .chaos import (
    ChaosCoefficients,
    EvalPoint,
    eval_Y,
    eval_Z,
    eval_Zbar,
    make_eval_point,
    project_terminal,
    propagate_Y_coefficients,
)
from .grids import RefinedGrid, TimeGrid, build_refined_grid, build_time_grid, locate_cell
from .hermite import hermite_eval, hermite_eval_all
from .multiindex import IndexSet, MultiIndex, build_index_set, pad_index, truncate_prefix
from .problems import Problem, make_problem
from .schemes import BsdeResult, EulerParams, run_euler, run_picard, simulate_solution_paths

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
