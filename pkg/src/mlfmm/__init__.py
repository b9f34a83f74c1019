"""Classic and multi-level fast marching for minimum-time problems on boxes."""
from .eikonal import (FrontSets, SpeedField, ValueField, inverse_kruzkov, kruzkov, local_update,
                      partial_fast_march)
from .estimators import FastMarching, MultiLevelFastMarching
from .grid import (Ball, Box, BoxDomain, GridSpec, RestrictedGrid, Union, axis_neighbors,
                   node_to_point, nodes_in_region)
from .mlfm import (LevelSchedule, MlfmResult, bidirectional_coarse_solve, combine_fv, extract_path,
                   refine_grid, run_multilevel, schedule_params, select_active)
from .problems import ProblemSpec, brute_force_values, paper_benchmark, variable_speed_field

__version__ = "0.1.0"

__all__ = [
    "Ball", "Box", "BoxDomain", "FastMarching", "FrontSets", "GridSpec", "LevelSchedule",
    "MlfmResult", "MultiLevelFastMarching", "ProblemSpec", "RestrictedGrid", "SpeedField",
    "Union", "ValueField", "axis_neighbors", "bidirectional_coarse_solve", "brute_force_values",
    "combine_fv", "extract_path", "inverse_kruzkov", "kruzkov", "local_update", "node_to_point",
    "nodes_in_region", "paper_benchmark", "partial_fast_march", "refine_grid", "run_multilevel",
    "schedule_params", "select_active", "variable_speed_field",
]
