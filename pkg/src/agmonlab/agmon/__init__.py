"""Agmon distances by fast marching, graph search and path minimisation."""

from .distance import (DIJKSTRA, FAST_MARCHING, DistanceField, dijkstra_oracle,
                       eikonal_residual, oracle_gap, read_binary, solve_eikonal)
from .paths import (Geodesic, PathOptions, TimedPath, action, jacobi_reparametrize,
                    minimize_action, minimize_path, path_length, travel_time_bound)

__all__ = [
    "DIJKSTRA", "FAST_MARCHING", "DistanceField", "Geodesic", "PathOptions", "TimedPath",
    "action", "dijkstra_oracle", "eikonal_residual", "jacobi_reparametrize",
    "minimize_action", "minimize_path", "oracle_gap", "path_length", "read_binary",
    "solve_eikonal", "travel_time_bound",
]
