"""Shared observation / action space constants for the navigation task.

Observation: 21 normalized lidar ranges in [0, 1], then goal distance in
[0, 1] and goal heading in [-1, 1]. Six discrete actions.
"""

from .intervals import Interval, IntervalBox

N_LIDAR = 21
OBS_DIM = N_LIDAR + 2
N_ACTIONS = 6

# indices into the observation vector
GOAL_DIST_IDX = N_LIDAR
GOAL_HEADING_IDX = N_LIDAR + 1


def default_obs_domain() -> IntervalBox:
    """Legal ranges for each observation component."""
    dims = [Interval(0.0, 1.0)] * N_LIDAR
    dims.append(Interval(0.0, 1.0))    # goal distance
    dims.append(Interval(-1.0, 1.0))   # goal heading
    return IntervalBox(tuple(dims))
