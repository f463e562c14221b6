"""Grid-world terrain, sensing, motion, planning and episode sampling."""

from .episodes import (DEFAULT_BUCKETS, DifficultyIndex, EpisodeSpec, bucket_of, build_holdout_sets,
                       load_episodes, sample_episode, save_episodes)
from .grid import CAR, GROUND, HOUSE, TREE, GridWorld, Pose, WorldParams, generate_world
from .motion import EAST, NORTH, SOUTH, WEST, MotionSet, astar, bfs_action_counts, replay, step_motion
from .sensing import (CameraScan, DepthScan, ObservationCache, SensorConfig, raycast_depth, render_camera,
                      shade)

__all__ = [
    "CAR", "GROUND", "HOUSE", "TREE", "EAST", "NORTH", "SOUTH", "WEST",
    "CameraScan", "DepthScan", "DifficultyIndex", "EpisodeSpec", "GridWorld", "MotionSet",
    "ObservationCache", "Pose", "SensorConfig", "WorldParams", "DEFAULT_BUCKETS",
    "astar", "bfs_action_counts", "bucket_of", "build_holdout_sets", "generate_world", "load_episodes",
    "raycast_depth", "render_camera", "replay", "sample_episode", "save_episodes", "shade", "step_motion",
]
