"""Joint navigation-and-width policy: double DQN over (motion, rho) with a curriculum."""

from .curriculum import CurriculumState
from .episode import (GOAL_REWARD, TIMEOUT_REWARD, ActionSpace, EpisodeResult, FixedAgent, JointAction,
                      ObservationQueue, OracleAgent, QAgent, RandomAgent, StepRecord, TaskConfig,
                      check_gate_timing, pose_features, reward, run_episode, select_action)
from .qnet import Batch, QNet, ReplayBuffer, double_dqn_targets, double_dqn_update, greedy
from .training import (PolicyConfig, PolicyTrainResult, ValidationPoint, greedy_results, load_policy,
                       read_curve, save_policy, train_policy, validate, write_curve)

__all__ = [
    "GOAL_REWARD", "TIMEOUT_REWARD", "ActionSpace", "Batch", "CurriculumState", "EpisodeResult", "FixedAgent",
    "JointAction", "ObservationQueue", "OracleAgent", "PolicyConfig", "PolicyTrainResult", "QAgent", "QNet",
    "RandomAgent", "ReplayBuffer", "StepRecord", "TaskConfig", "ValidationPoint", "check_gate_timing",
    "double_dqn_targets", "double_dqn_update", "greedy", "greedy_results", "load_policy", "pose_features",
    "read_curve", "reward", "run_episode", "save_policy", "select_action", "train_policy", "validate",
    "write_curve",
]
