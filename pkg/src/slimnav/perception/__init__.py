"""Slimmable depth regression, its training, and the fidelity emulator."""

from .backends import EmulatorBackend, EmulatorParams, GroundTruthBackend, NetBackend, emulate_depth
from .slimmable import BatchNormState, SlimmableConfig, SlimmableNet, StaticNet, active_units, forward
from .training import (MdeDataset, R2Report, TrainResult, TrainSettings, collect_dataset, evaluate_r2,
                       gradient_check, l1_by_rho, r2_score, train_slimmable)

__all__ = [
    "BatchNormState", "EmulatorBackend", "EmulatorParams", "GroundTruthBackend", "MdeDataset", "NetBackend",
    "R2Report", "SlimmableConfig", "SlimmableNet", "StaticNet", "TrainResult", "TrainSettings", "active_units",
    "collect_dataset", "emulate_depth", "evaluate_r2", "forward", "gradient_check", "l1_by_rho", "r2_score",
    "train_slimmable",
]
