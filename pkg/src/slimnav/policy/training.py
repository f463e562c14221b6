"""Curriculum double-DQN training with periodic greedy validation and best-checkpoint selection."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..energy import EnergyProfile
from ..errors import ContractViolation
from ..world.episodes import DifficultyIndex, EpisodeSpec, sample_episode
from ..world.grid import GridWorld
from ..world.motion import MotionSet
from .curriculum import CurriculumState
from .episode import ActionSpace, EpisodeResult, ObservationQueue, QAgent, TaskConfig, run_episode
from .qnet import QNet, ReplayBuffer, double_dqn_update

log = logging.getLogger(__name__)

CURVE_FIELDS = ("episode", "validation_accuracy", "validation_energy_mj", "epsilon", "level")


@dataclass(frozen=True)
class PolicyConfig:
    episodes: int = 20_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_fraction: float = 0.4
    gamma: float = 0.99
    lr: float = 5e-4
    hidden: tuple[int, ...] = (256, 128)
    buffer_capacity: int = 100_000
    batch_size: int = 64
    learn_start: int = 1000
    train_every: int = 2  # environment steps per gradient update
    target_sync: int = 1000
    validate_every: int = 500
    curriculum_period: int = 500
    top_probability: float = 0.7
    gates: tuple[float, ...] = (0.0, 0.125, 0.25, 0.5, 1.0)
    magnitudes: tuple[float, ...] = (1, 2, 4, 8)
    task: TaskConfig = field(default_factory=TaskConfig)
    seed: int = 0

    def __post_init__(self):
        if self.episodes < 1 or self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ContractViolation("episodes, batch size and buffer capacity must be positive and consistent")
        if not 0.0 <= self.gamma < 1.0:
            raise ContractViolation("gamma must lie in [0, 1)")
        if not 0.0 < self.epsilon_fraction <= 1.0:
            raise ContractViolation("epsilon_fraction must lie in (0, 1]")

    def space(self) -> ActionSpace:
        return ActionSpace(MotionSet(tuple(self.magnitudes)), tuple(self.gates))

    def epsilon(self, episode: int) -> float:
        """Linear decay over the first ``epsilon_fraction`` of training, then constant."""
        span = self.epsilon_fraction * self.episodes
        frac = min(episode / span, 1.0)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def to_json(self) -> dict:
        d = asdict(self)
        d["hidden"], d["gates"], d["magnitudes"] = list(self.hidden), list(self.gates), list(self.magnitudes)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "PolicyConfig":
        d = dict(d)
        d["task"] = TaskConfig(**d.get("task", {}))
        for k in ("hidden", "gates", "magnitudes"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class ValidationPoint:
    accuracy: float
    energy_mj: float


@dataclass
class PolicyTrainResult:
    qnet: QNet
    best_episode: int
    best: ValidationPoint
    curve: list[dict]
    space: ActionSpace
    config: PolicyConfig
    seconds: float = 0.0
    updates: int = 0


def greedy_results(world: GridWorld, backend, profile: EnergyProfile, qnet: QNet, episodes: list[EpisodeSpec],
                   space: ActionSpace, task: TaskConfig, record: bool = True) -> list[EpisodeResult]:
    rng = np.random.default_rng(0)  # greedy agents never draw
    agent = QAgent(qnet, 0.0)
    return [run_episode(world, backend, profile, agent, ep, space, task, rng, record=record) for ep in episodes]


def validate(world, backend, profile, qnet, episodes, space, task) -> ValidationPoint:
    res = greedy_results(world, backend, profile, qnet, episodes, space, task, record=False)
    return ValidationPoint(float(np.mean([r.success for r in res])), float(sum(r.energy_mj for r in res)))


def _better(a: ValidationPoint, b: ValidationPoint | None) -> bool:
    if b is None:
        return True
    return a.accuracy > b.accuracy or (a.accuracy == b.accuracy and a.energy_mj < b.energy_mj)


def train_policy(world: GridWorld, backend, profile: EnergyProfile, index: DifficultyIndex,
                 validation: list[EpisodeSpec], config: PolicyConfig | None = None,
                 progress: bool = False) -> PolicyTrainResult:
    """Sample, act, store and update; return the checkpoint with the best validation accuracy.

    Validation runs greedily every ``validate_every`` episodes and after the
    last one; ties in accuracy go to lower total energy, then to the earlier
    checkpoint.
    """
    config = config or PolicyConfig()
    if not validation:
        raise ContractViolation("validation set is empty")
    space = config.space()
    if tuple(index.motion_set.magnitudes) != tuple(space.motion_set.magnitudes):
        raise ContractViolation("difficulty index and action space use different motion sets")
    for r in space.gates:
        if r > 0:
            backend._check(r)
    task = config.task
    state_size = ObservationQueue.size(task.tau, backend.rays)
    qnet = QNet(state_size, len(space), config.hidden, np.random.default_rng([config.seed, 0]), lr=config.lr)
    buffer = ReplayBuffer(config.buffer_capacity, state_size)
    rng_episode = np.random.default_rng([config.seed, 1])
    rng_act = np.random.default_rng([config.seed, 2])
    rng_replay = np.random.default_rng([config.seed, 3])
    levels = index.available_levels("train")
    if levels == 0:
        raise ContractViolation("training region has no sampleable difficulty bucket")
    curriculum = CurriculumState(levels - 1, config.curriculum_period, config.top_probability)
    agent = QAgent(qnet)
    steps = 0
    curve: list[dict] = []
    best, best_net, best_episode = None, qnet.copy(), 0
    t0 = time.perf_counter()

    def sink(s, a, r, s2, terminal):
        nonlocal steps
        buffer.add(s, a, r, s2, terminal)
        steps += 1
        if len(buffer) >= max(config.learn_start, config.batch_size) and steps % config.train_every == 0:
            double_dqn_update(qnet, buffer.sample(config.batch_size, rng_replay), config.gamma)
            if qnet.updates % config.target_sync == 0:
                qnet.sync_target()

    def checkpoint(episode: int, eps: float):
        nonlocal best, best_net, best_episode
        point = validate(world, backend, profile, qnet, validation, space, task)
        curve.append({"episode": episode, "validation_accuracy": point.accuracy,
                      "validation_energy_mj": point.energy_mj, "epsilon": eps, "level": curriculum.level})
        if _better(point, best):
            best, best_net, best_episode = point, qnet.copy(), episode
        if progress:
            log.info("episode %d acc %.3f energy %.1f mJ eps %.3f level %d (%.0fs)", episode, point.accuracy,
                     point.energy_mj, eps, curriculum.level, time.perf_counter() - t0)

    for episode in range(config.episodes):
        eps = config.epsilon(episode)
        agent.epsilon = eps
        level = curriculum.sample(rng_episode)
        spec = sample_episode(index, level, rng_episode)
        run_episode(world, backend, profile, agent, spec, space, task, rng_act, sink=sink, record=False)
        curriculum.record_episode()
        done = episode + 1
        if done % config.validate_every == 0 or done == config.episodes:
            checkpoint(done, config.epsilon(done))
    return PolicyTrainResult(best_net, best_episode, best, curve, space, config,
                             time.perf_counter() - t0, qnet.updates)


def write_curve(path: str | Path, curve: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CURVE_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in curve:
            w.writerow({k: (repr(float(row[k])) if isinstance(row[k], float) else row[k]) for k in CURVE_FIELDS})


def read_curve(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{"episode": int(r["episode"]), "validation_accuracy": float(r["validation_accuracy"]),
             "validation_energy_mj": float(r["validation_energy_mj"]), "epsilon": float(r["epsilon"]),
             "level": int(r["level"])} for r in rows]


def save_policy(path: str | Path, qnet: QNet, space: ActionSpace, config: PolicyConfig,
                config_hash: str | None = None, extra: dict | None = None) -> None:
    """Versioned checkpoint: weights plus architecture, action-space descriptor and provenance."""
    meta = {"action_space": space.describe(), "rho_set": [g for g in space.gates if g > 0],
            "policy_config": config.to_json(), "config_hash": config_hash, **(extra or {})}
    qnet.save(path, meta)


def load_policy(path: str | Path, expect_hash: str | None = None) -> tuple[QNet, ActionSpace, PolicyConfig, dict]:
    qnet, meta = QNet.load(path)
    if expect_hash is not None and meta.get("config_hash") != expect_hash:
        raise ContractViolation(f"checkpoint {path} was produced under config {meta.get('config_hash')}, "
                                f"expected {expect_hash}")
    config = PolicyConfig.from_json(meta["policy_config"])
    space = config.space()
    if qnet.n_actions != len(space):
        raise ContractViolation("checkpoint output size does not match its action space")
    return qnet, space, config, meta
