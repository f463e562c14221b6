"""Joint action space, observation queue, reward, and the sense-compute-act episode loop."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from ..energy import EnergyProfile, episode_energy, reward_energy_penalty
from ..errors import ContractViolation
from ..world.episodes import EpisodeSpec
from ..world.grid import GridWorld, Pose
from ..world.motion import MotionSet, step_motion
from .qnet import QNet, greedy

POSE_FEATURES = 5
GOAL_REWARD = 40.0
TIMEOUT_REWARD = -10.0


@dataclass(frozen=True)
class JointAction:
    motion: int
    rho_index: int

    def flat(self, n_motions: int) -> int:
        return self.rho_index * n_motions + self.motion


@dataclass(frozen=True)
class ActionSpace:
    """``n`` gate options (rho values, 0 = bypass) times ``m`` motions."""

    motion_set: MotionSet = field(default_factory=MotionSet)
    gates: tuple[float, ...] = (0.0, 0.125, 0.25, 0.5, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(float(g) for g in self.gates))
        if not self.gates or any(not 0.0 <= g <= 1.0 for g in self.gates):
            raise ContractViolation("gate options must lie in [0, 1]")
        if max(self.gates) == 0:
            raise ContractViolation("at least one gate option must run the network")

    @property
    def m(self) -> int:
        return len(self.motion_set)

    @property
    def n(self) -> int:
        return len(self.gates)

    def __len__(self) -> int:
        return self.n * self.m

    def decode(self, flat: int) -> JointAction:
        if not 0 <= flat < len(self):
            raise ContractViolation(f"action {flat} outside [0, {len(self)})")
        return JointAction(flat % self.m, flat // self.m)

    def encode(self, motion: int, rho_index: int) -> int:
        return JointAction(motion, rho_index).flat(self.m)

    @property
    def first_rho(self) -> float:
        return max(self.gates)

    def describe(self) -> dict:
        return {"magnitudes": list(self.motion_set.magnitudes), "directions": 4, "gates": list(self.gates),
                "layout": "flat = rho_index * m + motion; motion = direction * len(magnitudes) + magnitude_index"}


@dataclass(frozen=True)
class TaskConfig:
    """Episode termination and reward settings."""

    alpha: float = 64
    success_radius: float = 2.0
    distance_weight: float = 0.1
    energy_weight: float = 2.0
    budget_factor: int = 4
    budget_min: int = 20
    tau: int = 3

    def budget(self, difficulty: int) -> int:
        return max(self.budget_factor * difficulty, self.budget_min)


def reward(outcome: str, distance: float, rho: float, profile: EnergyProfile, task: TaskConfig) -> float:
    """-10 on timeout, +40 on reaching the goal, else -w_d*d - E(rho) - 1."""
    if outcome == "timeout":
        return TIMEOUT_REWARD
    if outcome == "goal":
        return GOAL_REWARD
    if outcome != "step":
        raise ContractViolation(f"unknown outcome {outcome!r}")
    if distance < 0:
        raise ContractViolation("distance must be non-negative")
    penalty = reward_energy_penalty(profile, task.alpha, rho, task.energy_weight)
    return -task.distance_weight * distance - penalty - 1.0


def pose_features(world: GridWorld, pose: Pose, target: Pose) -> np.ndarray:
    """Relative pose to the target: dx, dy, distance (scaled by the map diagonal), bearing cos/sin."""
    dx, dy = target.x - pose.x, target.y - pose.y
    dist = math.hypot(dx, dy)
    scale = world.scale
    if dist > 0:
        c, s = dx / dist, dy / dist
    else:
        c = s = 0.0
    return np.array([dx / scale, dy / scale, dist / scale, c, s])


class ObservationQueue:
    """FIFO of the ``tau`` most recent (normalized depth, relative pose) entries, zero-padded."""

    def __init__(self, tau: int, rays: int, max_range: float):
        self.tau, self.rays, self.max_range = tau, rays, max_range
        self.depths: deque[np.ndarray] = deque(maxlen=tau)
        self.poses: deque[np.ndarray] = deque(maxlen=tau)
        self.reset()

    def reset(self) -> None:
        self.depths.clear()
        self.poses.clear()
        for _ in range(self.tau):
            self.depths.append(np.zeros(self.rays))
            self.poses.append(np.zeros(POSE_FEATURES))

    def push(self, depth_m: np.ndarray, pose_feat: np.ndarray) -> None:
        self.depths.append(np.asarray(depth_m) / self.max_range)
        self.poses.append(pose_feat)

    def vector(self) -> np.ndarray:
        return np.concatenate([*self.depths, *self.poses]).astype(np.float32)

    def mean_depth(self) -> float | None:
        """Mean range (meters) over queued scans, ignoring all-zero (bypass/padding) scans."""
        live = [d for d in self.depths if np.any(d)]
        if not live:
            return None
        return float(np.mean(live)) * self.max_range

    @staticmethod
    def size(tau: int, rays: int) -> int:
        return tau * (rays + POSE_FEATURES)


class Agent(Protocol):
    def reset(self, episode: EpisodeSpec) -> None: ...

    def act(self, state: np.ndarray, rng: np.random.Generator) -> int: ...


def select_action(qnet: QNet, state: np.ndarray, epsilon: float, rng: np.random.Generator,
                  allowed: np.ndarray | None = None) -> int:
    """Epsilon-greedy over all outputs; greedy ties go to the lowest flat index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ContractViolation("epsilon must lie in [0, 1]")
    n = qnet.n_actions
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(n))
    q = qnet.q_values(state[None, :])[0]
    return int(greedy(q))


class QAgent:
    def __init__(self, qnet: QNet, epsilon: float = 0.0):
        self.qnet = qnet
        self.epsilon = epsilon

    def reset(self, episode):
        pass

    def act(self, state, rng):
        return select_action(self.qnet, state, self.epsilon, rng)


class RandomAgent:
    def __init__(self, space: ActionSpace):
        self.space = space

    def reset(self, episode):
        pass

    def act(self, state, rng):
        return int(rng.integers(len(self.space)))


class OracleAgent:
    """Replays the planner's optimal motions with a fixed gate (default: the bypass)."""

    def __init__(self, space: ActionSpace, gate_index: int = 0):
        self.space = space
        self.gate_index = gate_index
        self._plan: list[int] = []

    def reset(self, episode):
        self._plan = list(episode.optimal_path)

    def act(self, state, rng):
        motion = self._plan.pop(0) if self._plan else 0
        return self.space.encode(motion, self.gate_index)


class FixedAgent:
    """Always emits the same flat action."""

    def __init__(self, action: int):
        self.action = action

    def reset(self, episode):
        pass

    def act(self, state, rng):
        return self.action


@dataclass
class StepRecord:
    t: int
    x: float
    y: float
    distance: float  # to target, before moving
    rho: float  # width applied at this computing stage
    gate: float  # width emitted for the next stage
    motion: int
    direction: int
    magnitude: float
    moved: float
    truncated: bool
    prev_truncated: bool  # the move that led here was truncated
    queue_mean_depth: float | None
    reward: float
    acquired: bool

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EpisodeResult:
    success: bool
    steps: int
    total_reward: float
    energy_mj: float
    acquisitions: int
    mean_power_mw: float | None
    mean_latency_ms: float | None
    distance_moved: float
    difficulty: int
    sizes: list[float] = field(default_factory=list)
    trace: list[StepRecord] = field(default_factory=list)
    start: tuple[float, float] = (0.0, 0.0)
    target: tuple[float, float] = (0.0, 0.0)

    @property
    def distance_per_acquisition(self) -> float | None:
        return self.distance_moved / self.acquisitions if self.acquisitions else None

    def to_json(self, with_trace: bool = True) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k not in ("trace", "sizes")}
        out["distance_per_acquisition"] = self.distance_per_acquisition
        out["sizes"] = list(self.sizes)
        if with_trace:
            out["trace"] = [s.to_json() for s in self.trace]
        return out


TransitionSink = Callable[[np.ndarray, int, float, np.ndarray, bool], None]


def run_episode(world: GridWorld, backend, profile: EnergyProfile, agent, episode: EpisodeSpec,
                space: ActionSpace, task: TaskConfig, rng: np.random.Generator,
                sink: TransitionSink | None = None, record: bool = True) -> EpisodeResult:
    """Run one episode through consecutive sensing, computing and acting stages.

    The gate emitted at step t sets the width of the computing stage at
    step t+1; step 0 runs at the widest gate. Camera acquisition happens
    only when the pending width is non-zero. Transitions go to ``sink`` as
    ``(state, action, reward, next_state, terminal)``.
    """
    if isinstance(agent, QNet):
        agent = QAgent(agent)
    world.require_free(episode.start)
    agent.reset(episode)
    target = episode.target
    pose = episode.start
    budget = task.budget(episode.difficulty)
    max_range = backend.observations.sensor.max_range
    queue = ObservationQueue(task.tau, backend.rays, max_range)
    state_size = ObservationQueue.size(task.tau, backend.rays)
    rho = space.first_rho
    sizes: list[float] = []
    trace: list[StepRecord] = []
    total = 0.0
    moved_total = 0.0
    success = pose.distance_to(target) <= task.success_radius
    if success:
        total = GOAL_REWARD
    pending = None
    prev_truncated = False
    acquired_before = backend.acquisitions
    t = 0
    while not success and t < budget:
        dist = pose.distance_to(target)
        depth = backend.predict(pose, rho)
        sizes.append(task.alpha * rho)
        queue.push(depth, pose_features(world, pose, target))
        state = queue.vector()
        if pending is not None and sink is not None:
            sink(pending[0], pending[1], pending[2], state, False)
        a = agent.act(state, rng)
        joint = space.decode(a)
        direction, magnitude = space.motion_set.decode(joint.motion)
        new_pose, truncated, moved = step_motion(world, pose, direction, magnitude)
        moved_total += moved
        new_dist = new_pose.distance_to(target)
        if new_dist <= task.success_radius:
            r, terminal, success = GOAL_REWARD, True, True
        elif t == budget - 1:
            r, terminal = TIMEOUT_REWARD, True
        else:
            r, terminal = reward("step", new_dist, rho, profile, task), False
        gate = space.gates[joint.rho_index]
        if record:
            trace.append(StepRecord(t, pose.x, pose.y, dist, rho, gate, joint.motion, direction, magnitude, moved,
                                    truncated, prev_truncated, queue.mean_depth(), r, rho > 0))
        total += r
        if terminal:
            if sink is not None:
                sink(state, a, r, np.zeros(state_size, dtype=np.float32), True)
        else:
            pending = (state, a, r)
        pose, rho, prev_truncated = new_pose, gate, truncated
        t += 1
    summary = episode_energy(profile, sizes)
    if summary.acquisitions != backend.acquisitions - acquired_before:
        raise ContractViolation("acquisition count disagrees with the energy trace")
    return EpisodeResult(success, t, total, summary.energy_mj, summary.acquisitions, summary.mean_power_mw,
                         summary.mean_latency_ms, moved_total, episode.difficulty, sizes, trace,
                         (episode.start.x, episode.start.y), (target.x, target.y))


def check_gate_timing(result: EpisodeResult, first_rho: float) -> None:
    """Raise if any computing stage used a width other than the one gated one step earlier."""
    tr = result.trace
    if tr and tr[0].rho != first_rho:
        raise ContractViolation(f"first stage ran at rho={tr[0].rho}, expected {first_rho}")
    for prev, cur in zip(tr, tr[1:]):
        if cur.rho != prev.gate:
            raise ContractViolation(f"step {cur.t} ran at rho={cur.rho} but step {prev.t} gated {prev.gate}")
    for s in tr:
        if (s.rho == 0) == s.acquired:
            raise ContractViolation(f"step {s.t}: acquisition flag inconsistent with rho={s.rho}")
