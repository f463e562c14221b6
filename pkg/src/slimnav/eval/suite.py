"""Hold-out suite evaluation and adaptive-versus-static deltas."""

from __future__ import annotations

import multiprocessing as mp
from dataclasses import dataclass, field

import numpy as np

from ..energy import EnergyProfile
from ..errors import ContractViolation
from ..policy.episode import ActionSpace, EpisodeResult, QAgent, TaskConfig, run_episode
from ..policy.qnet import QNet, greedy
from ..world.episodes import EpisodeSpec
from ..world.grid import GridWorld


class StaticAgent:
    """Greedy over the motions paired with one fixed gate: a navigation-only head at constant width."""

    def __init__(self, qnet: QNet, space: ActionSpace, rho: float = 1.0):
        if rho not in space.gates:
            raise ContractViolation(f"rho={rho} is not a gate of this action space")
        if qnet.n_actions != len(space):
            raise ContractViolation("checkpoint and action space disagree on the number of actions")
        self.qnet, self.space = qnet, space
        j = space.gates.index(rho)
        self.allowed = np.arange(j * space.m, (j + 1) * space.m)

    def reset(self, episode):
        pass

    def act(self, state, rng):
        q = self.qnet.q_values(state[None, :])[0]
        return int(self.allowed[greedy(q[self.allowed])])


@dataclass
class SuiteMetrics:
    accuracy: float
    energy_mj: float
    mean_power_mw: float | None
    mean_latency_ms: float | None
    acquisitions: int
    steps: int
    episodes: list[EpisodeResult] = field(default_factory=list)

    @classmethod
    def from_results(cls, results: list[EpisodeResult]) -> "SuiteMetrics":
        if not results:
            raise ContractViolation("no episodes to summarize")
        acq = sum(r.acquisitions for r in results)
        # acquisition-weighted means equal the mean over every active computing stage
        power = sum(r.mean_power_mw * r.acquisitions for r in results if r.acquisitions) / acq if acq else None
        lat = sum(r.mean_latency_ms * r.acquisitions for r in results if r.acquisitions) / acq if acq else None
        return cls(float(np.mean([r.success for r in results])), float(sum(r.energy_mj for r in results)),
                   power, lat, acq, sum(r.steps for r in results), list(results))

    def success_set(self) -> set[int]:
        return {i for i, r in enumerate(self.episodes) if r.success}

    def summary(self) -> dict:
        return {"accuracy": self.accuracy, "energy_mj": self.energy_mj, "mean_power_mw": self.mean_power_mw,
                "mean_latency_ms": self.mean_latency_ms, "acquisitions": self.acquisitions, "steps": self.steps,
                "episodes": len(self.episodes)}


_SHARED: dict = {}


def _init_worker(payload):
    _SHARED["payload"] = payload


def _run_chunk(bounds):
    world, backend, profile, agent, episodes, space, task = _SHARED["payload"]
    rng = np.random.default_rng(0)
    return [run_episode(world, backend, profile, agent, ep, space, task, rng) for ep in episodes[bounds[0]:bounds[1]]]


def evaluate_suite(world: GridWorld, backend, profile: EnergyProfile, policy, episodes: list[EpisodeSpec],
                   space: ActionSpace, task: TaskConfig, workers: int = 1) -> SuiteMetrics:
    """Run every episode once with greedy action selection.

    ``policy`` is a QNet (greedy over the joint head) or any agent object.
    With ``workers > 1`` episodes are split into contiguous chunks over
    forked processes; results come back in episode order, identical to
    the serial run because every episode is deterministic on its own.
    """
    if not episodes:
        raise ContractViolation("empty test set")
    agent = QAgent(policy, 0.0) if isinstance(policy, QNet) else policy
    if isinstance(policy, QNet) and policy.n_actions != len(space):
        raise ContractViolation("checkpoint and action space disagree on the number of actions")
    if workers <= 1 or len(episodes) < 2 or getattr(agent, "stateful", False):
        rng = np.random.default_rng(0)
        results = [run_episode(world, backend, profile, agent, ep, space, task, rng) for ep in episodes]
    else:
        n = min(workers, len(episodes))
        edges = np.linspace(0, len(episodes), n + 1).astype(int)
        payload = (world, backend, profile, agent, episodes, space, task)
        with mp.get_context("fork").Pool(n, initializer=_init_worker, initargs=(payload,)) as pool:
            chunks = pool.map(_run_chunk, list(zip(edges[:-1], edges[1:])))
        results = [r for c in chunks for r in c]
        backend.acquisitions += sum(r.acquisitions for r in results)
    return SuiteMetrics.from_results(results)


def _decrease(adaptive: float | None, static: float | None) -> float | None:
    if adaptive is None or static is None or static == 0:
        return None
    return 100.0 * (static - adaptive) / static


def compare(adaptive: SuiteMetrics, static: SuiteMetrics) -> dict:
    """Signed percentages; positive reductions mean the adaptive policy spent less."""
    rel = None if static.accuracy == 0 else 100.0 * (adaptive.accuracy - static.accuracy) / static.accuracy
    return {
        "acquisitions_decrease_pct": _decrease(adaptive.acquisitions, static.acquisitions),
        "power_decrease_pct": _decrease(adaptive.mean_power_mw, static.mean_power_mw),
        "latency_decrease_pct": _decrease(adaptive.mean_latency_ms, static.mean_latency_ms),
        "energy_decrease_pct": _decrease(adaptive.energy_mj, static.energy_mj),
        "accuracy_gain_abs_pp": 100.0 * (adaptive.accuracy - static.accuracy),
        "accuracy_gain_rel_pct": rel,
    }


# hardware-in-the-loop figures for the full-size system, shown beside desk deltas for orientation only
REFERENCE_DELTAS = {"acquisitions_decrease_pct": 9.67, "power_decrease_pct": 16.1, "latency_decrease_pct": 74.8,
                    "energy_decrease_pct": 75.0, "accuracy_gain_pct": 7.43}
