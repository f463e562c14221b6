"""Fully connected Q-network with a target copy, trained by double DQN on a Huber loss."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ContractViolation, DivergenceError
from ..io import save_npz
from ..nn import Adam, he_init, huber

CHECKPOINT_VERSION = 1


class QNet:
    def __init__(self, input_size: int, n_actions: int, hidden=(256, 128), rng: np.random.Generator | None = None,
                 lr: float = 5e-4, huber_delta: float = 1.0, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.dtype = np.dtype(dtype)
        self.input_size = input_size
        self.n_actions = n_actions
        self.hidden = tuple(int(h) for h in hidden)
        self.huber_delta = huber_delta
        sizes = [input_size, *self.hidden, n_actions]
        self.weights = [he_init(rng, sizes[i + 1], sizes[i]).astype(self.dtype) for i in range(len(sizes) - 1)]
        self.biases = [np.zeros(s, dtype=self.dtype) for s in sizes[1:]]
        self.weights[-1] *= 0.1  # small initial Q-values
        self.target_weights = [w.copy() for w in self.weights]
        self.target_biases = [b.copy() for b in self.biases]
        self.optimizer = Adam(self.parameters(), lr=lr)
        self.updates = 0

    def parameters(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def q_values(self, states: np.ndarray, target: bool = False) -> np.ndarray:
        ws, bs = (self.target_weights, self.target_biases) if target else (self.weights, self.biases)
        h = np.asarray(states, dtype=self.dtype)
        for w, b in zip(ws[:-1], bs[:-1]):
            h = np.maximum(h @ w.T + b, 0.0)
        return h @ ws[-1].T + bs[-1]

    def loss_and_grads(self, states: np.ndarray, actions: np.ndarray, targets: np.ndarray):
        """Mean Huber loss of Q_online(s, a) against fixed targets, and gradients for :meth:`parameters`."""
        h = np.asarray(states, dtype=self.dtype)
        acts = [h]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ w.T + b, 0.0)
            acts.append(h)
        q = h @ self.weights[-1].T + self.biases[-1]
        n = len(actions)
        rows = np.arange(n)
        residual = q[rows, actions] - targets
        loss_el, dres = huber(residual, self.huber_delta)
        dq = np.zeros_like(q)
        dq[rows, actions] = dres / n  # cast to the network dtype
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        d = dq
        for layer in range(len(self.weights) - 1, -1, -1):
            gw[layer] = d.T @ acts[layer]
            gb[layer] = d.sum(axis=0)
            if layer:
                d = (d @ self.weights[layer]) * (acts[layer] > 0)
        return float(loss_el.mean()), [*gw, *gb]

    def sync_target(self) -> None:
        for dst, src in zip(self.target_weights + self.target_biases, self.weights + self.biases):
            dst[...] = src

    def copy(self) -> "QNet":
        other = QNet.__new__(QNet)
        other.input_size, other.n_actions, other.hidden = self.input_size, self.n_actions, self.hidden
        other.huber_delta, other.dtype = self.huber_delta, self.dtype
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other.target_weights = [w.copy() for w in self.target_weights]
        other.target_biases = [b.copy() for b in self.target_biases]
        other.optimizer = Adam(other.parameters(), lr=self.optimizer.lr)
        other.updates = self.updates
        return other

    def save(self, path: str | Path, meta: dict | None = None) -> None:
        arrays = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"w{i}"], arrays[f"b{i}"] = w, b
        doc = {"format_version": CHECKPOINT_VERSION, "kind": "qnet", "input_size": self.input_size,
               "n_actions": self.n_actions, "hidden": list(self.hidden), "huber_delta": self.huber_delta,
               "dtype": self.dtype.name,
               **(meta or {})}
        arrays["meta"] = np.frombuffer(json.dumps(doc, sort_keys=True).encode(), dtype=np.uint8)
        save_npz(path, arrays)

    @classmethod
    def load(cls, path: str | Path) -> tuple["QNet", dict]:
        with np.load(path) as data:
            doc = json.loads(bytes(data["meta"]).decode())
            if doc.get("format_version") != CHECKPOINT_VERSION or doc.get("kind") != "qnet":
                raise ContractViolation(f"{path} is not a supported policy checkpoint")
            net = cls(doc["input_size"], doc["n_actions"], doc["hidden"], huber_delta=doc["huber_delta"],
                      dtype=doc.get("dtype", "float32"))
            for i in range(len(net.weights)):
                net.weights[i][...] = data[f"w{i}"]
                net.biases[i][...] = data[f"b{i}"]
        net.sync_target()
        return net, doc


def greedy(q: np.ndarray) -> np.ndarray:
    """Row-wise argmax; np.argmax already breaks ties toward the lowest index."""
    return np.argmax(q, axis=-1)


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray


def double_dqn_targets(qnet: QNet, batch: Batch, gamma: float) -> np.ndarray:
    """r + gamma * Q_target(s', argmax_a Q_online(s', a)); terminal rows get r."""
    a_star = greedy(qnet.q_values(batch.next_states))
    q_eval = qnet.q_values(batch.next_states, target=True)[np.arange(len(a_star)), a_star]
    return batch.rewards + gamma * (1.0 - batch.terminals) * q_eval


def double_dqn_update(qnet: QNet, batch: Batch, gamma: float, lr: float | None = None) -> float:
    """One gradient step on the online parameters only. Returns the pre-step loss."""
    if len(batch.actions) == 0:
        raise ContractViolation("empty batch")
    if not 0.0 <= gamma < 1.0:
        raise ContractViolation("gamma must lie in [0, 1)")
    if lr is not None:
        qnet.optimizer.lr = lr
    targets = double_dqn_targets(qnet, batch, gamma)
    loss, grads = qnet.loss_and_grads(batch.states, batch.actions, targets)
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite Q loss after {qnet.updates} updates "
                              f"(max |target|={np.nanmax(np.abs(targets)):.3g})")
    qnet.optimizer.step(grads)
    qnet.updates += 1
    return loss


class ReplayBuffer:
    """Fixed-capacity FIFO transition store backed by preallocated arrays."""

    def __init__(self, capacity: int, state_size: int):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_size), dtype=np.float32)
        self.next_states = np.zeros((capacity, state_size), dtype=np.float32)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity, dtype=np.float64)
        self.terminals = np.zeros(capacity, dtype=np.float64)
        self.size = 0
        self.cursor = 0

    def __len__(self) -> int:
        return self.size

    def add(self, state, action: int, reward: float, next_state, terminal: bool) -> None:
        if not (np.isfinite(reward) and np.all(np.isfinite(state)) and np.all(np.isfinite(next_state))):
            raise ContractViolation("transitions must be finite")
        i = self.cursor
        self.states[i] = state
        self.next_states[i] = next_state
        self.actions[i] = action
        self.rewards[i] = reward
        self.terminals[i] = float(terminal)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def get(self, i: int) -> Batch:
        """Transition ``i`` in insertion order among those still held (0 = oldest)."""
        j = (self.cursor - self.size + i) % self.capacity
        return self._gather(np.array([j]))

    def _gather(self, idx: np.ndarray) -> Batch:
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx],
                     self.terminals[idx])

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        return self._gather(rng.integers(self.size, size=batch_size))
