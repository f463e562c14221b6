"""Multi-width depth regressor with switchable (per-width) batch normalization.

Hidden layer ``l`` has ``n_l`` units at full width; running at slimming
factor rho activates the first ``ceil(rho * n_l)`` of them. Input and
output layers are always full. Each rho in ``rho_set`` owns a complete,
private set of normalization parameters and running statistics.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ContractViolation
from ..io import save_npz
from ..nn import he_init
from ..world.sensing import CameraScan, DepthScan

CHECKPOINT_VERSION = 1


def active_units(rho: float, n: int) -> int:
    return max(1, math.ceil(rho * n - 1e-9))


@dataclass(frozen=True)
class SlimmableConfig:
    alpha: int = 64
    rho_set: tuple[float, ...] = (1.0, 0.5, 0.25, 0.125)
    hidden_multipliers: tuple[float, ...] = (4, 4, 2)
    rays: int = 32
    max_range: float = 40.0
    bn_momentum: float = 0.9  # fraction of the old running statistic kept per update
    bn_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "rho_set", tuple(float(r) for r in self.rho_set))
        object.__setattr__(self, "hidden_multipliers", tuple(self.hidden_multipliers))
        if not self.rho_set:
            raise ContractViolation("rho_set must be non-empty")
        if any(not 0.0 < r <= 1.0 for r in self.rho_set):
            raise ContractViolation("every slimming factor must lie in (0, 1]; rho=0 is a bypass, not a width")
        if list(self.rho_set) != sorted(self.rho_set, reverse=True) or len(set(self.rho_set)) != len(self.rho_set):
            raise ContractViolation("rho_set must be strictly descending")

    @property
    def widths(self) -> list[int]:
        return [int(round(m * self.alpha)) for m in self.hidden_multipliers]

    @property
    def input_size(self) -> int:
        return 2 * self.rays

    def active(self, rho: float) -> list[int]:
        return [active_units(rho, n) for n in self.widths]

    def degenerate(self) -> bool:
        """True when two slimming factors collapse to the same active widths."""
        seen = {tuple(self.active(r)) for r in self.rho_set}
        return len(seen) < len(self.rho_set)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def fresh(cls, n: int) -> "BatchNormState":
        return cls(np.ones(n), np.zeros(n), np.zeros(n), np.ones(n))

    def copy(self) -> "BatchNormState":
        return BatchNormState(self.gamma.copy(), self.beta.copy(), self.running_mean.copy(), self.running_var.copy())


@dataclass
class SlimmableNet:
    config: SlimmableConfig
    weights: list[np.ndarray]  # hidden (bias-free) then output, each (out, in)
    out_bias: np.ndarray
    bn: dict[float, list[BatchNormState]] = field(default_factory=dict)

    @classmethod
    def init(cls, config: SlimmableConfig, rng: np.random.Generator) -> "SlimmableNet":
        sizes = [config.input_size] + config.widths + [config.rays]
        weights = [he_init(rng, sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]
        net = cls(config, weights, np.zeros(config.rays))
        net.bn = {rho: [BatchNormState.fresh(a) for a in config.active(rho)] for rho in config.rho_set}
        return net

    # -- parameters -------------------------------------------------------------------------

    def parameters(self) -> list[np.ndarray]:
        """Trainable arrays in a fixed order: weights, output bias, then (gamma, beta) per rho per layer."""
        out = list(self.weights) + [self.out_bias]
        for rho in self.config.rho_set:
            for s in self.bn[rho]:
                out += [s.gamma, s.beta]
        return out

    def decay_mask(self) -> list[bool]:
        return [True] * len(self.weights) + [False] * (len(self.parameters()) - len(self.weights))

    def copy(self) -> "SlimmableNet":
        return SlimmableNet(self.config, [w.copy() for w in self.weights], self.out_bias.copy(),
                            {r: [s.copy() for s in v] for r, v in self.bn.items()})

    def check_rho(self, rho: float) -> float:
        for r in self.config.rho_set:
            if math.isclose(r, rho, rel_tol=0, abs_tol=1e-12):
                return r
        raise ContractViolation(f"rho={rho} is not one of the trained slimming factors {self.config.rho_set}")

    # -- forward / backward -----------------------------------------------------------------

    def forward_batch(self, x: np.ndarray, rho: float, train: bool = False, update_stats: bool = True):
        """Normalized-depth predictions for a batch (N, 2K) at width ``rho``.

        ``train=True`` normalizes with batch statistics (and, if
        ``update_stats``, folds them into this rho's running statistics);
        otherwise running statistics are used. Returns ``(out, cache)``.
        """
        rho = self.check_rho(rho)
        cfg = self.config
        act = cfg.active(rho)
        states = self.bn[rho]
        h = x
        prev = x.shape[1]
        cache = []
        for layer, (w, a, s) in enumerate(zip(self.weights[:-1], act, states)):
            ws = w[:a, :prev]
            z = h @ ws.T
            if train:
                mu = z.mean(axis=0)
                var = z.var(axis=0)
                if update_stats:
                    n = z.shape[0]
                    unbiased = var * n / (n - 1) if n > 1 else var
                    s.running_mean *= cfg.bn_momentum
                    s.running_mean += (1.0 - cfg.bn_momentum) * mu
                    s.running_var *= cfg.bn_momentum
                    s.running_var += (1.0 - cfg.bn_momentum) * unbiased
            else:
                mu, var = s.running_mean, s.running_var
            inv_std = 1.0 / np.sqrt(var + cfg.bn_eps)
            xhat = (z - mu) * inv_std
            y = xhat * s.gamma + s.beta
            out = np.maximum(y, 0.0)
            cache.append((h, xhat, inv_std, y))
            h = out
            prev = a
        wo = self.weights[-1][:, :prev]
        pred = h @ wo.T + self.out_bias
        cache.append((h,))
        return pred, cache

    def backward_batch(self, rho: float, cache, dpred: np.ndarray, train: bool = True) -> dict[int, np.ndarray]:
        """Gradients keyed by ``id`` of each parameter array touched at width ``rho``."""
        rho = self.check_rho(rho)
        act = self.config.active(rho)
        grads: dict[int, np.ndarray] = {}
        (h_last,) = cache[-1]
        prev = act[-1]
        wo = self.weights[-1]
        gwo = np.zeros_like(wo)
        gwo[:, :prev] = dpred.T @ h_last
        grads[id(wo)] = gwo
        grads[id(self.out_bias)] = dpred.sum(axis=0)
        dh = dpred @ wo[:, :prev]
        states = self.bn[rho]
        for layer in range(len(act) - 1, -1, -1):
            h_in, xhat, inv_std, y = cache[layer]
            s = states[layer]
            a = act[layer]
            dy = dh * (y > 0)
            grads[id(s.gamma)] = (dy * xhat).sum(axis=0)
            grads[id(s.beta)] = dy.sum(axis=0)
            dxhat = dy * s.gamma
            if train:
                n = dxhat.shape[0]
                dz = inv_std / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
            else:
                dz = dxhat * inv_std
            w = self.weights[layer]
            gw = np.zeros_like(w)
            fan_in = h_in.shape[1]
            gw[:a, :fan_in] = dz.T @ h_in
            grads[id(w)] = gw
            dh = dz @ w[:a, :fan_in]
        return grads

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray, rho_set=None, train: bool = True,
                       update_stats: bool = False) -> tuple[float, list[np.ndarray]]:
        """Mean over rho of the L1 loss on normalized depth, and its gradient for :meth:`parameters`."""
        rhos = self.config.rho_set if rho_set is None else tuple(rho_set)
        params = self.parameters()
        total = [np.zeros_like(p) for p in params]
        slot = {id(p): i for i, p in enumerate(params)}
        loss = 0.0
        for rho in rhos:
            pred, cache = self.forward_batch(x, rho, train=train, update_stats=update_stats)
            r = pred - y
            loss += float(np.abs(r).mean()) / len(rhos)
            dpred = np.sign(r) / (r.size * len(rhos))
            for key, g in self.backward_batch(rho, cache, dpred, train=train).items():
                total[slot[key]] += g
        return loss, total

    # -- inference --------------------------------------------------------------------------

    def predict(self, x: np.ndarray, rho: float) -> np.ndarray:
        """Depth in meters for a batch of camera inputs, clamped to [0, max_range]."""
        pred, _ = self.forward_batch(np.atleast_2d(x), rho, train=False)
        return np.clip(pred * self.config.max_range, 0.0, self.config.max_range)

    # -- serialization ----------------------------------------------------------------------

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        arrays = {f"w{i}": w for i, w in enumerate(self.weights)}
        arrays["out_bias"] = self.out_bias
        for j, rho in enumerate(self.config.rho_set):
            for li, s in enumerate(self.bn[rho]):
                for name in ("gamma", "beta", "running_mean", "running_var"):
                    arrays[f"bn{j}_{li}_{name}"] = getattr(s, name)
        meta = {"format_version": CHECKPOINT_VERSION, "kind": "slimmable_depth_net",
                "architecture": {"input": self.config.input_size, "hidden": self.config.widths,
                                 "output": self.config.rays, "activation": "relu", "norm": "switchable_bn"},
                "config": self.config.to_json(), **(extra or {})}
        arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
        save_npz(path, arrays)

    @classmethod
    def load(cls, path: str | Path) -> tuple["SlimmableNet", dict]:
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            if meta.get("format_version") != CHECKPOINT_VERSION or meta.get("kind") != "slimmable_depth_net":
                raise ContractViolation(f"{path} is not a supported depth-network checkpoint")
            c = meta["config"]
            config = SlimmableConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in c.items()})
            n_layers = len(config.widths) + 1
            weights = [data[f"w{i}"].copy() for i in range(n_layers)]
            net = cls(config, weights, data["out_bias"].copy())
            for j, rho in enumerate(config.rho_set):
                net.bn[rho] = [BatchNormState(*(data[f"bn{j}_{li}_{n}"].copy() for n in
                                                ("gamma", "beta", "running_mean", "running_var")))
                               for li in range(len(config.widths))]
        return net, meta

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for p in self.parameters():
            h.update(np.ascontiguousarray(p).tobytes())
        for rho in self.config.rho_set:
            for s in self.bn[rho]:
                h.update(s.running_mean.tobytes())
                h.update(s.running_var.tobytes())
        return h.hexdigest()


class StaticNet:
    """Plain fixed-width network with one normalization set (reference for the rho=1 identity)."""

    def __init__(self, weights: list[np.ndarray], out_bias: np.ndarray, bn: list[BatchNormState], eps: float,
                 max_range: float):
        self.weights = weights
        self.out_bias = out_bias
        self.bn = bn
        self.eps = eps
        self.max_range = max_range

    @classmethod
    def from_slimmable(cls, net: SlimmableNet, rho: float = 1.0, copy: bool = False) -> "StaticNet":
        """Dense network holding the first active units of every layer of ``net`` at ``rho``."""
        rho = net.check_rho(rho)
        act = net.config.active(rho)
        ins = [net.config.input_size] + act
        ws = [net.weights[i][:act[i], :ins[i]] for i in range(len(act))]
        ws.append(net.weights[-1][:, :act[-1]])
        if copy:
            ws = [np.array(w, copy=True, order="C") for w in ws]
        bn = [s.copy() for s in net.bn[rho]] if copy else net.bn[rho]
        return cls(ws, net.out_bias, bn, net.config.bn_eps, net.config.max_range)

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = x
        for w, s in zip(self.weights[:-1], self.bn):
            z = h @ w.T
            inv_std = 1.0 / np.sqrt(s.running_var + self.eps)
            h = np.maximum((z - s.running_mean) * inv_std * s.gamma + s.beta, 0.0)
        return h @ self.weights[-1].T + self.out_bias


def forward(net: SlimmableNet, image: CameraScan | None, rho: float) -> DepthScan:
    """Depth prediction at width ``rho``; ``rho=0`` is the bypass and must come without an image."""
    cfg = net.config
    if rho == 0:
        if image is not None:
            raise ContractViolation("rho=0 bypasses acquisition; no image may be supplied")
        return DepthScan(np.zeros(cfg.rays), cfg.max_range)
    if image is None:
        raise ContractViolation("an image is required for rho > 0")
    return DepthScan(net.predict(image.as_input(), rho)[0], cfg.max_range)
