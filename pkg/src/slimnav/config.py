"""Experiment configuration: presets, JSON round-trip with materialized defaults, and a content hash."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError, ContractViolation
from .perception.backends import EmulatorParams
from .perception.slimmable import SlimmableConfig
from .perception.training import TrainSettings
from .policy.episode import TaskConfig
from .policy.training import PolicyConfig
from .world.grid import WorldParams
from .world.sensing import SensorConfig

CONFIG_VERSION = 1
PRESETS = ("desk", "paper-scale")
BACKENDS = ("network", "emulator", "ground_truth")


@dataclass(frozen=True)
class PerceptionSection:
    network: SlimmableConfig = field(default_factory=SlimmableConfig)
    training: TrainSettings = field(default_factory=lambda: TrainSettings(max_epochs=300, patience=40))
    dataset_size: int = 4000
    split: tuple[tuple[str, float], ...] = (("train", 0.4), ("validation", 0.1), ("test", 0.5))
    backend: str = "network"
    emulator: EmulatorParams = field(default_factory=EmulatorParams)
    cache_quantization: float = 1.0


@dataclass(frozen=True)
class EvalSection:
    validation_per_bucket: int = 20
    test_per_bucket: int = 50
    holdout_levels: tuple[int, ...] | None = None  # None: every bucket the holdout region can supply
    static_alphas: tuple[int, ...] = (64,)
    heatmap_bin: float = 4.0


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "desk"
    seed: int = 0
    world: WorldParams = field(default_factory=WorldParams)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    perception: PerceptionSection = field(default_factory=PerceptionSection)
    energy_profile: str | None = None  # CSV path; None uses the embedded table
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    eval: EvalSection = field(default_factory=EvalSection)

    # derived per-stage seeds, so one global seed reproduces every artifact
    def stage_seed(self, stage: str) -> int:
        offsets = {"world": 0, "holdout": 1, "dataset": 2, "mde": 3, "policy": 4, "noise": 5, "eval": 6}
        if stage not in offsets:
            raise ContractViolation(f"unknown stage {stage!r}")
        return self.seed * 1000 + offsets[stage]

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return _replace(self, seed=int(seed))

    def to_json(self) -> dict:
        return {"format_version": CONFIG_VERSION, **_plain(asdict(self))}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def hash(self) -> str:
        """sha256 over the canonical JSON of every materialized field."""
        canon = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _replace(cfg, **changes):
    d = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    d.update(changes)
    return type(cfg)(**d)


def preset(name: str) -> ExperimentConfig:
    if name == "desk":
        return ExperimentConfig()
    if name == "paper-scale":
        policy = PolicyConfig(episodes=2_000_000, validate_every=10_000, curriculum_period=10_000,
                              task=TaskConfig(alpha=256))
        perception = PerceptionSection(network=SlimmableConfig(alpha=256), dataset_size=20_000)
        return ExperimentConfig(preset="paper-scale", world=WorldParams(width=128, height=128),
                                perception=perception, policy=policy,
                                eval=EvalSection(static_alphas=(256, 128, 64, 32, 16, 8, 4, 2, 1)))
    raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


# -- loading ---------------------------------------------------------------

_TUPLE_FIELDS = {"rho_set", "hidden_multipliers", "hidden", "gates", "magnitudes", "static_alphas", "holdout_levels"}


def _build(cls, base, data: dict, where: str):
    """Overlay ``data`` onto dataclass instance ``base``; unknown keys are errors."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    extra = set(data) - set(known)
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(sorted(extra))}")
    out = {}
    for name in known:
        cur = getattr(base, name)
        if name not in data:
            out[name] = cur
            continue
        val = data[name]
        if hasattr(cur, "__dataclass_fields__"):
            out[name] = _build(type(cur), cur, val, f"{where}.{name}")
        elif name == "split":
            out[name] = tuple((str(k), float(v)) for k, v in val)
        elif name in _TUPLE_FIELDS and val is not None:
            out[name] = tuple(val)
        else:
            out[name] = val
    try:
        return cls(**out)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def from_json(data: dict, preset_name: str | None = None) -> ExperimentConfig:
    data = copy.deepcopy(data)
    version = data.pop("format_version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config format_version {version}")
    base = preset(preset_name or data.get("preset", "desk"))
    cfg = _build(ExperimentConfig, base, data, "config")
    validate(cfg)
    return cfg


def load_config(path: str | Path | None = None, preset_name: str | None = None,
                seed: int | None = None) -> ExperimentConfig:
    if path is None:
        cfg = preset(preset_name or "desk")
    else:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        cfg = from_json(data, preset_name)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    if cfg.preset not in PRESETS:
        raise ConfigError(f"unknown preset {cfg.preset!r}")
    try:
        cfg.world.validate()
    except ContractViolation as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.perception.backend not in BACKENDS:
        raise ConfigError(f"perception.backend must be one of {BACKENDS}")
    if cfg.sensor.rays != cfg.perception.network.rays or cfg.sensor.max_range != cfg.perception.network.max_range:
        raise ConfigError("sensor and perception.network disagree on rays/max_range")
    if cfg.policy.task.alpha != cfg.perception.network.alpha:
        raise ConfigError("policy.task.alpha must equal perception.network.alpha")
    rhos = set(cfg.perception.network.rho_set)
    bad = [g for g in cfg.policy.gates if g > 0 and g not in rhos]
    if bad:
        raise ConfigError(f"policy gates {bad} are not widths of the perception network")
    if cfg.perception.dataset_size < 3:
        raise ConfigError("perception.dataset_size too small")
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")
