"""Depth datasets, multi-width training with early stopping, and evaluation."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ContractViolation, DivergenceError
from ..io import save_npz
from ..nn import Adam, max_relative_error, numeric_gradient
from ..world.grid import GridWorld, Pose
from ..world.sensing import SensorConfig, _appearance, _cast_all
from .slimmable import SlimmableConfig, SlimmableNet

log = logging.getLogger(__name__)

DATASET_VERSION = 1
DEFAULT_SPLIT = (("train", 0.4), ("validation", 0.1), ("test", 0.5))


@dataclass(eq=False)
class MdeDataset:
    images: np.ndarray  # (N, 2K) camera inputs
    depths: np.ndarray  # (N, K) ground-truth ranges in meters
    poses: np.ndarray  # (N, 2)
    split: dict[str, np.ndarray]
    max_range: float = 40.0
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.depths)

    def subset(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        idx = self.split[name]
        return self.images[idx], self.depths[idx]

    def manifest(self) -> dict:
        return {"format_version": DATASET_VERSION, "count": len(self), "seed": self.seed,
                "max_range": self.max_range, "rays": int(self.depths.shape[1]),
                "split": {k: int(len(v)) for k, v in self.split.items()}}

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        path = Path(path)
        arrays = {"images": self.images, "depths": self.depths, "poses": self.poses}
        arrays.update({f"split_{k}": v for k, v in self.split.items()})
        save_npz(path.with_suffix(".npz"), arrays)
        manifest = {**self.manifest(), **(extra or {})}
        path.with_suffix(".json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "MdeDataset":
        path = Path(path)
        manifest = json.loads(path.with_suffix(".json").read_text())
        if manifest.get("format_version") != DATASET_VERSION:
            raise ContractViolation(f"unsupported dataset format in {path}")
        with np.load(path.with_suffix(".npz")) as data:
            split = {k: data[f"split_{k}"] for k in manifest["split"]}
            return cls(data["images"], data["depths"], data["poses"], split, manifest["max_range"], manifest["seed"])


def collect_dataset(world: GridWorld, count: int, seed: int, sensor: SensorConfig | None = None,
                    fractions=DEFAULT_SPLIT, region: str = "train") -> MdeDataset:
    """Sample (camera, depth) pairs at uniformly random poses inside free cells of a region."""
    sensor = sensor or SensorConfig()
    if count < len(fractions):
        raise ContractViolation("dataset too small to split")
    rng = np.random.default_rng(seed)
    mask = world.train_mask() if region == "train" else world.holdout_mask() if region == "holdout" else world.free
    cells = world.free_cells(mask)
    images = np.empty((count, 2 * sensor.rays))
    depths = np.empty((count, sensor.rays))
    poses = np.empty((count, 2))
    cs = world.cell_size
    for i in range(count):
        ix, iy = cells[rng.integers(len(cells))]
        pose = Pose((ix + rng.random()) * cs, (iy + rng.random()) * cs)
        ranges, hits = _cast_all(world, pose, sensor)
        images[i] = _appearance(world, ranges, hits, sensor, rng).as_input()
        depths[i] = ranges
        poses[i] = pose.x, pose.y
    order = rng.permutation(count)
    split, start = {}, 0
    for j, (name, frac) in enumerate(fractions):
        n = count - start if j == len(fractions) - 1 else int(round(frac * count))
        split[name] = np.sort(order[start:start + n])
        start += n
    return MdeDataset(images, depths, poses, split, sensor.max_range, seed)


@dataclass(frozen=True)
class TrainSettings:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 30
    seed: int = 0


@dataclass
class TrainResult:
    net: SlimmableNet
    best_epoch: int
    history: list[dict] = field(default_factory=list)


def l1_by_rho(net: SlimmableNet, x: np.ndarray, y_m: np.ndarray) -> dict[float, float]:
    """Per-rho mean absolute error in meters (inference mode)."""
    return {rho: float(np.abs(net.predict(x, rho) - y_m).mean()) for rho in net.config.rho_set}


def train_slimmable(dataset: MdeDataset, config: SlimmableConfig | None = None,
                    settings: TrainSettings | None = None) -> TrainResult:
    """Train one network at every width in ``config.rho_set`` simultaneously.

    Every optimizer step back-propagates the L1 loss once per rho (each
    with its own normalization set), averages the gradients, and applies
    Adam with L2 weight decay on the weight matrices. The parameters with
    the best mean validation L1 across widths are returned.
    """
    config = config or SlimmableConfig()
    settings = settings or TrainSettings()
    x_tr, y_tr = dataset.subset("train")
    x_va, y_va = dataset.subset("validation")
    if len(x_tr) == 0 or len(x_va) == 0:
        raise ContractViolation("training and validation splits must be non-empty")
    if abs(dataset.max_range - config.max_range) > 1e-12:
        raise ContractViolation("dataset and network disagree on max_range")
    if config.degenerate():
        log.warning("rho_set %s collapses to duplicate widths at alpha=%s", config.rho_set, config.alpha)
    rng = np.random.default_rng(settings.seed)
    net = SlimmableNet.init(config, rng)
    params = net.parameters()
    opt = Adam(params, lr=settings.lr, weight_decay=settings.weight_decay, decay_mask=net.decay_mask())
    y_tr_n = y_tr / config.max_range

    best, best_score, best_epoch, history = net.copy(), np.inf, -1, []
    bs = settings.batch_size
    for epoch in range(settings.max_epochs):
        order = rng.permutation(len(x_tr))
        losses = []
        for start in range(0, len(order), bs):
            idx = order[start:start + bs]
            if len(idx) < 2 and len(order) > 1:
                continue  # a singleton batch has no batch statistics
            loss, grads = net.loss_and_grads(x_tr[idx], y_tr_n[idx], update_stats=True)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch starting {start}: loss={loss}")
            opt.step(grads)
            losses.append(loss)
        val = l1_by_rho(net, x_va, y_va)
        score = float(np.mean(list(val.values())))
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)) if losses else float("nan"),
                        "val_l1_mean": score, **{f"val_l1_rho_{r:g}": v for r, v in val.items()}})
        if score < best_score:
            best, best_score, best_epoch = net.copy(), score, epoch
        elif epoch - best_epoch >= settings.patience:
            break
    return TrainResult(best, best_epoch, history)


def r2_score(pred: np.ndarray, target: np.ndarray) -> float:
    """Coefficient of determination pooled over every entry."""
    pred = np.asarray(pred, dtype=float).ravel()
    target = np.asarray(target, dtype=float).ravel()
    if target.size == 0:
        raise ContractViolation("empty split")
    ss_res = float(((target - pred) ** 2).sum())
    ss_tot = float(((target - target.mean()) ** 2).sum())
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class R2Report:
    rho: float
    r2: float
    l1: float


def evaluate_r2(net: SlimmableNet, x: np.ndarray, y: np.ndarray, rho: float) -> R2Report:
    if len(y) == 0:
        raise ContractViolation("empty split")
    pred = np.zeros_like(y) if rho == 0 else net.predict(x, rho)
    return R2Report(rho, r2_score(pred, y), float(np.abs(pred - y).mean()))


def gradient_check(net: SlimmableNet, sample: tuple[np.ndarray, np.ndarray], rho_set=None,
                   epsilon: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients of the multi-width loss.

    The sample is one training batch ``(x, y_normalized)``; batch statistics
    are used and running statistics are left untouched.
    """
    if not 1e-6 <= epsilon <= 1e-1:
        raise ContractViolation("epsilon outside the supported range")
    x, y = sample
    rhos = net.config.rho_set if rho_set is None else tuple(rho_set)
    _, analytic = net.loss_and_grads(x, y, rhos, train=True, update_stats=False)
    numeric = numeric_gradient(lambda: net.loss_and_grads(x, y, rhos, train=True, update_stats=False)[0],
                               net.parameters(), epsilon)
    return max_relative_error(analytic, numeric)


def settings_dict(settings: TrainSettings) -> dict:
    return asdict(settings)
