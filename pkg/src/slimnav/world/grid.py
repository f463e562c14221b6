"""Occupancy/material grid worlds and their procedural generator.

Coordinate convention: cell ``(ix, iy)`` covers ``[ix*cs, (ix+1)*cs) x
[iy*cs, (iy+1)*cs)`` in meters, with x pointing east and y pointing north.
Arrays are indexed ``[iy, ix]``. The holdout region is the north-west
(top-left) quadrant; the remaining three quadrants are for training.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from ..errors import ContractViolation, GenerationError
from ..io import save_npz

GROUND, HOUSE, TREE, CAR = 0, 1, 2, 3
MATERIAL_NAMES = {GROUND: "ground", HOUSE: "house", TREE: "tree", CAR: "car"}

WORLD_FORMAT_VERSION = 1

_FOUR_NEIGHBORS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class Pose:
    x: float
    y: float

    def distance_to(self, other: "Pose") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)

    def as_list(self) -> list[float]:
        return [float(self.x), float(self.y)]


@dataclass(frozen=True)
class WorldParams:
    """Settings for :func:`generate_world`. Densities are fractions in [0, 1]."""

    width: int = 64
    height: int = 64
    cell_size: float = 1.0
    house_density: float = 0.30  # target fraction of interior covered by houses
    house_min: int = 3
    house_max: int = 7
    tree_density: float = 0.03  # per free non-road cell
    car_density: float = 0.01
    road_spacing: int = 16
    road_width: int = 2
    min_connected_fraction: float = 0.85
    max_attempts: int = 100

    def validate(self) -> None:
        if self.width < 32 or self.height < 32:
            raise ContractViolation(f"map must be at least 32x32 cells, got {self.width}x{self.height}")
        for name in ("house_density", "tree_density", "car_density"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ContractViolation(f"{name}={value} outside [0, 1]")
        if self.cell_size <= 0:
            raise ContractViolation("cell_size must be positive")
        if not 1 <= self.house_min <= self.house_max:
            raise ContractViolation("need 1 <= house_min <= house_max")


@dataclass(eq=False)
class GridWorld:
    occupancy: np.ndarray  # bool [iy, ix]
    material: np.ndarray  # uint8 [iy, ix]
    cell_size: float = 1.0
    seed: int | None = None
    params: WorldParams | None = None
    split_x: int = field(default=-1)  # holdout: ix < split_x and iy >= split_y
    split_y: int = field(default=-1)

    def __post_init__(self):
        self.occupancy = np.ascontiguousarray(self.occupancy, dtype=bool)
        self.material = np.ascontiguousarray(self.material, dtype=np.uint8)
        if self.occupancy.shape != self.material.shape:
            raise ContractViolation("occupancy and material shapes differ")
        if self.split_x < 0:
            self.split_x = self.width // 2
        if self.split_y < 0:
            self.split_y = self.height // 2
        self.occupancy.setflags(write=False)
        self.material.setflags(write=False)

    @classmethod
    def empty(cls, width: int, height: int, cell_size: float = 1.0) -> "GridWorld":
        """Border-only world; no size restriction (used for toy problems)."""
        occ = np.zeros((height, width), dtype=bool)
        occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
        mat = np.where(occ, HOUSE, GROUND).astype(np.uint8)
        return cls(occ, mat, cell_size=cell_size)

    @property
    def width(self) -> int:
        return self.occupancy.shape[1]

    @property
    def height(self) -> int:
        return self.occupancy.shape[0]

    @property
    def free(self) -> np.ndarray:
        return ~self.occupancy

    @property
    def scale(self) -> float:
        """Map diagonal in meters; used to normalize relative poses."""
        return math.hypot(self.width, self.height) * self.cell_size

    def holdout_mask(self) -> np.ndarray:
        iy, ix = np.indices(self.occupancy.shape)
        return self.free & (ix < self.split_x) & (iy >= self.split_y)

    def train_mask(self) -> np.ndarray:
        return self.free & ~self.holdout_mask()

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return int(math.floor(x / self.cell_size)), int(math.floor(y / self.cell_size))

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def is_occupied_cell(self, ix: int, iy: int) -> bool:
        return not self.in_bounds(ix, iy) or bool(self.occupancy[iy, ix])

    def is_free_pose(self, pose: Pose) -> bool:
        return not self.is_occupied_cell(*self.cell_of(pose.x, pose.y))

    def require_free(self, pose: Pose) -> None:
        if not self.is_free_pose(pose):
            raise ContractViolation(f"pose ({pose.x}, {pose.y}) is not in a free cell")

    def cell_center(self, ix: int, iy: int) -> Pose:
        return Pose((ix + 0.5) * self.cell_size, (iy + 0.5) * self.cell_size)

    def free_cells(self, mask: np.ndarray | None = None) -> np.ndarray:
        """(N, 2) array of (ix, iy) for free cells, row-major order."""
        m = self.free if mask is None else mask
        iy, ix = np.nonzero(m)
        return np.stack([ix, iy], axis=1)

    def with_cell(self, ix: int, iy: int, occupied: bool = True, material: int = HOUSE) -> "GridWorld":
        occ = self.occupancy.copy()
        mat = self.material.copy()
        occ[iy, ix] = occupied
        mat[iy, ix] = material if occupied else GROUND
        return GridWorld(occ, mat, self.cell_size, self.seed, self.params, self.split_x, self.split_y)

    def metadata(self) -> dict:
        return {
            "format_version": WORLD_FORMAT_VERSION,
            "width": self.width,
            "height": self.height,
            "cell_size": self.cell_size,
            "seed": self.seed,
            "params": asdict(self.params) if self.params is not None else None,
            "region_split": {"holdout": "ix < split_x and iy >= split_y", "split_x": self.split_x, "split_y": self.split_y},
            "free_cells": int(self.free.sum()),
        }

    def save(self, path: str | Path) -> None:
        """Write ``<path>.npz`` (grids) and ``<path>.json`` (metadata)."""
        path = Path(path)
        save_npz(path.with_suffix(".npz"), {"occupancy": self.occupancy, "material": self.material}, compress=True)
        path.with_suffix(".json").write_text(json.dumps(self.metadata(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "GridWorld":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        if meta.get("format_version") != WORLD_FORMAT_VERSION:
            raise ContractViolation(f"unsupported world format {meta.get('format_version')}")
        with np.load(path.with_suffix(".npz")) as data:
            occ, mat = data["occupancy"], data["material"]
        params = WorldParams(**meta["params"]) if meta.get("params") else None
        split = meta["region_split"]
        return cls(occ, mat, meta["cell_size"], meta["seed"], params, split["split_x"], split["split_y"])


def _road_mask(shape: tuple[int, int], params: WorldParams, rng: np.random.Generator) -> np.ndarray:
    h, w = shape
    roads = np.zeros(shape, dtype=bool)
    spacing, rw = params.road_spacing, params.road_width
    if spacing <= 0 or rw <= 0:
        return roads
    for size, axis in ((w, 1), (h, 0)):
        start = int(rng.integers(spacing // 2, spacing)) if spacing > 1 else 1
        for pos in range(start, size - 1, spacing):
            lo, hi = max(pos, 1), min(pos + rw, size - 1)
            if axis == 1:
                roads[1:-1, lo:hi] = True
            else:
                roads[lo:hi, 1:-1] = True
    return roads


def _generate_once(params: WorldParams, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    h, w = params.height, params.width
    occ = np.zeros((h, w), dtype=bool)
    mat = np.zeros((h, w), dtype=np.uint8)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    mat[occ] = HOUSE
    roads = _road_mask((h, w), params, rng)

    interior = (h - 2) * (w - 2)
    target = params.house_density * interior
    if target > 0:
        covered = 0
        for _ in range(20 * interior):  # placement tries
            if covered >= target:
                break
            rw = int(rng.integers(params.house_min, params.house_max + 1))
            rh = int(rng.integers(params.house_min, params.house_max + 1))
            x0 = int(rng.integers(1, max(2, w - rw)))
            y0 = int(rng.integers(1, max(2, h - rh)))
            block = (slice(y0, min(y0 + rh, h - 1)), slice(x0, min(x0 + rw, w - 1)))
            newly = ~occ[block] & ~roads[block]
            covered += int(newly.sum())
            occ[block] |= newly
            mat[block][newly] = HOUSE

    for density, kind in ((params.tree_density, TREE), (params.car_density, CAR)):
        if density > 0:
            draw = rng.random((h, w)) < density
            place = draw & ~occ & ~roads
            occ |= place
            mat[place] = kind
    return occ, mat


def generate_world(seed: int, params: WorldParams | None = None) -> GridWorld:
    """Procedurally generate an urban grid world.

    Houses are rectangular clusters, trees and cars single cells, roads
    free corridors. Small free pockets cut off from the main free region
    are filled in; an attempt is rejected (and regenerated from a derived
    seed) when the main region holds less than ``min_connected_fraction``
    of the free space. Raises :class:`GenerationError` after
    ``max_attempts`` rejections.
    """
    params = params or WorldParams()
    params.validate()
    for attempt in range(params.max_attempts):
        rng = np.random.default_rng([seed, attempt])
        occ, mat = _generate_once(params, rng)
        labels, n = ndimage.label(~occ, structure=_FOUR_NEIGHBORS)
        if n == 0:
            continue
        sizes = np.bincount(labels.ravel())[1:]
        main = int(np.argmax(sizes)) + 1
        if sizes[main - 1] < params.min_connected_fraction * sizes.sum() or sizes[main - 1] < 2:
            continue
        pockets = (labels != main) & ~occ
        occ = occ | pockets
        mat[pockets] = HOUSE
        return GridWorld(occ, mat, cell_size=params.cell_size, seed=seed, params=params)
    raise GenerationError(
        f"free space stayed disconnected after {params.max_attempts} attempts; lower the obstacle densities"
    )
