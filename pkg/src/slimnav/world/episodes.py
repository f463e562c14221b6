"""Difficulty-stratified episode sampling and frozen holdout sets."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from ..errors import ContractViolation, GenerationError
from .grid import GridWorld, Pose
from .motion import MotionSet, astar, transition_table

# inclusive (lo, hi) optimal-action ranges; hi=None means open-ended
DEFAULT_BUCKETS: tuple[tuple[int, int | None], ...] = ((1, 3), (4, 6), (7, 10), (11, 16), (17, 24), (25, None))

_UNREACHABLE = -1


def bucket_of(difficulty: int, buckets=DEFAULT_BUCKETS) -> int | None:
    for level, (lo, hi) in enumerate(buckets):
        if difficulty >= lo and (hi is None or difficulty <= hi):
            return level
    return None


@dataclass(frozen=True)
class EpisodeSpec:
    start: Pose
    target: Pose
    difficulty: int
    optimal_path: tuple[int, ...] = field(default=())

    def key(self) -> tuple[float, float, float, float]:
        return (self.start.x, self.start.y, self.target.x, self.target.y)

    def to_json(self) -> dict:
        return {
            "start": self.start.as_list(),
            "target": self.target.as_list(),
            "difficulty": self.difficulty,
            "optimal_path": list(self.optimal_path),
        }

    @classmethod
    def from_json(cls, d: dict) -> "EpisodeSpec":
        return cls(Pose(*d["start"]), Pose(*d["target"]), int(d["difficulty"]), tuple(d.get("optimal_path", ())))


class DifficultyIndex:
    """All-pairs optimal action counts over free cells.

    Built once per (world, motion set) with a breadth-first search over the
    cell-center transition graph. This is the precomputed bucket table that
    :func:`sample_episode` rejection-samples against.
    """

    def __init__(self, world: GridWorld, motion_set: MotionSet | None = None, buckets=DEFAULT_BUCKETS,
                 chunk: int = 512):
        self.world = world
        self.motion_set = motion_set or MotionSet()
        self.buckets = tuple(buckets)
        self.cells, self.next_index = transition_table(world, self.motion_set)
        n = len(self.cells)
        self.cell_index = -np.ones(world.occupancy.shape, dtype=np.int64)
        self.cell_index[self.cells[:, 1], self.cells[:, 0]] = np.arange(n)
        rows = np.repeat(np.arange(n), self.next_index.shape[1])
        cols = self.next_index.ravel()
        keep = rows != cols
        graph = csr_matrix((np.ones(int(keep.sum())), (rows[keep], cols[keep])), shape=(n, n))
        self.table = np.empty((n, n), dtype=np.int16)
        for lo in range(0, n, chunk):
            d = shortest_path(graph, directed=True, unweighted=True, indices=np.arange(lo, min(lo + chunk, n)))
            d[~np.isfinite(d)] = _UNREACHABLE
            self.table[lo:lo + chunk] = d.astype(np.int16)
        self.train_ids = self._ids(world.train_mask())
        self.holdout_ids = self._ids(world.holdout_mask())

    def _ids(self, mask: np.ndarray) -> np.ndarray:
        return self.cell_index[mask & self.world.free]

    def index_of(self, pose: Pose) -> int:
        ix, iy = self.world.cell_of(pose.x, pose.y)
        i = int(self.cell_index[iy, ix]) if self.world.in_bounds(ix, iy) else -1
        if i < 0:
            raise ContractViolation(f"pose ({pose.x}, {pose.y}) is not in a free cell")
        return i

    def pose_of(self, i: int) -> Pose:
        ix, iy = self.cells[i]
        return self.world.cell_center(int(ix), int(iy))

    def difficulty(self, start: Pose, target: Pose) -> int | None:
        d = int(self.table[self.index_of(start), self.index_of(target)])
        return None if d == _UNREACHABLE else d

    def bucket_bounds(self, level: int) -> tuple[int, int]:
        lo, hi = self.buckets[level]
        return lo, (int(np.iinfo(np.int16).max) if hi is None else hi)

    def _pair_table(self, ids: np.ndarray) -> np.ndarray:
        return self.table[np.ix_(ids, ids)]

    def bucket_counts(self, region: str = "train") -> list[int]:
        ids = self.train_ids if region == "train" else self.holdout_ids
        sub = self._pair_table(ids)
        out = []
        for level in range(len(self.buckets)):
            lo, hi = self.bucket_bounds(level)
            out.append(int(((sub >= lo) & (sub <= hi)).sum()))
        return out

    def bucket_values(self, level: int, region: str = "train") -> set[int]:
        """Distinct reachable difficulty values of a bucket in a region."""
        ids = self.train_ids if region == "train" else self.holdout_ids
        sub = self._pair_table(ids)
        lo, hi = self.bucket_bounds(level)
        return set(np.unique(sub[(sub >= lo) & (sub <= hi)]).tolist())

    def available_levels(self, region: str = "train", minimum: int = 1) -> int:
        """Number of leading buckets that each hold at least ``minimum`` pairs."""
        n = 0
        for c in self.bucket_counts(region):
            if c < minimum:
                break
            n += 1
        return n

    def descend(self, s: int, t: int) -> list[int]:
        """Optimal motion sequence read off the table (lowest action index at ties)."""
        d = int(self.table[s, t])
        if d == _UNREACHABLE:
            raise ContractViolation(f"pair {s}->{t} is unreachable")
        path = []
        column = self.table[:, t]
        while s != t:
            nxt = self.next_index[s]
            a = int(np.nonzero(column[nxt] == d - 1)[0][0])
            path.append(a)
            s, d = int(nxt[a]), d - 1
        return path

    def steps_within(self, s: int, target: Pose, radius: float) -> int | None:
        """Fewest actions from cell ``s`` to any cell whose center lies within ``radius`` of ``target``."""
        centers = (self.cells + 0.5) * self.world.cell_size
        near = np.nonzero(np.hypot(centers[:, 0] - target.x, centers[:, 1] - target.y) <= radius)[0]
        d = self.table[s, near]
        d = d[d != _UNREACHABLE]
        return int(d.min()) if len(d) else None

    def make_episode(self, s: int, t: int, planner: bool = True) -> EpisodeSpec:
        """Episode for a cell pair; ``planner=True`` runs A*, otherwise the table path is used."""
        start, target = self.pose_of(s), self.pose_of(t)
        path = astar(self.world, start, target, self.motion_set) if planner else self.descend(s, t)
        if path is None or len(path) != int(self.table[s, t]):
            raise GenerationError(f"planner disagrees with difficulty table for pair {s}->{t}")
        return EpisodeSpec(start, target, len(path), tuple(path))


def sample_episode(index: DifficultyIndex, level: int, rng: np.random.Generator,
                   max_attempts: int = 200_000, batch: int = 1024, planner: bool = False) -> EpisodeSpec:
    """Rejection-sample a training-region start/target pair whose difficulty lies in ``level``'s bucket.

    Viability and difficulty come from the precomputed table; pass
    ``planner=True`` to also run A* on the accepted pair.
    """
    if not 0 <= level < len(index.buckets):
        raise ContractViolation(f"level {level} outside the difficulty ladder")
    lo, hi = index.bucket_bounds(level)
    ids = index.train_ids
    if len(ids) < 2:
        raise GenerationError("training region has fewer than two free cells")
    tried = 0
    while tried < max_attempts:
        n = min(batch, max_attempts - tried)
        s = ids[rng.integers(len(ids), size=n)]
        t = ids[rng.integers(len(ids), size=n)]
        d = index.table[s, t]
        ok = np.nonzero((d >= lo) & (d <= hi))[0]
        if len(ok):
            j = int(ok[0])
            return index.make_episode(int(s[j]), int(t[j]), planner=planner)
        tried += n
    raise GenerationError(f"no episode found for level {level} after {max_attempts} attempts")


def build_holdout_sets(index: DifficultyIndex, per_bucket: dict[str, int], seed: int,
                       levels: list[int] | None = None, region: str = "holdout",
                       min_separation: float = 0.0) -> dict[str, list[EpisodeSpec]]:
    """Stratified, disjoint holdout splits drawn from the holdout region only.

    ``region="all"`` draws from every free cell instead (for toy maps whose
    holdout quadrant is too small), and ``min_separation`` drops pairs whose
    start already lies within that distance of the target.

    ``per_bucket`` maps split name to episodes per bucket (e.g.
    ``{"validation": 20, "test": 50}``). With ``levels=None`` every leading
    bucket that can supply all splits is used; an explicit level that
    cannot raises :class:`GenerationError`.
    """
    rng = np.random.default_rng(seed)
    if region == "holdout":
        ids = index.holdout_ids
    elif region == "all":
        ids = np.arange(len(index.cells))
    else:
        raise ContractViolation(f"unknown region {region!r}")
    sub = index._pair_table(ids).copy()
    if min_separation > 0:
        xy = (index.cells[ids] + 0.5) * index.world.cell_size
        gap = np.hypot(xy[:, None, 0] - xy[None, :, 0], xy[:, None, 1] - xy[None, :, 1])
        sub[gap <= min_separation] = _UNREACHABLE
    need = sum(per_bucket.values())
    counts = []
    for level in range(len(index.buckets)):
        lo, hi = index.bucket_bounds(level)
        counts.append(int(((sub >= lo) & (sub <= hi)).sum()))
    if levels is None:
        levels = []
        for level, c in enumerate(counts):
            if c < need:
                break
            levels.append(level)
        if not levels:
            raise GenerationError("holdout region cannot supply even the easiest bucket")
    out: dict[str, list[EpisodeSpec]] = {name: [] for name in per_bucket}
    for level in levels:
        if counts[level] < need:
            raise GenerationError(f"bucket {level} has {counts[level]} holdout pairs, {need} requested")
        lo, hi = index.bucket_bounds(level)
        si, ti = np.nonzero((sub >= lo) & (sub <= hi))
        pick = rng.choice(len(si), size=need, replace=False)
        pos = 0
        for name, count in per_bucket.items():
            for j in pick[pos:pos + count]:
                out[name].append(index.make_episode(int(ids[si[j]]), int(ids[ti[j]])))
            pos += count
    return out


def save_episodes(path: str | Path, episodes: list[EpisodeSpec], meta: dict | None = None) -> None:
    doc = {"format_version": 1, "meta": meta or {}, "episodes": [e.to_json() for e in episodes]}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_episodes(path: str | Path) -> list[EpisodeSpec]:
    doc = json.loads(Path(path).read_text())
    return [EpisodeSpec.from_json(d) for d in doc["episodes"]]
