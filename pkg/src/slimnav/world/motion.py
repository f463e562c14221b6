"""Translational motion with sensor-triggered truncation, and length-optimal planning."""

from __future__ import annotations

import heapq
import itertools
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation
from .grid import GridWorld, Pose

EAST, NORTH, WEST, SOUTH = 0, 1, 2, 3
DIRECTION_NAMES = ("east", "north", "west", "south")
_UNIT = ((1, 0), (0, 1), (-1, 0), (0, -1))


@dataclass(frozen=True)
class MotionSet:
    """Four cardinal directions times a list of magnitudes (meters)."""

    magnitudes: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0)

    def __post_init__(self):
        if not self.magnitudes or any(m <= 0 for m in self.magnitudes):
            raise ContractViolation("magnitudes must be positive")
        object.__setattr__(self, "magnitudes", tuple(float(m) for m in self.magnitudes))

    def __len__(self) -> int:
        return 4 * len(self.magnitudes)

    @property
    def max_magnitude(self) -> float:
        return max(self.magnitudes)

    def decode(self, index: int) -> tuple[int, float]:
        """Motion index -> (direction, magnitude)."""
        n = len(self.magnitudes)
        return index // n, self.magnitudes[index % n]

    def encode(self, direction: int, magnitude: float) -> int:
        return direction * len(self.magnitudes) + self.magnitudes.index(float(magnitude))


def step_motion(world: GridWorld, pose: Pose, direction: int, magnitude: float) -> tuple[Pose, bool, float]:
    """Translate until ``magnitude`` is consumed or the forward sensor sees an occupied cell.

    The forward distance sensor reaches one cell ahead; the vehicle advances
    at most one cell per sensor check and stops flush in the last free cell.
    Returns ``(new_pose, truncated, moved_meters)``.
    """
    ux, uy = _UNIT[direction]
    cs = world.cell_size
    x, y = pose.x, pose.y
    remaining = float(magnitude)
    moved = 0.0
    while remaining > 1e-9:
        if world.is_occupied_cell(*world.cell_of(x + ux * cs, y + uy * cs)):
            return Pose(x, y), True, moved
        inc = min(cs, remaining)
        x += ux * inc
        y += uy * inc
        moved += inc
        remaining -= inc
    return Pose(x, y), False, moved


def _cell_step(world: GridWorld, cell: tuple[int, int], direction: int, magnitude: float) -> tuple[int, int]:
    # worlds are immutable, so cell-center transitions can be memoized on the instance
    memo = world.__dict__.setdefault("_step_memo", {})
    key = (cell, direction, magnitude)
    out = memo.get(key)
    if out is None:
        pose, _, _ = step_motion(world, world.cell_center(*cell), direction, magnitude)
        out = memo[key] = world.cell_of(pose.x, pose.y)
    return out


def heuristic(world: GridWorld, a: tuple[int, int], b: tuple[int, int], max_magnitude: float) -> int:
    """Chebyshev-style lower bound on the number of moves between two cells."""
    span = max(abs(a[0] - b[0]), abs(a[1] - b[1])) * world.cell_size
    return math.ceil(span / max_magnitude - 1e-12)


def astar(world: GridWorld, start: Pose, target: Pose, motion_set: MotionSet | None = None) -> list[int] | None:
    """Minimum-action-count motion sequence from ``start`` to ``target``, or None.

    Poses are taken at their cell; the search runs over cell centers using
    exactly the transitions :func:`step_motion` produces (truncated moves
    included), so action counts agree with what the policy can execute.
    """
    motion_set = motion_set or MotionSet()
    world.require_free(start)
    world.require_free(target)
    s = world.cell_of(start.x, start.y)
    goal = world.cell_of(target.x, target.y)
    if s == goal:
        return []
    mmax = motion_set.max_magnitude
    tie = itertools.count()
    g = {s: 0}
    parent: dict[tuple[int, int], tuple[tuple[int, int], int]] = {}
    frontier = [(heuristic(world, s, goal, mmax), 0, next(tie), s)]
    closed = set()
    while frontier:
        _, cost, _, cell = heapq.heappop(frontier)
        if cell in closed:
            continue
        if cell == goal:
            path = []
            while cell != s:
                cell, action = parent[cell]
                path.append(action)
            return path[::-1]
        closed.add(cell)
        for action in range(len(motion_set)):
            nxt = _cell_step(world, cell, *motion_set.decode(action))
            if nxt == cell or nxt in closed:
                continue
            if cost + 1 < g.get(nxt, math.inf):
                g[nxt] = cost + 1
                parent[nxt] = (cell, action)
                heapq.heappush(frontier, (cost + 1 + heuristic(world, nxt, goal, mmax), cost + 1, next(tie), nxt))
    return None


def bfs_action_counts(world: GridWorld, start: Pose, motion_set: MotionSet | None = None) -> dict[tuple[int, int], int]:
    """Exhaustive breadth-first action counts from ``start`` to every reachable cell."""
    motion_set = motion_set or MotionSet()
    s = world.cell_of(start.x, start.y)
    dist = {s: 0}
    queue = deque([s])
    while queue:
        cell = queue.popleft()
        for action in range(len(motion_set)):
            nxt = _cell_step(world, cell, *motion_set.decode(action))
            if nxt not in dist:
                dist[nxt] = dist[cell] + 1
                queue.append(nxt)
    return dist


def replay(world: GridWorld, start: Pose, actions: list[int], motion_set: MotionSet | None = None) -> Pose:
    """Execute a motion-index sequence from ``start`` and return the final pose."""
    motion_set = motion_set or MotionSet()
    pose = world.cell_center(*world.cell_of(start.x, start.y))
    for a in actions:
        pose, _, _ = step_motion(world, pose, *motion_set.decode(a))
    return pose


def transition_table(world: GridWorld, motion_set: MotionSet) -> tuple[np.ndarray, np.ndarray]:
    """Cell-center transition table over free cells.

    Returns ``(cells, next_index)`` where ``cells`` is the (N, 2) free-cell
    list and ``next_index[i, a]`` is the index of the cell reached from
    cell ``i`` under motion ``a``.
    """
    cells = world.free_cells()
    index = -np.ones(world.occupancy.shape, dtype=np.int64)
    index[cells[:, 1], cells[:, 0]] = np.arange(len(cells))
    nxt = np.empty((len(cells), len(motion_set)), dtype=np.int64)
    for i, (ix, iy) in enumerate(cells):
        for a in range(len(motion_set)):
            jx, jy = _cell_step(world, (int(ix), int(iy)), *motion_set.decode(a))
            nxt[i, a] = index[jy, jx]
    return cells, nxt
