"""Trace analyses: saturation of solved sets, spatial width heatmaps, and context correlations."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Iterable, Mapping

import numpy as np
from scipy import stats

from ..errors import ContractViolation
from ..policy.episode import EpisodeResult, StepRecord

MIN_CORRELATION_EVENTS = 100


@dataclass(frozen=True)
class SaturationResult:
    descending_order: tuple[Hashable, ...]
    descending_curve: tuple[int, ...]  # |B| after each prefix
    descending_gains: tuple[int, ...]
    greedy_order: tuple[Hashable, ...]
    greedy_curve: tuple[int, ...]
    greedy_gains: tuple[int, ...]

    def to_json(self) -> dict:
        return {k: [str(v) if not isinstance(v, (int, float)) else v for v in getattr(self, k)]
                for k in self.__dataclass_fields__}


def _curve(order, sets):
    union: set = set()
    curve, gains = [], []
    for label in order:
        before = len(union)
        union |= sets[label]
        curve.append(len(union))
        gains.append(len(union) - before)
    return tuple(curve), tuple(gains)


def saturation_analysis(success_sets: Mapping[Hashable, Iterable], sizes: Mapping[Hashable, float],
                        test_sets: Mapping[Hashable, Hashable] | None = None) -> SaturationResult:
    """Growth of B = union of solved-episode sets as policies are added.

    Two orders: by descending network size, and greedily by marginal gain
    with ties going to the larger size (then to the earlier label).
    ``test_sets`` optionally maps each label to an identifier of the test
    set it was evaluated on; all identifiers must agree.
    """
    labels = list(success_sets)
    if len(labels) < 2:
        raise ContractViolation("saturation analysis needs at least two policies")
    if set(sizes) != set(labels):
        raise ContractViolation("every policy needs exactly one size")
    if test_sets is not None:
        if set(test_sets) != set(labels) or len({test_sets[k] for k in labels}) != 1:
            raise ContractViolation("policies were evaluated on different test sets")
    sets = {k: set(v) for k, v in success_sets.items()}
    pos = {k: i for i, k in enumerate(labels)}
    desc = tuple(sorted(labels, key=lambda k: (-sizes[k], pos[k])))
    greedy, union, left = [], set(), list(labels)
    while left:
        best = max(left, key=lambda k: (len(sets[k] - union), sizes[k], -pos[k]))
        greedy.append(best)
        union |= sets[best]
        left.remove(best)
    d_curve, d_gain = _curve(desc, sets)
    g_curve, g_gain = _curve(greedy, sets)
    return SaturationResult(desc, d_curve, d_gain, tuple(greedy), g_curve, g_gain)


# -- heatmaps ----------------------------------------------------------------


def _events(traces) -> list[list[StepRecord]]:
    out = []
    for t in traces:
        out.append(t.trace if isinstance(t, EpisodeResult) else list(t))
    return out


@dataclass
class Heatmap:
    mean: np.ndarray  # [by, bx], nan where no event fell
    count: np.ndarray
    bin: float

    def to_csv(self, path: str | Path) -> None:
        """Rows from north to south; empty fields are bins without events."""
        lines = []
        for row in self.mean[::-1]:
            lines.append(",".join("" if math.isnan(v) else repr(float(v)) for v in row))
        Path(path).write_text("\n".join(lines) + "\n")

    def to_pgm(self, path: str | Path) -> None:
        """Binary graymap, north up. 0 marks an empty bin; rho in [0, 1] maps to 1..255."""
        img = np.zeros(self.mean.shape, dtype=np.uint8)
        ok = ~np.isnan(self.mean)
        img[ok] = 1 + np.round(254 * np.clip(self.mean[ok], 0, 1)).astype(np.uint8)
        h, w = img.shape
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode())
            fh.write(img[::-1].tobytes())


def rho_heatmap(traces, bin_size: float, extent: tuple[float, float] | None = None,
                direction: int | None = None) -> Heatmap:
    """Mean applied width per spatial bin over every computing stage (optionally one motion direction)."""
    episodes = _events(traces)
    steps = [s for tr in episodes for s in tr]
    if not steps:
        raise ContractViolation("no computing-stage events")
    if bin_size <= 0:
        raise ContractViolation("bin size must be positive")
    if extent is None:
        extent = (max(s.x for s in steps) + 1e-9, max(s.y for s in steps) + 1e-9)
    nx, ny = max(1, math.ceil(extent[0] / bin_size)), max(1, math.ceil(extent[1] / bin_size))
    total = np.zeros((ny, nx))
    count = np.zeros((ny, nx), dtype=np.int64)
    for s in steps:
        if direction is not None and s.direction != direction:
            continue
        bx, by = int(s.x // bin_size), int(s.y // bin_size)
        if 0 <= bx < nx and 0 <= by < ny:
            total[by, bx] += s.rho
            count[by, bx] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    return Heatmap(mean, count, bin_size)


# -- correlations --------------------------------------------------------------


def spearman(a, b) -> float | None:
    """Rank correlation, or None when either input is constant (undefined)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if len(a) < 2 or np.all(a == a[0]) or np.all(b == b[0]):
        return None
    return float(stats.spearmanr(a, b).statistic)


def context_correlations(traces) -> dict:
    """Spearman correlation of the applied width with its context, plus truncation-conditioned means."""
    episodes = _events(traces)
    steps = [s for tr in episodes for s in tr]
    if len(steps) < MIN_CORRELATION_EVENTS:
        raise ContractViolation(f"{len(steps)} computing-stage events, at least {MIN_CORRELATION_EVENTS} needed")
    rho = [s.rho for s in steps]
    dens = [(s.queue_mean_depth, s.rho) for s in steps if s.queue_mean_depth is not None]
    prev = [(a.rho, b.rho) for tr in episodes for a, b in zip(tr, tr[1:])]
    out = {
        "events": len(steps),
        "spearman_rho_vs_queue_mean_depth": spearman([d for d, _ in dens], [r for _, r in dens]) if dens else None,
        "spearman_rho_vs_distance": spearman([s.distance for s in steps], rho),
        "spearman_rho_vs_previous_rho": spearman([a for a, _ in prev], [b for _, b in prev]) if prev else None,
        "spearman_rho_vs_magnitude": spearman([s.magnitude for s in steps], rho),
    }
    for flag in (True, False):
        sel = [s for s in steps if s.prev_truncated == flag]
        key = "after_truncation" if flag else "after_free_move"
        out[f"mean_rho_{key}"] = float(np.mean([s.rho for s in sel])) if sel else None
        out[f"mean_gate_{key}"] = float(np.mean([s.gate for s in sel])) if sel else None
        out[f"events_{key}"] = len(sel)
    return out
