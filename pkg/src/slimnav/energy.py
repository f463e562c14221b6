"""Power/latency/energy cost model of the depth network as a function of its size.

The built-in profile is the embedded-board benchmark table (network base
channels 256 down to 1 at full width). Intermediate sizes interpolate power
and latency linearly in log2(size); energy follows their product.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractViolation

DEFAULT_PROFILE_CSV = """size,power_mw,latency_ms,energy_mj
256,17740,117.1,2078.1
128,18351,30.0,550.0
64,17808,11.0,196.4
32,12961,6.5,83.9
16,7375,7.0,51.6
8,6123,6.7,41.1
4,5224,6.5,34.1
2,4968,6.0,29.8
1,4788,6.0,28.7
"""

CONSISTENCY_TOLERANCE = 0.01


@dataclass(frozen=True)
class Cost:
    power_mw: float
    latency_ms: float
    energy_mj: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.power_mw, self.latency_ms, self.energy_mj)


@dataclass(frozen=True, eq=False)
class EnergyProfile:
    sizes: np.ndarray
    power_mw: np.ndarray
    latency_ms: np.ndarray
    energy_mj: np.ndarray
    source_csv: str = ""

    def __post_init__(self):
        s = np.asarray(self.sizes, dtype=float)
        if len(s) == 0 or np.any(s <= 0) or np.any(np.diff(s) >= 0):
            raise ContractViolation("profile sizes must be positive and strictly decreasing")
        implied = self.power_mw * self.latency_ms / 1000.0
        bad = np.abs(self.energy_mj - implied) > CONSISTENCY_TOLERANCE * self.energy_mj
        if np.any(bad):
            raise ContractViolation(f"energy != power*latency within 1% at sizes {s[bad].tolist()}")
        # Power is deliberately not checked: the measured board draws slightly more at 128 than at 256.
        if np.any(np.diff(self.energy_mj) > 0):
            raise ContractViolation("energy must be non-decreasing in size")

    @classmethod
    def from_csv_text(cls, text: str) -> "EnergyProfile":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows or set(rows[0]) != {"size", "power_mw", "latency_ms", "energy_mj"}:
            raise ContractViolation("profile CSV needs header size,power_mw,latency_ms,energy_mj")
        cols = {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}
        return cls(cols["size"], cols["power_mw"], cols["latency_ms"], cols["energy_mj"], source_csv=text)

    @classmethod
    def load(cls, path: str | Path) -> "EnergyProfile":
        return cls.from_csv_text(Path(path).read_text())

    @classmethod
    def default(cls) -> "EnergyProfile":
        return cls.from_csv_text(DEFAULT_PROFILE_CSV)

    def to_csv_text(self) -> str:
        if self.source_csv:
            return self.source_csv
        buf = io.StringIO()
        buf.write("size,power_mw,latency_ms,energy_mj\n")
        for row in zip(self.sizes, self.power_mw, self.latency_ms, self.energy_mj):
            buf.write(",".join(_fmt(v) for v in row) + "\n")
        return buf.getvalue()

    @property
    def max_size(self) -> float:
        return float(self.sizes[0])

    def cost(self, size: float) -> Cost:
        return cost(self, size)


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def cost(profile: EnergyProfile, size: float) -> Cost:
    """Cost of one inference at network size ``alpha * rho``.

    Size 0 is the bypass (no inference). Sizes between table rows use
    log2-linear interpolation of power and latency; energy is their product
    times the log2-interpolated row ratio energy/(power*latency), which is
    within 1% of one and keeps the curve continuous through the rounded
    table energies. Sizes below the smallest row reuse that row.
    """
    if size < 0 or not math.isfinite(size):
        raise ContractViolation(f"size must be a finite non-negative number, got {size}")
    if size == 0:
        return Cost(0.0, 0.0, 0.0)
    if size > profile.max_size * (1 + 1e-12):
        raise ContractViolation(f"size {size} exceeds the largest profiled size {profile.max_size}")
    sizes = profile.sizes
    exact = np.nonzero(np.isclose(sizes, size, rtol=1e-12, atol=0.0))[0]
    if len(exact):
        i = int(exact[0])
        return Cost(float(profile.power_mw[i]), float(profile.latency_ms[i]), float(profile.energy_mj[i]))
    if size < sizes[-1]:
        return Cost(float(profile.power_mw[-1]), float(profile.latency_ms[-1]), float(profile.energy_mj[-1]))
    # np.interp wants increasing x
    x = np.log2(sizes[::-1])
    p = float(np.interp(math.log2(size), x, profile.power_mw[::-1]))
    lat = float(np.interp(math.log2(size), x, profile.latency_ms[::-1]))
    ratio = profile.energy_mj * 1000.0 / (profile.power_mw * profile.latency_ms)
    k = float(np.interp(math.log2(size), x, ratio[::-1]))
    return Cost(p, lat, k * p * lat / 1000.0)


def reward_energy_penalty(profile: EnergyProfile, alpha: float, rho: float, weight: float = 2.0) -> float:
    """Dimensionless energy penalty: ``weight * energy(alpha*rho) / energy(alpha)``."""
    if rho < 0 or rho > 1:
        raise ContractViolation(f"rho={rho} outside [0, 1]")
    if rho == 0:
        return 0.0
    return weight * cost(profile, alpha * rho).energy_mj / cost(profile, alpha).energy_mj


@dataclass(frozen=True)
class EnergySummary:
    energy_mj: float
    acquisitions: int
    mean_power_mw: float | None
    mean_latency_ms: float | None


def episode_energy(profile: EnergyProfile, trace_sizes) -> EnergySummary:
    """Totals over a per-step trace of network sizes; size-0 steps cost and acquire nothing."""
    costs = [cost(profile, float(s)) for s in trace_sizes]
    active = [c for s, c in zip(trace_sizes, costs) if s > 0]
    if not active:
        return EnergySummary(0.0, 0, None, None)
    return EnergySummary(
        energy_mj=float(sum(c.energy_mj for c in costs)),
        acquisitions=len(active),
        mean_power_mw=float(np.mean([c.power_mw for c in active])),
        mean_latency_ms=float(np.mean([c.latency_ms for c in active])),
    )


def bench_table(profile: EnergyProfile, alpha: float, rhos) -> list[dict]:
    """Table-shaped cost sweep over ``alpha * rho``."""
    out = []
    for rho in rhos:
        c = cost(profile, alpha * rho)
        out.append({"alpha": alpha, "rho": rho, "size": alpha * rho, "power_mw": c.power_mw,
                    "latency_ms": c.latency_ms, "energy_mj": c.energy_mj})
    return out
