"""Fidelity emulator and the perception backends the policy talks to.

All backends share one call, ``predict(pose, rho) -> ranges``, and count
camera acquisitions; ``rho=0`` never touches the camera.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation
from ..world.grid import Pose
from ..world.sensing import DepthScan, ObservationCache
from .slimmable import SlimmableNet


@dataclass(frozen=True)
class EmulatorParams:
    blur_scale: float = 1.0  # c in half-width round(c * (1/rho - 1))
    noise_sigma0: float = 0.1  # meters at 1/rho - 1 == 1


def blur_half_width(rho: float, c: float) -> int:
    return int(math.floor(c * (1.0 / rho - 1.0) + 0.5 + 1e-9))


def circular_box_blur(values: np.ndarray, half_width: int) -> np.ndarray:
    if half_width <= 0:
        return values.copy()
    n = len(values)
    if 2 * half_width + 1 >= n:
        return np.full(n, values.mean())
    padded = np.concatenate([values[-half_width:], values, values[:half_width]])
    kernel = np.ones(2 * half_width + 1) / (2 * half_width + 1)
    return np.convolve(padded, kernel, mode="valid")


def emulate_depth(gt: DepthScan, rho: float, params: EmulatorParams | None = None,
                  rng: np.random.Generator | None = None) -> DepthScan:
    """Degrade a ground-truth scan the way a narrower network would: blur plus noise."""
    params = params or EmulatorParams()
    if rho < 0 or rho > 1:
        raise ContractViolation(f"rho={rho} outside [0, 1]")
    if rho == 0:
        return DepthScan(np.zeros(len(gt.ranges)), gt.max_range)
    if rho == 1:
        return DepthScan(np.array(gt.ranges, dtype=float), gt.max_range)
    out = circular_box_blur(np.asarray(gt.ranges, dtype=float), blur_half_width(rho, params.blur_scale))
    sigma = params.noise_sigma0 * (1.0 / rho - 1.0)
    if sigma > 0:
        if rng is None:
            raise ContractViolation("a noise source is required when noise is enabled")
        out = out + rng.normal(0.0, sigma, len(out))
    return DepthScan(np.clip(out, 0.0, gt.max_range), gt.max_range)


class _Backend:
    """Shared bookkeeping: rho validation and acquisition counting."""

    kind = "base"

    def __init__(self, observations: ObservationCache, rho_set):
        self.observations = observations
        self.rho_set = tuple(float(r) for r in rho_set)
        self.acquisitions = 0
        self.rays = observations.sensor.rays

    def _check(self, rho: float) -> float:
        if rho == 0:
            return 0.0
        for r in self.rho_set:
            if math.isclose(r, rho, rel_tol=0, abs_tol=1e-12):
                return r
        raise ContractViolation(f"rho={rho} not supported by this backend ({self.rho_set})")

    def predict(self, pose: Pose, rho: float) -> np.ndarray:
        rho = self._check(rho)
        if rho == 0:
            return np.zeros(self.rays)
        self.acquisitions += 1
        return self._predict(pose, rho)

    def _predict(self, pose: Pose, rho: float) -> np.ndarray:
        raise NotImplementedError


class GroundTruthBackend(_Backend):
    """Exact ranges at every width (the upper-fidelity reference)."""

    kind = "ground_truth"

    def __init__(self, observations: ObservationCache, rho_set=(1.0,)):
        super().__init__(observations, rho_set)

    def _predict(self, pose, rho):
        return self.observations.depth(pose).ranges


class EmulatorBackend(_Backend):
    """Blur-and-noise stand-in for the trained network.

    Noise is keyed on (seed, cache cell, rho) so repeated visits see the
    same prediction, mirroring a deterministic network on cached inputs.
    """

    kind = "emulator"

    def __init__(self, observations: ObservationCache, rho_set=(1.0, 0.5, 0.25, 0.125),
                 params: EmulatorParams | None = None, seed: int = 0):
        super().__init__(observations, rho_set)
        self.params = params or EmulatorParams()
        self.seed = seed
        self._memo: dict[tuple, np.ndarray] = {}

    def _predict(self, pose, rho):
        key = (self.observations.key(pose), rho)
        hit = self._memo.get(key)
        if hit is None:
            j = self.rho_set.index(rho)
            qx, qy = key[0]
            rng = np.random.default_rng([self.seed, qx & 0xFFFFFFFF, qy & 0xFFFFFFFF, j])
            hit = emulate_depth(self.observations.depth(pose), rho, self.params, rng).ranges
            hit.setflags(write=False)
            self._memo[key] = hit
        return hit


class NetBackend(_Backend):
    """Trained slimmable network applied to cached camera scans."""

    kind = "network"

    def __init__(self, net: SlimmableNet, observations: ObservationCache):
        super().__init__(observations, net.config.rho_set)
        self.net = net
        self._memo: dict[tuple, np.ndarray] = {}

    def _predict(self, pose, rho):
        key = (self.observations.key(pose), rho)
        hit = self._memo.get(key)
        if hit is None:
            hit = self.net.predict(self.observations.camera(pose).as_input(), rho)[0]
            hit.setflags(write=False)
            self._memo[key] = hit
        return hit
