"""Difficulty curriculum: periodic level-ups with a 70/30 highest/lower mix, uniform once saturated."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation


@dataclass
class CurriculumState:
    max_level: int
    period: int = 500
    top_probability: float = 0.7
    level: int = 0
    since_level_up: int = 0
    uniform: bool = False

    def __post_init__(self):
        if self.max_level < 0:
            raise ContractViolation("curriculum needs at least one level")
        if self.period < 1 or not 0.0 <= self.top_probability <= 1.0:
            raise ContractViolation("invalid curriculum period or probability")
        if not 0 <= self.level <= self.max_level:
            raise ContractViolation("level outside the ladder")

    def probabilities(self) -> np.ndarray:
        """Sampling distribution over levels 0..max_level."""
        p = np.zeros(self.max_level + 1)
        if self.uniform:
            p[:] = 1.0 / len(p)
        elif self.level == 0:
            p[0] = 1.0
        else:
            p[self.level] = self.top_probability
            p[:self.level] = (1.0 - self.top_probability) / self.level
        return p

    def sample(self, rng: np.random.Generator) -> int:
        p = self.probabilities()
        if self.uniform:
            return int(rng.integers(len(p)))
        if self.level == 0:
            return 0
        if rng.random() < self.top_probability:
            return self.level
        return int(rng.integers(self.level))

    def record_episode(self) -> bool:
        """Count one sampled episode; returns True when this triggered a level change (or saturation)."""
        self.since_level_up += 1
        if self.since_level_up < self.period or self.uniform:
            return False
        self.since_level_up = 0
        if self.level < self.max_level:
            self.level += 1
        else:
            self.uniform = True
        return True

    def to_json(self) -> dict:
        return dict(self.__dict__)
