"""Monte Carlo estimate records."""
from dataclasses import dataclass

import numpy as np

__all__ = ["MCEstimate", "combined_se"]


@dataclass(frozen=True)
class MCEstimate:
    value: float
    se: float
    reps: int
    seed: int = 0

    @classmethod
    def from_samples(cls, samples, seed=0):
        x = np.asarray(samples, dtype=float).ravel()
        n = x.size
        se = float(x.std(ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
        return cls(float(x.mean()), se, n, int(seed))

    @classmethod
    def exact(cls, value, seed=0, reps=0):
        return cls(float(value), 0.0, reps, int(seed))

    def __sub__(self, other):
        # only valid for independent estimates
        return MCEstimate(self.value - other.value, combined_se(self, other), min(self.reps, other.reps), self.seed)

    def within(self, target, k=3.0, slack=0.0):
        return abs(self.value - target) <= k * self.se + slack

    def root(self, p):
        """Estimate of ``value ** (1/p)`` with a delta-method standard error."""
        v = max(self.value, 0.0)
        r = v ** (1.0 / p)
        se = r * self.se / (p * v) if v > 0 else 0.0
        return MCEstimate(r, se, self.reps, self.seed)


def combined_se(*ests):
    return float(np.sqrt(sum(e.se ** 2 for e in ests)))
