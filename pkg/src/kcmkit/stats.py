"""Small statistics helpers shared across modules."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class ScanEstimate:
    """A Monte Carlo estimate with its 95% confidence interval.

    `censored` marks a search that hit its cap before resolving.
    """

    value: float
    ci: tuple[float, float]
    replicas: int
    seed: int
    censored: bool = False

    @property
    def halfwidth(self) -> float:
        return 0.5 * (self.ci[1] - self.ci[0])


def wilson_ci(successes: int, trials: int, z: float = 1.959963984540054):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes outside [0, trials]")
    phat = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(phat * (1 - phat) / trials
                                   + z2 / (4 * trials * trials))
    return max(0.0, center - half), min(1.0, center + half)
