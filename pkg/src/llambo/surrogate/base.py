from __future__ import annotations

import math
from dataclasses import dataclass

STD_FLOOR = 1e-6


@dataclass(frozen=True)
class PredictiveDistribution:
    """Gaussian prediction for one candidate; every surrogate emits these."""

    mean: float
    std: float

    def __post_init__(self):
        if not (math.isfinite(self.std) and self.std >= 0):
            raise ValueError(f"std must be finite and nonnegative, got {self.std}")
        if not math.isfinite(self.mean):
            raise ValueError(f"mean must be finite, got {self.mean}")

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std}


def nlpd(pred: PredictiveDistribution, y: float) -> float:
    """Negative Gaussian log density of ``y``; lower is better."""
    if pred.std <= 0:
        raise ValueError("nlpd needs std > 0; floor the std upstream")
    var = pred.std ** 2
    return 0.5 * math.log(2 * math.pi * var) + (y - pred.mean) ** 2 / (2 * var)
