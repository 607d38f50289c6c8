"""Expected improvement and candidate generation (random, TPE, LLM batches)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Sequence

import numpy as np
from scipy.stats import norm

from .space import Config, SearchSpace, denormalize, random_unit, snap_array
from .surrogate import PredictiveDistribution, TpeModel

PROVENANCES = ("random", "tpe_ind", "tpe_mv", "llm")
TPE_DRAWS_PER_CANDIDATE = 24

Surrogate = Callable[[List[Config]], List[PredictiveDistribution]]


@dataclass
class CandidateBatch:
    configs: List[Config]
    provenance: str
    scores_est: Optional[List[PredictiveDistribution]] = None
    # per-candidate origin inside a mixed batch, e.g. llm entries topped up with random
    sources: Optional[List[str]] = None
    # parsed model reply that produced the batch, if any
    response: Optional[Any] = None

    def __post_init__(self):
        if not self.configs:
            raise ValueError("candidate batch is empty")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.sources is None:
            self.sources = [self.provenance] * len(self.configs)

    def __len__(self):
        return len(self.configs)


def expected_improvement(pred: PredictiveDistribution, best: float) -> float:
    """EI for minimisation; improvement is ``best - value``."""
    return float(ei_array(np.array([pred.mean]), np.array([pred.std]), best)[0])


def ei_array(mean: np.ndarray, std: np.ndarray, best: float) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    gap = best - mean
    out = np.maximum(gap, 0.0)
    pos = std > 0
    # a subnormal std sends z to +-inf, where the limits below are still exact
    with np.errstate(over="ignore"):
        z = gap[pos] / std[pos]
        out[pos] = gap[pos] * norm.cdf(z) + std[pos] * norm.pdf(z)
    # guard against tiny negative values from cancellation in the far tail
    return np.maximum(out, 0.0)


def propose_random(space: SearchSpace, k: int, seed=None) -> CandidateBatch:
    U = random_unit(k, space.d, seed)
    return CandidateBatch([denormalize(space, u) for u in U], "random")


def sample_in_cube(density, n: int, rng: np.random.Generator, rounds: int = 10) -> np.ndarray:
    """Draw from ``density`` restricted to the unit cube.

    Out-of-cube draws are redrawn (truncated kernels); whatever is still
    missing after ``rounds`` batches is clamped onto the cube.
    """
    kept = np.empty((0, density.dim))
    for _ in range(rounds):
        draw = density.sample(n, rng)
        kept = np.vstack([kept, draw[np.all((draw >= 0.0) & (draw <= 1.0), axis=1)]])
        if len(kept) >= n:
            return kept[:n]
    extra = np.clip(density.sample(n - len(kept), rng), 0.0, 1.0)
    return np.vstack([kept, extra])


def propose_tpe(model: TpeModel, space: SearchSpace, k: int, seed=None) -> CandidateBatch:
    """Draw ``24 k`` in-cube points from the good density; keep the ``k`` best by density ratio."""
    rng = np.random.default_rng(seed)
    raw = sample_in_cube(model.good, TPE_DRAWS_PER_CANDIDATE * k, rng)
    U = snap_array(space, raw)
    scores = model.score(U)
    # stable sort keeps the draw order among equal scores
    top = np.argsort(-scores, kind="stable")[:k]
    prov = "tpe_mv" if model.mode == "multivariate" else "tpe_ind"
    return CandidateBatch([denormalize(space, U[i]) for i in top], prov)


def best_index(preds: Sequence[PredictiveDistribution], best: float) -> int:
    mean = np.array([p.mean for p in preds])
    std = np.array([p.std for p in preds])
    # argmax returns the lowest index among ties
    return int(np.argmax(ei_array(mean, std, best)))


def select_next(batch: CandidateBatch, surrogate: Optional[Surrogate], best: float) -> Config:
    """Candidate with the highest expected improvement.

    Uses ``batch.scores_est`` when present, otherwise asks ``surrogate``.
    """
    preds = batch.scores_est
    if preds is None:
        if surrogate is None:
            raise ValueError("batch has no estimates and no surrogate was given")
        preds = surrogate(batch.configs)
        batch.scores_est = list(preds)
    return batch.configs[best_index(preds, best)]
