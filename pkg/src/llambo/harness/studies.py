"""Offline studies: surrogate quality over a training-size grid, the context
ablation, and warmstart design diversity."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..bench import Task, eval_objective
from ..llm.backend import ScriptedBackend
from ..llm.pipeline import LlmSession, llm_surrogate_predict, llm_warmstart
from ..llm.prompts import Observation
from ..metrics import MetricError, SurrogateReport, design_report, surrogate_report
from ..space import DESIGNS, denormalize, normalized_array, random_unit, snap_array
from ..surrogate import PredictiveDistribution, forest_fit, gp_fit
from .runner import derive_seed

log = logging.getLogger(__name__)

SURROGATE_MODELS = ("gp", "rf", "llm", "llm_mc")
N_TEST = 50


@dataclass(frozen=True)
class Split:
    """A seeded train/test sample of one task."""

    split_id: str
    train_configs: list
    train_scores: np.ndarray
    test_configs: list
    test_scores: np.ndarray


def make_split(task: Task, n_train: int, seed: int, n_test: int = N_TEST) -> Split:
    """Uniform sample of ``n_train + n_test`` points; scores are canonical (minimise)."""
    if n_train < 2:
        raise ValueError("n_train must be >= 2")
    U = snap_array(task.space, random_unit(n_train + n_test, task.space.d,
                                           derive_seed(seed, n_train)))
    configs = [denormalize(task.space, u) for u in U]
    y = np.array([task.canonical(eval_objective(task, c)) for c in configs])
    return Split(f"{seed}-{n_train}", configs[:n_train], y[:n_train],
                 configs[n_train:], y[n_train:])


def _session(backend, session: Optional[LlmSession]) -> Optional[LlmSession]:
    if session is not None:
        return session
    if backend is None:
        return None
    if isinstance(backend, ScriptedBackend):
        backend = backend.fresh()
    return LlmSession.of(backend)


def _predict(model: str, task: Task, split: Split, seed: int, session, level: str,
             mc_samples: int, n_trees: int) -> List[PredictiveDistribution]:
    if model in ("gp", "rf"):
        X = normalized_array(task.space, split.train_configs)
        T = normalized_array(task.space, split.test_configs)
        fit = gp_fit(X, split.train_scores, seed=seed) if model == "gp" else \
            forest_fit(X, split.train_scores, n_trees=n_trees, seed=seed)
        return fit(T)
    if session is None:
        raise ValueError(f"model {model!r} needs a backend")
    mc = 1 if model == "llm" else mc_samples
    # prompts show raw task scores; canonical() is its own inverse
    history = [Observation(c, task.canonical(float(s))) for c, s in
               zip(split.train_configs, split.train_scores)]
    out = []
    for j, cand in enumerate(split.test_configs):
        p = llm_surrogate_predict(session, task, history, cand, level, mc, derive_seed(seed, 7, j))
        out.append(PredictiveDistribution(task.canonical(p.mean), p.std))
    return out


def _failed(model: str, n_train: int, split_id: str, exc: Exception) -> SurrogateReport:
    nan = math.nan
    return SurrogateReport(model, n_train, nan, nan, nan, nan, nan, nan, split_id,
                           f"{type(exc).__name__}: {exc}")


def evaluate_surrogates(task: Task, grid: Sequence[int], models: Sequence[str] = ("gp", "rf"),
                        seed: int = 0, backend=None, level: str = "full",
                        mc_samples: int = 10, n_test: int = N_TEST, n_trees: int = 50,
                        session: Optional[LlmSession] = None) -> List[SurrogateReport]:
    """Fit every model on each training size of ``grid`` and score it on 50 held-out points.

    All models share the split drawn for a given ``n_train``.  A cell that
    cannot be computed (fit failure, zero-range truth) is reported with NaN
    metrics and the reason in ``error``.
    """
    unknown = set(models) - set(SURROGATE_MODELS)
    if unknown:
        raise ValueError(f"unknown surrogate models {sorted(unknown)}")
    if any(n < 2 for n in grid):
        raise ValueError("grid values must be >= 2")
    session = _session(backend, session) if any(m.startswith("llm") for m in models) else None
    reports = []
    for n_train in grid:
        split = make_split(task, n_train, seed, n_test)
        for model in models:
            try:
                preds = _predict(model, task, split, derive_seed(seed, n_train, 1), session,
                                 level, mc_samples, n_trees)
                reports.append(surrogate_report(model, n_train, preds, split.test_scores,
                                                split.split_id))
            except (MetricError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
                log.warning("surrogate cell %s/n=%d failed: %s", model, n_train, exc)
                reports.append(_failed(model, n_train, split.split_id, exc))
    return reports


def ablation_compare(task: Task, backend, grid: Sequence[int], seed: int = 0,
                     models: Sequence[str] = ("llm_mc",), mc_samples: int = 10,
                     n_test: int = N_TEST) -> Dict[str, List[SurrogateReport]]:
    """LLM surrogate reports with full context versus none, on identical splits.

    Each level gets its own session; a scripted backend is rewound for each,
    so both levels see the same reply stream.
    """
    out = {}
    for level in ("full", "none"):
        out[level] = evaluate_surrogates(task, grid, models, seed, backend=backend, level=level,
                                         mc_samples=mc_samples, n_test=n_test)
    return out


@dataclass
class DesignSummary:
    """Per-design diversity over seeds plus the seed-averaged correlation matrix."""

    design: str
    gen_variances: List[float] = field(default_factory=list)
    mean_abs_corrs: List[float] = field(default_factory=list)
    best_regrets: List[float] = field(default_factory=list)
    mean_corr: Optional[np.ndarray] = None

    @property
    def mean_gen_variance(self) -> float:
        return float(np.mean(self.gen_variances))


def _design_points(task: Task, design: str, n_init: int, seed: int, backend):
    if design in DESIGNS:
        return DESIGNS[design](task.space, n_init, seed=seed)
    if not design.startswith("llm_"):
        raise ValueError(f"unknown design {design!r}")
    session = _session(backend, None)
    if session is None:
        raise ValueError(f"design {design!r} needs a backend")
    return [r.payload for r in llm_warmstart(session, task, design[4:], n_init, seed)]


def warmstart_study(task: Task, designs: Sequence[str] = ("random", "sobol", "lhc"),
                    n_init: int = 5, n_seeds: int = 50, base_seed: int = 0,
                    backend=None) -> List[DesignSummary]:
    """Diversity (generalised variance, correlations) and initial best regret of each design."""
    lo, hi = task.known_best, task.known_worst
    out = []
    for design in designs:
        s = DesignSummary(design)
        corrs = []
        for k in range(n_seeds):
            configs = _design_points(task, design, n_init, derive_seed(base_seed, k, 1), backend)
            rep = design_report(normalized_array(task.space, configs))
            s.gen_variances.append(rep.gen_variance)
            s.mean_abs_corrs.append(rep.mean_abs_corr)
            corrs.append(rep.corr)
            if lo is not None and hi is not None and hi != lo:
                best = min(task.canonical(eval_objective(task, c)) for c in configs)
                s.best_regrets.append((best - task.canonical(lo)) /
                                      (task.canonical(hi) - task.canonical(lo)))
        s.mean_corr = np.mean(corrs, axis=0)
        out.append(s)
    return out
