"""Evaluation quantities: regret curves, surrogate accuracy and calibration,
design diversity, and candidate-set statistics."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from .surrogate import PredictiveDistribution, nlpd

DEFAULT_ALPHA = 0.95


class MetricError(ValueError):
    """Metric undefined for the given inputs (e.g. zero range)."""


@dataclass(frozen=True)
class SurrogateReport:
    model: str
    n_train: int
    nrmse: float
    r2: float
    nlpd_mean: float
    coverage: float
    sharpness: float
    regret: float
    split_id: str = ""
    error: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DesignReport:
    gen_variance: float
    corr: np.ndarray
    mean_abs_corr: float


def regret_curve(scores: Sequence[float], y_best: float, y_worst: float) -> np.ndarray:
    """Normalised best-so-far regret, minimisation.

    Pass benchmark-wide bounds for global regret, or the extrema observed on
    the task for per-task min-max regret.
    """
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise MetricError("regret_curve needs at least one score")
    span = y_worst - y_best
    if span == 0:
        return np.zeros_like(s)
    return (np.minimum.accumulate(s) - y_best) / span


def per_task_bounds(score_lists: Iterable[Sequence[float]]) -> Tuple[float, float]:
    allv = np.concatenate([np.asarray(s, dtype=float) for s in score_lists])
    return float(allv.min()), float(allv.max())


def _pair(truth, preds):
    t = np.asarray(truth, dtype=float)
    p = np.asarray(preds, dtype=float)
    if t.shape != p.shape or t.size == 0:
        raise MetricError("truth and predictions need equal nonzero length")
    return t, p


def nrmse(truth, preds) -> float:
    t, p = _pair(truth, preds)
    span = t.max() - t.min()
    if span == 0:
        raise MetricError("nrmse undefined: truth has zero range")
    # a subnormal range gives +inf, the correct limit
    with np.errstate(over="ignore"):
        return float(np.sqrt(np.mean((p - t) ** 2)) / span)


def r_squared(truth, preds) -> float:
    t, p = _pair(truth, preds)
    ss_tot = np.sum((t - t.mean()) ** 2)
    if ss_tot == 0:
        raise MetricError("r_squared undefined: truth has zero variance")
    return float(1 - np.sum((t - p) ** 2) / ss_tot)


def calibration(preds: Sequence[PredictiveDistribution], truth,
                alpha: float = DEFAULT_ALPHA) -> Tuple[float, float]:
    """(coverage, sharpness) of the central ``alpha`` Gaussian intervals."""
    if not 0 < alpha < 1:
        raise MetricError("alpha must lie in (0, 1)")
    mean = np.array([p.mean for p in preds])
    std = np.array([p.std for p in preds])
    t = np.asarray(truth, dtype=float)
    if t.shape != mean.shape or t.size == 0:
        raise MetricError("truth and predictions need equal nonzero length")
    half = norm.ppf((1 + alpha) / 2) * std
    inside = np.abs(t - mean) <= half
    return float(np.mean(inside)), float(np.mean(2 * half))


def mean_nlpd(preds: Sequence[PredictiveDistribution], truth) -> float:
    return float(np.mean([nlpd(p, y) for p, y in zip(preds, truth)]))


def surrogate_regret(preds: Sequence[PredictiveDistribution], truth) -> float:
    """Min-max regret of the point the surrogate ranks best (lowest mean)."""
    t = np.asarray(truth, dtype=float)
    pick = int(np.argmin([p.mean for p in preds]))
    span = t.max() - t.min()
    return 0.0 if span == 0 else float((t[pick] - t.min()) / span)


def surrogate_report(model: str, n_train: int, preds, truth, split_id: str = "") -> SurrogateReport:
    cov, sharp = calibration(preds, truth)
    means = [p.mean for p in preds]
    return SurrogateReport(model, n_train, nrmse(truth, means), r_squared(truth, means),
                           mean_nlpd(preds, truth), cov, sharp, surrogate_regret(preds, truth),
                           split_id)


def generalized_variance(points) -> float:
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[0] < 2:
        raise MetricError("generalized variance needs at least 2 points")
    # shifting by one point is exact for repeated points, so their variance is 0
    cov = np.atleast_2d(np.cov(P - P[0], rowvar=False))
    return float(max(np.linalg.det(cov), 0.0))


def correlation_matrix(points) -> np.ndarray:
    """Pearson correlations; a constant dimension gets zero off-diagonal entries."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[0] < 2:
        raise MetricError("correlation needs at least 2 points")
    C = P - P.mean(axis=0)
    scale = np.sqrt(np.sum(C ** 2, axis=0))
    live = scale > 0
    Z = np.zeros_like(C)
    Z[:, live] = C[:, live] / scale[live]
    corr = np.clip(Z.T @ Z, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def design_report(points) -> DesignReport:
    corr = correlation_matrix(points)
    d = corr.shape[0]
    off = corr[~np.eye(d, dtype=bool)]
    mac = float(np.mean(np.abs(off))) if off.size else 0.0
    return DesignReport(generalized_variance(points), corr, mac)


@dataclass(frozen=True)
class CandidateStats:
    avg_regret: float
    best_regret: float
    gen_var: float
    mean_loglik: float


def candidate_stats(batch, task, density, y_best: Optional[float] = None,
                    y_worst: Optional[float] = None) -> CandidateStats:
    """Quality and diversity of a candidate batch.

    ``density`` is anything with ``logpdf(unit_points)``, typically the good-set
    KDE fitted on the current history.  Regret bounds default to the task's
    known best/worst scores.
    """
    from .bench import eval_objective
    from .space import normalized_array

    y_best = task.known_best if y_best is None else y_best
    y_worst = task.known_worst if y_worst is None else y_worst
    scores = np.array([task.canonical(eval_objective(task, c)) for c in batch.configs])
    lo, hi = task.canonical(y_best), task.canonical(y_worst)
    span = hi - lo
    reg = np.zeros_like(scores) if span == 0 else (scores - lo) / span
    U = normalized_array(task.space, batch.configs)
    gv = generalized_variance(U) if len(U) >= 2 else 0.0
    ll = float(np.mean(density.logpdf(U)))
    return CandidateStats(float(reg.mean()), float(reg.min()), gv, ll)


def mean_std_band(curves: Sequence[Sequence[float]]) -> Tuple[np.ndarray, np.ndarray]:
    """Pointwise mean and population std across runs (order-invariant)."""
    A = np.asarray(curves, dtype=float)
    # sort along the run axis so float summation order cannot depend on run order
    A = np.sort(A, axis=0)
    # centring on one run keeps the std exactly zero when all runs agree
    return A.mean(axis=0), (A - A[0]).std(axis=0)
