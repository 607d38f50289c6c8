"""Tree-structured Parzen estimator: a good/bad pair of Gaussian KDEs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

MIN_BANDWIDTH = 1e-3
MODES = ("independent", "multivariate")
DEFAULT_PRIOR_WEIGHT = 1.0


@dataclass(frozen=True)
class Kde:
    """Gaussian kernel density with a shared bandwidth matrix ``cov``.

    With ``prior_weight > 0`` the mixture gains one broad kernel centred on
    the unit cube (std ``prior_std`` per coordinate), weighted like
    ``prior_weight`` ordinary kernels; this keeps the density from collapsing
    onto a handful of observations.
    """

    centers: np.ndarray
    cov: np.ndarray
    diagonal_fallback: bool = False
    prior_weight: float = 0.0
    prior_std: float = 1.0

    def __post_init__(self):
        chol = np.linalg.cholesky(self.cov)
        object.__setattr__(self, "_chol", chol)
        logdet = 2 * np.sum(np.log(np.diag(chol)))
        object.__setattr__(self, "_lognorm", -0.5 * (self.dim * math.log(2 * math.pi) + logdet))
        n = len(self.centers)
        total = n + self.prior_weight
        object.__setattr__(self, "_log_wk", math.log(1.0 / total))
        object.__setattr__(self, "_p_prior", self.prior_weight / total)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def bandwidths(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    def logpdf(self, U) -> np.ndarray:
        U = np.atleast_2d(np.asarray(U, dtype=float))
        diff = U[:, None, :] - self.centers[None, :, :]          # m x n x d
        z = np.linalg.solve(self._chol, diff.reshape(-1, self.dim).T).T
        maha = np.sum(z ** 2, axis=1).reshape(U.shape[0], -1)
        terms = -0.5 * maha + self._lognorm + self._log_wk
        if self.prior_weight > 0:
            ps = self.prior_std
            lp = (-0.5 * np.sum((U - 0.5) ** 2, axis=1) / ps ** 2
                  - self.dim * (math.log(ps) + 0.5 * math.log(2 * math.pi))
                  + math.log(self.prior_weight) + self._log_wk)
            terms = np.column_stack([terms, lp])
        return logsumexp(terms, axis=1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.integers(len(self.centers), size=n)
        out = self.centers[idx] + rng.standard_normal((n, self.dim)) @ self._chol.T
        if self.prior_weight > 0:
            from_prior = rng.random(n) < self._p_prior
            k = int(from_prior.sum())
            out[from_prior] = 0.5 + self.prior_std * rng.standard_normal((k, self.dim))
        return out


def _sample_std(P: np.ndarray) -> np.ndarray:
    if P.shape[0] < 2:
        return np.zeros(P.shape[1])
    return P.std(axis=0, ddof=1)


def adaptive_floor(n: int) -> float:
    """Smallest bandwidth TPE allows for ``n`` kernels on the unit interval."""
    return 1.0 / min(100, n + 1)


def fit_kde(points, mode: str = "independent", min_bandwidth: float = MIN_BANDWIDTH,
            prior_weight: float = 0.0, adaptive: bool = False) -> Kde:
    """Scott-rule Gaussian KDE.

    ``independent`` uses a diagonal bandwidth with the one-dimensional rule per
    coordinate, so the density factorises into per-dimension marginals.
    ``multivariate`` uses the full sample covariance scaled by Scott's factor;
    a singular covariance falls back to the floored diagonal.  With
    ``adaptive`` every bandwidth (eigenvalue, in the multivariate case) is
    additionally clipped from below by :func:`adaptive_floor`.
    """
    if mode not in MODES:
        raise ValueError(f"unknown TPE mode {mode!r}")
    P = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = P.shape
    floor = max(min_bandwidth, adaptive_floor(n)) if adaptive else min_bandwidth
    if mode == "independent":
        h = np.maximum(_sample_std(P) * n ** (-1.0 / 5.0), floor)
        return Kde(P, np.diag(h ** 2), prior_weight=prior_weight)
    factor = n ** (-1.0 / (d + 4))
    if n >= 2:
        cov = np.atleast_2d(np.cov(P, rowvar=False)) * factor ** 2
        eig, vec = np.linalg.eigh(cov)
        if eig.min() > min_bandwidth ** 2:
            if adaptive:
                cov = (vec * np.maximum(eig, floor ** 2)) @ vec.T
            return Kde(P, cov, prior_weight=prior_weight)
    h = np.maximum(_sample_std(P) * factor, floor)
    return Kde(P, np.diag(h ** 2), diagonal_fallback=True, prior_weight=prior_weight)


@dataclass(frozen=True)
class TpeModel:
    good: Kde
    bad: Kde
    gamma: float
    mode: str
    n_good: int

    def score(self, U) -> np.ndarray:
        return self.good.logpdf(U) - self.bad.logpdf(U)


def n_good(n: int, gamma: float) -> int:
    return max(1, math.ceil(gamma * n))


def tpe_fit(points: Sequence, scores: Sequence[float], gamma: float = 0.25,
            mode: str = "independent", seed=None,
            prior_weight: float = DEFAULT_PRIOR_WEIGHT) -> TpeModel:
    """Split the history by rank (lower scores are better) and fit both densities.

    ``seed`` is accepted for interface symmetry; fitting is deterministic.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    y = np.asarray(scores, dtype=float).ravel()
    n = X.shape[0]
    if n < 4:
        raise ValueError("tpe_fit needs at least 4 observations")
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    k = n_good(n, gamma)
    if k >= n:
        k = n - 1
    order = np.argsort(y, kind="stable")
    good, bad = X[order[:k]], X[order[k:]]
    return TpeModel(fit_kde(good, mode, prior_weight=prior_weight, adaptive=True),
                    fit_kde(bad, mode, prior_weight=prior_weight, adaptive=True), gamma, mode, k)


def tpe_score(model: TpeModel, u) -> float:
    """log g(u) - log b(u); higher is more promising."""
    return float(model.score(np.asarray(u, dtype=float).reshape(1, -1))[0])
