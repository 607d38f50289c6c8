"""Gaussian process regression with an ARD Matern-5/2 kernel."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .base import PredictiveDistribution

SQRT5 = math.sqrt(5.0)

# log-space bounds on the hyperparameters; inputs live in the unit cube and
# targets are standardised, so these are safe for every task
LENGTHSCALE_BOUNDS = (1e-3, 1e3)
SIGNAL_BOUNDS = (1e-2, 1e2)
NOISE_BOUNDS = (1e-8, 1e-1)
JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


class GpFitError(RuntimeError):
    """Kernel matrix stayed singular at every jitter level."""


def _scaled_sqdist(X1, X2, ls):
    A = X1 / ls
    B = X2 / ls
    d2 = np.sum(A ** 2, 1)[:, None] + np.sum(B ** 2, 1)[None, :] - 2 * A @ B.T
    return np.maximum(d2, 0.0)


def matern52(X1: np.ndarray, X2: np.ndarray, lengthscales, signal_var: float) -> np.ndarray:
    r = np.sqrt(_scaled_sqdist(X1, X2, np.asarray(lengthscales)))
    return signal_var * (1 + SQRT5 * r + 5.0 / 3.0 * r ** 2) * np.exp(-SQRT5 * r)


def _cholesky(K: np.ndarray) -> Tuple[np.ndarray, float]:
    n = K.shape[0]
    for jitter in JITTERS:
        try:
            return np.linalg.cholesky(K + jitter * np.eye(n)), jitter
        except np.linalg.LinAlgError:
            continue
    raise GpFitError("kernel matrix is not positive definite even with jitter 1e-4")


def log_marginal_likelihood(theta: np.ndarray, X: np.ndarray, y: np.ndarray,
                            grad: bool = False):
    """Log marginal likelihood and optionally its gradient.

    ``theta`` packs ``[log lengthscales..., log signal variance, log noise variance]``.
    """
    n, d = X.shape
    ls = np.exp(theta[:d])
    sf2 = math.exp(theta[d])
    sn2 = math.exp(theta[d + 1])

    diff2 = (X[:, None, :] - X[None, :, :]) ** 2 / ls ** 2  # n x n x d
    r = np.sqrt(np.sum(diff2, axis=2))
    e = np.exp(-SQRT5 * r)
    K_sig = sf2 * (1 + SQRT5 * r + 5.0 / 3.0 * r ** 2) * e
    K = K_sig + sn2 * np.eye(n)

    L, _ = _cholesky(K)
    alpha = cho_solve((L, True), y)
    lml = -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi)
    if not grad:
        return lml

    W = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(n))
    g = np.empty(d + 2)
    common = sf2 * 5.0 / 3.0 * (1 + SQRT5 * r) * e
    for i in range(d):
        g[i] = 0.5 * np.sum(W * (common * diff2[:, :, i]))
    g[d] = 0.5 * np.sum(W * K_sig)
    g[d + 1] = 0.5 * sn2 * np.trace(W)
    return lml, g


def _log_bounds(d: int):
    return ([tuple(map(math.log, LENGTHSCALE_BOUNDS))] * d
            + [tuple(map(math.log, SIGNAL_BOUNDS)), tuple(map(math.log, NOISE_BOUNDS))])


@dataclass(frozen=True)
class GpModel:
    lengthscales: np.ndarray
    signal_var: float
    noise_var: float
    X: np.ndarray
    y: np.ndarray              # standardised targets
    y_mean: float
    y_std: float
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float
    lml: float

    def predict(self, U: np.ndarray, include_noise: bool = False):
        """Posterior mean and standard deviation, in the original score units."""
        U = np.atleast_2d(np.asarray(U, dtype=float))
        Ks = matern52(U, self.X, self.lengthscales, self.signal_var)
        mean = Ks @ self.alpha
        v = solve_triangular(self.chol, Ks.T, lower=True)
        var = self.signal_var - np.sum(v ** 2, axis=0)
        if include_noise:
            var = var + self.noise_var
        std = np.sqrt(np.maximum(var, 0.0))
        return mean * self.y_std + self.y_mean, std * self.y_std

    def __call__(self, U):
        mean, std = self.predict(U)
        return [PredictiveDistribution(float(m), float(s)) for m, s in zip(mean, std)]


def gp_fit(points: Sequence, scores: Sequence[float], seed=0, n_restarts: int = 8,
           theta0: Optional[np.ndarray] = None) -> GpModel:
    """Fit by multi-restart L-BFGS-B on the log marginal likelihood.

    ``theta0`` (packed log hyperparameters, e.g. from a previous fit) is used as
    the first start; the remaining starts are drawn uniformly in log space.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    y_raw = np.asarray(scores, dtype=float).ravel()
    n, d = X.shape
    if n < 2:
        raise ValueError("gp_fit needs at least 2 observations")
    if y_raw.shape[0] != n:
        raise ValueError("points and scores differ in length")

    y_mean = float(np.mean(y_raw))
    y_std = float(np.std(y_raw))
    if not y_std > 0:
        y_std = 1.0
    y = (y_raw - y_mean) / y_std

    bounds = _log_bounds(d)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    rng = np.random.default_rng(seed)
    starts = []
    default = np.concatenate([np.full(d, math.log(0.3)), [0.0], [math.log(1e-4)]])
    starts.append(np.clip(theta0, lo, hi) if theta0 is not None else default)
    while len(starts) < max(1, n_restarts):
        s = rng.uniform(lo, hi)
        # draw lengthscales from a range that is informative on the unit cube
        s[:d] = rng.uniform(math.log(0.05), math.log(2.0), size=d)
        s[d] = rng.uniform(-1.0, 1.0)
        starts.append(s)

    def objective(theta):
        try:
            val, g = log_marginal_likelihood(theta, X, y, grad=True)
        except GpFitError:
            return 1e25, np.zeros_like(theta)
        if not np.isfinite(val):
            return 1e25, np.zeros_like(theta)
        return -val, -g

    best_theta, best_val = None, np.inf
    for s in starts:
        res = minimize(objective, s, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": 200})
        if res.fun < best_val:
            best_val, best_theta = res.fun, res.x
    if best_theta is None or best_val >= 1e25:
        raise GpFitError("marginal likelihood could not be evaluated at any start")

    ls = np.exp(best_theta[:d])
    sf2 = float(math.exp(best_theta[d]))
    sn2 = float(math.exp(best_theta[d + 1]))
    K = matern52(X, X, ls, sf2) + sn2 * np.eye(n)
    L, jitter = _cholesky(K)
    alpha = cho_solve((L, True), y)
    return GpModel(ls, sf2, sn2 + jitter, X, y, y_mean, y_std, L, alpha, jitter, -best_val)


def gp_predict(model: GpModel, u) -> PredictiveDistribution:
    mean, std = model.predict(np.asarray(u, dtype=float).reshape(1, -1))
    return PredictiveDistribution(float(mean[0]), float(std[0]))


def theta_of(model: GpModel) -> np.ndarray:
    """Packed log hyperparameters of a fitted model (warm start for the next fit)."""
    return np.concatenate([np.log(model.lengthscales), [math.log(model.signal_var)],
                           [math.log(max(model.noise_var - model.jitter, NOISE_BOUNDS[0]))]])
