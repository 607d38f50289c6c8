"""Random-forest surrogate with tree-wise predictive spread."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.ensemble import RandomForestRegressor

from .base import STD_FLOOR, PredictiveDistribution


@dataclass(frozen=True)
class ForestModel:
    # anything with ``predict(X) -> (n,)`` works as a tree
    trees: tuple
    seed: int = 0
    min_leaf: int = 1

    def __post_init__(self):
        if len(self.trees) < 2:
            raise ValueError("a forest needs at least 2 trees for a spread")

    def tree_predictions(self, U) -> np.ndarray:
        U = np.atleast_2d(np.asarray(U, dtype=float))
        return np.stack([np.asarray(t.predict(U), dtype=float) for t in self.trees])

    def predict(self, U):
        P = self.tree_predictions(U)
        mean = P.mean(axis=0)
        std = np.maximum(P.std(axis=0, ddof=1), STD_FLOOR)
        return mean, std

    def __call__(self, U):
        mean, std = self.predict(U)
        return [PredictiveDistribution(float(m), float(s)) for m, s in zip(mean, std)]


def forest_fit(points: Sequence, scores: Sequence[float], n_trees: int = 50, seed=0,
               min_leaf: int = 1) -> ForestModel:
    """Bootstrap CART ensemble; splits by variance reduction on ceil(d/3) features."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    y = np.asarray(scores, dtype=float).ravel()
    if X.shape[0] < 2:
        raise ValueError("forest_fit needs at least 2 observations")
    d = X.shape[1]
    rf = RandomForestRegressor(
        n_estimators=n_trees,
        max_features=max(1, math.ceil(d / 3)),
        min_samples_leaf=min_leaf,
        bootstrap=True,
        random_state=seed,
    )
    rf.fit(X, y)
    return ForestModel(tuple(rf.estimators_), seed, min_leaf)


def forest_predict(model: ForestModel, u) -> PredictiveDistribution:
    mean, std = model.predict(np.asarray(u, dtype=float).reshape(1, -1))
    return PredictiveDistribution(float(mean[0]), float(std[0]))


def oob_rmse(points, scores, n_trees: int = 50, seed=0) -> float:
    """Out-of-bag RMSE of a forest fitted with the same settings as :func:`forest_fit`."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    y = np.asarray(scores, dtype=float).ravel()
    rf = RandomForestRegressor(n_estimators=n_trees, max_features=max(1, math.ceil(X.shape[1] / 3)),
                               bootstrap=True, oob_score=True, random_state=seed)
    rf.fit(X, y)
    return float(np.sqrt(np.mean((rf.oob_prediction_ - y) ** 2)))
