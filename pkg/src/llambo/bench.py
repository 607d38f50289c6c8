"""Objective functions and the Data/Model card metadata attached to each task.

Builtin tasks cross five tabular dataset cards with five model cards.  Actual
model training is replaced by deterministic synthetic response surfaces, one
per (dataset, model) pair, so the whole benchmark runs offline and fast.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from .space import Config, ParamSpec, SearchSpace, normalize, snap_array, sobol_unit

TASK_TYPES = ("binary classification", "multiclass classification", "regression")


@dataclass(frozen=True)
class TaskCard:
    dataset_name: str
    n_samples: int
    n_features: int
    feature_kinds: str
    task_type: str
    metric_name: str
    description: str = ""

    def __post_init__(self):
        if self.n_samples <= 0 or self.n_features <= 0:
            raise ValueError("n_samples and n_features must be positive")
        if self.task_type not in TASK_TYPES:
            raise ValueError(f"unknown task type {self.task_type!r}")


@dataclass(frozen=True)
class ModelCard:
    model_name: str
    space: SearchSpace
    description: str = ""


@dataclass(frozen=True)
class Task:
    task_card: TaskCard
    model_card: ModelCard
    objective: Callable[[Config], float] = field(compare=False)
    direction: str = "minimize"
    known_best: Optional[float] = None
    known_worst: Optional[float] = None

    def __post_init__(self):
        if self.direction not in ("minimize", "maximize"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.known_best is not None and self.known_worst is not None:
            ok = (self.known_best <= self.known_worst if self.direction == "minimize"
                  else self.known_best >= self.known_worst)
            if not ok:
                raise ValueError("known_best and known_worst disagree with direction")

    @property
    def space(self) -> SearchSpace:
        return self.model_card.space

    @property
    def task_id(self) -> str:
        return f"{self.task_card.dataset_name}/{self.model_card.model_name}"

    def canonical(self, score: float) -> float:
        """Score in the minimisation direction used internally."""
        return score if self.direction == "minimize" else -score


def eval_objective(task: Task, config: Config) -> float:
    config = task.space.validate(config)
    return float(task.objective(config))


# --------------------------------------------------------------------------
# synthetic closed-form surfaces

def branin(x1: float, x2: float) -> float:
    a, b, c = 1.0, 5.1 / (4 * math.pi ** 2), 5 / math.pi
    r, s, t = 6.0, 10.0, 1 / (8 * math.pi)
    return a * (x2 - b * x1 ** 2 + c * x1 - r) ** 2 + s * (1 - t) * math.cos(x1) + s


BRANIN_MIN = 0.39788735772973816


def _branin_task() -> Task:
    space = SearchSpace((
        ParamSpec("x1", "continuous", -5.0, 10.0),
        ParamSpec("x2", "continuous", 0.0, 15.0),
    ))
    card = TaskCard("branin", 1, 2, "2 continuous inputs", "regression", "value",
                    "Synthetic two-dimensional test function with three global minima.")
    model = ModelCard("Branin", space, "Closed-form Branin-Hoo function.")
    return Task(card, model, lambda c: branin(c["x1"], c["x2"]),
                known_best=BRANIN_MIN, known_worst=308.1290960)


def _sphere_task(d: int = 4) -> Task:
    space = SearchSpace(tuple(ParamSpec(f"x{i + 1}", "continuous", -5.0, 5.0) for i in range(d)))
    card = TaskCard("sphere", 1, d, f"{d} continuous inputs", "regression", "value",
                    "Synthetic sum-of-squares bowl.")
    model = ModelCard("Sphere", space, "Closed-form sphere function.")
    return Task(card, model, lambda c: float(sum(c[n] ** 2 for n in space.names)),
                known_best=0.0, known_worst=25.0 * d)


def _stable_seed(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


class SyntheticSurface:
    """Smooth anisotropic response surface in normalised coordinates.

    ``floor + (1 - floor) * q / (q + 1)`` where ``q`` is a positive definite
    quadratic form around a seeded centre plus a nonnegative cosine ripple, so
    the minimum sits exactly at the centre.
    """

    def __init__(self, name: str, space: SearchSpace, floor: float, ripple: float = 0.15):
        self.name = name
        self.space = space
        self.floor = floor
        rng = np.random.default_rng(_stable_seed(name))
        d = space.d
        # curvature weights spread over two decades
        weights = 10.0 ** rng.uniform(-0.5, 1.5, size=d)
        centre = rng.uniform(0.1, 0.9, size=d)
        for j, p in enumerate(space.params):
            centre[j] = _representable(p, centre[j])
        self.centre = centre
        inter = rng.normal(size=(d, d))
        inter = (inter + inter.T) / 2
        np.fill_diagonal(inter, 0.0)
        radius = np.max(np.abs(np.linalg.eigvalsh(inter))) if d > 1 else 0.0
        if radius > 0:
            inter *= 0.6 / radius
        sw = np.sqrt(weights)
        self.hessian = (np.eye(d) + inter) * np.outer(sw, sw)
        self.ripple = ripple * weights.mean()

    def on_unit(self, U: np.ndarray) -> np.ndarray:
        U = np.atleast_2d(U)
        diff = U - self.centre
        quad = np.einsum("ij,jk,ik->i", diff, self.hessian, diff)
        wave = self.ripple * np.sum(1 - np.cos(3 * math.pi * diff), axis=1) / 2
        q = quad + wave
        return self.floor + (1 - self.floor) * q / (q + 1.0)

    def __call__(self, config: Config) -> float:
        return float(self.on_unit(normalize(self.space, config))[0])

    @property
    def minimum(self) -> float:
        return float(self.on_unit(self.centre)[0])


def _representable(p: ParamSpec, u: float) -> float:
    """Nearest unit coordinate that a configuration of ``p`` can actually reach."""
    return p.to_unit(p.from_unit(u))


# --------------------------------------------------------------------------
# builtin dataset and model cards

DATASET_CARDS: Dict[str, TaskCard] = {
    "breast": TaskCard(
        "breast", 569, 30, "30 continuous features", "binary classification", "error_rate",
        "Breast cancer diagnosis from digitised images of fine needle aspirates; "
        "predict malignant versus benign tumours."),
    "diabetes": TaskCard(
        "diabetes", 442, 10, "10 continuous clinical predictors", "regression", "normalized_mse",
        "Diabetes progression one year after baseline from age, sex, body mass index, "
        "blood pressure and six blood serum measurements."),
    "digits": TaskCard(
        "digits", 1797, 64, "64 integer pixel intensities (8x8 images)",
        "multiclass classification", "error_rate",
        "Handwritten digit recognition; 10 classes from 8x8 grey-level images."),
    "iris": TaskCard(
        "iris", 150, 4, "4 continuous botanical measurements", "multiclass classification",
        "error_rate",
        "Classify iris flowers into three species from sepal and petal length and width."),
    "wine": TaskCard(
        "wine", 178, 13, "13 continuous chemical attributes", "multiclass classification",
        "error_rate",
        "Classify wines from three cultivars by the results of a chemical analysis."),
}

# best attainable loss per dataset for the synthetic surfaces
_DATASET_FLOOR = {"breast": 0.03, "diabetes": 0.45, "digits": 0.02, "iris": 0.02, "wine": 0.01}


def _model_cards() -> Dict[str, ModelCard]:
    P = ParamSpec
    return {
        "RandomForest": ModelCard("RandomForest", SearchSpace((
            P("max_depth", "integer", 1, 15),
            P("max_features", "continuous", 0.01, 0.9),
            P("min_samples_split", "continuous", 0.01, 0.99),
            P("min_samples_leaf", "continuous", 0.01, 0.49),
            P("min_impurity_decrease", "continuous", 0.0, 0.5),
        )), "Random forest ensemble of decision trees (scikit-learn)."),
        "AdaBoost": ModelCard("AdaBoost", SearchSpace((
            P("n_estimators", "integer", 10, 100),
            P("learning_rate", "continuous", 1e-4, 10.0, scale="log"),
        )), "AdaBoost boosting of shallow decision trees (scikit-learn)."),
        "SVM": ModelCard("SVM", SearchSpace((
            P("C", "continuous", 1.0, 1e3, scale="log"),
            P("gamma", "continuous", 1e-4, 1e-3, scale="log"),
            P("tol", "continuous", 1e-5, 1e-1, scale="log"),
        )), "Support vector machine with RBF kernel (scikit-learn)."),
        "LogisticRegression": ModelCard("LogisticRegression", SearchSpace((
            P("C", "continuous", 1e-2, 1e2, scale="log"),
            P("intercept_scaling", "continuous", 1e-2, 1e2, scale="log"),
            P("class_weight", "categorical", choices=("none", "balanced")),
        )), "L2-regularised linear model (logistic regression, or ridge for regression)."),
        "MLP": ModelCard("MLP", SearchSpace((
            P("hidden_layer_sizes", "integer", 50, 200),
            P("alpha", "continuous", 1e-5, 1e1, scale="log"),
            P("batch_size", "integer", 10, 250),
            P("learning_rate_init", "continuous", 1e-5, 1e-1, scale="log"),
            P("activation", "categorical", choices=("relu", "tanh", "logistic")),
            P("beta_1", "continuous", 0.5, 0.99),
        )), "Multi-layer perceptron trained with Adam (scikit-learn)."),
    }


MODEL_CARDS = _model_cards()


def _bounds_path() -> Path:
    return Path(__file__).with_name("data") / "bounds.json"


@lru_cache(maxsize=1)
def load_bounds() -> Dict[str, Tuple[float, float]]:
    """Fixed suite-wide (best, worst) score bounds used by global regret."""
    with open(_bounds_path()) as fh:
        doc = json.load(fh)
    return {k: (float(v[0]), float(v[1])) for k, v in doc["tasks"].items()}


def probe_worst(surface: SyntheticSurface, n: int = 2 ** 14) -> float:
    U = sobol_unit(n, surface.space.d, seed=0)
    return float(np.max(surface.on_unit(snap_array(surface.space, U))))


def _synthetic_task(dataset: str, model: str, bounds: Optional[dict]) -> Task:
    card = DATASET_CARDS[dataset]
    mcard = MODEL_CARDS[model]
    surface = SyntheticSurface(f"{dataset}/{model}", mcard.space, _DATASET_FLOOR[dataset])
    worst = None
    if bounds is not None and f"{dataset}/{model}" in bounds:
        worst = bounds[f"{dataset}/{model}"][1]
    return Task(card, mcard, surface, known_best=surface.minimum, known_worst=worst)


def builtin_tasks(include_synthetic: bool = True) -> List[Task]:
    """The 25 dataset x model tasks, plus the closed-form Branin and Sphere."""
    bounds = load_bounds()
    tasks = [_synthetic_task(ds, m, bounds) for ds in DATASET_CARDS for m in MODEL_CARDS]
    if include_synthetic:
        tasks += [_branin_task(), _sphere_task()]
    return tasks


def task_registry() -> Dict[str, Task]:
    reg = {t.task_id: t for t in builtin_tasks()}
    reg["synthetic/Branin"] = reg.pop("branin/Branin")
    reg["synthetic/Sphere"] = reg.pop("sphere/Sphere")
    return reg


def get_task(task_id: str) -> Task:
    """Look up ``dataset/model``, or load a tabular benchmark from a ``.json`` path."""
    if task_id.endswith(".json"):
        return tabular_task(load_tabular(task_id))
    reg = task_registry()
    if task_id not in reg:
        raise KeyError(f"unknown task {task_id!r}; known: {', '.join(sorted(reg))}")
    return reg[task_id]


# --------------------------------------------------------------------------
# tabular lookup benchmarks

class TabularError(ValueError):
    pass


@dataclass
class TabularBenchmark:
    space: SearchSpace
    rows: List[Tuple[Config, float]]
    task_card: TaskCard
    model_name: str = "tabular"
    direction: str = "minimize"
    _unit: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.rows:
            raise TabularError("tabular benchmark has no rows")
        self._unit = np.array([normalize(self.space, c) for c, _ in self.rows])

    def lookup(self, config: Config) -> float:
        u = normalize(self.space, config)
        dist = np.sum((self._unit - u) ** 2, axis=1)
        # argmin returns the lowest index among ties
        return float(self.rows[int(np.argmin(dist))][1])


def load_tabular(path: Union[str, Path]) -> TabularBenchmark:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise TabularError(f"{path}: not valid JSON: {exc}") from exc
    if "space" not in doc or "rows" not in doc:
        raise TabularError('tabular file needs "space" and "rows"')
    space = SearchSpace.from_dict(doc["space"])
    rows: List[Tuple[Config, float]] = []
    seen: Dict[tuple, Tuple[int, float]] = {}
    for i, raw in enumerate(doc["rows"]):
        try:
            config = space.validate(raw["config"])
            score = float(raw["score"])
        except (KeyError, TypeError, ValueError) as exc:
            raise TabularError(f"row {i}: {exc}") from exc
        if not math.isfinite(score):
            raise TabularError(f"row {i}: score is not finite")
        key = tuple(config[n] for n in space.names)
        if key in seen and seen[key][1] != score:
            raise TabularError(f"row {i}: duplicates row {seen[key][0]} with a different score")
        seen.setdefault(key, (i, score))
        rows.append((config, score))
    if not rows:
        raise TabularError("tabular benchmark has no rows")
    meta = doc.get("metadata", {})
    card = TaskCard(
        dataset_name=meta.get("dataset_name", Path(path).stem),
        n_samples=int(meta.get("n_samples", 1)),
        n_features=int(meta.get("n_features", space.d)),
        feature_kinds=meta.get("feature_kinds", "unspecified"),
        task_type=meta.get("task_type", "regression"),
        metric_name=meta.get("metric_name", "score"),
        description=meta.get("description", ""),
    )
    return TabularBenchmark(space, rows, card, meta.get("model_name", "tabular"),
                            doc.get("direction", "minimize"))


def tabular_task(bench: TabularBenchmark) -> Task:
    scores = [s for _, s in bench.rows]
    best, worst = (min(scores), max(scores))
    if bench.direction == "maximize":
        best, worst = worst, best
    model = ModelCard(bench.model_name, bench.space, "Tabular lookup of precomputed evaluations.")
    return Task(bench.task_card, model, bench.lookup, bench.direction, best, worst)


def write_bounds(path: Optional[Union[str, Path]] = None) -> Dict[str, List[float]]:
    """Recompute the suite-wide bounds file for the builtin synthetic surfaces."""
    out = {}
    for ds in DATASET_CARDS:
        for m in MODEL_CARDS:
            s = SyntheticSurface(f"{ds}/{m}", MODEL_CARDS[m].space, _DATASET_FLOOR[ds])
            out[f"{ds}/{m}"] = [s.minimum, probe_worst(s)]
    out["synthetic/Branin"] = [BRANIN_MIN, 308.1290960]
    out["synthetic/Sphere"] = [0.0, 100.0]
    doc = {"note": "best is the exact surface minimum; worst is the max over a 2^14 Sobol probe",
           "tasks": out}
    path = Path(path) if path is not None else _bounds_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    load_bounds.cache_clear()
    return out
