from __future__ import annotations

import json
import math

import numpy as np
import pytest

from llambo.bench import (BRANIN_MIN, DATASET_CARDS, MODEL_CARDS, TabularError, branin,
                          builtin_tasks, eval_objective, get_task, load_bounds, load_tabular,
                          tabular_task, task_registry)
from llambo.space import denormalize, sample_random

SPACE = {"params": [{"name": "x", "kind": "continuous", "lower": 0, "upper": 10},
                    {"name": "k", "kind": "categorical", "choices": ["a", "b"]}]}


def write_table(tmp_path, rows, name="table.json"):
    path = tmp_path / name
    path.write_text(json.dumps({"space": SPACE, "rows": rows}))
    return path


ROWS = [{"config": {"x": 1.0, "k": "a"}, "score": 0.3},
        {"config": {"x": 5.0, "k": "b"}, "score": 0.1},
        {"config": {"x": 9.0, "k": "a"}, "score": 0.7}]


def test_branin_at_minimiser():
    assert branin(math.pi, 2.275) == pytest.approx(0.397887, abs=1e-4)
    task = get_task("synthetic/Branin")
    assert eval_objective(task, {"x1": math.pi, "x2": 2.275}) == pytest.approx(BRANIN_MIN, abs=1e-9)


def test_sphere_at_origin():
    task = get_task("synthetic/Sphere")
    assert eval_objective(task, {n: 0.0 for n in task.space.names}) == 0.0


def test_eval_rejects_invalid_config():
    with pytest.raises(ValueError):
        eval_objective(get_task("synthetic/Branin"), {"x1": 50.0, "x2": 1.0})


def test_tabular_three_rows_and_exact_lookup(tmp_path):
    bench = load_tabular(write_table(tmp_path, ROWS))
    assert len(bench.rows) == 3
    task = tabular_task(bench)
    for row in ROWS:
        assert eval_objective(task, row["config"]) == row["score"]
    assert task.known_best == 0.1 and task.known_worst == 0.7


def test_tabular_nearest_neighbour_and_ties(tmp_path):
    rows = [{"config": {"x": 2.0, "k": "a"}, "score": 1.0},
            {"config": {"x": 4.0, "k": "a"}, "score": 2.0}]
    task = tabular_task(load_tabular(write_table(tmp_path, rows)))
    assert eval_objective(task, {"x": 3.9, "k": "a"}) == 2.0
    # equidistant: lowest row index wins
    assert eval_objective(task, {"x": 3.0, "k": "a"}) == 1.0


def test_tabular_out_of_bounds_names_row(tmp_path):
    rows = ROWS[:2] + [{"config": {"x": 11.0, "k": "a"}, "score": 0.5}]
    with pytest.raises(TabularError, match="row 2"):
        load_tabular(write_table(tmp_path, rows))


def test_tabular_conflicting_duplicate(tmp_path):
    rows = ROWS + [{"config": {"x": 5.0, "k": "b"}, "score": 0.2}]
    with pytest.raises(TabularError, match="duplicates"):
        load_tabular(write_table(tmp_path, rows))


def test_tabular_empty(tmp_path):
    with pytest.raises(TabularError):
        load_tabular(write_table(tmp_path, []))


def test_get_task_accepts_tabular_path(tmp_path):
    path = write_table(tmp_path, ROWS)
    assert get_task(str(path)).space.names == ["x", "k"]


def test_dataset_cards():
    breast, digits = DATASET_CARDS["breast"], DATASET_CARDS["digits"]
    assert (breast.n_samples, breast.n_features) == (569, 30)
    assert breast.task_type == "binary classification"
    assert (digits.n_samples, digits.n_features) == (1797, 64)
    assert digits.task_type == "multiclass classification"


def test_model_classes():
    assert set(MODEL_CARDS) == {"RandomForest", "AdaBoost", "SVM", "LogisticRegression", "MLP"}


def test_builtin_task_grid():
    tasks = builtin_tasks(include_synthetic=False)
    assert len(tasks) == 25
    assert len({t.task_id for t in tasks}) == 25
    reg = task_registry()
    assert "breast/RandomForest" in reg and "synthetic/Branin" in reg


def test_unknown_task():
    with pytest.raises(KeyError):
        get_task("nope/Nothing")


def test_objective_is_pure():
    task = get_task("wine/SVM")
    c = sample_random(task.space, 1, seed=4)[0]
    assert eval_objective(task, c) == eval_objective(task, dict(c))


@pytest.mark.parametrize("task", builtin_tasks(), ids=lambda t: t.task_id)
def test_known_best_below_probe(task):
    U = np.random.default_rng(0).random((10_000, task.space.d))
    if hasattr(task.objective, "on_unit"):
        scores = task.objective.on_unit(U)
    else:
        scores = [eval_objective(task, denormalize(task.space, u)) for u in U[:2000]]
    assert task.known_best <= np.min(scores)
    assert task.known_best < task.known_worst


def test_bounds_file_covers_registry():
    bounds = load_bounds()
    for task_id in task_registry():
        assert task_id in bounds
