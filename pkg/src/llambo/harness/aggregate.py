"""Tidy CSV output for run suites, surrogate reports and warmstart studies.

Every writer sorts its rows and formats floats with a fixed precision, so the
same inputs always give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence, Union

import numpy as np

from ..bench import get_task
from ..metrics import SurrogateReport, mean_std_band, per_task_bounds, regret_curve
from .runner import RunRecord
from .studies import DesignSummary

PathLike = Union[str, Path]
REPORT_METRICS = ("nrmse", "r2", "nlpd_mean", "coverage", "sharpness", "regret")
# spec fields that must agree across every record in one aggregation
PROTOCOL_FIELDS = ("n_init", "n_trials")


class AggregationError(ValueError):
    """Inputs cannot be combined into one table."""


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.12g}"


def _write(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def _method(rec: RunRecord) -> str:
    return f"{rec.spec['optimizer']}+{rec.spec['warmstart']}"


def _group(records: Sequence[RunRecord]) -> Dict[tuple, List[RunRecord]]:
    """Group by (task, method); a group must come from one spec."""
    if not records:
        raise AggregationError("no records to aggregate")
    groups: Dict[tuple, List[RunRecord]] = defaultdict(list)
    for r in records:
        groups[(r.task_id, _method(r))].append(r)
    proto = {f: records[0].spec[f] for f in PROTOCOL_FIELDS}
    for key, recs in groups.items():
        spec = recs[0].spec
        if any(r.spec != spec for r in recs):
            raise AggregationError(f"mixed specs for {key[0]} / {key[1]}")
        other = {f: spec[f] for f in PROTOCOL_FIELDS}
        if other != proto:
            raise AggregationError(f"protocol mismatch: {other} vs {proto}")
        seen = [r.run_index for r in recs]
        if len(set(seen)) != len(seen):
            raise AggregationError(f"duplicate run indices for {key[0]} / {key[1]}")
    return groups


def _curve_rows(groups, curve_of) -> List[list]:
    rows = []
    for (task, method), recs in sorted(groups.items()):
        ok = [r for r in recs if not r.failed]
        if not ok:
            continue
        mean, std = mean_std_band([curve_of(r) for r in ok])
        for t, (m, s) in enumerate(zip(mean, std)):
            rows.append([task, method, t, float(m), float(s), len(ok)])
    return rows


def aggregate_runs(records: Sequence[RunRecord], out_dir: PathLike) -> Dict[str, Path]:
    """Mean and std regret curves per (task, method), global and per-task.

    Failed runs are left out of both tables and listed in ``warnings.csv``.
    Per-task bounds are the extrema over all included runs of that task.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    groups = _group(records)
    included = [r for r in records if not r.failed]
    if not included:
        raise AggregationError("every run failed; nothing to aggregate")
    by_task = defaultdict(list)
    for r in included:
        by_task[r.task_id].append(r)
    bounds = {}
    for task_id, recs in by_task.items():
        task = get_task(task_id)
        bounds[task_id] = per_task_bounds([[task.canonical(s) for s in r.scores] for r in recs])

    def per_task(r: RunRecord):
        task = get_task(r.task_id)
        lo, hi = bounds[r.task_id]
        return regret_curve([task.canonical(s) for s in r.scores], lo, hi)

    header = ["task", "method", "trial", "mean", "std", "n_runs"]
    files = {
        "regret_per_task": _write(out / "regret_per_task.csv", header,
                                  _curve_rows(groups, per_task)),
        "regret_global": _write(out / "regret_global.csv", header,
                                _curve_rows({k: [r for r in v if r.regret]
                                             for k, v in groups.items()}, lambda r: r.regret)),
    }
    warn = sorted([r.task_id, _method(r), r.run_index, r.seed, r.error]
                  for r in records if r.failed)
    files["warnings"] = _write(out / "warnings.csv",
                               ["task", "method", "run_index", "seed", "error"], warn)
    return files


def aggregate_surrogate_reports(reports: Mapping[str, Sequence[SurrogateReport]],
                                out_dir: PathLike,
                                name: str = "surrogate_reports.csv") -> Path:
    """Long table: one row per (variant, model, n_train, split, metric)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for variant, reps in reports.items():
        for rep in reps:
            for metric in REPORT_METRICS:
                rows.append([variant, rep.model, rep.n_train, rep.split_id, metric,
                             float(getattr(rep, metric)), rep.error])
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3], r[4]))
    return _write(out / name, ["variant", "model", "n_train", "split_id", "metric", "value",
                               "error"], rows)


def aggregate_designs(summaries: Sequence[DesignSummary], out_dir: PathLike) -> Dict[str, Path]:
    """Per-seed diversity rows and the seed-averaged correlation matrix of each design."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, corr_rows = [], []
    for s in summaries:
        regrets = s.best_regrets or [math.nan] * len(s.gen_variances)
        for k, (gv, mac, reg) in enumerate(zip(s.gen_variances, s.mean_abs_corrs, regrets)):
            rows.append([s.design, k, float(gv), float(mac), float(reg)])
        d = s.mean_corr.shape[0]
        for i in range(d):
            for j in range(d):
                corr_rows.append([s.design, i, j, float(s.mean_corr[i, j])])
    return {
        "designs": _write(out / "designs.csv", ["design", "seed_index", "gen_variance",
                                                "mean_abs_corr", "best_regret"], sorted(rows)),
        "corr_matrix": _write(out / "corr_matrix.csv", ["design", "i", "j", "corr"],
                              sorted(corr_rows)),
    }


# --------------------------------------------------------------------------
# report persistence, so `aggregate` can pick up study outputs from disk

REPORTS_FILE = "surrogate_reports.jsonl"


def write_reports(reports: Mapping[str, Sequence[SurrogateReport]], out_dir: PathLike) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / REPORTS_FILE
    with open(path, "w") as fh:
        for variant in sorted(reports):
            for rep in reports[variant]:
                fh.write(json.dumps({"variant": variant, **rep.to_dict()}, sort_keys=True) + "\n")
    return path


def read_reports(path: PathLike) -> Dict[str, List[SurrogateReport]]:
    out: Dict[str, List[SurrogateReport]] = defaultdict(list)
    for line in Path(path).read_text().splitlines():
        d = json.loads(line)
        variant = d.pop("variant")
        out[variant].append(SurrogateReport(**d))
    return dict(out)
