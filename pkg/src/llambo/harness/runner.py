"""Seeded optimisation runs: warmstart, then propose -> score -> select -> evaluate."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from ..acquire import best_index, ei_array, propose_random, propose_tpe
from ..bench import Task, eval_objective, get_task
from ..llm.backend import ScriptedBackend, make_backend
from ..llm.pipeline import (LlmSession, llm_propose, llm_surrogate_samples, llm_warmstart,
                            summarize_samples)
from ..llm.prompts import Observation
from ..metrics import regret_curve
from ..space import DESIGNS, Config, denormalize, normalized_array, snap_array
from ..surrogate import PredictiveDistribution, forest_fit, gp_fit, tpe_fit
from ..surrogate.gp import theta_of
from .spec import ExperimentSpec

log = logging.getLogger(__name__)

# acquisition pool for the GP/RF optimizers: uniform draws plus local moves around the incumbent
POOL_UNIFORM = 1000
POOL_LOCAL = 100
LOCAL_STEP = 0.05
GP_RESTARTS = 8


def derive_seed(*keys: int) -> int:
    """Stable 32-bit seed from integer keys (e.g. base seed and run index)."""
    return int(np.random.SeedSequence([int(k) % 2 ** 63 for k in keys]).generate_state(1)[0])


@dataclass
class TrialEntry:
    trial: int
    phase: str                       # "init" or "opt"
    config: Config
    score: float
    provenance: str
    prediction: Optional[dict] = None
    fallback: dict = field(default_factory=dict)
    retries: int = 0
    wall_time: float = 0.0

    def to_dict(self, timing: bool = False) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("wall_time")
        return d


@dataclass
class RunRecord:
    spec: dict
    run_index: int
    seed: int
    task_id: str
    entries: List[TrialEntry] = field(default_factory=list)
    design: List[Config] = field(default_factory=list)
    regret: List[float] = field(default_factory=list)
    status: str = "ok"
    error: str = ""
    transcript: List[dict] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return self.status != "ok"

    @property
    def scores(self) -> List[float]:
        return [e.score for e in self.entries]

    def summary(self) -> dict:
        return {"run_index": self.run_index, "seed": self.seed, "task": self.task_id,
                "method": f"{self.spec['optimizer']}+{self.spec['warmstart']}",
                "status": self.status, "error": self.error, "design": self.design,
                "regret": self.regret}


class _Loop:
    """State for one run; the history is only ever appended to."""

    def __init__(self, spec: ExperimentSpec, task: Task, seed: int, session):
        self.spec = spec
        self.task = task
        self.space = task.space
        self.seed = seed
        self.session = session
        self.history: List[Observation] = []
        self.entries: List[TrialEntry] = []
        self._theta = None

    # -- bookkeeping -------------------------------------------------------
    def canonical_scores(self) -> np.ndarray:
        return np.array([self.task.canonical(o.score) for o in self.history])

    def evaluate(self, config: Config, phase: str, provenance: str, t0: float, **extra):
        config = self.space.validate(config)
        score = eval_objective(self.task, config)
        self.history.append(Observation(config, score))
        entry = TrialEntry(len(self.entries), phase, config, score, provenance,
                           wall_time=time.perf_counter() - t0, **extra)
        self.entries.append(entry)
        return entry

    # -- warmstart ---------------------------------------------------------
    def warmstart(self) -> List[Config]:
        name = self.spec.warmstart
        t0 = time.perf_counter()
        if name in DESIGNS:
            design = DESIGNS[name](self.space, self.spec.n_init, seed=derive_seed(self.seed, 1))
            for c in design:
                self.evaluate(c, "init", f"init:{name}", t0)
                t0 = time.perf_counter()
            return design
        level = name.split("_", 1)[1]
        responses = llm_warmstart(self.session, self.task, level, self.spec.n_init,
                                  derive_seed(self.seed, 1))
        design = []
        for r in responses:
            flags = {"warmstart": r.fallback}
            if r.duplicate:
                flags["duplicate"] = True
            self.evaluate(r.payload, "init", f"init:{name}", t0, fallback=flags,
                          retries=r.retries)
            design.append(r.payload)
            t0 = time.perf_counter()
        return design

    # -- one optimisation step ----------------------------------------------
    def step(self, t: int):
        t0 = time.perf_counter()
        rng_seed = derive_seed(self.seed, 2, t)
        opt = self.spec.optimizer
        if opt == "random":
            batch = propose_random(self.space, 1, rng_seed)
            return self.evaluate(batch.configs[0], "opt", "random", t0)
        if opt in ("gp_ei", "rf_ei"):
            return self._model_step(opt, rng_seed, t0)
        if opt in ("tpe_ind", "tpe_mv"):
            return self._tpe_step(opt, rng_seed, t0)
        return self._llambo_step(rng_seed, t0)

    def _pool(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        U = rng.random((POOL_UNIFORM, self.space.d))
        X = normalized_array(self.space, [o.config for o in self.history])
        inc = X[int(np.argmin(self.canonical_scores()))]
        local = inc + LOCAL_STEP * rng.standard_normal((POOL_LOCAL, self.space.d))
        return snap_array(self.space, np.vstack([U, local]))

    def _model_step(self, opt: str, seed: int, t0: float):
        X = normalized_array(self.space, [o.config for o in self.history])
        y = self.canonical_scores()
        if opt == "gp_ei":
            model = gp_fit(X, y, seed=seed, n_restarts=GP_RESTARTS, theta0=self._theta)
            self._theta = theta_of(model)
        else:
            model = forest_fit(X, y, n_trees=self.spec.n_trees, seed=seed)
        pool = self._pool(seed)
        mean, std = model.predict(pool)
        i = int(np.argmax(ei_array(mean, std, float(y.min()))))
        pred = {"mean": float(mean[i]), "std": float(std[i])}
        return self.evaluate(denormalize(self.space, pool[i]), "opt", opt, t0, prediction=pred)

    def _tpe_step(self, opt: str, seed: int, t0: float):
        if len(self.history) < 4:
            batch = propose_random(self.space, 1, seed)
            return self.evaluate(batch.configs[0], "opt", "random", t0)
        X = normalized_array(self.space, [o.config for o in self.history])
        mode = "multivariate" if opt == "tpe_mv" else "independent"
        model = tpe_fit(X, self.canonical_scores(), gamma=self.spec.gamma, mode=mode)
        batch = propose_tpe(model, self.space, 1, seed)
        return self.evaluate(batch.configs[0], "opt", opt, t0)

    def _llambo_step(self, seed: int, t0: float):
        spec = self.spec
        batch = llm_propose(self.session, self.task, self.history, spec.context,
                            spec.k_candidates, derive_seed(seed, 0))
        preds, n_fb = [], 0
        for j, cand in enumerate(batch.configs):
            samples, fb = llm_surrogate_samples(self.session, self.task, self.history, cand,
                                                spec.context, spec.mc_samples,
                                                derive_seed(seed, 1, j))
            n_fb += fb
            p = summarize_samples(samples)
            preds.append(PredictiveDistribution(self.task.canonical(p.mean), p.std))
        batch.scores_est = preds
        best = float(self.canonical_scores().min())
        i = best_index(preds, best)
        resp = batch.response
        flags = {"candidates": bool(resp.fallback),
                 "topped_up": batch.sources.count("random"),
                 "surrogate_samples": n_fb}
        p = preds[i]
        pred = {"mean": self.task.canonical(p.mean), "std": p.std}
        return self.evaluate(batch.configs[i], "opt", f"llambo:{batch.sources[i]}", t0,
                             prediction=pred, fallback=flags, retries=resp.retries)


def _session_for(spec: ExperimentSpec, backend=None) -> Optional[LlmSession]:
    if not spec.needs_llm:
        return None
    if backend is None:
        backend = make_backend(spec.backend_config(), spec.scripted_replies)
    elif isinstance(backend, ScriptedBackend):
        backend = backend.fresh()
    return LlmSession.of(backend)


def run_one(spec: ExperimentSpec, run_index: int, task: Optional[Task] = None,
            backend=None) -> RunRecord:
    """Execute one seeded run.

    A scripted ``backend`` is rewound for every run so runs are independent
    and replayable.  An objective failure ends the run early with
    ``status="failed"``.
    """
    task = task or get_task(spec.task)
    seed = derive_seed(spec.base_seed, run_index)
    session = _session_for(spec, backend)
    loop = _Loop(spec, task, seed, session)
    record = RunRecord(spec.to_dict(), run_index, seed, spec.task)
    try:
        record.design = loop.warmstart()
        for t in range(1, spec.n_trials + 1):
            loop.step(t)
    except Exception as exc:  # noqa: BLE001 - any objective/model failure ends the run
        log.warning("run %d of %s failed: %s", run_index, spec.method, exc)
        record.status = "failed"
        record.error = f"{type(exc).__name__}: {exc}"
    record.entries = loop.entries
    record.transcript = session.transcript if session else []
    if loop.history:
        scores = loop.canonical_scores()
        lo, hi = task.known_best, task.known_worst
        if lo is not None and hi is not None:
            record.regret = regret_curve(scores, task.canonical(lo), task.canonical(hi)).tolist()
    return record


def run_suite(spec: ExperimentSpec, task: Optional[Task] = None, backend=None,
              n_jobs: int = 1) -> List[RunRecord]:
    task = task or get_task(spec.task)
    indices = range(spec.n_runs)
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            return list(pool.map(lambda i: run_one(spec, i, task, backend), indices))
    return [run_one(spec, i, task, backend) for i in indices]


# --------------------------------------------------------------------------
# persistence

def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_records(records: List[RunRecord], out_dir: Union[str, Path]) -> Path:
    """Persist a suite: spec snapshot, one JSON line per trial, run summaries,
    the LLM transcript and (separately, since they vary) wall times."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not records:
        raise ValueError("no records to write")
    (out / "spec.json").write_text(json.dumps(records[0].spec, indent=1, sort_keys=True) + "\n")
    with open(out / "trials.jsonl", "w") as trials, open(out / "runs.jsonl", "w") as runs, \
            open(out / "llm_log.jsonl", "w") as llm, open(out / "timings.jsonl", "w") as tim:
        for r in records:
            runs.write(_dumps(r.summary()) + "\n")
            for e in r.entries:
                trials.write(_dumps({"run_index": r.run_index, **e.to_dict()}) + "\n")
                tim.write(_dumps({"run_index": r.run_index, "trial": e.trial,
                                  "wall_time": e.wall_time}) + "\n")
            for m in r.transcript:
                llm.write(_dumps({"run_index": r.run_index, **m}) + "\n")
    return out


def read_records(run_dir: Union[str, Path]) -> List[RunRecord]:
    run_dir = Path(run_dir)
    spec = json.loads((run_dir / "spec.json").read_text())
    records = {}
    for line in (run_dir / "runs.jsonl").read_text().splitlines():
        s = json.loads(line)
        records[s["run_index"]] = RunRecord(spec, s["run_index"], s["seed"], s["task"],
                                            design=s["design"], regret=s["regret"],
                                            status=s["status"], error=s["error"])
    for line in (run_dir / "trials.jsonl").read_text().splitlines():
        d = json.loads(line)
        idx = d.pop("run_index")
        records[idx].entries.append(TrialEntry(**d))
    return [records[k] for k in sorted(records)]
