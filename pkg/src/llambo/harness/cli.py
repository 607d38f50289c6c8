"""Command-line entry point: ``llambo run | evaluate-surrogate | warmstart-study |
ablation | aggregate | list-tasks``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..bench import get_task, task_registry
from ..llm.backend import APIS, BackendConfig, make_backend
from .aggregate import (AggregationError, REPORTS_FILE, aggregate_designs, aggregate_runs,
                        aggregate_surrogate_reports, fmt, read_reports, write_reports)
from .runner import read_records, run_suite, write_records
from .spec import OPTIMIZERS, WARMSTARTS, ExperimentSpec, load_spec_file
from .studies import SURROGATE_MODELS, ablation_compare, evaluate_surrogates, warmstart_study

log = logging.getLogger("llambo")


def _ints(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _names(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_backend_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("language-model backend")
    g.add_argument("--backend-url", help="model server URL (default: $LLAMBO_BACKEND_URL, "
                                         "then http://localhost:11434)")
    g.add_argument("--model", help="model name sent to the server")
    g.add_argument("--api", choices=APIS, help="wire format of the server")
    g.add_argument("--temperature", type=float)
    g.add_argument("--max-retries", type=int)
    g.add_argument("--timeout", type=float, help="per-request timeout in seconds")
    g.add_argument("--scripted-replies", metavar="FILE",
                   help="JSON reply queue; replaces the server with a scripted backend")


def _backend_config(args, base: Optional[dict] = None) -> Optional[BackendConfig]:
    fields = dict(base or {})
    for flag, key in (("backend_url", "url"), ("model", "model"), ("api", "api"),
                      ("temperature", "temperature"), ("max_retries", "max_retries"),
                      ("timeout", "timeout")):
        value = getattr(args, flag, None)
        if value is not None:
            fields[key] = value
    if not fields and not getattr(args, "scripted_replies", None):
        return None
    return BackendConfig(**fields)


def _backend(args):
    cfg = _backend_config(args)
    if cfg is None:
        return None
    return make_backend(cfg, args.scripted_replies)


def _slug(text: str) -> str:
    return text.replace("/", "_").replace(".json", "")


# --------------------------------------------------------------------------
# subcommands

def cmd_run(args) -> int:
    doc = load_spec_file(args.config) if args.config else {}
    overrides = {"task": args.task, "optimizer": args.optimizer, "warmstart": args.warmstart,
                 "n_init": args.n_init, "n_trials": args.n_trials, "n_runs": args.n_runs,
                 "base_seed": args.seed, "scripted_replies": args.scripted_replies,
                 "mc_samples": args.mc_samples, "k_candidates": args.k,
                 "context": args.context}
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if "task" not in doc:
        print("error: --task is required (or set it in --config)", file=sys.stderr)
        return 2
    backend = _backend_config(args, doc.pop("backend", None))
    spec = ExperimentSpec.from_dict({**doc, "backend": backend})
    records = run_suite(spec, n_jobs=args.jobs)
    out = Path(args.out or Path("runs") / f"{_slug(spec.task)}__{spec.method}")
    write_records(records, out)
    finals = []
    for r in records:
        final = r.regret[-1] if r.regret else float("nan")
        finals.append(final)
        status = "" if r.status == "ok" else f"  FAILED ({r.error})"
        print(f"run {r.run_index}  seed {r.seed}  entries {len(r.entries)}  "
              f"final regret {fmt(final)}{status}")
    ok = [f for f, r in zip(finals, records) if not r.failed]
    if ok:
        print(f"median final regret over {len(ok)} runs: {fmt(float(np.median(ok)))}")
    print(f"wrote {out}")
    return 0 if ok else 1


def _print_reports(reports):
    print(f"{'model':8s} {'n':>4s} {'nrmse':>9s} {'r2':>9s} {'nlpd':>9s} {'cover':>6s} "
          f"{'sharp':>9s} {'regret':>7s}")
    for r in reports:
        if r.error:
            print(f"{r.model:8s} {r.n_train:4d}  degenerate: {r.error}")
            continue
        print(f"{r.model:8s} {r.n_train:4d} {r.nrmse:9.4f} {r.r2:9.4f} {r.nlpd_mean:9.3f} "
              f"{r.coverage:6.2f} {r.sharpness:9.4f} {r.regret:7.3f}")


def cmd_evaluate_surrogate(args) -> int:
    task = get_task(args.task)
    models = _names(args.models)
    backend = _backend(args)
    reports = evaluate_surrogates(task, _ints(args.grid), models, args.seed, backend=backend,
                                  level=args.context, mc_samples=args.mc_samples,
                                  n_test=args.n_test)
    _print_reports(reports)
    out = Path(args.out or Path("studies") / f"surrogate__{_slug(args.task)}")
    variants = {f"{args.task}:{args.context}": reports}
    write_reports(variants, out)
    aggregate_surrogate_reports(variants, out)
    print(f"wrote {out}")
    return 0


def cmd_ablation(args) -> int:
    task = get_task(args.task)
    backend = _backend(args)
    if backend is None:
        print("error: ablation needs --backend-url or --scripted-replies", file=sys.stderr)
        return 2
    paired = ablation_compare(task, backend, _ints(args.grid), args.seed,
                              models=_names(args.models), mc_samples=args.mc_samples,
                              n_test=args.n_test)
    for level, reports in paired.items():
        print(f"-- context {level}")
        _print_reports(reports)
    out = Path(args.out or Path("studies") / f"ablation__{_slug(args.task)}")
    variants = {f"{args.task}:{level}": reps for level, reps in paired.items()}
    write_reports(variants, out)
    aggregate_surrogate_reports(variants, out)
    print(f"wrote {out}")
    return 0


def cmd_warmstart_study(args) -> int:
    task = get_task(args.task)
    designs = _names(args.designs)
    summaries = warmstart_study(task, designs, args.n_init, args.n_seeds, args.seed,
                                backend=_backend(args))
    for s in summaries:
        reg = f"{np.mean(s.best_regrets):.4f}" if s.best_regrets else "n/a"
        print(f"{s.design:12s} mean generalized variance {s.mean_gen_variance:.3e}  "
              f"mean |corr| {np.mean(s.mean_abs_corrs):.3f}  initial best regret {reg}")
    out = Path(args.out or Path("studies") / f"warmstart__{_slug(args.task)}")
    aggregate_designs(summaries, out)
    print(f"wrote {out}")
    return 0


def cmd_aggregate(args) -> int:
    records, reports = [], {}
    for d in map(Path, args.dirs):
        if (d / "runs.jsonl").exists():
            records += read_records(d)
        if (d / REPORTS_FILE).exists():
            for variant, reps in read_reports(d / REPORTS_FILE).items():
                if variant in reports:
                    raise AggregationError(f"report variant {variant!r} appears twice")
                reports[variant] = reps
    if not records and not reports:
        print("error: no run or report files found", file=sys.stderr)
        return 2
    out = Path(args.out)
    if records:
        files = aggregate_runs(records, out)
        n_failed = sum(r.failed for r in records)
        print(f"aggregated {len(records)} runs ({n_failed} failed) -> "
              f"{', '.join(p.name for p in files.values())}")
    if reports:
        path = aggregate_surrogate_reports(reports, out)
        print(f"aggregated {sum(map(len, reports.values()))} surrogate reports -> {path.name}")
    return 0


def cmd_list_tasks(args) -> int:
    for task_id, task in sorted(task_registry().items()):
        print(f"{task_id:32s} d={task.space.d}  metric={task.task_card.metric_name}")
    return 0


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="llambo", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an optimizer on a task for several seeds")
    p.add_argument("--config", help="JSON or TOML file with experiment fields")
    p.add_argument("--task", help="dataset/model id or a tabular .json file")
    p.add_argument("--optimizer", choices=OPTIMIZERS)
    p.add_argument("--warmstart", choices=WARMSTARTS)
    p.add_argument("--n-init", type=int)
    p.add_argument("--n-trials", type=int)
    p.add_argument("--n-runs", type=int)
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--mc-samples", type=int, help="surrogate samples per candidate (llambo)")
    p.add_argument("--k", type=int, help="candidates per llambo iteration")
    p.add_argument("--context", choices=("full", "partial", "none"),
                   help="prompt context level for llambo queries")
    p.add_argument("--jobs", type=int, default=1, help="runs executed in parallel")
    p.add_argument("--out", help="output directory")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_run)

    def study_flags(p, models_default):
        p.add_argument("--task", required=True)
        p.add_argument("--grid", default="5,10,20,40", help="comma-separated training sizes")
        p.add_argument("--models", default=models_default,
                       help=f"comma-separated subset of {','.join(SURROGATE_MODELS)}")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--mc-samples", type=int, default=10)
        p.add_argument("--n-test", type=int, default=50)
        p.add_argument("--out", help="output directory")
        _add_backend_flags(p)

    p = sub.add_parser("evaluate-surrogate", help="surrogate accuracy and calibration over a "
                                                  "training-size grid")
    study_flags(p, "gp,rf")
    p.add_argument("--context", choices=("full", "partial", "none"), default="full")
    p.set_defaults(func=cmd_evaluate_surrogate)

    p = sub.add_parser("ablation", help="LLM surrogate with full context versus none")
    study_flags(p, "llm_mc")
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("warmstart-study", help="diversity of initial designs")
    p.add_argument("--task", required=True)
    p.add_argument("--designs", default="random,sobol,lhc",
                   help="comma-separated designs (random, sobol, lhc, llm_none, llm_partial, "
                        "llm_full)")
    p.add_argument("--n-init", type=int, default=5)
    p.add_argument("--n-seeds", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_warmstart_study)

    p = sub.add_parser("aggregate", help="combine run and report directories into CSV tables")
    p.add_argument("dirs", nargs="+", help="directories written by the other subcommands")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("list-tasks", help="print the task registry")
    p.set_defaults(func=cmd_list_tasks)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, AggregationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
