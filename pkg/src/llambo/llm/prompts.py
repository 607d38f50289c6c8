"""Prompt construction from task cards and the evaluation history.

All prompt wording lives in ``templates/*.txt`` (``string.Template`` syntax);
the context level only decides which card fields are substituted in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from string import Template
from typing import List, Optional, Sequence

from ..bench import Task
from ..space import Config, ParamSpec, SearchSpace, format_value

LEVELS = ("full", "partial", "none")
SCHEMAS = ("config", "config_list", "score")


@dataclass(frozen=True)
class Observation:
    config: Config
    score: float


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    expected_schema: str
    k: Optional[int] = None
    level: str = "full"
    stage: str = ""

    def __post_init__(self):
        if self.expected_schema not in SCHEMAS:
            raise ValueError(f"unknown schema {self.expected_schema!r}")

    def with_correction(self, error: str) -> "PromptBundle":
        extra = template("retry").substitute(error=error)
        return PromptBundle(self.system_text, self.user_text + extra, self.expected_schema,
                            self.k, self.level, self.stage)


@lru_cache(maxsize=None)
def template(name: str) -> Template:
    text = resources.files(__package__).joinpath("templates", f"{name}.txt").read_text()
    return Template(text)


def _check_level(level: str) -> str:
    if level not in LEVELS:
        raise ValueError(f"unknown context level {level!r}")
    return level


def display_names(space: SearchSpace, level: str) -> List[str]:
    """Names shown to the model: anonymous X1..Xd when no context is given."""
    if _check_level(level) == "none":
        return [f"X{i + 1}" for i in range(space.d)]
    return list(space.names)


def display_space(space: SearchSpace, level: str) -> SearchSpace:
    return space.renamed(display_names(space, level))


def render_config(space: SearchSpace, config: Config, level: str = "full") -> str:
    names = display_names(space, level)
    parts = [f"{n}: {format_value(config[p.name])}" for n, p in zip(names, space.params)]
    return "{" + ", ".join(parts) + "}"


def format_score(score: float) -> str:
    return f"{float(score):#.6g}"


def serialize_history(history: Sequence[Observation], space: SearchSpace,
                      level: str = "full") -> str:
    """One ``performance: s, hyperparameters: {...}`` line per observation."""
    return "\n".join(
        f"performance: {format_score(o.score)}, hyperparameters: "
        f"{render_config(space, o.config, level)}"
        for o in history
    )


def _param_line(name: str, p: ParamSpec) -> str:
    if p.kind == "categorical":
        return f"- {name}: one of {json.dumps(list(p.choices))}"
    lo, hi = format_value(p.lower), format_value(p.upper)
    kind = "integer" if p.kind == "integer" else "real number"
    return f"- {name}: {kind} in [{lo}, {hi}], {p.scale} scale"


def _example(space: SearchSpace, names: Sequence[str]) -> str:
    vals = {}
    for n, p in zip(names, space.params):
        if p.kind == "categorical":
            vals[n] = p.choices[0]
        else:
            vals[n] = p.from_unit(0.5)
    return json.dumps(vals)


def _direction_words(task: Task):
    if task.direction == "minimize":
        return "lower is better", "low"
    return "higher is better", "high"


def data_card(task: Task, level: str) -> str:
    if _check_level(level) == "none":
        return ""
    c = task.task_card
    description = f"Description: {c.description}" if level == "full" and c.description else ""
    return template("data_card").substitute(
        dataset_name=c.dataset_name, task_type=c.task_type, n_samples=c.n_samples,
        n_features=c.n_features, feature_kinds=c.feature_kinds, metric_name=c.metric_name,
        direction_hint=_direction_words(task)[0], description=description,
    ).rstrip() + "\n"


def model_card(task: Task, level: str) -> str:
    names = display_names(task.space, level)
    if level == "none":
        model_line = "Model: (not disclosed)"
    else:
        model_line = f"Model: {task.model_card.model_name}"
        if level == "full" and task.model_card.description:
            model_line += f" - {task.model_card.description}"
    lines = "\n".join(_param_line(n, p) for n, p in zip(names, task.space.params))
    return template("model_card").substitute(model_line=model_line, param_lines=lines)


def context_block(task: Task, level: str) -> str:
    dc = data_card(task, level)
    return (dc + "\n" if dc else "") + model_card(task, level)


def build_warmstart_prompt(task: Task, level: str = "full",
                           already: Sequence[Config] = ()) -> PromptBundle:
    already_text = ""
    if already:
        lines = "\n".join(f"hyperparameters: {render_config(task.space, c, level)}"
                          for c in already)
        already_text = ("## Already suggested (propose something different)\n" + lines + "\n")
    user = template("warmstart").substitute(
        context=context_block(task, level),
        already_suggested=already_text,
        example=_example(task.space, display_names(task.space, level)),
    )
    return PromptBundle(template("system").template.strip(), user, "config", None, level,
                        "warmstart")


def build_candidate_prompt(task: Task, history: Sequence[Observation], level: str = "full",
                           k: int = 10) -> PromptBundle:
    if not history:
        raise ValueError("candidate prompts need a nonempty history")
    if k < 1:
        raise ValueError("k must be >= 1")
    user = template("candidate").substitute(
        context=context_block(task, level),
        history=serialize_history(history, task.space, level),
        metric_name=task.task_card.metric_name,
        goal=_direction_words(task)[1],
        k=k,
        example=_example(task.space, display_names(task.space, level)),
    )
    return PromptBundle(template("system").template.strip(), user, "config_list", k, level,
                        "candidates")


def build_surrogate_prompt(task: Task, history: Sequence[Observation], candidate: Config,
                           level: str = "full") -> PromptBundle:
    if not history:
        raise ValueError("surrogate prompts need a nonempty history")
    candidate = task.space.validate(candidate)
    user = template("surrogate").substitute(
        context=context_block(task, level),
        history=serialize_history(history, task.space, level),
        candidate=render_config(task.space, candidate, level),
        metric_name=task.task_card.metric_name,
    )
    return PromptBundle(template("system").template.strip(), user, "score", None, level,
                        "surrogate")
