"""The three LLM-driven capabilities: warmstart, candidate proposal, surrogate."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..acquire import CandidateBatch
from ..bench import Task
from ..space import Config, SearchSpace, denormalize, random_unit
from ..surrogate import STD_FLOOR, PredictiveDistribution
from .backend import BackendConfig, BackendError
from .parse import ParsedResponse, ParseError, parse_response
from .prompts import (Observation, PromptBundle, build_candidate_prompt, build_surrogate_prompt,
                      build_warmstart_prompt, display_space)

log = logging.getLogger(__name__)

MC_TEMPERATURE = 0.7
DEFAULT_MC_SAMPLES = 10
# std reported by the single-shot (mc_samples=1) surrogate
SINGLE_SHOT_STD = 0.1


@dataclass
class LlmSession:
    """A backend plus its settings and the transcript of every exchange."""

    backend: Any
    config: BackendConfig
    transcript: List[dict] = field(default_factory=list)

    @classmethod
    def of(cls, backend) -> "LlmSession":
        return cls(backend, backend.config)


def query_backend(session: LlmSession, prompt: PromptBundle, seed: int,
                  temperature: Optional[float] = None) -> str:
    temp = session.config.temperature if temperature is None else temperature
    return session.backend.complete(prompt, int(seed), float(temp))


def _rename(obj, names_from: Sequence[str], names_to: Sequence[str]):
    mapping = dict(zip(names_from, names_to))
    if isinstance(obj, dict):
        return {mapping[k]: v for k, v in obj.items()}
    return [{mapping[k]: v for k, v in c.items()} for c in obj]


def robust_ask(session: LlmSession, prompt: PromptBundle, space: Optional[SearchSpace],
               fallback: Callable[[], Any], seed: int,
               temperature: Optional[float] = None) -> ParsedResponse:
    """Query and parse, retrying with the parse error appended to the prompt.

    At most ``max_retries + 1`` backend calls.  ``space`` is the true search
    space; replies are parsed against the names actually shown to the model.
    When every attempt fails the fallback's payload is returned with
    ``fallback=True``.
    """
    shown = display_space(space, prompt.level) if space is not None else None
    errors: List[str] = []
    current = prompt
    attempts = session.config.max_retries + 1
    for attempt in range(attempts):
        entry = {"stage": prompt.stage, "attempt": attempt, "seed": int(seed) + attempt,
                 "schema": prompt.expected_schema, "system": current.system_text,
                 "user": current.user_text}
        try:
            raw = query_backend(session, current, int(seed) + attempt, temperature)
            entry["reply"] = raw
            parsed = parse_response(raw, prompt.expected_schema, shown, prompt.k)
        except (BackendError, ParseError) as exc:
            msg = f"{type(exc).__name__}: {exc}"
            entry["error"] = msg
            session.transcript.append(entry)
            errors.append(msg)
            current = prompt.with_correction(str(exc))
            continue
        if shown is not None and shown.names != space.names:
            parsed.payload = _rename(parsed.payload, shown.names, space.names)
        if parsed.rejected:
            entry["rejected"] = parsed.rejected
        session.transcript.append(entry)
        parsed.attempts = attempt + 1
        parsed.errors = errors
        return parsed
    payload = fallback()
    session.transcript.append({"stage": prompt.stage, "fallback": True, "errors": errors})
    log.info("%s: falling back after %d failed attempts", prompt.stage, attempts)
    return ParsedResponse(prompt.expected_schema, payload, "", attempts=attempts,
                          fallback=True, errors=errors)


def _random_config(space: SearchSpace, seed) -> Config:
    return denormalize(space, random_unit(1, space.d, seed)[0])


def llm_warmstart(session: LlmSession, task: Task, level: str, n_init: int,
                  seed: int) -> List[ParsedResponse]:
    """Propose ``n_init`` starting points, one query each.

    Each query lists the points already suggested.  Returns the parsed
    responses; ``.payload`` is the configuration, ``.fallback`` marks random
    replacements and ``.duplicate`` repeats of an earlier suggestion.
    """
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    out: List[ParsedResponse] = []
    seen: List[Config] = []
    for i in range(n_init):
        prompt = build_warmstart_prompt(task, level, already=seen)
        s = _derive(seed, i)
        resp = robust_ask(session, prompt, task.space,
                          lambda s=s: _random_config(task.space, s), s)
        resp.duplicate = resp.payload in seen
        seen.append(resp.payload)
        out.append(resp)
    return out


def _derive(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(seed) % 2 ** 63, *keys]).generate_state(1)[0])


def llm_surrogate_samples(session: LlmSession, task: Task, history: Sequence[Observation],
                          candidate: Config, level: str, mc_samples: int,
                          seed: int) -> Tuple[List[float], int]:
    """Raw score samples and how many of them are history-mean fallbacks."""
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    prompt = build_surrogate_prompt(task, history, candidate, level)
    hist_mean = float(np.mean([o.score for o in history]))
    temperature = 0.0 if mc_samples == 1 else MC_TEMPERATURE

    def one(i):
        return robust_ask(session, prompt, None, lambda: hist_mean, seed + i, temperature)

    parallel = session.backend.honors_seed and session.config.max_concurrency > 1
    if parallel and mc_samples > 1:
        with ThreadPoolExecutor(session.config.max_concurrency) as pool:
            responses = list(pool.map(one, [i * 1000 for i in range(mc_samples)]))
    else:
        responses = [one(i * 1000) for i in range(mc_samples)]
    n_fb = sum(r.fallback for r in responses)
    if n_fb:
        session.transcript.append({"stage": "surrogate", "note":
                                   f"{n_fb} of {mc_samples} samples replaced by history mean"})
    return [float(r.payload) for r in responses], n_fb


def summarize_samples(samples: Sequence[float],
                      single_shot_std: float = SINGLE_SHOT_STD) -> PredictiveDistribution:
    if len(samples) == 1:
        return PredictiveDistribution(float(samples[0]), single_shot_std)
    arr = np.asarray(samples, dtype=float)
    return PredictiveDistribution(float(arr.mean()), max(float(arr.std(ddof=1)), STD_FLOOR))


def llm_surrogate_predict(session: LlmSession, task: Task, history: Sequence[Observation],
                          candidate: Config, level: str = "full",
                          mc_samples: int = DEFAULT_MC_SAMPLES, seed: int = 0,
                          single_shot_std: float = SINGLE_SHOT_STD) -> PredictiveDistribution:
    samples, _ = llm_surrogate_samples(session, task, history, candidate, level, mc_samples, seed)
    return summarize_samples(samples, single_shot_std)


def llm_propose(session: LlmSession, task: Task, history: Sequence[Observation], level: str,
                k: int, seed: int) -> CandidateBatch:
    """One candidate query; short or failed batches are topped up with random configs."""
    if not history:
        raise ValueError("llm_propose needs a nonempty history")
    prompt = build_candidate_prompt(task, history, level, k)
    resp = robust_ask(session, prompt, task.space, lambda: [], seed)
    configs = list(resp.payload)[:k]
    sources = ["llm"] * len(configs)
    n_missing = k - len(configs)
    if n_missing:
        U = random_unit(n_missing, task.space.d, _derive(seed, 1))
        configs += [denormalize(task.space, u) for u in U]
        sources += ["random"] * n_missing
    return CandidateBatch(configs, "llm", sources=sources, response=resp)
