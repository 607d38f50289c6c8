from __future__ import annotations

import json
import math
import re

import numpy as np
import pytest
from conftest import branin_reply
from hypothesis import given, settings
from hypothesis import strategies as st

from llambo.bench import builtin_tasks, get_task
from llambo.llm import (ArityError, BackendConfig, BackendError, BoundsError, FormatError,
                        HttpBackend, LlmSession, MissingKeyError, Observation, ScriptedBackend,
                        ServerError, build_candidate_prompt, build_surrogate_prompt,
                        build_warmstart_prompt, llm_propose, llm_surrogate_predict,
                        llm_surrogate_samples, llm_warmstart, parse_response, query_backend,
                        robust_ask, serialize_history)
from llambo.llm.pipeline import SINGLE_SHOT_STD
from llambo.llm.prompts import data_card, display_names
from llambo.space import ParamSpec, SearchSpace, sample_random

TREES = SearchSpace((ParamSpec("max_depth", "integer", 1, 15),
                     ParamSpec("n_estimators", "integer", 10, 500)))


def session(replies, cycle=False, **cfg):
    config = BackendConfig(url="scripted://", model="scripted", **cfg)
    return LlmSession.of(ScriptedBackend(replies, cycle, config))


def history_of(task, n=3, seed=0):
    from llambo.bench import eval_objective
    return [Observation(c, eval_objective(task, c)) for c in sample_random(task.space, n, seed)]


# -- history serialisation --------------------------------------------------------

def test_serialize_history_examples():
    space = SearchSpace((ParamSpec("a", "integer", 0, 5),))
    assert serialize_history([], space) == ""
    obs = [Observation({"a": 1}, 0.123)]
    assert serialize_history(obs, space, "full") == "performance: 0.123000, hyperparameters: {a: 1}"
    assert serialize_history(obs, space, "none") == "performance: 0.123000, hyperparameters: {X1: 1}"


def test_serialize_history_follows_space_order():
    space = SearchSpace((ParamSpec("b", "continuous", 0, 1), ParamSpec("a", "continuous", 0, 1)))
    line = serialize_history([Observation({"a": 0.25, "b": 0.5}, 1.0)], space)
    assert line == "performance: 1.00000, hyperparameters: {b: 0.5, a: 0.25}"


@settings(max_examples=100, deadline=None)
@given(scores=st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=6))
def test_serialize_history_injective(scores):
    space = SearchSpace((ParamSpec("a", "integer", 0, 5),))
    six = {f"{s:#.6g}" for s in scores}
    if len(six) < len(scores):
        return
    texts = {serialize_history([Observation({"a": 1}, s)], space) for s in scores}
    assert len(texts) == len(scores)


# -- prompts -----------------------------------------------------------------------

def test_warmstart_prompt_full_contains_card_numbers():
    task = get_task("breast/RandomForest")
    p = build_warmstart_prompt(task, "full")
    assert "569" in p.user_text and "30" in p.user_text
    assert p.expected_schema == "config"
    assert "performance:" not in p.user_text


def word_in(word, text):
    return re.search(rf"(?<![A-Za-z0-9_]){re.escape(word)}(?![A-Za-z0-9_])", text) is not None


@pytest.mark.parametrize("task", builtin_tasks(), ids=lambda t: t.task_id)
def test_level_none_hides_names(task):
    hist = history_of(task)
    prompts = [build_warmstart_prompt(task, "none", already=[hist[0].config]),
               build_candidate_prompt(task, hist, "none", 5),
               build_surrogate_prompt(task, hist, hist[1].config, "none")]
    for p in prompts:
        text = p.system_text + "\n" + p.user_text
        assert not word_in(task.task_card.dataset_name, text)
        assert not word_in(task.model_card.model_name, text)
        for name in task.space.names:
            assert not word_in(name, text), name
        for x in display_names(task.space, "none"):
            assert x in text


def test_partial_keeps_names_drops_description():
    task = get_task("wine/SVM")
    p = build_candidate_prompt(task, history_of(task), "partial", 4)
    assert task.task_card.description not in p.user_text
    assert task.model_card.description not in p.user_text
    for name in task.space.names:
        assert name in p.user_text
    full = build_candidate_prompt(task, history_of(task), "full", 4)
    assert task.task_card.description in full.user_text


def test_candidate_prompt_contents():
    task = get_task("iris/SVM")
    p = build_candidate_prompt(task, history_of(task, 3), "full", 10)
    assert "10" in p.user_text and p.expected_schema == "config_list" and p.k == 10
    assert len([ln for ln in p.user_text.splitlines() if ln.startswith("performance: ")]) == 3
    with pytest.raises(ValueError):
        build_candidate_prompt(task, [], "full", 10)


def test_surrogate_prompt_contents():
    task = get_task("digits/MLP")
    hist = history_of(task, 4)
    cand = sample_random(task.space, 1, seed=9)[0]
    p = build_surrogate_prompt(task, hist, cand, "full")
    assert p.expected_schema == "score"
    assert task.task_card.metric_name in p.user_text
    rendered = serialize_history([Observation(cand, 0.0)], task.space).split("hyperparameters: ")[1]
    assert f"hyperparameters: {rendered}" in p.user_text
    with pytest.raises(ValueError):
        build_surrogate_prompt(task, [], cand)


def test_full_and_none_differ_only_in_card_content():
    task = get_task("breast/LogisticRegression")
    hist = history_of(task, 3)
    full = build_candidate_prompt(task, hist, "full", 5).user_text.splitlines()
    none = build_candidate_prompt(task, hist, "none", 5).user_text.splitlines()
    card = set(data_card(task, "full").splitlines())
    names = task.space.names
    xs = display_names(task.space, "none")
    only_full = [ln for ln in full if ln not in none]
    only_none = [ln for ln in none if ln not in full]
    for ln in only_full:
        assert ln in card or ln.startswith("Model: ") or any(word_in(n, ln) for n in names)
    for ln in only_none:
        assert ln.startswith("Model: ") or any(word_in(x, ln) for x in xs)


# -- parsing ------------------------------------------------------------------------

def test_parse_config_examples():
    r = parse_response('{"max_depth": 5, "n_estimators": 100}', "config", TREES)
    assert r.payload == {"max_depth": 5, "n_estimators": 100}
    with pytest.raises(FormatError):
        parse_response("lets try 100 trees", "config", TREES)
    with pytest.raises(MissingKeyError) as err:
        parse_response('{"max_depth": 5}', "config", TREES)
    assert err.value.name == "n_estimators"


def test_parse_tolerates_prose_fences_and_numeric_strings():
    text = 'Sure!\n```json\n{"max_depth": "7", "n_estimators": 120.0}\n```\nGood luck.'
    assert parse_response(text, "config", TREES).payload == {"max_depth": 7, "n_estimators": 120}


def test_parse_bounds_and_arity():
    with pytest.raises(BoundsError):
        parse_response('{"max_depth": 50, "n_estimators": 100}', "config", TREES)
    one = '{"max_depth": 5, "n_estimators": 100}'
    with pytest.raises(ArityError):
        parse_response(f"[{one}, {one}]", "config_list", TREES, k=3)


def test_parse_score_forms():
    assert parse_response("0.42", "score").payload == 0.42
    assert parse_response('Estimate: {"score": 0.31}', "score").payload == 0.31
    assert parse_response("```\n0.5\n```", "score").payload == 0.5
    with pytest.raises(FormatError):
        parse_response("about half", "score")


def test_parse_list_drops_invalid_entries():
    good = '{"max_depth": 5, "n_estimators": 100}'
    bad = '{"max_depth": 99, "n_estimators": 100}'
    r = parse_response(f"[{good}, {bad}, {good}]", "config_list", TREES, k=3)
    assert len(r.payload) == 2 and len(r.rejected) == 1


values = st.one_of(st.integers(-1000, 1000), st.floats(allow_nan=True, allow_infinity=True),
                   st.text(max_size=5), st.booleans(), st.none(),
                   st.sampled_from(["5", "1e2", "-3", " 12 "]))


@settings(max_examples=300, deadline=None)
@given(obj=st.dictionaries(st.sampled_from(["max_depth", "n_estimators", "other"]), values),
       prefix=st.text(max_size=20), suffix=st.text(max_size=20))
def test_parse_never_returns_invalid_config(obj, prefix, suffix):
    text = prefix + json.dumps(obj) + suffix
    try:
        r = parse_response(text, "config", TREES)
    except (ValueError, BackendError):
        return
    assert TREES.validate(r.payload) == r.payload


# -- backends --------------------------------------------------------------------------

def test_scripted_backend_replays_verbatim(branin):
    s = session(["hello there"])
    p = build_warmstart_prompt(branin)
    assert query_backend(s, p, seed=1) == "hello there"
    with pytest.raises(BackendError):
        query_backend(s, p, seed=2)


def test_scripted_backend_per_schema_queues(branin):
    backend = ScriptedBackend({"score": ["0.1"], "config": ["{}"]})
    hist = history_of(branin, 2)
    assert backend.complete(build_surrogate_prompt(branin, hist, hist[0].config), 0, 0.0) == "0.1"
    assert backend.complete(build_warmstart_prompt(branin), 0, 0.0) == "{}"
    assert backend.fresh().complete(build_warmstart_prompt(branin), 0, 0.0) == "{}"


def test_http_timeout_against_stalled_server(branin, stalled_server):
    backend = HttpBackend(BackendConfig(url=stalled_server, timeout=0.001))
    with pytest.raises(BackendError):
        backend.complete(build_warmstart_prompt(branin), 0, 0.0)


def test_http_seed_in_body_ollama(branin, mock_server):
    backend = HttpBackend(BackendConfig(url=mock_server.url, model="m", timeout=5))
    assert backend.complete(build_warmstart_prompt(branin), 1234, 0.3) == "0.5"
    path, body = mock_server.requests[0]
    assert path == "/api/generate"
    assert body["options"]["seed"] == 1234 and body["options"]["temperature"] == 0.3
    assert body["stream"] is False and body["model"] == "m"


def test_http_openai_format_and_server_error(branin, mock_server):
    mock_server.responder = lambda path, body: (
        200, {"choices": [{"message": {"content": "0.7"}}]})
    backend = HttpBackend(BackendConfig(url=mock_server.url, api="openai", timeout=5))
    assert backend.complete(build_warmstart_prompt(branin), 7, 0.0) == "0.7"
    path, body = mock_server.requests[0]
    assert path == "/v1/chat/completions" and body["seed"] == 7 and body["stream"] is False
    mock_server.responder = lambda path, body: (503, {"error": "busy"})
    with pytest.raises(ServerError) as err:
        backend.complete(build_warmstart_prompt(branin), 7, 0.0)
    assert err.value.status == 503


def test_backend_url_from_environment(monkeypatch):
    monkeypatch.setenv("LLAMBO_BACKEND_URL", "http://example.invalid:1")
    assert BackendConfig().resolved_url() == "http://example.invalid:1"
    assert BackendConfig(url="http://x:2").resolved_url() == "http://x:2"


@pytest.mark.parametrize("kwargs", [dict(temperature=-1), dict(max_retries=-1), dict(timeout=0)])
def test_backend_config_validation(kwargs):
    with pytest.raises(ValueError):
        BackendConfig(**kwargs)


# -- robust_ask ------------------------------------------------------------------------

def test_robust_ask_first_reply_valid(branin):
    s = session([branin_reply(1.0, 2.0)])
    r = robust_ask(s, build_warmstart_prompt(branin), branin.space, lambda: None, 0)
    assert r.payload == {"x1": 1.0, "x2": 2.0} and r.retries == 0 and not r.fallback


def test_robust_ask_retries_then_succeeds(branin):
    s = session(["no idea", '{"x1": 1.0}', branin_reply(1.0, 2.0)])
    r = robust_ask(s, build_warmstart_prompt(branin), branin.space, lambda: None, 0)
    assert r.retries == 2 and not r.fallback and len(r.errors) == 2
    # the corrective instruction carries the previous parse error
    assert "missing hyperparameter 'x2'" in s.transcript[2]["user"]
    assert [e["seed"] for e in s.transcript] == [0, 1, 2]


def test_robust_ask_exhaustion_falls_back(branin):
    s = session(["bad"] * 10, max_retries=2)
    r = robust_ask(s, build_warmstart_prompt(branin), branin.space,
                   lambda: {"x1": 0.0, "x2": 0.0}, 0)
    assert r.fallback and r.attempts == 3 and r.payload == {"x1": 0.0, "x2": 0.0}
    assert len(s.backend.requests) == 3


def test_robust_ask_maps_anonymous_names_back(branin):
    s = session(['{"X1": 1.5, "X2": 3.0}'])
    r = robust_ask(s, build_warmstart_prompt(branin, "none"), branin.space, lambda: None, 0)
    assert r.payload == {"x1": 1.5, "x2": 3.0}


@settings(max_examples=30, deadline=None)
@given(retries=st.integers(0, 4), n_bad=st.integers(0, 8))
def test_robust_ask_call_bound(retries, n_bad):
    task = get_task("synthetic/Branin")
    s = session(["bad"] * n_bad + [branin_reply(0.0, 0.0)], max_retries=retries)
    robust_ask(s, build_warmstart_prompt(task), task.space, lambda: {"x1": 1.0, "x2": 1.0}, 0)
    assert len(s.backend.requests) <= retries + 1


# -- warmstart -----------------------------------------------------------------------------

def test_warmstart_distinct_replies(branin):
    replies = [branin_reply(float(i), float(i)) for i in range(5)]
    out = llm_warmstart(session(replies), branin, "full", 5, seed=0)
    configs = [r.payload for r in out]
    assert len({json.dumps(c, sort_keys=True) for c in configs}) == 5
    assert not any(r.fallback or r.duplicate for r in out)


def test_warmstart_lists_already_suggested(branin):
    s = session([branin_reply(1.0, 1.0), branin_reply(2.0, 2.0)])
    llm_warmstart(s, branin, "full", 2, seed=0)
    assert "Already suggested" not in s.transcript[0]["user"]
    assert "{x1: 1, x2: 1}" in s.transcript[1]["user"]


def test_warmstart_duplicates_recorded(branin):
    out = llm_warmstart(session([branin_reply(1.0, 1.0)], cycle=True), branin, "full", 3, 0)
    assert [r.duplicate for r in out] == [False, True, True]


def test_warmstart_all_malformed_falls_back(branin):
    out = llm_warmstart(session(["nope"], cycle=True), branin, "full", 5, 0)
    assert len(out) == 5 and all(r.fallback for r in out)
    for r in out:
        assert branin.space.validate(r.payload) == r.payload


# -- surrogate ---------------------------------------------------------------------------

def test_mc_surrogate_two_samples(branin):
    hist = history_of(branin)
    p = llm_surrogate_predict(session(["0.8", "0.9"]), branin, hist, hist[0].config,
                              mc_samples=2, seed=0)
    assert p.mean == pytest.approx(0.85, abs=1e-12)
    assert p.std == pytest.approx(math.sqrt(0.005), abs=1e-12)
    assert p.std == pytest.approx(0.0707, abs=1e-4)


def test_single_shot_surrogate(branin):
    hist = history_of(branin)
    s = session(["0.8"])
    p = llm_surrogate_predict(s, branin, hist, hist[0].config, mc_samples=1, seed=0)
    assert p.mean == 0.8 and p.std == SINGLE_SHOT_STD
    assert s.backend.requests[0]["temperature"] == 0.0


def test_mc_samples_use_distinct_seeds_and_positive_temperature(branin):
    hist = history_of(branin)
    s = session(["0.1", "0.2", "0.3"])
    llm_surrogate_predict(s, branin, hist, hist[0].config, mc_samples=3, seed=5)
    seeds = [r["seed"] for r in s.backend.requests]
    assert len(set(seeds)) == 3
    assert all(r["temperature"] > 0 for r in s.backend.requests)


def test_malformed_sample_replaced_by_history_mean(branin):
    hist = history_of(branin)
    s = session(["0.8", "garbage", "0.9"], max_retries=0)
    samples, n_fb = llm_surrogate_samples(s, branin, hist, hist[0].config, "full", 3, 0)
    mean = float(np.mean([o.score for o in hist]))
    assert samples == [0.8, mean, 0.9] and n_fb == 1
    assert any("replaced by history mean" in e.get("note", "") for e in s.transcript)


# -- candidate proposal --------------------------------------------------------------------

def reply_list(points):
    return json.dumps([{"x1": a, "x2": b} for a, b in points])


def test_propose_full_batch(branin):
    pts = [(float(i), float(i)) for i in range(10)]
    batch = llm_propose(session([reply_list(pts)]), branin, history_of(branin), "full", 10, 0)
    assert len(batch) == 10 and batch.provenance == "llm" and batch.sources == ["llm"] * 10


def test_propose_tops_up_invalid_entries(branin):
    pts = [(float(i), float(i)) for i in range(7)] + [(99.0, 0.0)] * 3
    batch = llm_propose(session([reply_list(pts)]), branin, history_of(branin), "full", 10, 0)
    assert batch.sources.count("llm") == 7 and batch.sources.count("random") == 3
    for c in batch.configs:
        assert branin.space.validate(c) == c


def test_propose_keeps_duplicates_of_history(branin):
    hist = history_of(branin)
    c = hist[0].config
    reply = json.dumps([c] * 3)
    batch = llm_propose(session([reply]), branin, hist, "full", 3, 0)
    assert batch.configs == [c] * 3


def test_pipeline_deterministic_given_replies_and_seed(branin):
    def go():
        s = session(["junk", reply_list([(1.0, 2.0)] * 4), "0.3", "0.4"], cycle=True)
        b = llm_propose(s, branin, history_of(branin), "full", 4, 3)
        p = llm_surrogate_predict(s, branin, history_of(branin), b.configs[0], mc_samples=2,
                                  seed=3)
        return b.configs, p, s.transcript
    assert go() == go()
