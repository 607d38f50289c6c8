"""Prompting pipeline, model-server clients and reply parsing."""

from .backend import (BackendConfig, BackendError, HttpBackend, ScriptedBackend, ServerError,
                      make_backend)
from .parse import (ArityError, BoundsError, FormatError, MissingKeyError, ParsedResponse,
                    ParseError, SchemaError, parse_response)
from .pipeline import (LlmSession, llm_propose, llm_surrogate_predict, llm_surrogate_samples,
                       llm_warmstart, query_backend, robust_ask)
from .prompts import (LEVELS, Observation, PromptBundle, build_candidate_prompt,
                      build_surrogate_prompt, build_warmstart_prompt, serialize_history)

__all__ = [
    "BackendConfig", "BackendError", "HttpBackend", "ScriptedBackend", "ServerError",
    "make_backend", "ArityError", "BoundsError", "FormatError", "MissingKeyError",
    "ParsedResponse", "ParseError", "SchemaError", "parse_response", "LlmSession",
    "llm_propose", "llm_surrogate_predict", "llm_surrogate_samples", "llm_warmstart",
    "query_backend", "robust_ask", "LEVELS", "Observation", "PromptBundle",
    "build_candidate_prompt", "build_surrogate_prompt", "build_warmstart_prompt",
    "serialize_history",
]
