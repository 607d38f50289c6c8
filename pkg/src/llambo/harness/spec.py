"""Experiment specification: one optimizer/warmstart/task protocol."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional, Union

from ..llm.backend import BackendConfig

OPTIMIZERS = ("gp_ei", "rf_ei", "tpe_ind", "tpe_mv", "random", "llambo")
WARMSTARTS = ("random", "sobol", "lhc", "llm_none", "llm_partial", "llm_full")


@dataclass(frozen=True)
class ExperimentSpec:
    """One optimizer/warmstart/task combination under the benchmark protocol."""

    task: str
    optimizer: str = "random"
    warmstart: str = "random"
    n_init: int = 5
    n_trials: int = 25
    n_runs: int = 5
    base_seed: int = 0
    backend: Optional[BackendConfig] = None
    scripted_replies: Optional[str] = None
    mc_samples: int = 10
    k_candidates: int = 10
    # prompt context level used by the llambo optimizer's proposal/surrogate queries
    context: str = "full"
    gamma: float = 0.25
    n_trees: int = 50

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}; expected one of {OPTIMIZERS}")
        if self.warmstart not in WARMSTARTS:
            raise ValueError(f"unknown warmstart {self.warmstart!r}; expected one of {WARMSTARTS}")
        if self.n_init < 1 or self.n_runs < 1 or self.n_trials < 0:
            raise ValueError("n_init and n_runs must be >= 1 and n_trials >= 0")
        if self.mc_samples < 1 or self.k_candidates < 1:
            raise ValueError("mc_samples and k_candidates must be >= 1")
        if self.context not in ("full", "partial", "none"):
            raise ValueError(f"unknown context level {self.context!r}")
        if self.needs_llm and self.backend is None and self.scripted_replies is None:
            raise ValueError(f"{self.optimizer}/{self.warmstart} needs a backend "
                             "(server URL or scripted replies)")

    @property
    def needs_llm(self) -> bool:
        return self.optimizer == "llambo" or self.warmstart.startswith("llm_")

    @property
    def method(self) -> str:
        return f"{self.optimizer}+{self.warmstart}"

    def backend_config(self) -> BackendConfig:
        return self.backend or BackendConfig()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["backend"] = self.backend.to_dict() if self.backend else None
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown experiment fields: {sorted(unknown)}")
        doc = dict(doc)
        if doc.get("backend") is not None and not isinstance(doc["backend"], BackendConfig):
            doc["backend"] = BackendConfig(**doc["backend"])
        return cls(**doc)

    def with_(self, **changes) -> "ExperimentSpec":
        return replace(self, **changes)


def load_spec_file(path: Union[str, Path]) -> dict:
    """Raw experiment fields from a JSON or TOML file."""
    path = Path(path)
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path) as fh:
        return json.load(fh)
