"""Experiment configuration and result records.

A config is a complete fingerprint of a run: the canonical JSON (sorted keys,
no output path) is hashed, and re-running an identical config reproduces the
numeric payload bit for bit.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

from . import __version__
from .errors import ConfigError
from .matrices import EntryDistribution
from .rng import RNG_NAME

EXPERIMENTS = ("tail", "smallball", "moments", "identity", "density", "hs_comparison",
               "perturbation_scan")

CSV_COLUMNS = ("experiment", "n", "k", "m", "t", "p_hat", "ci_low", "ci_high", "trials",
               "slope", "slope_stderr", "empirical_constant", "seed", "rng_name", "version",
               "s", "estimate", "std_error", "bound_value", "ks_statistic", "ks_pvalue",
               "tv_distance")
INT_COLUMNS = {"n", "k", "m", "trials", "seed"}
STR_COLUMNS = {"experiment", "rng_name", "version"}

_U64 = (1 << 64) - 1


@dataclass
class ExperimentConfig:
    experiment: str
    n: int | None = None
    k: int | None = None
    m: int | None = None
    t_grid: list[float] | None = None
    s_grid: list[float] | None = None
    trials: int | None = None
    inner_trials: int | None = None
    outer_trials: int | None = None
    entry_dist: str = EntryDistribution.GAUSSIAN.value
    seed: int = 0
    output_path: str | None = None
    rng_name: str = RNG_NAME
    statistic: str | None = None
    taus: list[float] | None = None
    i: int | None = None
    j: int | None = None
    symmetrize: bool = False
    threshold_c: float | None = None

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        if "experiment" not in data:
            raise ConfigError("missing required field: experiment")
        return cls(**data)

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment: unknown tag {self.experiment!r}")
        for name in ("n", "k", "m", "trials", "inner_trials", "outer_trials", "i", "j"):
            value = getattr(self, name)
            if value is not None and (isinstance(value, bool) or not isinstance(value, int)):
                raise ConfigError(f"{name}: expected an integer, got {value!r}")
        for name in ("n", "k", "m", "trials", "inner_trials", "outer_trials"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"{name}: must be positive")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed <= _U64:
            raise ConfigError("seed: must be an unsigned 64-bit integer")
        for name in ("t_grid", "s_grid", "taus"):
            value = getattr(self, name)
            if value is None:
                continue
            if not isinstance(value, list) or not value:
                raise ConfigError(f"{name}: expected a non-empty list of numbers")
            for v in value:
                if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                    raise ConfigError(f"{name}: non-numeric entry {v!r}")
            setattr(self, name, [float(v) for v in value])
        try:
            EntryDistribution(self.entry_dist)
        except ValueError:
            raise ConfigError(f"entry_dist: unknown tag {self.entry_dist!r}") from None
        if self.rng_name != RNG_NAME:
            raise ConfigError(f"rng_name: this build provides {RNG_NAME!r}, not {self.rng_name!r}")
        if not isinstance(self.symmetrize, bool):
            raise ConfigError("symmetrize: expected a boolean")
        if self.output_path is not None and not isinstance(self.output_path, str):
            raise ConfigError("output_path: expected a string")

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        data = self.to_dict()
        data.pop("output_path")
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


@dataclass
class ResultRecord:
    experiment: str
    rows: list[dict[str, Any]]
    fingerprint: str | None = None
    config: dict[str, Any] | None = None
    summary: dict[str, Any] = field(default_factory=dict)
    version: str = __version__
    rng_name: str = RNG_NAME
    wall_time_seconds: float | None = None

    def to_json_dict(self) -> dict[str, Any]:
        """Persisted form; wall time is left out so reruns are byte-identical."""
        return {
            "experiment": self.experiment,
            "fingerprint": self.fingerprint,
            "config": self.config,
            "summary": self.summary,
            "version": self.version,
            "rng_name": self.rng_name,
            "rows": [{c: row.get(c) for c in CSV_COLUMNS} for row in self.rows],
        }
