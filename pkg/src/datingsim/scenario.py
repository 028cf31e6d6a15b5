"""Scenario parameters and their TOML representation."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

from .core import ConfigurationError
from .interventions import FilterMode, InterventionSet

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class Scenario:
    """One experimental condition. Defaults are the baseline society."""

    # interventions
    filter_mode: FilterMode = FilterMode.STRONG
    attribute_intervention: bool = False
    norm_intervention: bool = False
    minimal_group_intervention: bool = False
    # society, varied in the experiment
    search_tolerance: int = 25
    race_norm: float = 0.2
    eta_norm_to_pref: float = 0.01
    ethnocentrism: float = 0.25
    beta: float = 0.4
    gamma: float = 0.2
    # fixed block
    theta_interaction: float = 0.02
    eta_pref_to_norm: float = 0.05
    norm_blend_lambda: float = 0.2
    failure_tolerance: int = 20
    stereotype_same_race: int = 300
    stereotype_other_race: int = 100
    searchable_share: float = 0.25
    profile_probability: float = 0.5
    learn_probability: float = 0.5
    online_rounds: int = 7
    offline_rounds: int = 30
    meet_probability: float = 1.0 / 7.0
    message_probability: float = 0.5
    max_actions: int = 30
    iterations: int = 2000
    initial_population: int = 300
    inflow: int = 4
    contingency_samples: int = 1 << 18
    repair_covariance: bool = True

    def __post_init__(self) -> None:
        if not isinstance(self.filter_mode, FilterMode):
            object.__setattr__(self, "filter_mode", FilterMode(self.filter_mode))
        validate(self)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["filter_mode"] = self.filter_mode.value
        return out

    @property
    def scenario_id(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    @property
    def interventions(self) -> InterventionSet:
        return InterventionSet(
            filter_mode=self.filter_mode,
            attributes_total=9 if self.attribute_intervention else 5,
            norm_clamp=self.norm_intervention,
            minimal_group=self.minimal_group_intervention,
        )

    def replace(self, **changes: Any) -> "Scenario":
        return dataclasses.replace(self, **changes)


SCENARIO_FIELDS = {f.name: f for f in fields(Scenario)}
INTERVENTION_KEYS = (
    "filter_mode",
    "norm_intervention",
    "attribute_intervention",
    "minimal_group_intervention",
)
SOCIETY_KEYS = (
    "search_tolerance",
    "race_norm",
    "eta_norm_to_pref",
    "ethnocentrism",
    "beta",
    "gamma",
)
REQUIRED_KEYS = INTERVENTION_KEYS + SOCIETY_KEYS

DESK_SCALE = {"initial_population": 150, "inflow": 2, "iterations": 1000}

_UNIT_INTERVAL = (
    "race_norm",
    "eta_norm_to_pref",
    "ethnocentrism",
    "theta_interaction",
    "eta_pref_to_norm",
    "norm_blend_lambda",
    "searchable_share",
    "profile_probability",
    "learn_probability",
    "meet_probability",
    "message_probability",
)
_POSITIVE = (
    "search_tolerance",
    "failure_tolerance",
    "online_rounds",
    "offline_rounds",
    "max_actions",
    "initial_population",
    "contingency_samples",
)
_NON_NEGATIVE = ("stereotype_same_race", "stereotype_other_race", "iterations", "inflow")


def validate(s: Scenario) -> None:
    problems = []
    for name in _UNIT_INTERVAL:
        value = getattr(s, name)
        if not 0.0 <= value <= 1.0:
            problems.append(f"{name}={value} outside [0, 1]")
    for name in _POSITIVE:
        if getattr(s, name) < 1:
            problems.append(f"{name} must be >= 1")
    for name in _NON_NEGATIVE:
        if getattr(s, name) < 0:
            problems.append(f"{name} must be >= 0")
    for name in ("beta", "gamma"):
        if not -1.0 <= getattr(s, name) <= 1.0:
            problems.append(f"{name} outside [-1, 1]")
    if problems:
        raise ConfigurationError("; ".join(problems))


def desk_scale(s: Scenario) -> Scenario:
    return s.replace(**DESK_SCALE)


def coerce_value(key: str, value: Any) -> Any:
    """Type-check one scalar config value against the Scenario field."""
    if key not in SCENARIO_FIELDS:
        raise ConfigurationError(f"unknown parameter {key!r}")
    kind = SCENARIO_FIELDS[key].type
    if key == "filter_mode":
        try:
            return FilterMode(value)
        except ValueError:
            options = ", ".join(m.value for m in FilterMode)
            raise ConfigurationError(
                f"filter_mode: {value!r} is not one of {options}"
            ) from None
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigurationError(f"{key}: expected true/false, got {value!r}")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{key}: expected an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{key}: expected a number, got {value!r}")
        return float(value)
    raise ConfigurationError(f"{key}: unsupported field type {kind}")


def read_toml(path: str | Path) -> dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None


def scenario_from_mapping(data: Mapping[str, Any], require: bool = True) -> Scenario:
    if require:
        missing = [k for k in REQUIRED_KEYS if k not in data]
        if missing:
            raise ConfigurationError(f"missing required key(s): {', '.join(missing)}")
    kwargs = {}
    for key, value in data.items():
        if isinstance(value, (list, dict)):
            raise ConfigurationError(f"{key}: a run config takes a single value")
        kwargs[key] = coerce_value(key, value)
    return Scenario(**kwargs)


def load_scenario(path: str | Path) -> Scenario:
    return scenario_from_mapping(read_toml(path))
