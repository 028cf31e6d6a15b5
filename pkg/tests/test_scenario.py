from __future__ import annotations

from pathlib import Path

import pytest

from datingsim.core import ConfigurationError
from datingsim.interventions import FilterMode
from datingsim.scenario import (
    DESK_SCALE,
    REQUIRED_KEYS,
    Scenario,
    coerce_value,
    desk_scale,
    load_scenario,
    scenario_from_mapping,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def required() -> dict:
    return {
        "filter_mode": "strong",
        "norm_intervention": False,
        "attribute_intervention": False,
        "minimal_group_intervention": False,
        "search_tolerance": 25,
        "race_norm": 0.2,
        "eta_norm_to_pref": 0.01,
        "ethnocentrism": 0.25,
        "beta": 0.4,
        "gamma": 0.2,
    }


def test_defaults():
    s = Scenario()
    assert (s.search_tolerance, s.race_norm, s.eta_norm_to_pref) == (25, 0.2, 0.01)
    assert (s.ethnocentrism, s.beta, s.gamma) == (0.25, 0.4, 0.2)
    assert (s.iterations, s.initial_population, s.inflow) == (2000, 300, 4)
    assert s.filter_mode is FilterMode.STRONG


def test_default_config_file_matches_defaults():
    assert load_scenario(CONFIGS / "default.toml") == Scenario()


def test_minimal_mapping():
    assert scenario_from_mapping(required()) == Scenario()


@pytest.mark.parametrize("key", REQUIRED_KEYS)
def test_missing_key_named(key):
    data = required()
    del data[key]
    with pytest.raises(ConfigurationError, match=key):
        scenario_from_mapping(data)


def test_unknown_key():
    with pytest.raises(ConfigurationError, match="colour"):
        scenario_from_mapping({**required(), "colour": 1})


@pytest.mark.parametrize(
    "key,value",
    [("search_tolerance", 2.5), ("search_tolerance", True), ("norm_intervention", 1),
     ("beta", "0.4"), ("filter_mode", "medium")],
)
def test_type_errors(key, value):
    with pytest.raises(ConfigurationError, match=key):
        coerce_value(key, value)


def test_int_widens_to_float():
    assert coerce_value("beta", 0) == 0.0 and isinstance(coerce_value("beta", 0), float)


def test_list_rejected_for_run():
    with pytest.raises(ConfigurationError, match="single value"):
        scenario_from_mapping({**required(), "beta": [0.4, 0.6]})


@pytest.mark.parametrize(
    "changes", [{"race_norm": 1.5}, {"beta": -1.2}, {"iterations": -1}, {"search_tolerance": 0}]
)
def test_range_validation(changes):
    with pytest.raises(ConfigurationError):
        Scenario(**changes)


def test_scenario_id_is_content_hash():
    a, b = Scenario(), Scenario()
    assert a.scenario_id == b.scenario_id and len(a.scenario_id) == 12
    assert Scenario(beta=0.6).scenario_id != a.scenario_id
    assert Scenario(filter_mode="weak") == Scenario(filter_mode=FilterMode.WEAK)


def test_desk_scale():
    s = desk_scale(Scenario())
    assert {k: getattr(s, k) for k in DESK_SCALE} == DESK_SCALE
    assert s.scenario_id != Scenario().scenario_id


def test_bad_toml(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("beta = = 1\n")
    with pytest.raises(ConfigurationError, match="bad.toml"):
        load_scenario(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError, match="cannot read"):
        load_scenario(tmp_path / "nope.toml")


def test_interventions_view():
    iset = Scenario(attribute_intervention=True, norm_intervention=True).interventions
    assert iset.attributes_total == 9 and iset.norm_clamp and not iset.minimal_group
