"""Scenario grids, parallel sweeps with checkpoint/resume, and the results table."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import IO, Any, Iterable, Mapping, Sequence

import numpy as np

from .core import ConfigurationError
from .interventions import FilterMode
from .metrics import RunMetrics
from .platform import run
from .scenario import (
    INTERVENTION_KEYS,
    SCENARIO_FIELDS,
    Scenario,
    coerce_value,
    desk_scale,
    read_toml,
)

logger = logging.getLogger(__name__)

RESULT_COLUMNS = (
    "scenario_id",
    "seed",
    "filter_mode",
    "norm_intervention",
    "attribute_intervention",
    "minimal_group",
    "search_tolerance",
    "race_norm",
    "eta_norm_to_pref",
    "ethnocentrism",
    "beta",
    "gamma",
    "heterogamy_pct",
    "longterm_total",
    "longterm_interracial",
    "offline_time_pct",
    "exits_search_pct",
    "exits_failure_pct",
    "error",
)
METRIC_COLUMNS = RESULT_COLUMNS[12:18]

# Intervention axes crossed when a sweep config leaves them out.
DEFAULT_GRID: dict[str, list[Any]] = {
    "filter_mode": list(FilterMode),
    "norm_intervention": [False, True],
    "attribute_intervention": [False, True],
    "minimal_group_intervention": [False],
}


@dataclass(frozen=True)
class SweepConfig:
    """Parsed sweep file: fixed values, crossed intervention axes, one-at-a-time axes."""

    base: dict[str, Any] = field(default_factory=dict)
    grid: dict[str, list[Any]] = field(default_factory=lambda: dict(DEFAULT_GRID))
    vary: dict[str, list[Any]] = field(default_factory=dict)
    seeds: tuple[int, ...] = tuple(range(20))


def _coerce_seeds(value: Any) -> tuple[int, ...]:
    if isinstance(value, bool):
        raise ConfigurationError("seeds: expected a count or a list of integers")
    if isinstance(value, int):
        if value < 1:
            raise ConfigurationError("seeds: count must be >= 1")
        return tuple(range(value))
    if isinstance(value, list) and value and all(
        isinstance(v, int) and not isinstance(v, bool) for v in value
    ):
        if len(set(value)) != len(value):
            raise ConfigurationError("seeds: duplicate seed in list")
        return tuple(value)
    raise ConfigurationError("seeds: expected a count or a non-empty list of integers")


def sweep_from_mapping(data: Mapping[str, Any]) -> SweepConfig:
    base: dict[str, Any] = {}
    grid = dict(DEFAULT_GRID)
    vary: dict[str, list[Any]] = {}
    seeds = SweepConfig().seeds
    for key, value in data.items():
        if key == "seeds":
            seeds = _coerce_seeds(value)
            continue
        if key not in SCENARIO_FIELDS:
            raise ConfigurationError(f"unknown parameter {key!r}")
        values = value if isinstance(value, list) else None
        if values is not None and not values:
            raise ConfigurationError(f"{key}: empty value list")
        if key in INTERVENTION_KEYS:
            grid[key] = [coerce_value(key, v) for v in (values or [value])]
        elif values is not None:
            vary[key] = [coerce_value(key, v) for v in values]
        else:
            base[key] = coerce_value(key, value)
    return SweepConfig(base=base, grid=grid, vary=vary, seeds=seeds)


def load_sweep(path: str | Path) -> SweepConfig:
    return sweep_from_mapping(read_toml(path))


def enumerate_scenarios(config: SweepConfig, desk: bool = False) -> list[Scenario]:
    """Society settings varied one at a time, crossed with the intervention grid.

    The first society setting is the base itself; each listed value of a
    varied key then yields one setting with every other key at its base
    value. Duplicate scenarios are kept once, in first-seen order.
    """
    settings: list[dict[str, Any]] = [dict(config.base)]
    for key, values in config.vary.items():
        for v in values:
            settings.append({**config.base, key: v})
    axes = [k for k in INTERVENTION_KEYS if k in config.grid]
    combos = list(itertools.product(*(config.grid[k] for k in axes)))
    seen: dict[str, Scenario] = {}
    for society in settings:
        for combo in combos:
            s = Scenario(**{**society, **dict(zip(axes, combo))})
            if desk:
                s = desk_scale(s)
            seen.setdefault(s.scenario_id, s)
    return list(seen.values())


def result_row(scenario: Scenario, seed: int, metrics: RunMetrics | None, error: str = "") -> dict[str, Any]:
    row: dict[str, Any] = {
        "scenario_id": scenario.scenario_id,
        "seed": seed,
        "filter_mode": scenario.filter_mode.value,
        "norm_intervention": scenario.norm_intervention,
        "attribute_intervention": scenario.attribute_intervention,
        "minimal_group": scenario.minimal_group_intervention,
    }
    for key in ("search_tolerance", "race_norm", "eta_norm_to_pref", "ethnocentrism", "beta", "gamma"):
        row[key] = getattr(scenario, key)
    for key in METRIC_COLUMNS:
        row[key] = getattr(metrics, key) if metrics is not None else None
    row["error"] = error
    return row


def _run_one(scenario_data: dict[str, Any], seed: int) -> tuple[str, int, dict[str, Any] | None, str, float]:
    scenario = Scenario(**scenario_data)
    start = time.process_time()
    try:
        metrics = run(scenario, seed)
    except Exception as exc:  # recorded as an error row; the sweep goes on
        return scenario.scenario_id, seed, None, f"{type(exc).__name__}: {exc}", time.process_time() - start
    return scenario.scenario_id, seed, asdict(metrics), "", time.process_time() - start


def read_checkpoint(path: Path) -> dict[tuple[str, int], dict[str, Any]]:
    """Completed records from a checkpoint; a torn final line is ignored."""
    done: dict[tuple[str, int], dict[str, Any]] = {}
    if not path.exists():
        return done
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                logger.warning("ignoring incomplete checkpoint line in %s", path)
                continue
            done[(rec["scenario_id"], rec["seed"])] = rec
    return done


def run_sweep(
    scenarios: Sequence[Scenario],
    seeds: Iterable[int],
    parallelism: int = 1,
    checkpoint: str | Path | None = None,
) -> list[dict[str, Any]]:
    """Run every (scenario, seed) pair and return rows sorted by (scenario_id, seed).

    With a checkpoint path, finished runs are appended to it as JSON lines
    (with their CPU time, which never reaches the results table) and pairs
    already present are not run again.
    """
    if parallelism < 1:
        raise ConfigurationError("parallelism must be >= 1")
    by_id = {s.scenario_id: s for s in scenarios}
    seeds = list(seeds)
    ckpt = Path(checkpoint) if checkpoint is not None else None
    done = read_checkpoint(ckpt) if ckpt is not None else {}
    todo = [(sid, seed) for sid in by_id for seed in seeds if (sid, seed) not in done]
    if done:
        logger.info("resuming: %d runs done, %d to go", len(by_id) * len(seeds) - len(todo), len(todo))

    out_fh: IO[str] | None = None
    if ckpt is not None:
        torn = ckpt.exists() and ckpt.stat().st_size > 0 and not ckpt.read_bytes().endswith(b"\n")
        out_fh = open(ckpt, "a", encoding="utf-8")
        if torn:
            out_fh.write("\n")
    total = len(todo)
    finished = 0

    def record(sid: str, seed: int, metrics: dict[str, Any] | None, error: str, elapsed: float) -> None:
        nonlocal finished
        finished += 1
        rec = {"scenario_id": sid, "seed": seed, "metrics": metrics, "error": error,
               "cpu_s": round(elapsed, 3)}
        done[(sid, seed)] = rec
        if out_fh is not None:
            out_fh.write(json.dumps(rec, sort_keys=True) + "\n")
            out_fh.flush()
        if error:
            logger.warning("run %s seed %d failed: %s", sid, seed, error)
        logger.info("finished %d/%d", finished, total)

    try:
        if parallelism == 1 or total <= 1:
            for sid, seed in todo:
                record(*_run_one(by_id[sid].to_dict(), seed))
        else:
            ctx = multiprocessing.get_context("fork" if os.name == "posix" else "spawn")
            with ProcessPoolExecutor(max_workers=parallelism, mp_context=ctx) as pool:
                futures = [pool.submit(_run_one, by_id[sid].to_dict(), seed) for sid, seed in todo]
                for fut in as_completed(futures):
                    record(*fut.result())
    finally:
        if out_fh is not None:
            out_fh.close()

    rows = []
    for sid, seed in sorted((k for k in done if k[0] in by_id and k[1] in seeds)):
        rec = done[(sid, seed)]
        metrics = RunMetrics(**rec["metrics"]) if rec["metrics"] is not None else None
        rows.append(result_row(by_id[sid], seed, metrics, rec["error"]))
    return rows


def format_value(value: Any) -> str:
    """Canonical CSV text: shortest round-trip floats, lowercase booleans, blank for missing."""
    if isinstance(value, np.generic):
        value = value.item()
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results(rows: Iterable[Mapping[str, Any]], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for row in rows:
        writer.writerow([format_value(row[c]) for c in RESULT_COLUMNS])
