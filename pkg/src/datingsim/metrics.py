"""Per-run event log and the outcome measures derived from it."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import IO, Any


class ExitReason(str, enum.Enum):
    LONG_TERM = "long_term"
    SEARCH_TOLERANCE = "search_tolerance"
    FAILURE_TOLERANCE = "failure_tolerance"


@dataclass
class RunLog:
    """Everything a run emits that the outcome measures are computed from."""

    events: list[dict[str, Any]] = field(default_factory=list)
    offline_agent_iterations: int = 0
    platform_agent_iterations: int = 0
    iterations: int = 0

    def exit(self, iteration: int, agent: int, race: int, reason: ExitReason) -> None:
        self.events.append(
            {"iteration": iteration, "kind": "exit", "agents": [agent],
             "races": [race], "reason": reason.value}
        )

    def long_term(self, iteration: int, a: int, b: int, race_a: int, race_b: int) -> None:
        self.events.append(
            {"iteration": iteration, "kind": "long_term", "agents": [a, b],
             "races": [race_a, race_b], "reason": ExitReason.LONG_TERM.value}
        )

    def write_jsonl(self, fh: IO[str]) -> None:
        for event in self.events:
            fh.write(json.dumps(event, sort_keys=True) + "\n")


@dataclass(frozen=True)
class RunMetrics:
    scenario_id: str
    seed: int
    heterogamy_pct: float | None
    longterm_total: int
    longterm_interracial: int
    offline_time_pct: float | None
    exits_search_pct: float | None
    exits_failure_pct: float | None


def _pct(part: int, whole: int) -> float | None:
    return 100.0 * part / whole if whole else None


def compute_metrics(log: RunLog, scenario_id: str = "", seed: int = 0) -> RunMetrics:
    """Outcome measures of one run. Undefined ratios are reported as None."""
    longterm = [e for e in log.events if e["kind"] == "long_term"]
    interracial = sum(1 for e in longterm if e["races"][0] != e["races"][1])
    exits = [e for e in log.events if e["kind"] == "exit"]
    by_search = sum(1 for e in exits if e["reason"] == ExitReason.SEARCH_TOLERANCE.value)
    by_failure = sum(1 for e in exits if e["reason"] == ExitReason.FAILURE_TOLERANCE.value)
    return RunMetrics(
        scenario_id=scenario_id,
        seed=seed,
        heterogamy_pct=_pct(interracial, len(longterm)),
        longterm_total=len(longterm),
        longterm_interracial=interracial,
        offline_time_pct=_pct(log.offline_agent_iterations, log.platform_agent_iterations),
        exits_search_pct=_pct(by_search, len(exits)),
        exits_failure_pct=_pct(by_failure, len(exits)),
    )
