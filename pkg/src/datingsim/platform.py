"""The simulated dating site: agents, search, relationships and the iteration loop.

Hot per-agent state (preferences, stereotype tables, cell values) lives in
preallocated arrays indexed by agent id; :class:`Agent` objects hold views
into those rows plus the bookkeeping that does not vectorise.
"""

from __future__ import annotations

import enum
import hashlib
import logging
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from .core import AttributeSchema, Partial, cell_values, extension_cells
from .decision import sigmoid, yes_probability
from .dynamics import (
    InteractionQuality,
    blend_offline,
    blend_online,
    build_interaction_vector,
    update_on_platform_norm,
    update_stereotype,
)
from .genesis import (
    CovarianceSpec,
    NormInitParams,
    bits_to_codes,
    build_covariance,
    estimate_true_contingency,
    init_on_platform_norm,
    init_out_platform_norm,
    init_preferences,
    init_stereotype,
    latent_factor,
    sample_codes_bits,
)
from .interventions import BASE_SCHEMA, FilterMode, apply_to_dynamics, apply_to_schema
from .metrics import ExitReason, RunLog, RunMetrics, compute_metrics
from .scenario import Scenario

logger = logging.getLogger(__name__)


class Phase(enum.IntEnum):
    SEARCHING = 0
    ONLINE = 1
    OFFLINE = 2
    EXITED = 3


SEARCHING, ONLINE, OFFLINE, EXITED = Phase.SEARCHING, Phase.ONLINE, Phase.OFFLINE, Phase.EXITED


class Message(NamedTuple):
    sender: int
    sent_at: int


@dataclass(eq=False)
class Agent:
    id: int
    side: int
    code: int
    profile: Partial
    prefs: np.ndarray
    stereotype: np.ndarray
    search_tolerance: int
    failure_tolerance: int
    entered_at: int
    phase: Phase = SEARCHING
    partner: int = -1
    rounds: int = 0
    exit_reason: ExitReason | None = None
    inbox: deque = field(default_factory=deque)
    # partner id -> mask of that partner's attributes this agent knows
    knowledge: dict[int, int] = field(default_factory=dict)

    @property
    def race(self) -> int:
        return self.code & 1

    def known(self, other: "Agent") -> Partial:
        mask = self.knowledge.get(other.id, 0) | other.profile.mask
        return Partial(mask, other.code & mask)


def choose_filter_attribute(
    agent: Agent, mode: FilterMode, schema: AttributeSchema
) -> tuple[int, int] | None:
    """Most important searchable attribute and the value searched for."""
    if mode is FilterMode.OFF:
        return None
    idx = schema.searchable_indices
    if mode.non_race:
        idx = idx[idx != schema.protected_index]
    if idx.size == 0:
        return None
    k = int(idx[np.argmax(agent.prefs[idx])])
    desired = (agent.code >> k) & 1 if schema.matching[k] else 1
    return k, desired


def filter_ids(
    ids: np.ndarray,
    masks: np.ndarray,
    values: np.ndarray,
    target: tuple[int, int] | None,
    weak: bool,
) -> np.ndarray:
    """Keep the profiles that pass the filter on ``target = (index, value)``."""
    if target is None:
        return ids
    k, desired = target
    shown = (masks >> k) & 1 == 1
    hit = shown & (((values >> k) & 1) == desired)
    return ids[hit | ~shown] if weak else ids[hit]


def filter_candidates(
    agent: Agent,
    pool: Sequence[Agent],
    mode: FilterMode,
    schema: AttributeSchema,
    rng: np.random.Generator,
) -> list[int]:
    """Filtered pool ids in uniformly random order."""
    ids = np.array([p.id for p in pool], dtype=np.int64)
    masks = np.array([p.profile.mask for p in pool], dtype=np.int64)
    values = np.array([p.profile.values for p in pool], dtype=np.int64)
    target = choose_filter_attribute(agent, mode, schema)
    return rng.permutation(filter_ids(ids, masks, values, target, mode.weak)).tolist()


@lru_cache(maxsize=64)
def true_table(spec: CovarianceSpec, repair: bool, n_samples: int) -> np.ndarray:
    """Monte Carlo estimate of the true table, seeded by the world parameters only."""
    key = f"{spec.dimension}|{spec.beta!r}|{spec.gamma!r}|{sorted(spec.uncorrelated_indices)}"
    key += f"|{repair}|{n_samples}"
    entropy = int.from_bytes(hashlib.sha256(key.encode()).digest()[:16], "little")
    cov = build_covariance(spec, repair=repair)
    table = estimate_true_contingency(cov, n_samples, np.random.default_rng(entropy))
    table.setflags(write=False)
    return table


def profile_combos(schema: AttributeSchema) -> tuple[dict[tuple[int, int], int], np.ndarray]:
    """Every (mask, values) a profile can show, and their extension indicator rows."""
    searchable = [int(k) for k in schema.searchable_indices]
    combos: list[tuple[int, int]] = []
    for sub in range(1 << len(searchable)):
        mask = sum(1 << k for j, k in enumerate(searchable) if (sub >> j) & 1)
        bits = [k for k in searchable if (mask >> k) & 1]
        for v in range(1 << len(bits)):
            values = sum(1 << k for j, k in enumerate(bits) if (v >> j) & 1)
            combos.append((mask, values))
    index = {c: i for i, c in enumerate(combos)}
    rows = np.zeros((len(combos), schema.n_cells))
    for i, (mask, values) in enumerate(combos):
        rows[i, extension_cells(mask, values, schema.total_count)] = 1.0
    return index, rows


class Platform:
    """State machine for one (scenario, seed) run."""

    def __init__(self, scenario: Scenario, seed: int) -> None:
        s = self.scenario = scenario
        self.seed = seed
        self.schema, cov_spec = apply_to_schema(
            BASE_SCHEMA, scenario.interventions, scenario.beta, scenario.gamma
        )
        self.norm_clamp = apply_to_dynamics(scenario.interventions).norm_clamp
        cov = build_covariance(cov_spec, repair=s.repair_covariance)
        self.true_table = true_table(cov_spec, s.repair_covariance, s.contingency_samples)
        self._factor = latent_factor(cov)
        self.rng = np.random.default_rng(seed)

        m, cells = self.schema.total_count, self.schema.n_cells
        cap = s.initial_population + s.inflow * max(s.iterations - 1, 0)
        self.weights = np.zeros((cap, m))
        self.beliefs = np.zeros((cap, cells))
        self.cell_value = np.zeros((cap, cells))
        self.codes = np.zeros(cap, dtype=np.int64)
        self.phase = np.full(cap, EXITED, dtype=np.int8)
        self.side = np.zeros(cap, dtype=np.int8)
        self.prof_mask = np.zeros(cap, dtype=np.int64)
        self.prof_val = np.zeros(cap, dtype=np.int64)
        self.combo = np.zeros(cap, dtype=np.int64)
        self._combo_index, self._combo_rows = profile_combos(self.schema)
        self._combo_count = self._combo_rows.sum(axis=1)
        self.expected = np.zeros((cap, len(self._combo_index)))
        self._match = np.array(self.schema.matching)
        self._bit_weights = 1 << np.arange(m)
        self._scores: dict[tuple[int, int], np.ndarray] = {}
        mode = s.filter_mode
        self._weak = mode.weak
        self._filter_idx = None
        if mode is not FilterMode.OFF:
            idx = self.schema.searchable_indices
            if mode.non_race:
                idx = idx[idx != self.schema.protected_index]
            self._filter_idx = idx if idx.size else None

        self.n_off = init_out_platform_norm(
            NormInitParams(s.race_norm, s.searchable_share, s.norm_blend_lambda),
            self.schema,
            self.rng,
        )
        self.n_on: np.ndarray | None = None
        self.agents: list[Agent] = []
        self.present: list[int] = []
        self.log = RunLog()
        self.iteration = 0

    # -- agents -------------------------------------------------------------

    def _spawn(self, n: int) -> None:
        s, schema, rng = self.scenario, self.schema, self.rng
        if n <= 0:
            return
        m = schema.total_count
        codes = bits_to_codes(sample_codes_bits(self._factor, n, rng))
        shown = (rng.random((n, m)) < s.profile_probability) & np.array(schema.searchable)
        masks = bits_to_codes(shown.astype(np.int64))
        prefs = init_preferences(self.n_off, s.norm_blend_lambda, rng, size=n)
        for j in range(n):
            i = len(self.agents)
            code, mask = int(codes[j]), int(masks[j])
            self.weights[i] = prefs[j]
            self.beliefs[i] = init_stereotype(
                code, self.true_table, s.ethnocentrism, schema, rng,
                s.stereotype_same_race, s.stereotype_other_race,
            )
            profile = Partial(mask, code & mask)
            self.codes[i] = code
            self.phase[i] = SEARCHING
            self.side[i] = i % 2
            self.prof_mask[i] = mask
            self.prof_val[i] = profile.values
            self.combo[i] = self._combo_index[(mask, profile.values)]
            self.agents.append(
                Agent(
                    id=i, side=i % 2, code=code, profile=profile,
                    prefs=self.weights[i], stereotype=self.beliefs[i],
                    search_tolerance=s.search_tolerance,
                    failure_tolerance=s.failure_tolerance,
                    entered_at=self.iteration,
                )
            )
            self.present.append(i)

    def _set_phase(self, agent: Agent, phase: Phase) -> None:
        agent.phase = phase
        self.phase[agent.id] = phase

    def _exit(self, agent: Agent, reason: ExitReason) -> None:
        self._set_phase(agent, EXITED)
        agent.exit_reason = reason
        agent.partner = -1
        self.log.exit(self.iteration, agent.id, agent.race, reason)

    # -- beliefs ------------------------------------------------------------

    def _refresh_values(self, ids: np.ndarray) -> None:
        if ids.size == 0:
            return
        self.cell_value[ids] = cell_values(self.weights[ids], self.codes[ids], self.schema)
        searching = ids[self.phase[ids] == SEARCHING]
        if searching.size == 0:
            return
        g = self.beliefs[searching]
        rows = self._combo_rows.T
        num = (g * self.cell_value[searching]) @ rows
        den = g @ rows
        empty = den <= 0.0
        if empty.any():
            uniform = (self.cell_value[searching] @ rows) / self._combo_count
            num = np.where(empty, uniform, num)
            den = np.where(empty, 1.0, den)
        self.expected[searching] = num / den

    def expectation(self, agent: Agent, known: Partial) -> float:
        return self._expect(agent.id, known.mask, known.values)

    def _expect(self, i: int, mask: int, values: int) -> float:
        cells = extension_cells(mask, values, self.schema.total_count)
        g = self.beliefs[i, cells]
        v = self.cell_value[i, cells]
        total = g.sum()
        return float(g @ v / total) if total > 0.0 else float(v.mean())

    def _perceived(self, x: Agent, y: Agent, known_mask: int) -> np.ndarray:
        key = (x.code, y.code)
        scores = self._scores.get(key)
        if scores is None:
            bits = self.schema.cell_bits
            a, b = bits[x.code], bits[y.code]
            scores = np.where(self._match, (2 * a - 1) * (2 * b - 1), b - a)
            self._scores[key] = scores
        return scores * self.schema.cell_bits[known_mask]

    # -- turns --------------------------------------------------------------

    def _search_turn(self, a: Agent) -> None:
        s, rng = self.scenario, self.rng
        pool = self._pool[1 - a.side]
        pool = pool[self.phase[pool] == SEARCHING]
        target = None
        idx = self._filter_idx
        if idx is not None:
            k = int(idx[np.argmax(a.prefs[idx])])
            target = (k, (a.code >> k) & 1 if self._match[k] else 1)
        cands = rng.permutation(
            filter_ids(pool, self.prof_mask[pool], self.prof_val[pool], target, self._weak)
        )
        n_view = min(cands.size, s.max_actions)
        p_view = sigmoid(self.expected[a.id, self.combo[cands[:n_view]]])
        u = rng.random(2 * s.max_actions)
        inbox = a.inbox
        viewed = interested = 0
        for step in range(s.max_actions):
            want_msg = u[2 * step] < s.message_probability
            if inbox and (want_msg or viewed >= n_view):
                sender = self.agents[inbox.popleft().sender]
                if sender.phase is not SEARCHING:
                    continue
                p = yes_probability(self.expected[a.id, self.combo[sender.id]], 0.0)
                if u[2 * step + 1] < p:
                    self._start_relationship(a, sender)
                    return
            elif viewed < n_view:
                j = int(cands[viewed])
                if u[2 * step + 1] < p_view[viewed]:
                    interested += 1
                    self.agents[j].inbox.append(Message(a.id, self.iteration))
                viewed += 1
            else:
                break
        if viewed == 0 or 2 * interested < viewed:
            a.search_tolerance -= 1
            if a.search_tolerance <= 0:
                self._exit(a, ExitReason.SEARCH_TOLERANCE)

    def _start_relationship(self, a: Agent, b: Agent) -> None:
        for x, y in ((a, b), (b, a)):
            x.knowledge[y.id] = x.knowledge.get(y.id, 0) | y.profile.mask
            x.partner = y.id
            x.rounds = 0
            self._set_phase(x, ONLINE)
            self._acted[x.id] = True

    def _relationship_turn(self, a: Agent, b: Agent) -> None:
        s, rng, schema = self.scenario, self.rng, self.schema
        offline = a.phase is OFFLINE
        if offline:
            meet = rng.random() < s.meet_probability
            learnable = schema.full_mask
        else:
            meet = True
            learnable = schema.searchable_mask
        if meet:
            positive = self._interact(a, b, learnable)
            if not positive:
                self._break_up(a, b)
                return
            if not offline:
                a.rounds += 1
                b.rounds = a.rounds
                if a.rounds >= s.online_rounds:
                    for x in (a, b):
                        x.rounds = 0
                        self._set_phase(x, OFFLINE)
                return
        a.rounds += 1
        b.rounds = a.rounds
        if a.rounds >= s.offline_rounds:
            self.log.long_term(self.iteration, a.id, b.id, a.race, b.race)
            self._exit(a, ExitReason.LONG_TERM)
            self._exit(b, ExitReason.LONG_TERM)

    def _interact(self, a: Agent, b: Agent, learnable: int) -> bool:
        s, rng = self.scenario, self.rng
        reveal = rng.random((2, self.schema.total_count)) < s.learn_probability
        reveal_masks = reveal @ self._bit_weights
        pair = ((a, b), (b, a))
        elapsed = a.rounds
        draws = rng.random(2)
        positive = True
        for row, (x, y) in enumerate(pair):
            known = x.knowledge[y.id]
            known |= learnable & ~known & int(reveal_masks[row])
            x.knowledge[y.id] = known
            seen = y.code & known
            update_stereotype(x.stereotype, Partial(known, seen), inplace=True)
            if draws[row] >= yes_probability(self._expect(x.id, known, seen), elapsed):
                positive = False
        quality = InteractionQuality.POSITIVE if positive else InteractionQuality.NEGATIVE
        theta = s.theta_interaction
        if theta > 0.0:
            for x, y in pair:
                perceived = self._perceived(x, y, x.knowledge[y.id])
                ivec = build_interaction_vector(x.prefs, perceived, quality)
                if ivec is not None:
                    x.prefs[:] = theta * ivec + (1.0 - theta) * x.prefs
        return positive

    def _break_up(self, a: Agent, b: Agent) -> None:
        for x in (a, b):
            x.partner = -1
            x.rounds = 0
            x.failure_tolerance -= 1
            if x.failure_tolerance <= 0:
                self._exit(x, ExitReason.FAILURE_TOLERANCE)
            else:
                self._set_phase(x, SEARCHING)

    # -- iteration ----------------------------------------------------------

    def step(self) -> None:
        s = self.scenario
        if self.iteration == 0:
            self._spawn(s.initial_population)
            if self.present:
                ids = np.array(self.present)
                self.n_on = init_on_platform_norm(self.weights[ids], self.schema, self.norm_clamp)
        else:
            self._spawn(s.inflow)

        present = np.array(self.present, dtype=np.int64)
        self._pool = {side: present[self.side[present] == side] for side in (0, 1)}
        self._refresh_values(present)
        self._acted = np.zeros(len(self.agents), dtype=bool)

        for i in self.rng.permutation(present):
            if self._acted[i]:
                continue
            a = self.agents[i]
            if a.phase is SEARCHING:
                self._acted[i] = True
                self._search_turn(a)
            elif a.phase is not EXITED and a.id < a.partner:
                b = self.agents[a.partner]
                self._acted[a.id] = self._acted[b.id] = True
                self._relationship_turn(a, b)

        present = present[self.phase[present] != EXITED]
        self.present = present.tolist()
        # agents spawned this iteration are already in ``present``
        self._end_of_iteration()
        self.iteration += 1
        self.log.iterations = self.iteration

    def _end_of_iteration(self) -> None:
        s = self.scenario
        ids = np.array(self.present, dtype=np.int64)
        if ids.size == 0:
            return
        self.n_on = update_on_platform_norm(
            self.n_on, self.weights[ids], s.eta_pref_to_norm, self.norm_clamp, self.schema
        )
        phase = self.phase[ids]
        online = ids[phase != OFFLINE]
        offline = ids[phase == OFFLINE]
        eta = s.eta_norm_to_pref
        if eta > 0.0:
            self.weights[online] = blend_online(self.weights[online], self.n_on, eta, self.schema)
            self.weights[offline] = blend_offline(self.weights[offline], self.n_off, eta)
        self.log.offline_agent_iterations += int(offline.size)
        self.log.platform_agent_iterations += int(ids.size)

    def run(self) -> RunLog:
        while self.iteration < self.scenario.iterations:
            self.step()
        return self.log


def simulate(scenario: Scenario, seed: int) -> RunLog:
    return Platform(scenario, seed).run()


def run(scenario: Scenario, seed: int) -> RunMetrics:
    return compute_metrics(simulate(scenario, seed), scenario.scenario_id, seed)
