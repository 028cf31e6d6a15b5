"""Intervention switches and where they plug into the model."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .core import AttributeSchema
from .genesis import CovarianceSpec

# (matching, searchable) for the four non-race kinds.
KIND_BLOCK = ((True, True), (True, False), (False, True), (False, False))


class FilterMode(str, enum.Enum):
    STRONG = "strong"
    STRONG_NON_RACE = "strong_nonrace"
    WEAK = "weak"
    WEAK_NON_RACE = "weak_nonrace"
    OFF = "off"

    @property
    def weak(self) -> bool:
        return self in (FilterMode.WEAK, FilterMode.WEAK_NON_RACE)

    @property
    def non_race(self) -> bool:
        return self in (FilterMode.STRONG_NON_RACE, FilterMode.WEAK_NON_RACE)


def base_schema(copies: int = 1) -> AttributeSchema:
    """Race followed by ``copies`` blocks of one attribute per kind."""
    kinds = [(True, True)] + list(KIND_BLOCK) * copies
    return AttributeSchema(
        matching=tuple(m for m, _ in kinds), searchable=tuple(s for _, s in kinds)
    )


BASE_SCHEMA = base_schema(1)


@dataclass(frozen=True)
class InterventionSet:
    filter_mode: FilterMode = FilterMode.STRONG
    attributes_total: int = 5
    norm_clamp: bool = False
    minimal_group: bool = False

    def __post_init__(self) -> None:
        if self.attributes_total not in (5, 9):
            raise ValueError(f"attributes_total must be 5 or 9, got {self.attributes_total}")


@dataclass(frozen=True)
class DynamicsFlags:
    norm_clamp: bool


def apply_to_schema(
    base: AttributeSchema, iset: InterventionSet, beta: float, gamma: float
) -> tuple[AttributeSchema, CovarianceSpec]:
    if base != BASE_SCHEMA:
        raise ValueError("interventions apply to the 5-attribute baseline layout")
    schema = base_schema(1 if iset.attributes_total == 5 else 2)
    uncorrelated: frozenset[int] = frozenset()
    if iset.minimal_group:
        uncorrelated = frozenset({schema.total_count})
        schema = AttributeSchema(
            matching=schema.matching + (True,), searchable=schema.searchable + (True,)
        )
    return schema, CovarianceSpec(schema.total_count, beta, gamma, uncorrelated)


def apply_to_dynamics(iset: InterventionSet) -> DynamicsFlags:
    return DynamicsFlags(norm_clamp=iset.norm_clamp)
