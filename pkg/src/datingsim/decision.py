"""Stereotype-conditioned expected score and the time-shifted sigmoid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import AttributeSchema, Partial, cell_values


class NoBeliefError(ValueError):
    """The stereotype has no mass on any completion of the known attributes."""


@dataclass
class DecisionContext:
    weights: np.ndarray
    self_code: int
    known_other: Partial
    stereotype: np.ndarray
    time_in_phase: float = 0.0


def conditional_expectation(
    ctx: DecisionContext, schema: AttributeSchema, fallback: str = "error"
) -> float:
    """Expected weighted score over the completions of ``ctx.known_other``.

    Completions are weighted by their stereotype mass. When that mass is zero
    ``fallback="uniform"`` averages the completions evenly instead of raising.
    """
    cells = ctx.known_other.extensions(schema.total_count)
    values = cell_values(ctx.weights, [ctx.self_code], schema)[0, cells]
    mass = np.asarray(ctx.stereotype, dtype=float)[cells]
    total = mass.sum()
    if total > 0.0:
        return float(mass @ values / total)
    if fallback == "uniform":
        return float(values.mean())
    raise NoBeliefError(
        f"stereotype has no mass on completions of {ctx.known_other.entries(schema.total_count)}"
    )


def yes_probability(expectation: float, elapsed: float) -> float:
    x = expectation + elapsed
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + z), z / (1.0 + z))


def decide(ctx: DecisionContext, schema: AttributeSchema, rng: np.random.Generator) -> bool:
    """Bernoulli draw of a yes; consumes exactly one uniform variate."""
    p = yes_probability(conditional_expectation(ctx, schema), ctx.time_in_phase)
    return bool(rng.random() < p)
