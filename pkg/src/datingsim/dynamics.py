"""Stereotype, preference and norm updates."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from .core import (
    AttributeSchema,
    DomainError,
    Partial,
    convex_combine,
    drop_protected,
    extension_cells,
)

logger = logging.getLogger(__name__)


class InteractionQuality(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"

    @classmethod
    def from_decisions(cls, *decisions: bool) -> "InteractionQuality":
        return cls.POSITIVE if all(decisions) else cls.NEGATIVE


@dataclass(frozen=True)
class UpdateStrengths:
    theta_interaction: float = 0.02
    eta_pref_to_norm: float = 0.05
    eta_norm_to_pref: float = 0.01

    def __post_init__(self) -> None:
        for name in ("theta_interaction", "eta_pref_to_norm", "eta_norm_to_pref"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {value}")


def update_stereotype(
    table: np.ndarray, observed: Partial, inplace: bool = False
) -> np.ndarray:
    """Add one observation's worth of mass to the completions of ``observed``.

    The unit of mass is spread in proportion to the current masses of the
    completing cells, or evenly when they are all empty.
    """
    out = table if inplace else np.array(table, dtype=float)
    n_bits = out.size.bit_length() - 1
    cells = extension_cells(observed.mask, observed.values, n_bits)
    mass = out[cells]
    total = mass.sum()
    if total > 0.0:
        out[cells] = mass + mass / total
    else:
        out[cells] = mass + 1.0 / cells.size
    return out


def build_interaction_vector(
    prefs: np.ndarray, perceived: np.ndarray, quality: InteractionQuality
) -> np.ndarray | None:
    """Target preference implied by one interaction, or None without relative change.

    ``perceived`` holds +1 (good), 0 (neutral or unknown) or -1 (bad) per
    attribute. After a positive interaction good attributes gain weight and
    bad ones lose it; a negative interaction reverses the roles.
    """
    prefs = np.asarray(prefs, dtype=float)
    perceived = np.asarray(perceived)
    good, bad = perceived > 0, perceived < 0
    up, down = (good, bad) if quality is InteractionQuality.POSITIVE else (bad, good)
    if not (up.any() and down.any()):
        return None
    out = prefs.copy()
    out[down] = 0.0
    remaining = 1.0 - out[~up].sum()
    base = prefs[up]
    total = base.sum()
    out[up] = remaining * (base / total if total > 0.0 else 1.0 / base.size)
    return out


def apply_interaction_update(prefs: np.ndarray, ivec: np.ndarray, theta: float) -> np.ndarray:
    return convex_combine(prefs, ivec, theta)


def searchable_target(prefs: np.ndarray, schema: AttributeSchema) -> np.ndarray | None:
    """Mean of the searchable-rescaled preferences, padded to length M."""
    prefs = np.atleast_2d(prefs)
    idx = schema.searchable_indices
    sub = prefs[:, idx]
    mass = sub.sum(axis=1)
    ok = mass > 0.0
    if not ok.all():
        logger.debug("skipping %d agents with no searchable preference mass", (~ok).sum())
    if not ok.any():
        return None
    target = np.zeros(schema.total_count)
    target[idx] = (sub[ok] / mass[ok, None]).mean(axis=0)
    return target


def update_on_platform_norm(
    n_on: np.ndarray,
    prefs: np.ndarray,
    eta: float,
    intervention: bool,
    schema: AttributeSchema,
) -> np.ndarray:
    """Pull the on-platform norm towards the agents' average searchable preference."""
    target = searchable_target(prefs, schema)
    out = np.array(n_on, dtype=float) if target is None else convex_combine(n_on, target, eta)
    if intervention:
        out = drop_protected(out, schema)
    return out


def blend_online(prefs: np.ndarray, n_on: np.ndarray, eta: float, schema: AttributeSchema) -> np.ndarray:
    """Move the searchable part of each row towards ``n_on``, keeping its mass."""
    out = np.array(prefs, dtype=float)
    if eta == 0.0 or out.size == 0:
        return out
    idx = schema.searchable_indices
    sub = out[:, idx]
    mass = sub.sum(axis=1, keepdims=True)
    if np.any(mass == 0.0):
        logger.debug("online norm blend is a no-op for rows without searchable mass")
    out[:, idx] = (1.0 - eta) * sub + eta * mass * np.asarray(n_on)[idx]
    return out


def blend_offline(prefs: np.ndarray, n_off: np.ndarray, eta: float) -> np.ndarray:
    out = np.array(prefs, dtype=float)
    if eta == 0.0 or out.size == 0:
        return out
    return (1.0 - eta) * out + eta * np.asarray(n_off)


def apply_norm_to_preference(
    prefs: np.ndarray, norm: np.ndarray, eta: float, context: str, schema: AttributeSchema
) -> np.ndarray:
    """Pull one preference towards a norm.

    ``context="online"`` uses the on-platform norm on the searchable entries
    only; ``context="offline"`` blends all entries with the out-platform norm.
    """
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"eta must lie in [0, 1], got {eta}")
    prefs = np.asarray(prefs, dtype=float)
    if context == "online":
        return blend_online(prefs[None, :], norm, eta, schema)[0]
    if context == "offline":
        return convex_combine(prefs, norm, eta)
    raise DomainError(f"unknown norm context {context!r}")
