"""Attribute schema, simplex helpers and the attribute scoring function.

Attribute vectors are stored as integer cell codes: bit ``k`` of the code is
the value of attribute ``k``. A stereotype table is then simply an array of
length ``2**M`` indexed by code.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np

SIMPLEX_TOL = 1e-9
RENORM_TOL = 1e-6


class SchemaError(ValueError):
    """Attribute data does not conform to the schema."""


class DomainError(ValueError):
    """A scalar parameter is outside its admissible range."""


class DegenerateMassError(ValueError):
    """A rescaling was asked to normalise a zero-mass sub-vector."""


class ConfigurationError(ValueError):
    """Scenario or world parameters are inconsistent."""


@dataclass(frozen=True)
class AttributeSchema:
    """Per-index attribute kinds.

    Index 0 is the protected attribute (race) and is always matching and
    searchable. ``matching[k]`` is False for competing attributes and
    ``searchable[k]`` is False for experiential ones.
    """

    matching: tuple[bool, ...]
    searchable: tuple[bool, ...]
    protected_index: int = 0

    def __post_init__(self) -> None:
        if len(self.matching) != len(self.searchable):
            raise SchemaError("matching and searchable flags differ in length")
        if not self.matching:
            raise SchemaError("schema needs at least the protected attribute")
        if self.protected_index != 0:
            raise SchemaError("the protected attribute must sit at index 0")
        if not (self.matching[0] and self.searchable[0]):
            raise SchemaError("the protected attribute must be matching and searchable")

    @property
    def total_count(self) -> int:
        return len(self.matching)

    @property
    def n_cells(self) -> int:
        return 1 << self.total_count

    @cached_property
    def searchable_indices(self) -> np.ndarray:
        return np.flatnonzero(np.array(self.searchable))

    @cached_property
    def experiential_indices(self) -> np.ndarray:
        return np.flatnonzero(~np.array(self.searchable))

    @cached_property
    def searchable_mask(self) -> int:
        return sum(1 << int(k) for k in self.searchable_indices)

    @property
    def full_mask(self) -> int:
        return self.n_cells - 1

    @cached_property
    def cell_bits(self) -> np.ndarray:
        """``(2**M, M)`` array with the bits of every cell code."""
        return cell_bits(self.total_count)

    @cached_property
    def _value_factors(self) -> tuple[np.ndarray, np.ndarray]:
        # For matching k the score is (2x-1)(2b-1); for competing k it is b-x.
        match = np.array(self.matching)
        bits = self.cell_bits.astype(float)
        other = np.where(match, 2.0 * bits - 1.0, bits)
        return match, other

    def kind(self, k: int) -> str:
        m = "matching" if self.matching[k] else "competing"
        s = "searchable" if self.searchable[k] else "experiential"
        return f"{m}/{s}"

    def check(self, bits: Sequence[int]) -> np.ndarray:
        arr = np.asarray(bits, dtype=np.int64)
        if arr.shape != (self.total_count,):
            raise SchemaError(
                f"expected {self.total_count} attributes, got shape {arr.shape}"
            )
        if np.any((arr != 0) & (arr != 1)):
            raise SchemaError("attribute values must be 0 or 1")
        return arr


@lru_cache(maxsize=None)
def cell_bits(n_bits: int) -> np.ndarray:
    codes = np.arange(1 << n_bits)
    bits = (codes[:, None] >> np.arange(n_bits)) & 1
    bits.setflags(write=False)
    return bits


def to_code(bits: Iterable[int]) -> int:
    return sum(int(b) << k for k, b in enumerate(bits))


def from_code(code: int, n_bits: int) -> np.ndarray:
    return (int(code) >> np.arange(n_bits)) & 1


@dataclass(frozen=True)
class Partial:
    """An attribute vector with some entries unknown.

    ``mask`` has bit ``k`` set when attribute ``k`` is known, and ``values``
    carries the known bits (unknown bits are always 0).
    """

    mask: int
    values: int

    def __post_init__(self) -> None:
        if self.values & ~self.mask:
            raise SchemaError("values set on unknown entries")

    @classmethod
    def from_entries(cls, entries: Sequence[int | None]) -> "Partial":
        mask = values = 0
        for k, v in enumerate(entries):
            if v is None:
                continue
            if v not in (0, 1):
                raise SchemaError(f"entry {k} must be 0, 1 or None, got {v!r}")
            mask |= 1 << k
            values |= int(v) << k
        return cls(mask, values)

    @classmethod
    def of(cls, code: int, mask: int) -> "Partial":
        return cls(mask, code & mask)

    def entries(self, n_bits: int) -> list[int | None]:
        return [
            (self.values >> k) & 1 if (self.mask >> k) & 1 else None
            for k in range(n_bits)
        ]

    def extended_by(self, code: int) -> bool:
        return (code & self.mask) == self.values

    def extensions(self, n_bits: int) -> np.ndarray:
        return extension_cells(self.mask, self.values, n_bits)


@lru_cache(maxsize=65536)
def extension_cells(mask: int, values: int, n_bits: int) -> np.ndarray:
    """Codes of every complete vector that agrees with ``values`` on ``mask``."""
    codes = np.arange(1 << n_bits)
    cells = codes[(codes & mask) == values]
    cells.setflags(write=False)
    return cells


def score_attributes(
    self_attrs: Sequence[int], other_attrs: Sequence[int], schema: AttributeSchema
) -> np.ndarray:
    """Score each of ``other_attrs`` from the point of view of ``self_attrs``.

    Matching attributes score +1 when equal and -1 otherwise. Competing
    attributes score +1 when the other holds the higher value, 0 on a tie and
    -1 when the other is lower.
    """
    a = schema.check(self_attrs)
    b = schema.check(other_attrs)
    match = np.array(schema.matching)
    return np.where(match, (2 * a - 1) * (2 * b - 1), b - a)


def cell_values(weights: np.ndarray, codes: np.ndarray, schema: AttributeSchema) -> np.ndarray:
    """Weighted score of every cell, for a batch of agents.

    ``weights`` is ``(n, M)`` and ``codes`` holds the agents' own attribute
    codes. Returns ``(n, 2**M)``.
    """
    weights = np.atleast_2d(weights)
    codes = np.atleast_1d(np.asarray(codes, dtype=np.int64))
    own = ((codes[:, None] >> np.arange(schema.total_count)) & 1).astype(float)
    match, other = schema._value_factors
    own_factor = np.where(match, 2.0 * own - 1.0, 1.0)
    offset = (weights * np.where(match, 0.0, own)).sum(axis=1)
    return (weights * own_factor) @ other.T - offset[:, None]


def as_simplex(v: Sequence[float]) -> np.ndarray:
    """Validate ``v`` as a point of the simplex, renormalising tiny drift."""
    arr = np.array(v, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError("a simplex vector must be a non-empty 1-D array")
    if np.any(arr < -SIMPLEX_TOL):
        raise DomainError(f"negative weight in simplex vector: {arr.min()}")
    arr = np.clip(arr, 0.0, None)
    total = arr.sum()
    if abs(total - 1.0) > RENORM_TOL:
        raise DomainError(f"simplex weights sum to {total}, not 1")
    if abs(total - 1.0) > SIMPLEX_TOL:
        arr /= total
    return arr


def is_simplex(v: np.ndarray, tol: float = SIMPLEX_TOL) -> bool:
    v = np.asarray(v)
    return bool(np.all(v >= -tol) and abs(v.sum() - 1.0) <= tol)


def _check_theta(theta: float) -> None:
    if not 0.0 <= theta <= 1.0:
        raise DomainError(f"mixing weight must lie in [0, 1], got {theta}")


def convex_combine(a: np.ndarray, b: np.ndarray, theta: float) -> np.ndarray:
    """Return ``theta * b + (1 - theta) * a``."""
    _check_theta(theta)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DomainError(f"shape mismatch: {a.shape} vs {b.shape}")
    if theta == 0.0:
        return a.copy()
    if theta == 1.0:
        return b.copy()
    return theta * b + (1.0 - theta) * a


def rescale_to_subsimplex(v: np.ndarray, index_set: Iterable[int]) -> np.ndarray:
    """Restrict ``v`` to ``index_set`` (in ascending order) and renormalise."""
    idx = np.array(sorted(set(int(i) for i in index_set)), dtype=np.int64)
    sub = np.asarray(v, dtype=float)[idx]
    total = sub.sum()
    if not total > 0.0:
        raise DegenerateMassError(f"zero mass on indices {idx.tolist()}")
    return sub / total


def drop_protected(v: np.ndarray, schema: AttributeSchema) -> np.ndarray:
    """Zero the protected entry of a padded on-platform norm and renormalise."""
    out = np.array(v, dtype=float)
    out[schema.protected_index] = 0.0
    total = out.sum()
    if not total > 0.0:
        raise DegenerateMassError("no mass left after removing the protected entry")
    return out / total
