"""World creation: latent covariance, attributes, true table, stereotypes, norms."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import (
    AttributeSchema,
    ConfigurationError,
    DomainError,
    SchemaError,
    drop_protected,
    rescale_to_subsimplex,
)

logger = logging.getLogger(__name__)

PSD_TOL = 1e-9


@dataclass(frozen=True)
class CovarianceSpec:
    dimension: int
    beta: float
    gamma: float
    uncorrelated_indices: frozenset[int] = field(default_factory=frozenset)


def covariance_matrix(spec: CovarianceSpec) -> np.ndarray:
    """Unit-diagonal matrix with ``beta`` on race pairs and ``gamma`` elsewhere."""
    m = spec.dimension
    if m < 1:
        raise ConfigurationError(f"dimension must be >= 1, got {m}")
    cov = np.full((m, m), float(spec.gamma))
    cov[0, :] = cov[:, 0] = spec.beta
    for k in spec.uncorrelated_indices:
        cov[k, :] = cov[:, k] = 0.0
    np.fill_diagonal(cov, 1.0)
    return cov


def nearest_correlation(cov: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Clip negative eigenvalues to ``floor`` and restore the unit diagonal."""
    vals, vecs = np.linalg.eigh(cov)
    fixed = (vecs * np.maximum(vals, floor)) @ vecs.T
    d = np.sqrt(np.diag(fixed))
    fixed = fixed / np.outer(d, d)
    return (fixed + fixed.T) / 2.0


def build_covariance(spec: CovarianceSpec, repair: bool = False) -> np.ndarray:
    """Build and validate the latent covariance.

    With ``repair`` a non-PSD (beta, gamma) combination is projected onto the
    nearest correlation matrix by eigenvalue clipping instead of raising.
    """
    cov = covariance_matrix(spec)
    smallest = float(np.linalg.eigvalsh(cov)[0])
    if smallest < -PSD_TOL:
        if not repair:
            raise ConfigurationError(
                f"covariance for M={spec.dimension}, beta={spec.beta}, "
                f"gamma={spec.gamma} is not positive semidefinite "
                f"(smallest eigenvalue {smallest:.6g})"
            )
        logger.debug(
            "repairing covariance with smallest eigenvalue %.6g (M=%d beta=%g gamma=%g)",
            smallest, spec.dimension, spec.beta, spec.gamma,
        )
        cov = nearest_correlation(cov)
    return cov


def latent_factor(cov: np.ndarray) -> np.ndarray:
    """Symmetric square root ``F`` with ``F @ F.T == cov``."""
    try:
        vals, vecs = np.linalg.eigh(cov)
    except np.linalg.LinAlgError as exc:
        raise ConfigurationError(f"cannot factor covariance: {exc}") from exc
    if vals[0] < -PSD_TOL:
        raise ConfigurationError(
            f"cannot factor a non-PSD covariance (smallest eigenvalue {vals[0]:.6g})"
        )
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def threshold_latent(latent: np.ndarray) -> np.ndarray:
    return (np.asarray(latent) >= 0.0).astype(np.int64)


def sample_attributes(cov: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One binary attribute vector from the thresholded latent normal."""
    return sample_codes_bits(latent_factor(cov), 1, rng)[0]


def sample_codes_bits(factor: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, factor.shape[0]))
    return threshold_latent(z @ factor.T)


def bits_to_codes(bits: np.ndarray) -> np.ndarray:
    return bits @ (1 << np.arange(bits.shape[1]))


def estimate_true_contingency(
    cov: np.ndarray, n_samples: int, rng: np.random.Generator, chunk: int = 1 << 16
) -> np.ndarray:
    """Cell counts of ``n_samples`` attribute draws."""
    m = cov.shape[0]
    cells = 1 << m
    if n_samples < 10 * cells:
        raise ConfigurationError(
            f"need at least {10 * cells} samples for M={m}, got {n_samples}"
        )
    factor = latent_factor(cov)
    counts = np.zeros(cells, dtype=np.int64)
    left = n_samples
    while left:
        n = min(chunk, left)
        codes = bits_to_codes(sample_codes_bits(factor, n, rng))
        counts += np.bincount(codes, minlength=cells)
        left -= n
    return counts.astype(float)


def good_cells(agent_code: int, schema: AttributeSchema) -> np.ndarray:
    """Boolean ``(2**M, M)``: which attribute values the agent scores +1."""
    bits = schema.cell_bits
    own = (int(agent_code) >> np.arange(schema.total_count)) & 1
    match = np.array(schema.matching)
    return np.where(match, bits == own, (own == 0) & (bits == 1))


def _draw_conditional(
    table: np.ndarray, race: int, n: int, rng: np.random.Generator
) -> np.ndarray:
    codes = np.flatnonzero((np.arange(table.size) & 1) == race)
    mass = table[codes]
    total = mass.sum()
    if not total > 0.0:
        raise ConfigurationError(f"true table has no mass on race class {race}")
    cdf = np.cumsum(mass) / total
    picks = np.searchsorted(cdf, rng.random(n), side="right")
    return codes[np.minimum(picks, codes.size - 1)]


def init_stereotype(
    agent_attrs: np.ndarray | int,
    table: np.ndarray,
    ethnocentrism: float,
    schema: AttributeSchema,
    rng: np.random.Generator,
    n_same: int = 300,
    n_other: int = 100,
) -> np.ndarray:
    """Stereotype table from a biased sample of acquaintances.

    ``n_same`` same-race and ``n_other`` other-race combinations are drawn
    from the true table. In each other-race draw every non-race attribute the
    agent scores as good is flipped with probability ``ethnocentrism``: a
    matching value becomes the other value and a good competing value (1
    against an own 0) becomes 0.
    """
    if not 0.0 <= ethnocentrism <= 1.0:
        raise DomainError(f"ethnocentrism must lie in [0, 1], got {ethnocentrism}")
    code = int(agent_attrs) if np.ndim(agent_attrs) == 0 else int(
        bits_to_codes(np.asarray(agent_attrs)[None, :])[0]
    )
    race = code & 1
    m = schema.total_count
    same = _draw_conditional(table, race, n_same, rng)
    other = _draw_conditional(table, 1 - race, n_other, rng)
    good = good_cells(code, schema)[other]
    good[:, schema.protected_index] = False
    flips = good & (rng.random((n_other, m)) < ethnocentrism)
    other = other ^ (flips.astype(np.int64) @ (1 << np.arange(m)))
    counts = np.bincount(same, minlength=schema.n_cells) + np.bincount(
        other, minlength=schema.n_cells
    )
    return counts.astype(float)


@dataclass(frozen=True)
class NormInitParams:
    race_norm: float = 0.2
    searchable_share: float = 0.25
    norm_blend_lambda: float = 0.2

    def __post_init__(self) -> None:
        for name in ("race_norm", "searchable_share", "norm_blend_lambda"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {value}")


def uniform_simplex(rng: np.random.Generator, k: int, size: int | None = None) -> np.ndarray:
    """Uniform draw(s) from the ``(k-1)``-simplex via normalised exponentials."""
    shape = (k,) if size is None else (size, k)
    e = rng.standard_exponential(shape)
    return e / e.sum(axis=-1, keepdims=True)


def init_out_platform_norm(
    params: NormInitParams, schema: AttributeSchema, rng: np.random.Generator
) -> np.ndarray:
    m = schema.total_count
    searchable = [int(k) for k in schema.searchable_indices if k != schema.protected_index]
    experiential = [int(k) for k in schema.experiential_indices]
    rest = 1.0 - params.race_norm
    norm = np.zeros(m)
    norm[schema.protected_index] = params.race_norm
    for idx, share in (
        (searchable, rest * params.searchable_share),
        (experiential, rest * (1.0 - params.searchable_share)),
    ):
        if not idx:
            if share > 0.0:
                raise SchemaError("norm share assigned to an empty attribute group")
            continue
        norm[idx] = share * uniform_simplex(rng, len(idx))
    return norm / norm.sum()


def init_preferences(
    n_off: np.ndarray, blend: float, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Blend of the out-platform norm and a uniform simplex draw."""
    if not 0.0 <= blend <= 1.0:
        raise DomainError(f"blend must lie in [0, 1], got {blend}")
    noise = uniform_simplex(rng, len(n_off), size)
    return blend * np.asarray(n_off) + (1.0 - blend) * noise


def searchable_profile(prefs: np.ndarray, schema: AttributeSchema) -> np.ndarray:
    """Each row restricted to searchable entries and renormalised."""
    prefs = np.atleast_2d(prefs)
    idx = schema.searchable_indices
    return np.stack([rescale_to_subsimplex(row, idx) for row in prefs])


def pad_searchable(sub: np.ndarray, schema: AttributeSchema) -> np.ndarray:
    out = np.zeros(schema.total_count)
    out[schema.searchable_indices] = sub
    return out


def init_on_platform_norm(
    all_preferences: np.ndarray, schema: AttributeSchema, norm_intervention: bool = False
) -> np.ndarray:
    """Average searchable-rescaled preference, zero-padded to length M."""
    prefs = np.atleast_2d(np.asarray(all_preferences, dtype=float))
    if prefs.shape[0] == 0:
        raise DomainError("need at least one agent to initialise the on-platform norm")
    norm = pad_searchable(searchable_profile(prefs, schema).mean(axis=0), schema)
    if norm_intervention:
        norm = drop_protected(norm, schema)
    return norm
