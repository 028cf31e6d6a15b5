"""Regression of sweep outcomes on standardized parameters and their pairwise products."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .core import ConfigurationError
from .experiment import METRIC_COLUMNS, RESULT_COLUMNS
from .interventions import FilterMode
from .scenario import Scenario

logger = logging.getLogger(__name__)

NUMERIC_COVARIATES = (
    "search_tolerance",
    "race_norm",
    "eta_norm_to_pref",
    "ethnocentrism",
    "beta",
    "gamma",
)
INDICATOR_COVARIATES = ("norm_intervention", "attribute_intervention", "minimal_group")
INTERCEPT = "intercept"
Z_95 = 1.96

_BOOL_COLUMNS = ("norm_intervention", "attribute_intervention", "minimal_group")


class CollinearityError(ValueError):
    def __init__(self, terms: Sequence[str]) -> None:
        self.terms = tuple(terms)
        super().__init__(f"design matrix is rank deficient; collinear terms: {', '.join(terms)}")


# -- loading ------------------------------------------------------------------


def validate_columns(columns: Iterable[str]) -> None:
    columns = list(columns)
    missing = [c for c in RESULT_COLUMNS if c not in columns and c != "error"]
    unexpected = [c for c in columns if c not in RESULT_COLUMNS]
    if missing or unexpected:
        parts = []
        if missing:
            parts.append(f"missing columns: {', '.join(missing)}")
        if unexpected:
            parts.append(f"unexpected columns: {', '.join(unexpected)}")
        raise ConfigurationError("; ".join(parts))


def load_results(path) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, dtype={"scenario_id": str, "filter_mode": str, "error": str},
                         keep_default_na=False, na_values=[""])
    except pd.errors.EmptyDataError:
        raise ConfigurationError(f"{path}: results file is empty") from None
    validate_columns(df.columns)
    if df.empty:
        raise ConfigurationError(f"{path}: results file has no rows")
    for col in _BOOL_COLUMNS:
        df[col] = df[col].map({"true": True, "false": False, True: True, False: False})
    return df


# -- design matrix --------------------------------------------------------------


@dataclass
class Design:
    X: np.ndarray
    y: np.ndarray
    names: list[str]
    dropped_terms: list[tuple[str, str]] = field(default_factory=list)
    dropped_rows: int = 0


def _standardize(col: np.ndarray) -> np.ndarray:
    return (col - col.mean()) / col.std()


def _filter_columns(modes: pd.Series, encoding: str) -> dict[str, np.ndarray]:
    if encoding == "onehot":
        return {
            f"filter[{m.value}]": (modes == m.value).to_numpy(float)
            for m in FilterMode if m is not FilterMode.STRONG
        }
    if encoding == "factorial":
        # non-race and weak are two crossed switches; off stands apart
        non_race = modes.isin([FilterMode.STRONG_NON_RACE.value, FilterMode.WEAK_NON_RACE.value])
        weak = modes.isin([FilterMode.WEAK.value, FilterMode.WEAK_NON_RACE.value])
        return {
            "filter_nonrace": non_race.to_numpy(float),
            "filter_weak": weak.to_numpy(float),
            "filter_off": (modes == FilterMode.OFF.value).to_numpy(float),
        }
    raise ConfigurationError(f"unknown filter encoding {encoding!r}; use 'onehot' or 'factorial'")


def _independent(columns: list[np.ndarray], candidate: np.ndarray) -> bool:
    stacked = np.column_stack(columns + [candidate])
    return np.linalg.matrix_rank(stacked) == stacked.shape[1]


def build_design_matrix(
    df: pd.DataFrame,
    include_interactions: bool = True,
    filter_encoding: str = "onehot",
    outcome: str = "heterogamy_pct",
) -> Design:
    """Intercept, standardized numeric columns, raw 0/1 indicators, optional pairwise products.

    Rows with a missing outcome are dropped. Constant columns are dropped,
    and so are interaction columns that are exact linear combinations of
    earlier ones (one-at-a-time designs produce many of those).
    """
    if outcome not in METRIC_COLUMNS:
        raise ConfigurationError(f"unknown outcome {outcome!r}")
    data = df
    if "error" in data.columns:
        data = data[data["error"].isna() | (data["error"] == "")]
    keep = data[outcome].notna()
    dropped_rows = int(len(df) - keep.sum())
    if dropped_rows:
        logger.warning("dropping %d rows with no %s", dropped_rows, outcome)
    data = data[keep]
    if data.empty:
        raise ConfigurationError(f"no rows with a defined {outcome}")

    dropped: list[tuple[str, str]] = []
    mains: dict[str, np.ndarray] = {}
    for name in NUMERIC_COVARIATES:
        col = data[name].to_numpy(float)
        if np.ptp(col) == 0.0:
            dropped.append((name, "zero variance"))
            continue
        mains[name] = _standardize(col)
    for name in INDICATOR_COVARIATES:
        col = data[name].astype(bool).to_numpy(float)
        if np.ptp(col) == 0.0:
            dropped.append((name, "zero variance"))
            continue
        mains[name] = col
    for name, col in _filter_columns(data["filter_mode"], filter_encoding).items():
        if np.ptp(col) == 0.0:
            dropped.append((name, "zero variance"))
            continue
        mains[name] = col

    names = [INTERCEPT] + list(mains)
    columns = [np.ones(len(data))] + list(mains.values())
    if include_interactions:
        for (a, ca), (b, cb) in itertools.combinations(mains.items(), 2):
            name, col = f"{a}:{b}", ca * cb
            if np.ptp(col) == 0.0:
                dropped.append((name, "zero variance"))
            elif not _independent(columns, col):
                dropped.append((name, "aliased with earlier terms"))
            else:
                names.append(name)
                columns.append(col)
    for name, reason in dropped:
        logger.info("excluding term %s: %s", name, reason)
    return Design(
        X=np.column_stack(columns),
        y=data[outcome].to_numpy(float),
        names=names,
        dropped_terms=dropped,
        dropped_rows=dropped_rows,
    )


# -- fitting --------------------------------------------------------------------


@dataclass(frozen=True)
class Coefficient:
    estimate: float
    stderr: float

    @property
    def ci_low(self) -> float:
        return self.estimate - Z_95 * self.stderr

    @property
    def ci_high(self) -> float:
        return self.estimate + Z_95 * self.stderr


@dataclass(frozen=True)
class RegressionFit:
    names: tuple[str, ...]
    estimates: np.ndarray
    stderrs: np.ndarray
    r_squared: float
    n_obs: int

    @property
    def n_terms(self) -> int:
        return len(self.names)

    @property
    def coefficients(self) -> dict[str, Coefficient]:
        return {n: Coefficient(float(e), float(s)) for n, e, s in zip(self.names, self.estimates, self.stderrs)}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "term": list(self.names),
            "estimate": self.estimates,
            "stderr": self.stderrs,
            "ci_low": self.estimates - Z_95 * self.stderrs,
            "ci_high": self.estimates + Z_95 * self.stderrs,
        })


def _collinear_terms(X: np.ndarray, names: Sequence[str]) -> list[str]:
    """Terms that are linear combinations of the terms before them."""
    kept: list[np.ndarray] = []
    bad = []
    for j, name in enumerate(names):
        if _independent(kept, X[:, j]):
            kept.append(X[:, j])
        else:
            bad.append(name)
    return bad


def ols_fit(X: np.ndarray, y: np.ndarray, names: Sequence[str] | None = None) -> RegressionFit:
    """Least squares through a thin QR factorization."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(p))
    if len(names) != p:
        raise ValueError(f"{len(names)} names for {p} columns")
    if n <= p:
        raise ValueError(f"need more observations ({n}) than terms ({p})")
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise CollinearityError(_collinear_terms(X, names) or list(names))
    estimates = np.linalg.solve(r, q.T @ y)
    resid = y - X @ estimates
    rss = float(resid @ resid)
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - rss / tss if tss > 0.0 else 0.0
    r_inv = np.linalg.inv(r)
    sigma2 = rss / (n - p)
    stderrs = np.sqrt(sigma2 * (r_inv ** 2).sum(axis=1))
    return RegressionFit(names, estimates, stderrs, float(min(max(r2, 0.0), 1.0)), n)


def top_effects(fit: RegressionFit, k: int, include_intercept: bool = False) -> list[str]:
    """The ``k`` terms of largest absolute estimate; equal magnitudes ordered by name."""
    if k <= 0:
        return []
    terms = [
        (name, abs(float(est)))
        for name, est in zip(fit.names, fit.estimates)
        if include_intercept or name != INTERCEPT
    ]
    terms.sort(key=lambda t: (-t[1], t[0]))
    return [name for name, _ in terms[:k]]


# -- per-condition summaries ----------------------------------------------------------

CONDITION_KEYS = ("filter_mode", "norm_intervention", "attribute_intervention", "minimal_group")


def _summarize(df: pd.DataFrame, keys: list[str]) -> pd.DataFrame:
    records = []
    for metric in METRIC_COLUMNS:
        for group, sub in df.groupby(keys, sort=True):
            group = group if isinstance(group, tuple) else (group,)
            vals = sub[metric].dropna().to_numpy(float)
            mean = float(vals.mean()) if vals.size else float("nan")
            half = Z_95 * float(vals.std(ddof=1)) / np.sqrt(vals.size) if vals.size > 1 else float("nan")
            records.append({**dict(zip(keys, group)), "metric": metric, "n": int(vals.size),
                            "mean": mean, "ci_low": mean - half, "ci_high": mean + half})
    return pd.DataFrame.from_records(records, columns=keys + ["metric", "n", "mean", "ci_low", "ci_high"])


def condition_summary(df: pd.DataFrame) -> pd.DataFrame:
    """Mean and 95% interval of each outcome per intervention condition."""
    return _summarize(df, list(CONDITION_KEYS))


def society_summary(df: pd.DataFrame) -> pd.DataFrame:
    """Outcome curves along each varied society parameter, others held at their defaults.

    Long format: one ``parameter``/``value`` pair per row, split by filter
    mode and norm intervention.
    """
    defaults = Scenario()
    frames = []
    for param in NUMERIC_COVARIATES:
        if df[param].nunique() < 2:
            continue
        others = [p for p in NUMERIC_COVARIATES if p != param]
        at_default = np.logical_and.reduce([np.isclose(df[p], getattr(defaults, p)) for p in others])
        sub = df[at_default & ~df["attribute_intervention"] & ~df["minimal_group"]]
        if sub.empty:
            continue
        out = _summarize(sub, [param, "filter_mode", "norm_intervention"])
        out = out.rename(columns={param: "value"})
        out.insert(0, "parameter", param)
        frames.append(out)
    cols = ["parameter", "value", "filter_mode", "norm_intervention", "metric", "n", "mean", "ci_low", "ci_high"]
    return pd.concat(frames, ignore_index=True)[cols] if frames else pd.DataFrame(columns=cols)
