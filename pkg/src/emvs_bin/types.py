"""Shared domain types, label codings and validation."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np


class EmvsError(ValueError):
    """Base class for input/validation errors raised by this package."""


class ConstantColumn(EmvsError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column} has zero variance")


class NonFinite(EmvsError):
    def __init__(self, what="input"):
        super().__init__(f"{what} contains NaN or Inf")


class LabelCodingMismatch(EmvsError):
    def __init__(self, rows, coding):
        self.rows = list(rows)
        self.coding = coding
        shown = ", ".join(str(r) for r in self.rows[:20])
        more = "" if len(self.rows) <= 20 else f" (+{len(self.rows) - 20} more)"
        super().__init__(f"labels inconsistent with {coding.value} coding at rows {shown}{more}")


class DimensionMismatch(EmvsError):
    pass


class Coding(enum.Enum):
    PLUS_MINUS_ONE = "pm1"
    ZERO_ONE = "01"

    @property
    def labels(self):
        return (-1, 1) if self is Coding.PLUS_MINUS_ONE else (0, 1)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Design matrix plus binary response with an explicit label coding."""

    x: np.ndarray
    y: np.ndarray
    coding: Coding

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.coding is other.coding
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
        )


@dataclass(frozen=True)
class SpikeSlabHyper:
    """Prior configuration: spike/slab variance scales, Beta(a, b) on theta,
    IG(nu/2, nu*lam/2) on sigma^2."""

    nu0: float
    nu1: float
    a: float = 1.0
    b: float = 1.0
    nu: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        for name in ("nu0", "nu1", "a", "b", "nu", "lam"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise EmvsError(f"{name} must be positive and finite, got {v!r}")
        if not self.nu0 < self.nu1:
            raise EmvsError(f"need nu0 < nu1, got nu0={self.nu0}, nu1={self.nu1}")


@dataclass(frozen=True, eq=False)
class EmState:
    beta: np.ndarray
    sigma: float
    theta: float
    p_star: np.ndarray
    d_star: np.ndarray
    iteration: int = 0


@dataclass(frozen=True, eq=False)
class FitResult:
    state: EmState
    converged: bool
    objective_trace: np.ndarray
    wall_time: float
    hyper: SpikeSlabHyper | None = None
    info: dict = field(default_factory=dict)

    @property
    def selected(self):
        return self.state.p_star > 0.5

    @property
    def beta(self):
        return self.state.beta

    @property
    def p_star(self):
        return self.state.p_star


def _as_float_matrix(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {x.shape}")
    return x


def column_stats(x_raw):
    """Column means and n-1 standard deviations, with the standardize checks."""
    x = _as_float_matrix(x_raw)
    if not np.all(np.isfinite(x)):
        raise NonFinite("design matrix")
    if x.shape[0] < 2:
        raise DimensionMismatch("need at least 2 rows to standardize")
    mean = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    for j in range(x.shape[1]):
        # exact-constant check; sd of a constant float column can be ~1e-17
        if sd[j] == 0.0 or np.all(x[:, j] == x[0, j]):
            raise ConstantColumn(j)
    return mean, sd


def standardize(x_raw):
    """Center every column and scale it to unit sample sd (n-1 denominator)."""
    x = _as_float_matrix(x_raw)
    mean, sd = column_stats(x)
    z = (x - mean) / sd
    # second pass removes the O(eps) residue of the first so the map is idempotent
    z = z - z.mean(axis=0)
    return z / z.std(axis=0, ddof=1)


def apply_standardization(x_raw, mean, sd):
    x = _as_float_matrix(x_raw)
    if x.shape[1] != len(mean):
        raise DimensionMismatch(f"expected {len(mean)} columns, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise NonFinite("design matrix")
    return (x - np.asarray(mean)) / np.asarray(sd)


def validate_dataset(d):
    """Return ``d`` unchanged if it satisfies every Dataset invariant."""
    x = np.asarray(d.x)
    y = np.asarray(d.y)
    if x.ndim != 2:
        raise DimensionMismatch(f"x must be 2-D, got shape {x.shape}")
    n, p = x.shape
    if y.ndim != 1 or y.shape[0] != n:
        raise DimensionMismatch(f"y has length {y.shape[0] if y.ndim else 0}, x has {n} rows")
    if n < 2 or p < 1:
        raise DimensionMismatch(f"need n >= 2 and p >= 1, got n={n}, p={p}")
    if not np.all(np.isfinite(x)):
        raise NonFinite("x")
    if not np.all(np.isfinite(y.astype(float))):
        raise NonFinite("y")
    bad = np.flatnonzero(~np.isin(y, d.coding.labels))
    if bad.size:
        raise LabelCodingMismatch(bad.tolist(), d.coding)
    return d


def make_dataset(x, y, coding=None):
    """Build a validated Dataset; the coding is detected from ``y`` when omitted."""
    x = _as_float_matrix(x)
    y = np.asarray(y)
    if coding is None:
        coding = detect_coding(y)
    y = np.asarray(np.rint(y), dtype=np.int64) if np.issubdtype(y.dtype, np.floating) else y.astype(np.int64)
    return validate_dataset(Dataset(x=x, y=y, coding=coding))


def detect_coding(y):
    vals = set(np.unique(np.asarray(y)).tolist())
    if vals <= {0, 1}:
        return Coding.ZERO_ONE
    if vals <= {-1, 1}:
        return Coding.PLUS_MINUS_ONE
    raise EmvsError(f"labels must be {{0,1}} or {{-1,1}}, found {sorted(vals)[:10]}")


def recode(d, target):
    """Relabel -1 <-> 0 and +1 <-> 1; x is shared, not copied."""
    validate_dataset(d)
    if d.coding is target:
        return d
    y = np.asarray(d.y)
    if target is Coding.ZERO_ONE:
        y_new = np.where(y == 1, 1, 0)
    else:
        y_new = np.where(y == 1, 1, -1)
    return replace(d, y=y_new.astype(np.int64), coding=target)
