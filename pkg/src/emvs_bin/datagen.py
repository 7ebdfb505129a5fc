"""Synthetic correlated designs and binary responses.

Design construction: the first ``p_gamma`` columns of a U(-1.5, 1.5) matrix
are the related variables. An orthonormal basis of the sample space is
built from the columns of that same matrix, split into ``ups`` (spanning the
related columns) and ``rest`` (its complement). Unrelated columns are drawn
from the space ``rest + ups @ T``; with ``T`` diagonal with entries ``lam``,
the inner-product correlation between any related and unrelated direction
is at most lam / sqrt(1 + lam^2) = rho.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .types import Coding, Dataset, EmvsError, validate_dataset


class SpecInvalid(EmvsError):
    pass


@dataclass(frozen=True)
class DesignSpec:
    n: int
    p: int
    p_gamma: int
    rho: float = 0.6
    seed: int = 0
    t_pattern: str = "full"  # "full": lam on every diagonal entry; "single": only T[0, 0]

    def validate(self):
        if self.n < 2 or self.p < 1 or self.p_gamma < 1:
            raise SpecInvalid("need n >= 2, p >= 1, p_gamma >= 1")
        if self.p_gamma > min(self.n, self.p):
            raise SpecInvalid(f"p_gamma={self.p_gamma} exceeds min(n, p)={min(self.n, self.p)}")
        if not 0.0 <= self.rho < 1.0:
            raise SpecInvalid(f"rho must lie in [0, 1), got {self.rho}")
        if self.t_pattern not in ("full", "single"):
            raise SpecInvalid(f"unknown t_pattern {self.t_pattern!r}")
        return self


@dataclass(frozen=True)
class ResponseSpec:
    beta_true: np.ndarray
    sigma_eps2: float = 3.0
    coding: Coding = Coding.PLUS_MINUS_ONE

    def __post_init__(self):
        b = np.asarray(self.beta_true, dtype=float)
        if not np.all(np.isfinite(b)):
            raise SpecInvalid("beta_true must be finite")
        if not self.sigma_eps2 >= 0:
            raise SpecInvalid("sigma_eps2 must be >= 0")
        object.__setattr__(self, "beta_true", b)


def correlation_scale(rho):
    """lam with lam^2 = rho^2 / (1 - rho^2)."""
    if not 0.0 <= rho < 1.0:
        raise SpecInvalid(f"rho must lie in [0, 1), got {rho}")
    return math.sqrt(rho * rho / (1.0 - rho * rho))


def orthonormal_basis(a, k, rng):
    """Orthonormal basis of R^n whose first ``k`` vectors span a[:, :k].

    Fill directions come from the later columns of ``a`` and then from
    Gaussian draws if ``a`` has fewer than n columns.
    """
    n = a.shape[0]
    fill = a[:, k:n]
    if fill.shape[1] < n - k:
        extra = rng.standard_normal((n, n - k - fill.shape[1]))
        fill = np.hstack([fill, extra])
    q, r = np.linalg.qr(np.hstack([a[:, :k], fill]))
    if np.min(np.abs(np.diag(r))) < 1e-10 * np.max(np.abs(np.diag(r))):
        raise SpecInvalid("basis completion is rank deficient")
    # second pass: classical re-orthogonalization
    q, _ = np.linalg.qr(q)
    return q[:, :k], q[:, k:]


def t_matrix(p_gamma, n_rest, lam, pattern="full"):
    t = np.zeros((p_gamma, n_rest))
    if pattern == "single":
        if n_rest:
            t[0, 0] = lam
    else:
        m = min(p_gamma, n_rest)
        t[np.arange(m), np.arange(m)] = lam
    return t


def generate_design(spec, return_parts=False):
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, p, k = spec.n, spec.p, spec.p_gamma
    a = rng.uniform(-1.5, 1.5, size=(n, p))
    related = a[:, :k]
    if p == k:
        return (related.copy(), {}) if return_parts else related.copy()
    ups, rest = orthonormal_basis(a, k, rng)
    lam = correlation_scale(spec.rho)
    span = rest + ups @ t_matrix(k, rest.shape[1], lam, spec.t_pattern)
    coef = rng.uniform(-1.0, 1.0, size=(rest.shape[1], p - k))
    unrelated = span @ coef
    norms = np.linalg.norm(unrelated, axis=0)
    norms[norms == 0] = 1.0
    unrelated *= np.mean(np.linalg.norm(related, axis=0)) / norms
    x = np.hstack([related, unrelated])
    if return_parts:
        return x, {"ups": ups, "rest": rest, "lam": lam, "span": span}
    return x


def generate_binary_response(x, spec, seed):
    """Continuous response X beta + N(0, s2) noise, squashed with the logistic
    function, then Bernoulli labels in ``spec.coding``."""
    x = np.asarray(x, dtype=float)
    if spec.beta_true.shape != (x.shape[1],):
        raise SpecInvalid(f"beta_true has length {spec.beta_true.shape[0]}, x has {x.shape[1]} columns")
    rng = np.random.default_rng(seed)
    y_cont = x @ spec.beta_true + math.sqrt(spec.sigma_eps2) * rng.standard_normal(x.shape[0])
    prob = expit(y_cont)
    hit = rng.uniform(size=x.shape[0]) < prob
    if spec.coding is Coding.ZERO_ONE:
        y = hit.astype(np.int64)
    else:
        y = np.where(hit, 1, -1).astype(np.int64)
    return validate_dataset(Dataset(x=x, y=y, coding=spec.coding))


def generate_replicate_betas(p, p_gamma, beta_max, seed):
    if p_gamma > p:
        raise SpecInvalid("p_gamma must not exceed p")
    if beta_max < 0:
        raise SpecInvalid("beta_max must be >= 0")
    rng = np.random.default_rng(seed)
    beta = np.zeros(p)
    beta[:p_gamma] = rng.uniform(-beta_max, beta_max, size=p_gamma)
    return beta


def max_cross_correlation(x, p_gamma):
    """max |sample correlation| between related and unrelated columns."""
    xc = x - x.mean(axis=0)
    xc = xc / np.linalg.norm(xc, axis=0)
    c = xc[:, :p_gamma].T @ xc[:, p_gamma:]
    return float(np.max(np.abs(c))) if c.size else 0.0
