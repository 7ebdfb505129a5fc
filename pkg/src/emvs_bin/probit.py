"""EMVS for probit regression via latent-normal imputation.

Each iteration replaces the labels with the conditional means of the
Albert-Chib latent variables and solves a generalized ridge regression for
beta, either in closed form or with squared-loss SDCA. The latent variance
fixes sigma at 1, so only beta and theta are updated.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import log_ndtr, ndtr

from ._jit import njit
from .estep import e_step, log_mixture_prior, theta_update
from .logistic import ridge_start
from .sdca import Loss, PenalizedProblem, SolverConfig, solve_sdca_squared
from .types import (
    Coding,
    DimensionMismatch,
    EmState,
    EmvsError,
    FitResult,
    SpikeSlabHyper,
    recode,
    validate_dataset,
)

_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)
_CF_SWITCH = -5.0
_CF_TERMS = 80


class SingularSystem(EmvsError):
    pass


class BetaSolver(enum.Enum):
    GRR = "grr"
    SDCA = "sdca"


@dataclass(frozen=True)
class ProbitEmConfig:
    hyper: SpikeSlabHyper
    max_em_iterations: int = 100
    sdca: SolverConfig = field(default_factory=SolverConfig)
    beta_solver: BetaSolver = BetaSolver.GRR
    beta_init: np.ndarray | None = None  # None -> ridge-logistic Prox-SDCA start
    theta_init: float = 0.5
    convergence_tol: float = 1e-6
    init_penalty: float | None = None

    def __post_init__(self):
        if self.max_em_iterations < 1:
            raise EmvsError("max_em_iterations must be >= 1")
        if not 0 < self.theta_init < 1:
            raise EmvsError("theta_init must lie in (0, 1)")
        if not self.convergence_tol > 0:
            raise EmvsError("convergence_tol must be positive")


@njit
def _upper_tail_mean_cf(t, terms):
    # E[Z | Z > 0] for Z ~ N(-t, 1), t > 0 large:
    # 1 / (t + 2/(t + 3/(t + 4/(t + ...)))), no cancellation
    acc = t
    for k in range(terms, 1, -1):
        acc = t + k / acc
    return 1.0 / acc


def positive_truncated_mean(m):
    """E[Z | Z > 0] for Z ~ N(m, 1), elementwise and finite for every finite m."""
    m = np.asarray(m, dtype=float)
    out = np.empty_like(m)
    far = m < _CF_SWITCH
    near = ~far
    mn = m[near]
    out[near] = mn + np.exp(-0.5 * mn * mn - _LOG_SQRT_2PI - log_ndtr(mn))
    for idx in np.flatnonzero(far.ravel()):
        out.flat[idx] = _upper_tail_mean_cf(-float(m.flat[idx]), _CF_TERMS)
    return out


def impute_latent(x, y, beta):
    """Conditional means of the latent normals given the 0/1 labels."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y)
    m = x @ np.asarray(beta, dtype=float)
    pos = y == 1
    z = np.empty_like(m)
    z[pos] = positive_truncated_mean(m[pos])
    z[~pos] = -positive_truncated_mean(-m[~pos])
    return z


def grr_solve(x, z, d_star):
    """argmin 1/2 ||z - X b||^2 + 1/2 b' diag(d) b.

    Uses the p x p normal equations when p <= n and the equivalent n x n
    system  b = D^-1 X' (I + X D^-1 X')^-1 z  otherwise.
    """
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    d_star = np.asarray(d_star, dtype=float)
    try:
        if p <= n:
            a = x.T @ x
            a[np.diag_indices(p)] += d_star
            c = linalg.cho_factor(a, lower=True, check_finite=False)
            return linalg.cho_solve(c, x.T @ z, check_finite=False)
        xd = x / d_star
        k = xd @ x.T
        k[np.diag_indices(n)] += 1.0
        c = linalg.cho_factor(k, lower=True, check_finite=False)
        return xd.T @ linalg.cho_solve(c, z, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularSystem(f"generalized ridge system is not positive definite: {exc}") from exc


def log_likelihood_probit(x, y01, beta):
    m = x @ beta
    return float(np.sum(np.where(y01 == 1, log_ndtr(m), log_ndtr(-m))))


def log_posterior_probit(d, state, h):
    """Observed-data log posterior of (beta, theta) with sigma fixed at 1."""
    y = d.y if d.coding is Coding.ZERO_ONE else np.where(d.y == 1, 1, 0)
    with np.errstate(divide="ignore"):
        prior_theta = (h.a - 1.0) * np.log(state.theta) + (h.b - 1.0) * np.log1p(-state.theta)
    return (
        log_likelihood_probit(d.x, y, state.beta)
        + log_mixture_prior(state.beta, 1.0, state.theta, h)
        + prior_theta
    )


def predict_probit(beta, x_new):
    beta = np.asarray(beta, dtype=float)
    x_new = np.atleast_2d(np.asarray(x_new, dtype=float))
    if x_new.shape[1] != beta.shape[0]:
        raise DimensionMismatch(f"x_new has {x_new.shape[1]} columns, beta has {beta.shape[0]}")
    return ndtr(x_new @ beta)


def m_step_beta(x, z, d_star, solver, sdca, alpha0=None, rng=None, backend=None):
    """One beta update; returns (beta, alpha, gap) with alpha/gap None for GRR."""
    if solver is BetaSolver.GRR:
        return grr_solve(x, z, d_star), None, None
    n = x.shape[0]
    prob = PenalizedProblem(x, z, d_star / n, Loss.SQUARED)
    out = solve_sdca_squared(prob, sdca, alpha0=alpha0, rng=rng, backend=backend)
    return out.w, out.alpha, out.duality_gap


def fit_probit(d, cfg, backend=None):
    """Run probit EMVS on ``d`` (recoded to 0/1 if needed)."""
    t_start = time.perf_counter()
    d = validate_dataset(d)
    if d.coding is not Coding.ZERO_ONE:
        d = recode(d, Coding.ZERO_ONE)
    x, y = d.x, d.y
    n, p = x.shape
    h = cfg.hyper
    rng = np.random.default_rng(cfg.sdca.seed)

    if cfg.beta_init is None:
        y_pm = np.where(y == 1, 1.0, -1.0)
        beta = ridge_start(x, y_pm, cfg.sdca, rng, cfg.init_penalty, backend).w
    else:
        beta = np.asarray(cfg.beta_init, dtype=float).copy()
        if beta.shape != (p,):
            raise DimensionMismatch(f"beta_init has shape {beta.shape}, expected ({p},)")

    state = e_step(EmState(beta, 1.0, cfg.theta_init, None, None, 0), h)
    trace = [log_posterior_probit(d, state, h)]
    gaps = []
    alpha = None
    converged = False
    for k in range(cfg.max_em_iterations):
        z = impute_latent(x, y, state.beta)
        beta_new, alpha, gap = m_step_beta(
            x, z, state.d_star, cfg.beta_solver, cfg.sdca, alpha0=alpha, rng=rng, backend=backend
        )
        if gap is not None:
            gaps.append(gap)
        theta_new = theta_update(state.p_star, h)
        delta = max(float(np.max(np.abs(beta_new - state.beta))), abs(theta_new - state.theta))
        state = e_step(EmState(beta_new, 1.0, theta_new, None, None, k + 1), h)
        trace.append(log_posterior_probit(d, state, h))
        if delta < cfg.convergence_tol:
            converged = True
            break
    return FitResult(
        state=state,
        converged=converged,
        objective_trace=np.asarray(trace),
        wall_time=time.perf_counter() - t_start,
        hyper=h,
        info={"solver_gaps": np.asarray(gaps), "model": "probit", "beta_solver": cfg.beta_solver.value},
    )
