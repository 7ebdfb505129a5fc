"""SSVS baseline for probit data: Gibbs sampling with Metropolis steps on gamma.

A sweep imputes the latent normals z given beta, runs single-flip Metropolis
updates on the inclusion vector with beta integrated out, then draws beta
given (gamma, z). With nu0 = 0 excluded coefficients are exactly zero and the
marginal of z only involves the active columns.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import betaln
from scipy.stats import truncnorm

from . import _jit
from ._jit import njit
from .types import Coding, EmvsError, recode, validate_dataset

_LOG_2PI = math.log(2.0 * math.pi)


class ActiveSetOverflow(UserWarning):
    """Active set larger than n; the marginal is still well defined."""


@dataclass(frozen=True)
class SsvsConfig:
    nu1: float = 1000.0
    nu0: float = 0.0
    a: float = 1.0
    b: float = 1.0
    iterations: int = 1000
    burn_in: int = 0
    metropolis_steps_per_sweep: int = 1000
    seed: int = 0
    time_budget: float | None = None  # seconds; stops early once exceeded
    keep_trace: bool = False

    def __post_init__(self):
        if not self.nu1 > 0 or self.nu0 < 0 or self.nu0 >= self.nu1:
            raise EmvsError("need 0 <= nu0 < nu1")
        if self.a <= 0 or self.b <= 0:
            raise EmvsError("beta-binomial a, b must be positive")
        if self.iterations < 0 or self.burn_in < 0:
            raise EmvsError("iterations and burn_in must be >= 0")
        if self.iterations > 0 and self.burn_in >= self.iterations:
            raise EmvsError("burn_in must be smaller than iterations")
        if self.metropolis_steps_per_sweep < 1:
            raise EmvsError("metropolis_steps_per_sweep must be >= 1")


@dataclass(frozen=True, eq=False)
class SsvsResult:
    gamma_inclusion_freq: np.ndarray
    acceptance_rate: float
    sweeps: int
    accepted_per_sweep: np.ndarray
    proposed_per_sweep: int
    kept_sweeps: int
    overflow_sweeps: int
    wall_time: float
    gamma_trace: np.ndarray | None = None
    beta_last: np.ndarray | None = None

    @property
    def selected(self):
        return self.gamma_inclusion_freq > 0.5


def log_model_prior(k, p, a, b):
    """log pi(gamma) with theta ~ Beta(a, b) integrated out (up to a constant)."""
    return betaln(a + k, b + p - k)


def marginal_log_likelihood(z, gamma, nu1, x, nu0=0.0):
    """log N(z; 0, I + X diag(v) X') with v_j = nu1 if gamma_j else nu0."""
    z = np.asarray(z, dtype=float)
    gamma = np.asarray(gamma, dtype=bool)
    x = np.asarray(x, dtype=float)
    n = z.shape[0]
    v = np.where(gamma, nu1, nu0)
    cols = np.flatnonzero(v > 0)
    zz = float(z @ z)
    if cols.size == 0:
        return -0.5 * n * _LOG_2PI - 0.5 * zz
    xs = x[:, cols] * np.sqrt(v[cols])
    k = cols.size
    if k <= n:
        m = xs.T @ xs
        m[np.diag_indices(k)] += 1.0
        c = linalg.cholesky(m, lower=True)
        logdet = 2.0 * np.sum(np.log(np.diag(c)))
        u = linalg.solve_triangular(c, xs.T @ z, lower=True)
        quad = zz - float(u @ u)
    else:
        m = xs @ xs.T
        m[np.diag_indices(n)] += 1.0
        c = linalg.cholesky(m, lower=True)
        logdet = 2.0 * np.sum(np.log(np.diag(c)))
        u = linalg.solve_triangular(c, z, lower=True)
        quad = float(u @ u)
    return -0.5 * n * _LOG_2PI - 0.5 * logdet - 0.5 * quad


# --------------------------------------------------------------------------
# point-mass Metropolis kernels; active-set marginal only needs X_S'X_S, X_S'z


@njit
def _active_logml_nb(x, xtz, zz, gamma, nu1):
    n, p = x.shape
    k = 0
    for j in range(p):
        if gamma[j]:
            k += 1
    if k == 0:
        return -0.5 * n * math.log(2.0 * math.pi) - 0.5 * zz
    idx = np.empty(k, dtype=np.int64)
    c = 0
    for j in range(p):
        if gamma[j]:
            idx[c] = j
            c += 1
    # M = I + nu1 X_S'X_S, then Cholesky in place
    m = np.empty((k, k))
    for a in range(k):
        ja = idx[a]
        for b in range(a + 1):
            jb = idx[b]
            s = 0.0
            for i in range(n):
                s += x[i, ja] * x[i, jb]
            m[a, b] = nu1 * s
        m[a, a] += 1.0
    logdet = 0.0
    for a in range(k):
        for b in range(a + 1):
            s = m[a, b]
            for c2 in range(b):
                s -= m[a, c2] * m[b, c2]
            if a == b:
                if s <= 0.0:
                    return -np.inf
                m[a, a] = math.sqrt(s)
                logdet += 2.0 * math.log(m[a, a])
            else:
                m[a, b] = s / m[b, b]
    # u = L^-1 sqrt(nu1) X_S'z
    uu = 0.0
    u = np.empty(k)
    for a in range(k):
        s = math.sqrt(nu1) * xtz[idx[a]]
        for b in range(a):
            s -= m[a, b] * u[b]
        u[a] = s / m[a, a]
        uu += u[a] * u[a]
    return -0.5 * n * math.log(2.0 * math.pi) - 0.5 * logdet - 0.5 * (zz - uu)


@njit
def _lbeta(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


@njit
def _metropolis_nb(x, xtz, zz, gamma, nu1, a, b, props, logu):
    p = x.shape[1]
    k = 0
    for j in range(p):
        if gamma[j]:
            k += 1
    cur = _active_logml_nb(x, xtz, zz, gamma, nu1) + _lbeta(a + k, b + p - k)
    accepted = 0
    for s in range(props.shape[0]):
        j = props[s]
        gamma[j] = not gamma[j]
        k_new = k + 1 if gamma[j] else k - 1
        new = _active_logml_nb(x, xtz, zz, gamma, nu1) + _lbeta(a + k_new, b + p - k_new)
        if logu[s] < new - cur:
            cur = new
            k = k_new
            accepted += 1
        else:
            gamma[j] = not gamma[j]
    return accepted


def _metropolis_np(x, xtz, zz, gamma, nu1, a, b, props, logu):
    p = x.shape[1]
    n = x.shape[0]

    def score(g):
        cols = np.flatnonzero(g)
        k = cols.size
        if k == 0:
            ml = -0.5 * n * _LOG_2PI - 0.5 * zz
        else:
            xs = x[:, cols]
            m = nu1 * (xs.T @ xs)
            m[np.diag_indices(k)] += 1.0
            try:
                c = np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                return -np.inf
            u = linalg.solve_triangular(c, math.sqrt(nu1) * xtz[cols], lower=True)
            ml = -0.5 * n * _LOG_2PI - np.sum(np.log(np.diag(c))) - 0.5 * (zz - float(u @ u))
        return ml + betaln(a + k, b + p - k)

    cur = score(gamma)
    accepted = 0
    for s in range(props.shape[0]):
        j = props[s]
        gamma[j] = not gamma[j]
        new = score(gamma)
        if logu[s] < new - cur:
            cur = new
            accepted += 1
        else:
            gamma[j] = not gamma[j]
    return accepted


METROPOLIS_KERNELS = {"numba": _metropolis_nb, "numpy": _metropolis_np}


def _metropolis_general(x, z, gamma, cfg, props, logu):
    # nu0 > 0: every column enters the marginal, so use the dense routine
    p = x.shape[1]
    k = int(gamma.sum())
    cur = marginal_log_likelihood(z, gamma, cfg.nu1, x, cfg.nu0) + log_model_prior(k, p, cfg.a, cfg.b)
    accepted = 0
    for s in range(props.shape[0]):
        j = props[s]
        gamma[j] = not gamma[j]
        k_new = k + (1 if gamma[j] else -1)
        new = marginal_log_likelihood(z, gamma, cfg.nu1, x, cfg.nu0) + log_model_prior(k_new, p, cfg.a, cfg.b)
        if logu[s] < new - cur:
            cur, k = new, k_new
            accepted += 1
        else:
            gamma[j] = not gamma[j]
    return accepted


def sample_latent(x, y01, beta, rng):
    """Draw z_i ~ N(x_i'beta, 1) truncated to the label-consistent side of 0."""
    m = x @ beta
    lo = np.where(y01 == 1, -m, -np.inf)
    hi = np.where(y01 == 1, np.inf, -m)
    z = truncnorm.rvs(lo, hi, loc=m, scale=1.0, random_state=rng)
    z = np.asarray(z, dtype=float)
    tiny = np.finfo(float).tiny
    return np.where(y01 == 1, np.maximum(z, tiny), np.minimum(z, -tiny))


def sample_beta(x, z, gamma, nu1, nu0, rng):
    p = x.shape[1]
    beta = np.zeros(p)
    v = np.where(gamma, nu1, nu0)
    cols = np.flatnonzero(v > 0)
    e = rng.standard_normal(cols.size)
    if cols.size == 0:
        return beta
    xs = x[:, cols]
    prec = xs.T @ xs
    prec[np.diag_indices(cols.size)] += 1.0 / v[cols]
    c = linalg.cholesky(prec, lower=True)
    mean = linalg.cho_solve((c, True), xs.T @ z)
    beta[cols] = mean + linalg.solve_triangular(c.T, e, lower=False)
    return beta


def run_ssvs_probit(d, cfg, backend=None):
    t_start = time.perf_counter()
    d = validate_dataset(d)
    if d.coding is not Coding.ZERO_ONE:
        d = recode(d, Coding.ZERO_ONE)
    x = np.ascontiguousarray(d.x, dtype=float)
    y = d.y
    n, p = x.shape
    rng = np.random.default_rng(cfg.seed)
    backend = backend or _jit.backend_name()
    if backend == "numba" and not _jit.HAVE_NUMBA:
        backend = "numpy"
    kernel = METROPOLIS_KERNELS[backend]

    gamma = np.zeros(p, dtype=np.bool_)
    beta = np.zeros(p)
    counts = np.zeros(p)
    accepted = []
    trace = [] if cfg.keep_trace else None
    overflow = 0
    steps = cfg.metropolis_steps_per_sweep
    sweeps = 0
    kept = 0
    for sweep in range(cfg.iterations):
        if cfg.time_budget is not None and time.perf_counter() - t_start >= cfg.time_budget:
            break
        z = sample_latent(x, y, beta, rng)
        props = rng.integers(0, p, size=steps, dtype=np.int64)
        logu = np.log(rng.uniform(size=steps))
        if cfg.nu0 == 0.0:
            xtz = x.T @ z
            acc = kernel(x, xtz, float(z @ z), gamma, cfg.nu1, cfg.a, cfg.b, props, logu)
        else:
            acc = _metropolis_general(x, z, gamma, cfg, props, logu)
        accepted.append(acc)
        if gamma.sum() > n:
            overflow += 1
        beta = sample_beta(x, z, gamma, cfg.nu1, cfg.nu0, rng)
        sweeps += 1
        if sweep >= cfg.burn_in:
            counts += gamma
            kept += 1
            if trace is not None:
                trace.append(gamma.copy())
    if overflow:
        warnings.warn(f"active set exceeded n in {overflow} sweeps", ActiveSetOverflow, stacklevel=2)
    accepted = np.asarray(accepted, dtype=np.int64)
    proposed = steps * sweeps
    return SsvsResult(
        gamma_inclusion_freq=counts / kept if kept else np.zeros(p),
        acceptance_rate=float(accepted.sum() / proposed) if proposed else 0.0,
        sweeps=sweeps,
        accepted_per_sweep=accepted,
        proposed_per_sweep=steps,
        kept_sweeps=kept,
        overflow_sweeps=overflow,
        wall_time=time.perf_counter() - t_start,
        gamma_trace=np.asarray(trace) if trace is not None else None,
        beta_last=beta,
    )
