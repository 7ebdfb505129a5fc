"""Stochastic dual coordinate ascent for per-coordinate ridge penalties.

Both solvers minimize

    P(w) = (1/n) sum_i phi_i(x_i . w) + 1/2 sum_j lam_j w_j^2

with phi_i(a) = log(1 + exp(-y_i a)) (logistic) or 1/2 (a - z_i)^2 (squared).
The dual variables follow the usual convention w(alpha) = sum_i alpha_i x_i /
(lam n), so logistic duals satisfy alpha_i y_i in [0, 1].

The logistic solver is the closed-form-step Prox-SDCA variant: per pick it
moves alpha_i a fraction ``s`` of the way toward -phi'(x_i . w), with ``s``
from the 1/4-smoothness bound of the logistic loss. The squared-loss solver
maximizes the dual exactly in the picked coordinate.

Pick sequences are drawn up front from a PCG64 generator, so the numba and
numpy kernels see identical picks and a seed fixes the result.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _jit
from ._jit import njit
from .types import DimensionMismatch, EmvsError

log = logging.getLogger(__name__)

CLAMP_EPS = 1e-12


class Loss(enum.Enum):
    LOGISTIC = "logistic"
    SQUARED = "squared"


@dataclass(frozen=True, eq=False)
class PenalizedProblem:
    x: np.ndarray
    targets: np.ndarray
    penalty: np.ndarray
    loss: Loss

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=float)
        t = np.asarray(self.targets, dtype=float)
        pen = np.asarray(self.penalty, dtype=float)
        if x.ndim != 2:
            raise DimensionMismatch(f"x must be 2-D, got {x.shape}")
        n, p = x.shape
        if t.shape != (n,):
            raise DimensionMismatch(f"targets length {t.shape} != n={n}")
        if pen.shape != (p,):
            raise DimensionMismatch(f"penalty length {pen.shape} != p={p}")
        if not np.all(np.isfinite(pen)) or np.any(pen <= 0):
            raise EmvsError("penalty weights must be positive and finite")
        if self.loss is Loss.LOGISTIC and not np.all(np.abs(t) == 1):
            raise EmvsError("logistic targets must be coded -1/+1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "targets", t)
        object.__setattr__(self, "penalty", pen)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]


@dataclass(frozen=True)
class SolverConfig:
    """``max_picks`` counts single dual-coordinate updates, not epochs."""

    max_picks: int = 5000
    seed: int = 0
    averaging_start: int | None = None
    gap_tolerance: float = 1e-8
    check_every: int | None = None

    def __post_init__(self):
        if self.max_picks < 1:
            raise EmvsError("max_picks must be >= 1")
        t0 = self.t0
        if not 0 <= t0 < self.max_picks:
            raise EmvsError(f"averaging_start must lie in [0, {self.max_picks}), got {t0}")
        if not self.gap_tolerance >= 0:
            raise EmvsError("gap_tolerance must be >= 0")

    @property
    def t0(self):
        return self.max_picks // 2 if self.averaging_start is None else int(self.averaging_start)


@dataclass(frozen=True, eq=False)
class SolverOutput:
    w: np.ndarray
    alpha: np.ndarray
    primal_value: float
    dual_value: float
    duality_gap: float
    picks_used: int
    w_last: np.ndarray
    stopped_early: bool = False
    clamped: int = 0


# --------------------------------------------------------------------------
# scalar helpers


@njit
def _log1pexp(a):
    if a > 0.0:
        return a + math.log1p(math.exp(-a))
    return math.log1p(math.exp(a))


@njit
def _xlogx(b):
    if b <= 0.0:
        return 0.0
    return b * math.log(b)


@njit
def _sigmoid(a):
    if a >= 0.0:
        return 1.0 / (1.0 + math.exp(-a))
    e = math.exp(a)
    return e / (1.0 + e)


# --------------------------------------------------------------------------
# numba kernels; arrays are updated in place (alpha, w)


@njit
def _logistic_gap_nb(xt, alpha, w):
    n, p = xt.shape
    total = 0.0
    for i in range(n):
        m = 0.0
        for j in range(p):
            m += xt[i, j] * w[j]
        b = -alpha[i]
        total += _log1pexp(m) + _xlogx(b) + _xlogx(1.0 - b) + alpha[i] * m
    return total / n


@njit
def _prox_sdca_logistic_nb(xt, inv_ln, sqn, alpha, w, picks, t0, tol, check_every, eps):
    n, p = xt.shape
    T = picks.shape[0]
    wsum = np.zeros(p)
    clamped = 0
    for t in range(T):
        if t >= t0:
            for j in range(p):
                wsum[j] += w[j]
        i = picks[t]
        pv = 0.0
        for j in range(p):
            pv += xt[i, j] * w[j]
        a = alpha[i]
        q = -_sigmoid(pv) - a
        if q != 0.0:
            b = -a
            num = _log1pexp(pv) + _xlogx(b) + _xlogx(1.0 - b) + pv * a + 2.0 * q * q
            s = num / (q * q * (4.0 + sqn[i]))
            if s > 1.0:
                s = 1.0
            b_new = -(a + s * q)
            if b_new < eps:
                b_new = eps
                clamped += 1
            elif b_new > 1.0 - eps:
                b_new = 1.0 - eps
                clamped += 1
            da = -b_new - a
            alpha[i] = -b_new
            for j in range(p):
                w[j] += da * inv_ln[j] * xt[i, j]
        if check_every > 0 and (t + 1) % check_every == 0 and t + 1 < T:
            if _logistic_gap_nb(xt, alpha, w) <= tol:
                return wsum, t + 1, clamped, True
    return wsum, T, clamped, False


@njit
def _squared_gap_nb(x, z, alpha, w):
    n, p = x.shape
    total = 0.0
    for i in range(n):
        m = 0.0
        for j in range(p):
            m += x[i, j] * w[j]
        r = m - z[i] + alpha[i]
        total += 0.5 * r * r
    return total / n


@njit
def _sdca_squared_nb(x, z, inv_ln, sqn, alpha, w, picks, t0, tol, check_every):
    n, p = x.shape
    T = picks.shape[0]
    wsum = np.zeros(p)
    for t in range(T):
        if t >= t0:
            for j in range(p):
                wsum[j] += w[j]
        i = picks[t]
        m = 0.0
        for j in range(p):
            m += x[i, j] * w[j]
        da = (z[i] - m - alpha[i]) / (1.0 + sqn[i])
        alpha[i] += da
        for j in range(p):
            w[j] += da * inv_ln[j] * x[i, j]
        if check_every > 0 and (t + 1) % check_every == 0 and t + 1 < T:
            if _squared_gap_nb(x, z, alpha, w) <= tol:
                return wsum, t + 1, 0, True
    return wsum, T, 0, False


# --------------------------------------------------------------------------
# numpy kernels, same contract


def _logistic_gap_np(xt, alpha, w):
    m = xt @ w
    b = -alpha
    with np.errstate(divide="ignore", invalid="ignore"):
        phistar = np.where(b > 0, b * np.log(np.where(b > 0, b, 1.0)), 0.0) + np.where(
            b < 1, (1 - b) * np.log(np.where(b < 1, 1 - b, 1.0)), 0.0
        )
    return float(np.mean(np.logaddexp(0.0, m) + phistar + alpha * m))


def _prox_sdca_logistic_np(xt, inv_ln, sqn, alpha, w, picks, t0, tol, check_every, eps):
    n, p = xt.shape
    T = picks.shape[0]
    wsum = np.zeros(p)
    clamped = 0
    xs = xt * inv_ln
    for t in range(T):
        if t >= t0:
            wsum += w
        i = picks[t]
        pv = float(xt[i] @ w)
        a = alpha[i]
        q = -_sigmoid_py(pv) - a
        if q != 0.0:
            b = -a
            num = _log1pexp_py(pv) + _xlogx_py(b) + _xlogx_py(1.0 - b) + pv * a + 2.0 * q * q
            s = min(1.0, num / (q * q * (4.0 + sqn[i])))
            b_new = -(a + s * q)
            if b_new < eps:
                b_new = eps
                clamped += 1
            elif b_new > 1.0 - eps:
                b_new = 1.0 - eps
                clamped += 1
            da = -b_new - a
            alpha[i] = -b_new
            w += da * xs[i]
        if check_every > 0 and (t + 1) % check_every == 0 and t + 1 < T:
            if _logistic_gap_np(xt, alpha, w) <= tol:
                return wsum, t + 1, clamped, True
    return wsum, T, clamped, False


def _sdca_squared_np(x, z, inv_ln, sqn, alpha, w, picks, t0, tol, check_every):
    n, p = x.shape
    T = picks.shape[0]
    wsum = np.zeros(p)
    xs = x * inv_ln
    for t in range(T):
        if t >= t0:
            wsum += w
        i = picks[t]
        da = (z[i] - float(x[i] @ w) - alpha[i]) / (1.0 + sqn[i])
        alpha[i] += da
        w += da * xs[i]
        if check_every > 0 and (t + 1) % check_every == 0 and t + 1 < T:
            r = x @ w - z + alpha
            if 0.5 * float(r @ r) / n <= tol:
                return wsum, t + 1, 0, True
    return wsum, T, 0, False


def _log1pexp_py(a):
    return a + math.log1p(math.exp(-a)) if a > 0 else math.log1p(math.exp(a))


def _xlogx_py(b):
    return b * math.log(b) if b > 0 else 0.0


def _sigmoid_py(a):
    if a >= 0:
        return 1.0 / (1.0 + math.exp(-a))
    e = math.exp(a)
    return e / (1.0 + e)


KERNELS = {
    "numba": {"logistic": _prox_sdca_logistic_nb, "squared": _sdca_squared_nb},
    "numpy": {"logistic": _prox_sdca_logistic_np, "squared": _sdca_squared_np},
}


def _kernel(loss, backend):
    backend = backend or _jit.backend_name()
    if backend == "numba" and not _jit.HAVE_NUMBA:
        backend = "numpy"
    return KERNELS[backend][loss]


# --------------------------------------------------------------------------
# objective values


def w_of_alpha(prob, alpha):
    return (prob.x.T @ np.asarray(alpha, dtype=float)) / (prob.penalty * prob.n)


def primal_value(prob, w):
    w = np.asarray(w, dtype=float)
    m = prob.x @ w
    if prob.loss is Loss.LOGISTIC:
        loss = np.mean(np.logaddexp(0.0, -prob.targets * m))
    else:
        loss = 0.5 * np.mean((m - prob.targets) ** 2)
    return float(loss + 0.5 * np.sum(prob.penalty * w * w))


def dual_value(prob, alpha):
    alpha = np.asarray(alpha, dtype=float)
    wa = w_of_alpha(prob, alpha)
    if prob.loss is Loss.LOGISTIC:
        b = alpha * prob.targets
        if np.any(b < 0) or np.any(b > 1):
            return -np.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = -np.where(b > 0, b * np.log(np.where(b > 0, b, 1.0)), 0.0) - np.where(
                b < 1, (1 - b) * np.log(np.where(b < 1, 1 - b, 1.0)), 0.0
            )
        conj = np.mean(ent)
    else:
        conj = np.mean(alpha * prob.targets - 0.5 * alpha * alpha)
    return float(conj - 0.5 * np.sum(prob.penalty * wa * wa))


def duality_gap(prob, w, alpha):
    """P(w) - D(alpha); nonnegative for any dual-feasible alpha."""
    return primal_value(prob, w) - dual_value(prob, alpha)


# --------------------------------------------------------------------------
# drivers


def _prepare(prob, cfg, alpha0, rng):
    n = prob.n
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    picks = rng.integers(0, n, size=cfg.max_picks, dtype=np.int64)
    inv_ln = 1.0 / (prob.penalty * n)
    sqn = (prob.x * prob.x) @ inv_ln
    alpha = np.zeros(n) if alpha0 is None else np.array(alpha0, dtype=float)
    if alpha.shape != (n,):
        raise DimensionMismatch(f"warm-start alpha has shape {alpha.shape}, expected ({n},)")
    check_every = n if cfg.check_every is None else int(cfg.check_every)
    if cfg.gap_tolerance <= 0:
        check_every = 0
    return picks, inv_ln, sqn, alpha, check_every


def _finish(prob, cfg, alpha, w, wsum, used, clamped, early):
    if early:
        w_out = w.copy()
    else:
        w_out = wsum / (cfg.max_picks - cfg.t0)
    pv = primal_value(prob, w_out)
    dv = dual_value(prob, alpha)
    if clamped:
        log.info("dual clamped to the open unit interval %d times", clamped)
    return SolverOutput(
        w=w_out,
        alpha=alpha,
        primal_value=pv,
        dual_value=dv,
        duality_gap=pv - dv,
        picks_used=int(used),
        w_last=w.copy(),
        stopped_early=bool(early),
        clamped=int(clamped),
    )


def solve_prox_sdca_logistic(prob, cfg, alpha0=None, rng=None, backend=None):
    """Prox-SDCA for L2-penalized logistic regression.

    ``alpha0`` warm-starts the duals (standard convention, alpha_i y_i in
    [0, 1]); ``rng`` overrides the generator built from ``cfg.seed``. Returns
    the average of the iterates w^(T0) ... w^(T-1) unless the duality gap of
    the running iterate drops below ``cfg.gap_tolerance`` first, in which
    case that iterate is returned.
    """
    if prob.loss is not Loss.LOGISTIC:
        raise EmvsError("solve_prox_sdca_logistic needs a logistic problem")
    picks, inv_ln, sqn, alpha, check_every = _prepare(prob, cfg, alpha0, rng)
    y = prob.targets
    b0 = alpha * y
    if np.any(b0 < 0) or np.any(b0 > 1):
        raise EmvsError("warm-start alpha is not dual feasible (need alpha_i y_i in [0, 1])")
    # rows flipped to -y_i x_i; duals carried as -alpha_i y_i in [-1, 0]
    xt = np.ascontiguousarray(-y[:, None] * prob.x)
    a_t = -b0
    w = (xt.T @ a_t) * inv_ln
    kern = _kernel("logistic", backend)
    wsum, used, clamped, early = kern(
        xt, inv_ln, sqn, a_t, w, picks, cfg.t0, float(cfg.gap_tolerance), check_every, CLAMP_EPS
    )
    alpha = -a_t * y
    return _finish(prob, cfg, alpha, w, wsum, used, clamped, early)


def solve_sdca_squared(prob, cfg, alpha0=None, rng=None, backend=None):
    """SDCA for generalized ridge regression with exact per-coordinate dual steps."""
    if prob.loss is not Loss.SQUARED:
        raise EmvsError("solve_sdca_squared needs a squared-loss problem")
    picks, inv_ln, sqn, alpha, check_every = _prepare(prob, cfg, alpha0, rng)
    w = (prob.x.T @ alpha) * inv_ln
    kern = _kernel("squared", backend)
    wsum, used, clamped, early = kern(
        prob.x, prob.targets, inv_ln, sqn, alpha, w, picks, cfg.t0, float(cfg.gap_tolerance), check_every
    )
    return _finish(prob, cfg, alpha, w, wsum, used, clamped, early)


def solve(prob, cfg, alpha0=None, rng=None, backend=None):
    if prob.loss is Loss.LOGISTIC:
        return solve_prox_sdca_logistic(prob, cfg, alpha0=alpha0, rng=rng, backend=backend)
    return solve_sdca_squared(prob, cfg, alpha0=alpha0, rng=rng, backend=backend)
