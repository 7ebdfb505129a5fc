import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import ndtr

from emvs_bin.estep import e_step
from emvs_bin.probit import (
    BetaSolver,
    ProbitEmConfig,
    fit_probit,
    grr_solve,
    impute_latent,
    log_posterior_probit,
    m_step_beta,
    positive_truncated_mean,
    predict_probit,
)
from emvs_bin.sdca import SolverConfig
from emvs_bin.types import Coding, EmState, SpikeSlabHyper, make_dataset, standardize

SQRT_2_OVER_PI = float(mpmath.sqrt(2 / mpmath.pi))


def _tmean_mp(m):
    mpmath.mp.dps = 60
    m = mpmath.mpf(m)
    return m + mpmath.npdf(m) / mpmath.ncdf(m)


def test_impute_at_zero_mean():
    z = impute_latent(np.ones((2, 1)), np.array([1, 0]), np.zeros(1))
    assert z[0] == pytest.approx(SQRT_2_OVER_PI, rel=1e-14)
    assert z[0] == pytest.approx(0.7978845608, abs=1e-10)
    assert z[1] == -z[0]


@given(st.floats(-60, 30))
def test_truncated_mean_matches_mpmath(m):
    got = float(positive_truncated_mean(np.array([m]))[0])
    assert got == pytest.approx(float(_tmean_mp(m)), rel=1e-9)


@given(st.floats(-1e3, 1e3), st.sampled_from([0, 1]))
def test_sign_contract(m, label):
    z = impute_latent(np.ones((1, 1)), np.array([label]), np.array([m]))[0]
    assert np.isfinite(z)
    assert (z > 0) if label == 1 else (z < 0)


def test_truncated_mean_continuous_at_branch_switch():
    lo, hi = positive_truncated_mean(np.array([-5.0 - 1e-9, -5.0 + 1e-9]))
    assert abs(lo - hi) < 1e-8


def test_grr_forms_agree():
    rng = np.random.default_rng(0)
    d_star = rng.uniform(0.1, 5, 30)
    x, z = rng.standard_normal((12, 30)), rng.standard_normal(12)
    wide = grr_solve(x, z, d_star)
    direct = np.linalg.solve(x.T @ x + np.diag(d_star), x.T @ z)
    np.testing.assert_allclose(wide, direct, atol=1e-10)
    tall = grr_solve(x[:, :5], z, d_star[:5])
    np.testing.assert_allclose(tall, np.linalg.solve(x[:, :5].T @ x[:, :5] + np.diag(d_star[:5]),
                                                     x[:, :5].T @ z), atol=1e-12)


def test_grr_and_sdca_single_step_agree():
    rng = np.random.default_rng(1)
    x, y = rng.standard_normal((20, 5)), rng.integers(0, 2, 20)
    h = SpikeSlabHyper(nu0=0.05, nu1=100)
    st_ = e_step(EmState(0.3 * rng.standard_normal(5), 1.0, 0.5, None, None), h)
    z = impute_latent(x, y, st_.beta)
    b_grr, _, _ = m_step_beta(x, z, st_.d_star, BetaSolver.GRR, None)
    b_sdca, _, gap = m_step_beta(x, z, st_.d_star, BetaSolver.SDCA,
                                 SolverConfig(max_picks=200_000, gap_tolerance=1e-15, seed=2))
    assert np.max(np.abs(b_grr - b_sdca)) < 1e-5


def test_first_step_on_orthonormal_design():
    q, _ = np.linalg.qr(np.random.default_rng(3).standard_normal((8, 3)))
    y = np.array([1, 0, 1, 0, 1, 0, 1, 0])
    h = SpikeSlabHyper(nu0=0.01, nu1=100, a=1, b=3)
    fit = fit_probit(make_dataset(q, y, Coding.ZERO_ONE),
                     ProbitEmConfig(h, max_em_iterations=1, beta_init=np.zeros(3)))
    z = np.where(y == 1, SQRT_2_OVER_PI, -SQRT_2_OVER_PI)
    st0 = e_step(EmState(np.zeros(3), 1.0, 0.5, None, None), h)
    # X'X = I makes the system diagonal
    np.testing.assert_allclose(fit.beta, (q.T @ z) / (1.0 + st0.d_star), rtol=1e-12)


def test_predict_probit():
    x = np.array([[1.6449, 0.0], [0.0, 0.0], [-1.0, 2.0]])
    beta = np.array([1.0, 0.25])
    p = predict_probit(beta, x)
    assert p[0] == pytest.approx(0.95, abs=1e-4)
    np.testing.assert_array_equal(predict_probit(np.zeros(2), x), 0.5)
    np.testing.assert_allclose(p + predict_probit(beta, -x), 1.0, atol=1e-15)
    assert p[2] == pytest.approx(ndtr(-0.5))


def _probit_data(seed, n=60, p=15):
    rng = np.random.default_rng(seed)
    x = standardize(rng.standard_normal((n, p)))
    beta = np.zeros(p)
    beta[:2] = [1.5, -1.0]
    y = (x @ beta + rng.standard_normal(n) > 0).astype(int)
    return make_dataset(x, y, Coding.ZERO_ONE)


def test_grr_trace_nondecreasing():
    d = _probit_data(0)
    h = SpikeSlabHyper(nu0=0.005, nu1=100, a=1, b=15)
    fit = fit_probit(d, ProbitEmConfig(h, max_em_iterations=60))
    assert np.all(np.diff(fit.objective_trace) >= -1e-6)


def test_probit_selects_signal():
    d = _probit_data(1, n=150)
    h = SpikeSlabHyper(nu0=0.005, nu1=100, a=1, b=15)
    fit = fit_probit(d, ProbitEmConfig(h, max_em_iterations=200))
    assert {0, 1} <= set(np.flatnonzero(fit.selected))


def test_probit_accepts_pm1_and_is_deterministic():
    d = _probit_data(2)
    h = SpikeSlabHyper(nu0=0.005, nu1=100, b=15)
    dpm = make_dataset(d.x, 2 * d.y - 1)
    a, b = fit_probit(d, ProbitEmConfig(h)), fit_probit(dpm, ProbitEmConfig(h))
    np.testing.assert_array_equal(a.beta, b.beta)
    st_ = a.state
    assert np.isfinite(log_posterior_probit(d, st_, h))
