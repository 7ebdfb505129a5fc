import warnings

import numpy as np
import pytest

from emvs_bin import _jit
from emvs_bin.ssvs import (
    ActiveSetOverflow,
    SsvsConfig,
    log_model_prior,
    marginal_log_likelihood,
    run_ssvs_probit,
)
from emvs_bin.types import Coding, EmvsError, make_dataset
from oracles import batch_means_se, probit_gamma_posterior_p2

LOG_2PI = np.log(2 * np.pi)


def toy_p2(seed=0, n=50):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2))
    x = (x - x.mean(0)) / x.std(0, ddof=1)
    y = (1.5 * x[:, 0] + rng.standard_normal(n) > 0).astype(int)
    return make_dataset(x, y, Coding.ZERO_ONE)


def test_empty_model_marginal():
    z = np.array([0.3, -1.2, 2.0])
    got = marginal_log_likelihood(z, np.zeros(2, bool), 1000.0, np.ones((3, 2)))
    assert got == pytest.approx(-1.5 * LOG_2PI - 0.5 * z @ z, rel=1e-15)


def test_single_orthonormal_column_marginal():
    rng = np.random.default_rng(1)
    q, _ = np.linalg.qr(rng.standard_normal((6, 2)))
    z, nu1 = rng.standard_normal(6), 50.0
    u = q[:, 0]
    expected = -3 * LOG_2PI - 0.5 * np.log1p(nu1) - 0.5 * (z @ z - (u @ z) ** 2 * nu1 / (1 + nu1))
    assert marginal_log_likelihood(z, np.array([True, False]), nu1, q) == pytest.approx(expected, rel=1e-13)


def _dense_logml(z, x, v):
    from scipy.stats import multivariate_normal

    cov = np.eye(len(z)) + (x * v) @ x.T
    return multivariate_normal(np.zeros(len(z)), cov).logpdf(z)


def test_duplicate_column_changes_marginal():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((7, 3))
    x[:, 2] = x[:, 0]
    z = rng.standard_normal(7)
    one = marginal_log_likelihood(z, np.array([True, False, False]), 10.0, x)
    both = marginal_log_likelihood(z, np.array([True, False, True]), 10.0, x)
    assert one != both
    assert both == pytest.approx(_dense_logml(z, x, np.array([10.0, 0, 10.0])), rel=1e-12)


@pytest.mark.parametrize("nu0", [0.0, 0.3])
def test_marginal_wide_and_tall_forms(nu0):
    rng = np.random.default_rng(3)
    x, z = rng.standard_normal((4, 9)), rng.standard_normal(4)
    g = np.array([1, 1, 1, 1, 1, 1, 0, 0, 1], bool)
    v = np.where(g, 20.0, nu0)
    assert marginal_log_likelihood(z, g, 20.0, x, nu0) == pytest.approx(_dense_logml(z, x, v), rel=1e-12)


def test_model_prior_is_beta_binomial():
    # a = b = 1: every model size equally likely overall
    p = 4
    from math import comb

    mass = [comb(p, k) * np.exp(log_model_prior(k, p, 1.0, 1.0)) for k in range(p + 1)]
    np.testing.assert_allclose(mass, mass[0])


def test_chain_matches_enumeration():
    d = toy_p2()
    post = probit_gamma_posterior_p2(d.x, d.y, 1000.0, 1.0, 1.0)
    exact = np.array([post[(1, 0)] + post[(1, 1)], post[(0, 1)] + post[(1, 1)]])
    res = run_ssvs_probit(d, SsvsConfig(nu1=1000.0, iterations=2200, burn_in=200, metropolis_steps_per_sweep=10,
                                        seed=5, keep_trace=True))
    freq = res.gamma_inclusion_freq
    assert res.kept_sweeps == 2000
    assert freq[0] > 0.9 and freq[1] < 0.2
    for j in range(2):
        se = max(batch_means_se(res.gamma_trace[:, j]), np.sqrt(exact[j] * (1 - exact[j]) / res.kept_sweeps))
        assert abs(freq[j] - exact[j]) <= 3 * se, (j, freq[j], exact[j], se)


def test_flat_data_recovers_prior_mean():
    n, p = 30, 5
    y = np.arange(n) % 2
    d = make_dataset(np.zeros((n, p)), y, Coding.ZERO_ONE)
    res = run_ssvs_probit(d, SsvsConfig(nu1=1000.0, iterations=3000, metropolis_steps_per_sweep=3, seed=1,
                                        keep_trace=True))
    mean_incl = res.gamma_trace.mean(axis=1)
    se = batch_means_se(mean_incl)
    assert abs(res.gamma_inclusion_freq.mean() - 0.5) <= 4 * se


def test_acceptance_bookkeeping():
    d = toy_p2(1)
    res = run_ssvs_probit(d, SsvsConfig(iterations=300, metropolis_steps_per_sweep=7, seed=2, keep_trace=True))
    assert 0.0 <= res.acceptance_rate <= 1.0
    assert res.acceptance_rate == res.accepted_per_sweep.sum() / (7 * res.sweeps)
    tr = np.vstack([np.zeros((1, 2), bool), res.gamma_trace])
    flips = np.sum(tr[1:] != tr[:-1], axis=1)
    # each accepted single-coordinate move toggles one entry
    assert np.all(res.accepted_per_sweep >= flips)
    assert np.all((res.accepted_per_sweep - flips) % 2 == 0)


def test_zero_sweeps():
    res = run_ssvs_probit(toy_p2(), SsvsConfig(iterations=0))
    assert res.sweeps == 0 and res.acceptance_rate == 0.0
    np.testing.assert_array_equal(res.gamma_inclusion_freq, 0.0)


def test_seed_repeat_identical():
    d = toy_p2(2)
    cfg = SsvsConfig(iterations=100, metropolis_steps_per_sweep=5, seed=4)
    a, b = run_ssvs_probit(d, cfg), run_ssvs_probit(d, cfg)
    np.testing.assert_array_equal(a.gamma_inclusion_freq, b.gamma_inclusion_freq)
    np.testing.assert_array_equal(a.beta_last, b.beta_last)


@pytest.mark.skipif(not _jit.HAVE_NUMBA, reason="numba not installed")
def test_backends_identical():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((40, 30))
    y = (x[:, 0] + 0.5 * rng.standard_normal(40) > 0).astype(int)
    d = make_dataset(x, y, Coding.ZERO_ONE)
    cfg = SsvsConfig(iterations=50, metropolis_steps_per_sweep=100, seed=3)
    a, b = run_ssvs_probit(d, cfg, backend="numba"), run_ssvs_probit(d, cfg, backend="numpy")
    np.testing.assert_array_equal(a.accepted_per_sweep, b.accepted_per_sweep)
    np.testing.assert_array_equal(a.gamma_inclusion_freq, b.gamma_inclusion_freq)


def test_positive_spike_variance_runs():
    d = toy_p2(3)
    res = run_ssvs_probit(d, SsvsConfig(nu0=0.01, nu1=100.0, iterations=200, metropolis_steps_per_sweep=5, seed=1))
    assert res.gamma_inclusion_freq[0] > 0.5


def test_overflow_warning():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 12))
    d = make_dataset(x, np.array([0, 1, 1]), Coding.ZERO_ONE)
    # b << a pushes the prior towards dense models so |gamma| exceeds n
    cfg = SsvsConfig(nu1=1.0, a=50.0, b=0.1, iterations=30, metropolis_steps_per_sweep=50, seed=0)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        res = run_ssvs_probit(d, cfg)
    assert res.overflow_sweeps > 0
    assert any(issubclass(x.category, ActiveSetOverflow) for x in w)


def test_config_validation():
    with pytest.raises(EmvsError):
        SsvsConfig(nu0=5.0, nu1=1.0)
    with pytest.raises(EmvsError):
        SsvsConfig(iterations=10, burn_in=10)
