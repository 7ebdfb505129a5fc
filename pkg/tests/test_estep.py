import mpmath
import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from emvs_bin.estep import (
    e_step,
    expected_precision,
    inclusion_probability,
    log_mixture_prior,
    theta_update,
)
from emvs_bin.types import EmState, SpikeSlabHyper


class _Equal:
    # identical spike and slab are not a valid prior; the E-step formula still applies
    nu0 = nu1 = 1.0


def _pstar_mp(beta, sigma, theta, nu0, nu1):
    mpmath.mp.dps = 50
    slab = theta * mpmath.npdf(beta, 0, sigma * mpmath.sqrt(nu1))
    spike = (1 - theta) * mpmath.npdf(beta, 0, sigma * mpmath.sqrt(nu0))
    return slab / (slab + spike)


@pytest.mark.parametrize("beta", [-3.0, 0.0, 0.4, 12.0])
def test_identical_components_give_half(beta):
    assert inclusion_probability(beta, 1.0, 0.5, _Equal) == pytest.approx(0.5, abs=1e-15)


def test_pstar_at_zero_matches_high_precision():
    h = SpikeSlabHyper(nu0=0.01, nu1=100)
    expected = float(_pstar_mp(0, 1, mpmath.mpf("0.5"), mpmath.mpf("0.01"), 100))
    assert expected == pytest.approx(0.1 / 10.1, rel=1e-14)
    assert inclusion_probability(0.0, 1.0, 0.5, h) == pytest.approx(expected, rel=1e-13)


def test_pstar_spike_underflow_gives_one():
    h = SpikeSlabHyper(nu0=0.01, nu1=100)
    got = inclusion_probability(10.0, 1.0, 0.5, h)
    assert abs(got - 1.0) < 1e-12
    assert abs(got - float(_pstar_mp(10, 1, 0.5, mpmath.mpf("0.01"), 100))) < 1e-12


@given(
    beta=st.floats(-8, 8),
    sigma=st.floats(0.05, 5),
    theta=st.floats(1e-4, 1 - 1e-4),
    nu0=st.floats(1e-3, 1.0),
    ratio=st.floats(1.5, 1e4),
)
def test_pstar_matches_mpmath(beta, sigma, theta, nu0, ratio):
    h = SpikeSlabHyper(nu0=nu0, nu1=nu0 * ratio)
    exp = _pstar_mp(beta, sigma, theta, mpmath.mpf(nu0), mpmath.mpf(nu0) * mpmath.mpf(ratio))
    assert inclusion_probability(beta, sigma, theta, h) == pytest.approx(float(exp), rel=1e-9, abs=1e-300)


@pytest.mark.parametrize("p_star, nu0, nu1, expected", [
    (0.0, 0.5, 10.0, 2.0),
    (1.0, 0.5, 1000.0, 0.001),
    (0.5, 0.1, 10.0, 5.05),
])
def test_expected_precision_examples(p_star, nu0, nu1, expected):
    h = SpikeSlabHyper(nu0=nu0, nu1=nu1)
    assert expected_precision(p_star, h) == pytest.approx(expected, rel=1e-14)


def test_e_step_zero_beta_equal_components():
    s = e_step(EmState(np.zeros(3), 2.0, 0.5, None, None), _Equal)
    np.testing.assert_allclose(s.p_star, 0.5)


@given(sigma=st.floats(0.1, 3), theta=st.floats(0.01, 0.99), nu0=st.floats(0.01, 1), ratio=st.floats(2, 1e3))
def test_pstar_monotone_and_dstar_bounded(sigma, theta, nu0, ratio):
    h = SpikeSlabHyper(nu0=nu0, nu1=nu0 * ratio)
    grid = np.linspace(0, 10, 201)
    ps = inclusion_probability(grid, sigma, theta, h)
    assert np.all(np.diff(ps) >= 0)
    np.testing.assert_allclose(ps, inclusion_probability(-grid, sigma, theta, h))
    d = expected_precision(ps, h)
    assert np.all(d >= 1 / h.nu1 * (1 - 1e-12)) and np.all(d <= 1 / h.nu0 * (1 + 1e-12))


def test_theta_update_all_included():
    p = 7
    h = SpikeSlabHyper(nu0=0.1, nu1=10, a=1, b=p)
    assert theta_update(np.ones(p), h) == pytest.approx(p / (2 * p - 1))


def test_theta_update_stays_inside_unit_interval():
    h = SpikeSlabHyper(nu0=0.1, nu1=10, a=1, b=1)
    t0 = theta_update(np.zeros(5), h)
    t1 = theta_update(np.ones(5), h)
    assert 0 < t0 < 1 and 0 < t1 < 1


@given(beta=st.lists(st.floats(-5, 5), min_size=1, max_size=6), sigma=st.floats(0.1, 3),
       theta=st.floats(0.01, 0.99))
def test_log_mixture_prior_matches_direct_sum(beta, sigma, theta):
    h = SpikeSlabHyper(nu0=0.2, nu1=20)
    b = np.asarray(beta)
    dens = lambda v: np.exp(-b * b / (2 * sigma**2 * v)) / np.sqrt(2 * np.pi * sigma**2 * v)
    direct = np.sum(np.log(theta * dens(h.nu1) + (1 - theta) * dens(h.nu0)))
    assume(np.isfinite(direct))
    assert log_mixture_prior(b, sigma, theta, h) == pytest.approx(direct, rel=1e-10, abs=1e-10)
