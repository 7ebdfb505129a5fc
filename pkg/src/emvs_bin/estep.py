"""E-step: posterior inclusion probabilities and expected prior precisions."""
import numpy as np
from scipy.special import expit

from .types import EmState


def inclusion_log_odds(beta, sigma, theta, h):
    """log [theta N(beta; 0, s^2 nu1)] - log [(1-theta) N(beta; 0, s^2 nu0)]."""
    beta = np.asarray(beta, dtype=float)
    s2 = float(sigma) ** 2
    with np.errstate(divide="ignore"):
        prior = np.log(theta) - np.log1p(-theta)
    return (
        prior
        - 0.5 * (np.log(h.nu1) - np.log(h.nu0))
        + 0.5 * beta * beta / s2 * (1.0 / h.nu0 - 1.0 / h.nu1)
    )


def inclusion_probability(beta, sigma, theta, h):
    """Posterior probability that a coefficient of size ``beta`` comes from the slab.

    Works elementwise on arrays. The density ratio is formed in log space, so
    a spike density that underflows (tiny ``nu0``) still gives a clean 1.0.
    """
    return expit(inclusion_log_odds(beta, sigma, theta, h))


def expected_precision(p_star, h):
    p_star = np.asarray(p_star, dtype=float)
    return (1.0 - p_star) / h.nu0 + p_star / h.nu1


def e_step(state, h):
    p_star = np.atleast_1d(inclusion_probability(state.beta, state.sigma, state.theta, h))
    d_star = expected_precision(p_star, h)
    return EmState(
        beta=state.beta,
        sigma=state.sigma,
        theta=state.theta,
        p_star=p_star,
        d_star=d_star,
        iteration=state.iteration,
    )


def theta_update(p_star, h):
    """Beta-prior M-step for theta; the sum runs over the p coefficients."""
    p = len(p_star)
    theta = (float(np.sum(p_star)) + h.a - 1.0) / (h.a + h.b + p - 2.0)
    # a <= 1 with every p* underflowed lands exactly on the boundary
    return float(np.clip(theta, 1e-300, 1.0 - 1e-16))


def log_mixture_prior(beta, sigma, theta, h):
    """sum_j log[theta N(beta_j; 0, s^2 nu1) + (1-theta) N(beta_j; 0, s^2 nu0)]."""
    beta = np.asarray(beta, dtype=float)
    s2 = float(sigma) ** 2
    b2 = beta * beta
    with np.errstate(divide="ignore"):
        slab = np.log(theta) - 0.5 * np.log(2 * np.pi * s2 * h.nu1) - b2 / (2 * s2 * h.nu1)
        spike = np.log1p(-theta) - 0.5 * np.log(2 * np.pi * s2 * h.nu0) - b2 / (2 * s2 * h.nu0)
    return float(np.sum(np.logaddexp(slab, spike)))
