"""Asymptotic power and sample-size calculations.

Under an alternative with mean mu_u > 0 the statistic is asymptotically
normal with variance 4 zeta_1 / n, while the rejection threshold comes from
the centered null mixture sum_st c_st (chi2_st - 1).  Power at level alpha:

    Phi((n mu_u - q_{1-alpha}) / (2 sqrt(n zeta_1)))
"""

from dataclasses import dataclass

import numpy as np
import scipy.optimize
import scipy.stats

from .exceptions import DegenerateAlternative
from .quadform import davies_pvalue


@dataclass(frozen=True)
class PowerParams:
    """Alternative-hypothesis moments and the null rejection quantile.

    ``mu_u`` is the mean of the centered similarity product, ``zeta0`` its
    variance, ``zeta1`` the variance of its conditional expectation given
    one subject (the projection variance).  ``q_alpha`` is the 1 - alpha
    quantile of the centered null mixture.
    """

    mu_u: float
    zeta0: float
    zeta1: float
    alpha: float = None
    q_alpha: float = None

    def __post_init__(self):
        if self.alpha is not None and not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if self.zeta0 < 0.0 or self.zeta1 < 0.0:
            raise ValueError("variances must be non-negative")
        if self.zeta1 > self.zeta0 * (1.0 + 1e-9) + 1e-300:
            raise ValueError("projection variance cannot exceed total variance")


def null_quantile(coefficients, alpha, acc=1e-9):
    """1 - alpha quantile of the centered mixture sum c_st (chi2_st - 1).

    Inverts the inversion-based tail by root finding; the returned q
    satisfies |P(mixture > q) - alpha| <= 1e-6.
    """
    coefficients = np.atleast_1d(np.asarray(coefficients, dtype=float))
    if coefficients.size == 0 or not np.any(coefficients):
        raise ValueError("coefficients must be non-empty and not all zero")
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    shift = float(np.sum(coefficients))

    def tail(q):
        return davies_pvalue(coefficients, q + shift, acc=acc)

    spread = float(np.sqrt(2.0 * np.sum(coefficients**2)))
    lo, hi = -abs(shift) - 10.0 * spread, 10.0 * spread
    while tail(hi) > alpha:
        hi *= 2.0
    while tail(lo) < alpha:
        lo = 2.0 * lo - 1.0
    q = scipy.optimize.brentq(lambda x: tail(x) - alpha, lo, hi,
                              xtol=1e-12 * max(1.0, spread), maxiter=300)
    if abs(tail(q) - alpha) > 1e-6:
        raise DegenerateAlternative(
            f"quantile search did not reach the target level at q={q}")
    return float(q)


def asymptotic_power(n, params):
    """Power of the level-alpha test at sample size n."""
    if params.zeta1 <= 0.0:
        raise DegenerateAlternative("projection variance must be positive")
    if params.q_alpha is None:
        raise ValueError("params.q_alpha is not set")
    if n < 2:
        raise ValueError("need n >= 2")
    z = (n * params.mu_u - params.q_alpha) / (2.0 * np.sqrt(n * params.zeta1))
    return float(scipy.stats.norm.cdf(z))


def required_sample_size(params, target_beta):
    """Smallest n whose asymptotic power reaches ``target_beta``.

    Solves n >= (Z_beta sqrt(zeta1) + sqrt(Z_beta^2 zeta1 + mu_u q))^2 / mu_u^2.
    """
    if params.zeta1 <= 0.0:
        raise DegenerateAlternative("projection variance must be positive")
    if params.mu_u <= 0.0:
        raise DegenerateAlternative("alternative mean must be positive")
    if params.q_alpha is None:
        raise ValueError("params.q_alpha is not set")
    if not (0.0 < target_beta < 1.0):
        raise ValueError("target power must lie in (0, 1)")
    z = scipy.stats.norm.ppf(target_beta)
    root = z * np.sqrt(params.zeta1) + np.sqrt(
        z * z * params.zeta1 + params.mu_u * params.q_alpha)
    bound = (root / params.mu_u) ** 2
    n = int(np.ceil(bound))
    if n < 1:
        n = 1
    # guard the exact-integer boundary of the ceiling
    while n - 1 >= 1 and (n - 1) >= bound:
        n -= 1
    return n


def estimate_effect_params(k_centered, s_centered):
    """Plug-in moment estimates from pilot centered similarity matrices.

    mu_u is the off-diagonal mean of the elementwise product, zeta1 the
    sample variance over subjects of its row means (the projection
    estimate), zeta0 the sample variance of the off-diagonal products.
    """
    for m in (k_centered, s_centered):
        if m.state not in ("centered", "zero_diagonal"):
            raise ValueError(f"expected centered matrices, got {m.state!r}")
    n = k_centered.n
    if n < 10:
        raise ValueError("need at least 10 pilot subjects")
    prod = k_centered.values * s_centered.values
    np.fill_diagonal(prod, 0.0)
    mu = float(prod.sum()) / (n * (n - 1))
    row_means = prod.sum(axis=1) / (n - 1)
    zeta1 = float(np.var(row_means, ddof=1))
    off = prod[~np.eye(n, dtype=bool)]
    zeta0 = float(np.var(off, ddof=1))
    if zeta1 > zeta0:
        zeta1 = zeta0
    return PowerParams(mu_u=mu, zeta0=zeta0, zeta1=zeta1)
