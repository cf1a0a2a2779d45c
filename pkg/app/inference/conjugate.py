"""
Beta-Binomial Conjugate Posterior
Closed-form posterior for a single improvement probability, used as the
exact oracle for the sampler
"""

import math
from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field
from scipy import integrate, optimize
from scipy.special import betaln

from app.core.errors import UsageError


class BetaParams(BaseModel):
    """Beta distribution shapes (a, b)"""

    model_config = ConfigDict(frozen=True)

    a: float = Field(gt=0)
    b: float = Field(gt=0)


def beta_binomial_posterior(prior: BetaParams, n: int, N: int) -> BetaParams:
    """
    Update a Beta prior with n improved out of N

    Args:
        prior: Beta(a, b) prior
        n: Improved subjects
        N: Total subjects

    Returns:
        Beta(a + n, b + N - n)
    """
    if n < 0 or N < 0 or n > N:
        raise UsageError(f"need 0 <= n <= N, got n={n}, N={N}")
    return BetaParams(a=prior.a + n, b=prior.b + N - n)


def beta_moments(p: BetaParams) -> Tuple[float, float]:
    """Mean and standard deviation"""
    total = p.a + p.b
    mean = p.a / total
    sd = math.sqrt(p.a * p.b / (total * total * (total + 1.0)))
    return mean, sd


def beta_log_pdf(p: BetaParams, x: float) -> float:
    if x <= 0.0 or x >= 1.0:
        return -math.inf
    return (p.a - 1.0) * math.log(x) + (p.b - 1.0) * math.log1p(-x) - float(betaln(p.a, p.b))


def beta_cdf(p: BetaParams, x: float) -> float:
    """Regularized incomplete beta by adaptive quadrature of the density"""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    value, _ = integrate.quad(lambda t: math.exp(beta_log_pdf(p, t)), 0.0, x,
                              epsabs=1e-13, epsrel=1e-12, limit=200)
    return min(1.0, max(0.0, value))


def beta_quantile(p: BetaParams, q: float) -> float:
    """
    Inverse CDF by bisection on [0, 1]

    Args:
        p: Beta shapes
        q: Probability level, 0 < q < 1

    Returns:
        x with beta_cdf(p, x) = q, to 1e-10
    """
    if not 0.0 < q < 1.0:
        raise UsageError(f"quantile level must lie in (0, 1), got {q}")
    return float(optimize.bisect(lambda x: beta_cdf(p, x) - q, 0.0, 1.0, xtol=1e-10, maxiter=200))
