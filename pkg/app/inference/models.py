"""
Model Densities
Pooled, hierarchical-centered and hierarchical-NCP logistic dose-response models
as unconstrained log-densities with analytic gradients, plus prior families
and the constraint transforms that feed the sampler
"""

import math
import re
from abc import ABC, abstractmethod
from typing import Dict, List, Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.special import expit, gammaln, log_ndtr, logit, xlog1py, xlogy

from app.core.errors import NumericalError, UnsupportedModelError, UnsupportedPriorError, UsageError
from app.inference.conjugate import BetaParams
from app.inference.data import Dataset, pooled_counts

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

PriorFamily = Literal['normal', 'logistic', 'uniform', 'flat', 'half_normal']

# Families only a discretization engine can use; never sampled here
_UNSAMPLEABLE = {'beta', 'weibull'}

_PRIOR_PATTERN = re.compile(r'^\s*([A-Za-z_]+)\s*(?:\(\s*([^,()]+?)\s*,\s*([^,()]+?)\s*\))?\s*$')


# ============================================================================
# SCALAR KERNELS
# ============================================================================

def inverse_logit(x):
    """1/(1+e^-x), overflow-safe in both tails"""
    return expit(x)


def softplus(x):
    """log(1+e^x) without overflow"""
    return np.logaddexp(0.0, x)


def log_binomial_coefficient(n, N):
    return gammaln(np.asarray(N) + 1.0) - gammaln(np.asarray(n) + 1.0) - gammaln(np.asarray(N) - np.asarray(n) + 1.0)


def binomial_logit_log_pmf(n: int, N: int, eta: float) -> float:
    """
    Binomial log-pmf parameterized by the log-odds eta

    Args:
        n: Successes (0 <= n <= N)
        N: Trials
        eta: Log-odds of success

    Returns:
        log C(N,n) + n*eta - N*log(1+e^eta)
    """
    if not 0 <= n <= N:
        raise UsageError(f"binomial_logit_log_pmf needs 0 <= n <= N, got n={n}, N={N}")
    return float(log_binomial_coefficient(n, N) + n * eta - N * softplus(eta))


# ============================================================================
# PRIORS
# ============================================================================

class PriorSpec(BaseModel):
    """Prior family with location/lower (p1) and scale/upper (p2) parameters"""

    model_config = ConfigDict(frozen=True)

    family: PriorFamily
    p1: float = 0.0
    p2: float = 1.0

    @model_validator(mode='after')
    def _check_parameters(self) -> 'PriorSpec':
        if self.family in ('normal', 'logistic', 'half_normal') and not self.p2 > 0:
            raise ValueError(f"{self.family} prior needs a positive scale, got {self.p2}")
        if self.family == 'uniform' and not self.p1 < self.p2:
            raise ValueError(f"uniform prior needs lower < upper, got ({self.p1}, {self.p2})")
        if self.family != 'flat' and not (math.isfinite(self.p1) and math.isfinite(self.p2)):
            raise ValueError(f"{self.family} prior needs finite parameters")
        return self

    @classmethod
    def parse(cls, text: str) -> 'PriorSpec':
        """
        Parse `family(p1,p2)` text, e.g. `normal(0,20)`, `Uniform (-100, 100)`, `flat`

        `uniform(-inf,inf)` is the flat prior. Beta and Weibull families are
        rejected: they need a bounded-range discretization engine.
        """
        if isinstance(text, PriorSpec):
            return text
        match = _PRIOR_PATTERN.match(str(text))
        if not match:
            raise UsageError(f"Cannot parse prior {text!r}; expected family(p1,p2)")
        family = match.group(1).lower().replace('-', '_')
        if family == 'halfnormal':
            family = 'half_normal'
        if family in _UNSAMPLEABLE:
            raise UnsupportedPriorError(
                f"{family} priors are not available to the sampler: they are only defined on a "
                f"custom bounded range, which the unconstrained HMC engine does not model")
        if family == 'flat':
            return cls(family='flat')
        if match.group(2) is None:
            raise UsageError(f"Prior {text!r} needs two parameters")
        try:
            p1, p2 = float(match.group(2)), float(match.group(3))
        except ValueError:
            raise UsageError(f"Prior {text!r} has non-numeric parameters")
        if family == 'uniform' and math.isinf(p1) and math.isinf(p2):
            return cls(family='flat')
        if family not in ('normal', 'logistic', 'uniform', 'half_normal'):
            raise UsageError(f"Unknown prior family {family!r}")
        try:
            return cls(family=family, p1=p1, p2=p2)
        except ValueError as e:
            raise UsageError(f"Invalid prior {text!r}: {e}")

    @property
    def support(self) -> str:
        if self.family == 'uniform':
            return 'interval'
        if self.family == 'half_normal':
            return 'positive'
        return 'real'

    def __str__(self) -> str:
        if self.family == 'flat':
            return 'flat'
        return f"{self.family}({_fmt(self.p1)},{_fmt(self.p2)})"


def _fmt(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def prior_log_pdf(spec: PriorSpec, value):
    """
    Log-density of a prior and its derivative with respect to the value

    Args:
        spec: Prior family and parameters
        value: Constrained-scale value (scalar or array)

    Returns:
        Tuple (log_pdf, d log_pdf / d value); flat gives (0, 0)
    """
    x = np.asarray(value, dtype=float)
    if spec.family == 'flat':
        lp, dlp = np.zeros_like(x), np.zeros_like(x)
    elif spec.family == 'normal':
        z = (x - spec.p1) / spec.p2
        lp = -LOG_SQRT_2PI - math.log(spec.p2) - 0.5 * z * z
        dlp = -z / spec.p2
    elif spec.family == 'logistic':
        z = (x - spec.p1) / spec.p2
        lp = -math.log(spec.p2) - z - 2.0 * softplus(-z)
        dlp = (1.0 - 2.0 * expit(z)) / spec.p2
    elif spec.family == 'uniform':
        inside = (x >= spec.p1) & (x <= spec.p2)
        lp = np.where(inside, -math.log(spec.p2 - spec.p1), -np.inf)
        dlp = np.zeros_like(x)
    else:
        # normal(p1, p2) truncated to x >= 0
        z = (x - spec.p1) / spec.p2
        log_mass = float(log_ndtr(spec.p1 / spec.p2))
        lp = np.where(x >= 0, -LOG_SQRT_2PI - math.log(spec.p2) - 0.5 * z * z - log_mass, -np.inf)
        dlp = -z / spec.p2
    if lp.ndim == 0:
        return float(lp), float(dlp)
    return lp, dlp


# ============================================================================
# CONSTRAINT TRANSFORMS
# ============================================================================

def _to_constrained(spec: PriorSpec, u):
    """Map unconstrained u onto the prior's support: (x, dx/du, log|J|, dlog|J|/du)"""
    support = spec.support
    if support == 'positive':
        x = np.exp(u)
        return x, x, u, 1.0
    if support == 'interval':
        span = spec.p2 - spec.p1
        s = expit(u)
        x = np.clip(spec.p1 + span * s, spec.p1, spec.p2)
        log_jac = math.log(span) - softplus(-u) - softplus(u)
        return x, span * s * (1.0 - s), log_jac, 1.0 - 2.0 * s
    return u, 1.0, 0.0, 0.0


def _to_unconstrained(spec: PriorSpec, x):
    support = spec.support
    if support == 'positive':
        return np.log(x)
    if support == 'interval':
        return logit((np.asarray(x) - spec.p1) / (spec.p2 - spec.p1))
    return x


# ============================================================================
# MODEL DENSITIES
# ============================================================================

class ModelDensity(ABC):
    """Contract every sampled model satisfies"""

    name: str = "model"
    parameter_names: List[str]

    @property
    def dim(self) -> int:
        return len(self.parameter_names)

    @abstractmethod
    def log_density_and_gradient(self, position: np.ndarray) -> Tuple[float, np.ndarray]:
        """Unnormalized log posterior on the unconstrained scale (Jacobians included)"""

    @abstractmethod
    def constrain_array(self, position: np.ndarray) -> np.ndarray:
        """Constrained values, ordered like parameter_names"""

    @abstractmethod
    def unconstrain_array(self, values: np.ndarray) -> np.ndarray:
        """Inverse of constrain_array"""

    def log_density(self, position: np.ndarray) -> float:
        return self.log_density_and_gradient(position)[0]

    def gradient(self, position: np.ndarray) -> np.ndarray:
        return self.log_density_and_gradient(position)[1]

    def constrain(self, position: np.ndarray) -> Dict[str, float]:
        values = self.constrain_array(np.asarray(position, dtype=float))
        return {name: float(v) for name, v in zip(self.parameter_names, values)}


class _BinomialLogitData:
    """Per-record constants shared by the logistic models"""

    def __init__(self, dataset: Dataset, include_binomial_coefficient: bool = True):
        self.dataset = dataset
        self.d = dataset.dosages
        self.N = dataset.totals.astype(float)
        self.n = dataset.improved.astype(float)
        log_coef = log_binomial_coefficient(self.n, self.N)
        self.log_coef_sum = float(log_coef.sum()) if include_binomial_coefficient else 0.0

    def log_likelihood(self, eta: np.ndarray) -> Tuple[float, np.ndarray]:
        """Sum of binomial-logit log-pmfs and d/d eta per record"""
        value = self.log_coef_sum + float(np.dot(self.n, eta) - np.dot(self.N, softplus(eta)))
        return value, self.n - self.N * expit(eta)


class SimpleLrModel(ModelDensity):
    """Pooled logistic regression: n_i ~ Binomial(N_i, inverse_logit(alpha + beta*d_i))"""

    name = "simple"

    def __init__(self, dataset: Dataset, prior_alpha: PriorSpec, prior_beta: PriorSpec,
                 include_binomial_coefficient: bool = True):
        self.data = _BinomialLogitData(dataset, include_binomial_coefficient)
        self.prior_alpha = PriorSpec.parse(prior_alpha)
        self.prior_beta = PriorSpec.parse(prior_beta)
        self.parameter_names = ['alpha', 'beta']

    def log_density_and_gradient(self, position: np.ndarray) -> Tuple[float, np.ndarray]:
        alpha, dalpha, lj_alpha, dlj_alpha = _to_constrained(self.prior_alpha, position[0])
        beta, dbeta, lj_beta, dlj_beta = _to_constrained(self.prior_beta, position[1])

        ll, resid = self.data.log_likelihood(alpha + beta * self.data.d)
        lp_alpha, dlp_alpha = prior_log_pdf(self.prior_alpha, alpha)
        lp_beta, dlp_beta = prior_log_pdf(self.prior_beta, beta)

        value = ll + lp_alpha + lp_beta + lj_alpha + lj_beta
        grad = np.array([
            (resid.sum() + dlp_alpha) * dalpha + dlj_alpha,
            (np.dot(resid, self.data.d) + dlp_beta) * dbeta + dlj_beta,
        ])
        return float(value), grad

    def log_density_constrained(self, points: np.ndarray) -> np.ndarray:
        """Unnormalized log posterior at constrained (alpha, beta) rows; no Jacobian"""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        alpha, beta = points[:, 0], points[:, 1]
        eta = alpha[:, None] + beta[:, None] * self.data.d[None, :]
        ll = self.data.log_coef_sum + eta @ self.data.n - softplus(eta) @ self.data.N
        lp_alpha, _ = prior_log_pdf(self.prior_alpha, alpha)
        lp_beta, _ = prior_log_pdf(self.prior_beta, beta)
        return ll + lp_alpha + lp_beta

    def constrain_array(self, position: np.ndarray) -> np.ndarray:
        return np.array([
            _to_constrained(self.prior_alpha, position[0])[0],
            _to_constrained(self.prior_beta, position[1])[0],
        ], dtype=float)

    def unconstrain_array(self, values: np.ndarray) -> np.ndarray:
        return np.array([
            _to_unconstrained(self.prior_alpha, values[0]),
            _to_unconstrained(self.prior_beta, values[1]),
        ], dtype=float)


class HierLrModel(ModelDensity):
    """
    Hierarchical logistic regression with one (alpha_i, beta_i) pair per experiment

    Unconstrained layout: [alpha or a_raw (E), beta or b_raw (E), mu_a, mu_b,
    sigma_a, sigma_b (log scale)]. Under 'ncp' the local coefficients are the
    deterministic transforms alpha = mu_a + sigma_a*a_raw, beta = mu_b + sigma_b*b_raw.
    """

    def __init__(self, dataset: Dataset, parameterization: str = 'ncp',
                 mu_prior: PriorSpec = None, sigma_prior: PriorSpec = None):
        if parameterization not in ('centered', 'ncp'):
            raise UsageError(f"parameterization must be 'centered' or 'ncp', got {parameterization!r}")
        self.parameterization = parameterization
        self.name = f"hier_{parameterization}"
        self.data = _BinomialLogitData(dataset)
        self.E = dataset.size
        self.mu_prior = PriorSpec.parse(mu_prior or 'normal(0,20)')
        self.sigma_prior = PriorSpec.parse(sigma_prior or 'half_normal(0,2)')
        if self.sigma_prior.support != 'positive':
            raise UsageError("sigma prior must be a half_normal prior")
        E = self.E
        self.parameter_names = (
            [f"alpha[{i + 1}]" for i in range(E)]
            + [f"beta[{i + 1}]" for i in range(E)]
            + ['mu_a', 'mu_b', 'sigma_a', 'sigma_b']
        )

    def _hyper(self, position: np.ndarray):
        E = self.E
        mu_a = _to_constrained(self.mu_prior, position[2 * E])
        mu_b = _to_constrained(self.mu_prior, position[2 * E + 1])
        sigma_a = _to_constrained(self.sigma_prior, position[2 * E + 2])
        sigma_b = _to_constrained(self.sigma_prior, position[2 * E + 3])
        return mu_a, mu_b, sigma_a, sigma_b

    def log_density_and_gradient(self, position: np.ndarray) -> Tuple[float, np.ndarray]:
        E = self.E
        d = self.data.d
        first, second = position[:E], position[E:2 * E]
        (mu_a, dmu_a, lj_mu_a, dlj_mu_a), (mu_b, dmu_b, lj_mu_b, dlj_mu_b), \
            (sig_a, dsig_a, lj_sig_a, dlj_sig_a), (sig_b, dsig_b, lj_sig_b, dlj_sig_b) = self._hyper(position)

        if self.parameterization == 'ncp':
            alpha = mu_a + sig_a * first
            beta = mu_b + sig_b * second
        else:
            alpha, beta = first, second

        ll, resid = self.data.log_likelihood(alpha + beta * d)
        grad = np.empty(2 * E + 4)

        if self.parameterization == 'ncp':
            local = -LOG_SQRT_2PI * 2 * E - 0.5 * (np.dot(first, first) + np.dot(second, second))
            grad[:E] = resid * sig_a - first
            grad[E:2 * E] = resid * d * sig_b - second
            g_mu_a = resid.sum()
            g_mu_b = np.dot(resid, d)
            g_sig_a = np.dot(resid, first)
            g_sig_b = np.dot(resid * d, second)
        else:
            z_a = (alpha - mu_a) / sig_a
            z_b = (beta - mu_b) / sig_b
            # log(sigma) is the unconstrained coordinate itself; sigma may underflow to 0
            local = (-LOG_SQRT_2PI * 2 * E - E * lj_sig_a - E * lj_sig_b
                     - 0.5 * (np.dot(z_a, z_a) + np.dot(z_b, z_b)))
            grad[:E] = resid - z_a / sig_a
            grad[E:2 * E] = resid * d - z_b / sig_b
            g_mu_a = z_a.sum() / sig_a
            g_mu_b = z_b.sum() / sig_b
            g_sig_a = (np.dot(z_a, z_a) - E) / sig_a
            g_sig_b = (np.dot(z_b, z_b) - E) / sig_b

        lp_mu_a, dlp_mu_a = prior_log_pdf(self.mu_prior, mu_a)
        lp_mu_b, dlp_mu_b = prior_log_pdf(self.mu_prior, mu_b)
        lp_sig_a, dlp_sig_a = prior_log_pdf(self.sigma_prior, sig_a)
        lp_sig_b, dlp_sig_b = prior_log_pdf(self.sigma_prior, sig_b)

        grad[2 * E] = (g_mu_a + dlp_mu_a) * dmu_a + dlj_mu_a
        grad[2 * E + 1] = (g_mu_b + dlp_mu_b) * dmu_b + dlj_mu_b
        grad[2 * E + 2] = (g_sig_a + dlp_sig_a) * dsig_a + dlj_sig_a
        grad[2 * E + 3] = (g_sig_b + dlp_sig_b) * dsig_b + dlj_sig_b

        value = (ll + local + lp_mu_a + lp_mu_b + lp_sig_a + lp_sig_b
                 + lj_mu_a + lj_mu_b + lj_sig_a + lj_sig_b)
        return float(value), grad

    def constrain_array(self, position: np.ndarray) -> np.ndarray:
        E = self.E
        (mu_a, *_), (mu_b, *_), (sig_a, *_), (sig_b, *_) = self._hyper(position)
        first, second = position[:E], position[E:2 * E]
        if self.parameterization == 'ncp':
            alpha, beta = mu_a + sig_a * first, mu_b + sig_b * second
        else:
            alpha, beta = first, second
        return np.concatenate([alpha, beta, [mu_a, mu_b, sig_a, sig_b]]).astype(float)

    def unconstrain_array(self, values: np.ndarray) -> np.ndarray:
        E = self.E
        values = np.asarray(values, dtype=float)
        alpha, beta = values[:E], values[E:2 * E]
        mu_a, mu_b, sig_a, sig_b = values[2 * E:]
        if self.parameterization == 'ncp':
            first, second = (alpha - mu_a) / sig_a, (beta - mu_b) / sig_b
        else:
            first, second = alpha, beta
        hyper = [
            _to_unconstrained(self.mu_prior, mu_a),
            _to_unconstrained(self.mu_prior, mu_b),
            _to_unconstrained(self.sigma_prior, sig_a),
            _to_unconstrained(self.sigma_prior, sig_b),
        ]
        return np.concatenate([first, second, hyper]).astype(float)


class BetaBinomialModel(ModelDensity):
    """Single improvement probability theta with a Beta prior, sampled on logit(theta)"""

    name = "beta_binomial"

    def __init__(self, n: int, N: int, prior: BetaParams):
        if not 0 <= n <= N:
            raise UsageError(f"need 0 <= n <= N, got n={n}, N={N}")
        self.n, self.N = int(n), int(N)
        self.prior = prior
        self.parameter_names = ['theta']
        self._log_norm = float(gammaln(prior.a) + gammaln(prior.b) - gammaln(prior.a + prior.b))

    @classmethod
    def from_dataset(cls, dataset: Dataset, prior: BetaParams) -> 'BetaBinomialModel':
        n, N = pooled_counts(dataset)
        return cls(n, N, prior)

    def log_density_and_gradient(self, position: np.ndarray) -> Tuple[float, np.ndarray]:
        u = float(position[0])
        a = self.prior.a + self.n
        b = self.prior.b + self.N - self.n
        theta = expit(u)
        # Jacobian theta*(1-theta) folded into the exponents
        value = -a * softplus(-u) - b * softplus(u) - self._log_norm
        return float(value), np.array([a * (1.0 - theta) - b * theta])

    def log_density_constrained(self, theta):
        theta = np.asarray(theta, dtype=float)
        with np.errstate(divide='ignore'):
            return (xlogy(self.prior.a + self.n - 1.0, theta)
                    + xlog1py(self.prior.b + self.N - self.n - 1.0, -theta) - self._log_norm)

    def constrain_array(self, position: np.ndarray) -> np.ndarray:
        return np.array([expit(position[0])], dtype=float)

    def unconstrain_array(self, values: np.ndarray) -> np.ndarray:
        return np.array([logit(values[0])], dtype=float)


# ============================================================================
# ENTRY POINTS
# ============================================================================

def log_posterior_with_gradient(model: ModelDensity, position) -> Tuple[float, np.ndarray]:
    """
    Validated evaluation of a model's unconstrained log posterior

    Raises:
        NumericalError: wrong length or non-finite components
    """
    position = np.asarray(position, dtype=float)
    if position.shape != (model.dim,):
        raise NumericalError(f"position must have length {model.dim}, got shape {position.shape}")
    if not np.all(np.isfinite(position)):
        raise NumericalError("position has non-finite components")
    return model.log_density_and_gradient(position)


def constrain(model: ModelDensity, position) -> Dict[str, float]:
    position = np.asarray(position, dtype=float)
    if position.shape != (model.dim,):
        raise NumericalError(f"position must have length {model.dim}, got shape {position.shape}")
    return model.constrain(position)


def build_model(config, dataset: Dataset) -> ModelDensity:
    """Instantiate the model a ModelConfig describes"""
    if config.kind == 'simple':
        return SimpleLrModel(dataset, PriorSpec.parse(config.prior_alpha), PriorSpec.parse(config.prior_beta))
    if config.kind in ('hier_centered', 'hier_ncp'):
        return HierLrModel(
            dataset,
            parameterization='centered' if config.kind == 'hier_centered' else 'ncp',
            mu_prior=PriorSpec.parse(config.mu_prior),
            sigma_prior=PriorSpec.parse(config.sigma_prior),
        )
    if config.kind == 'beta_binomial':
        a, b = config.beta_prior
        return BetaBinomialModel.from_dataset(dataset, BetaParams(a=a, b=b))
    raise UnsupportedModelError(f"Unknown model kind {config.kind!r}")
