"""
Hamiltonian Monte-Carlo Engine
Leapfrog integration, Metropolis correction, dual-averaging step-size
adaptation, windowed diagonal mass estimation and multi-chain orchestration
"""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from app.core.errors import InitializationError
from app.inference.models import ModelDensity

INIT_RADIUS = 2.0
INIT_ATTEMPTS = 100

# Warmup split: step size only / windowed mass / final step size
INIT_BUFFER = 0.15
TERM_BUFFER = 0.10
BASE_WINDOW = 25


class HmcConfig(BaseModel):
    """Sampler settings; chain c draws from seed + c"""

    model_config = ConfigDict(frozen=True, extra='forbid')

    chains: int = Field(4, ge=1)
    total_iterations: int = Field(4000, ge=20)
    warmup_fraction: float = Field(0.5, gt=0, lt=1)
    target_accept: float = Field(0.8, gt=0, lt=1)
    base_trajectory_length: float = Field(2.0, gt=0)
    divergence_threshold: float = Field(1000.0, gt=0)
    max_leapfrog_steps: int = Field(1024, ge=1)
    seed: int = 1
    parallel: bool = False

    @property
    def warmup_iterations(self) -> int:
        return int(self.total_iterations * self.warmup_fraction)

    @property
    def sampling_iterations(self) -> int:
        return self.total_iterations - self.warmup_iterations


@dataclass(frozen=True)
class ChainState:
    position: np.ndarray
    log_density: float
    gradient: np.ndarray


@dataclass(frozen=True)
class ChainDraws:
    """Post-warmup output of one chain (constrained scale)"""

    draws: np.ndarray
    divergent: np.ndarray
    accept_prob: np.ndarray
    final_step_size: float
    mass_diagonal: np.ndarray
    step_size_trace: np.ndarray = field(repr=False)
    warmup_divergences: int = 0

    @property
    def divergence_count(self) -> int:
        return int(self.divergent.sum())


@dataclass(frozen=True)
class SampleRun:
    """Merged multi-chain result, ordered by chain index"""

    chains: List[ChainDraws]
    parameter_names: List[str]
    config: HmcConfig
    model_name: str = "model"
    duration_seconds: float = 0.0

    @property
    def n_chains(self) -> int:
        return len(self.chains)

    @property
    def n_draws(self) -> int:
        return self.chains[0].draws.shape[0] if self.chains else 0

    @property
    def divergence_count(self) -> int:
        return sum(chain.divergence_count for chain in self.chains)

    @property
    def divergent_fraction(self) -> float:
        total = self.n_chains * self.n_draws
        return self.divergence_count / total if total else 0.0

    def index_of(self, name: str) -> int:
        return self.parameter_names.index(name)

    def chain_values(self, name: str) -> List[np.ndarray]:
        j = self.index_of(name)
        return [chain.draws[:, j] for chain in self.chains]

    def pooled(self) -> np.ndarray:
        return np.concatenate([chain.draws for chain in self.chains], axis=0)

    def draws_frame(self) -> pd.DataFrame:
        """Long CSV layout: chain, iteration, divergent, <parameters...>"""
        frames = []
        for c, chain in enumerate(self.chains):
            frame = pd.DataFrame(chain.draws, columns=self.parameter_names)
            frame.insert(0, 'divergent', chain.divergent.astype(int))
            frame.insert(0, 'iteration', np.arange(1, chain.draws.shape[0] + 1))
            frame.insert(0, 'chain', c + 1)
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)

    def metadata(self) -> dict:
        """Run description without wall-clock values"""
        return {
            'model': self.model_name,
            'config': self.config.model_dump(),
            'parameters': len(self.parameter_names),
            'draws_per_chain': self.n_draws,
            'divergences': self.divergence_count,
            'chains': [
                {
                    'chain': c + 1,
                    'final_step_size': float(chain.final_step_size),
                    'mean_accept_prob': float(np.mean(chain.accept_prob)) if chain.accept_prob.size else None,
                    'divergences': chain.divergence_count,
                    'warmup_divergences': int(chain.warmup_divergences),
                }
                for c, chain in enumerate(self.chains)
            ],
        }


@dataclass(frozen=True)
class DualAveragingState:
    """Nesterov dual averaging on log step size"""

    mu: float
    log_step: float
    target: float
    log_step_bar: float = 0.0
    h_bar: float = 0.0
    t: int = 0
    gamma: float = 0.05
    t0: float = 10.0
    kappa: float = 0.75

    @classmethod
    def start(cls, step_size: float, target: float) -> 'DualAveragingState':
        return cls(mu=math.log(10.0 * step_size), log_step=math.log(step_size), target=target)

    @property
    def step_size(self) -> float:
        return math.exp(self.log_step)

    @property
    def final_step_size(self) -> float:
        return math.exp(self.log_step_bar) if self.t > 0 else self.step_size


# ============================================================================
# INTEGRATOR AND TRANSITION
# ============================================================================

def _is_finite(log_density: float, gradient: np.ndarray) -> bool:
    return math.isfinite(log_density) and bool(np.all(np.isfinite(gradient)))


def _evaluate(model: ModelDensity, position: np.ndarray) -> Tuple[float, np.ndarray]:
    """Log density and gradient; a raising density reads as non-finite"""
    try:
        log_density, gradient = model.log_density_and_gradient(position)
    except (ArithmeticError, ValueError):
        return math.nan, np.full(np.shape(position), math.nan)
    return float(log_density), np.asarray(gradient, dtype=float)


def _integrate(position, momentum, gradient, step_size, steps, model, inv_mass):
    """Half-kick / drift / half-kick; stops early on a non-finite density"""
    q = position.copy()
    p = momentum + 0.5 * step_size * gradient
    log_density = math.nan
    for i in range(steps):
        q = q + step_size * inv_mass * p
        log_density, gradient = _evaluate(model, q)
        if not _is_finite(log_density, gradient):
            return q, p, log_density, gradient, False
        if i < steps - 1:
            p = p + step_size * gradient
    p = p + 0.5 * step_size * gradient
    return q, p, log_density, gradient, True


def leapfrog(position, momentum, step_size: float, steps: int, model: ModelDensity,
             mass_diag: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Symplectic update of (q, p) under H = -log_density(q) + p'M^-1p/2

    Args:
        position: Starting q (unconstrained)
        momentum: Starting p
        step_size: Integrator step, > 0
        steps: Number of leapfrog steps, >= 1
        model: Target density
        mass_diag: Diagonal of M (identity when omitted)

    Returns:
        Tuple (q', p'); non-finite entries signal a divergent trajectory
    """
    position = np.asarray(position, dtype=float)
    momentum = np.asarray(momentum, dtype=float)
    mass = np.ones_like(position) if mass_diag is None else np.asarray(mass_diag, dtype=float)
    with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
        _, gradient = _evaluate(model, position)
        q, p, _, _, _ = _integrate(position, momentum, gradient, step_size, steps, model, 1.0 / mass)
    return q, p


def hmc_transition(state: ChainState, model: ModelDensity, step_size: float,
                   trajectory_length: float, rng: np.random.Generator,
                   mass_diag: Optional[np.ndarray] = None,
                   divergence_threshold: float = 1000.0,
                   max_steps: int = 1024) -> Tuple[ChainState, float, bool]:
    """One jittered-length HMC proposal with Metropolis correction"""
    mass = np.ones_like(state.position) if mass_diag is None else mass_diag
    inv_mass = 1.0 / mass
    momentum = rng.standard_normal(state.position.shape) * np.sqrt(mass)
    length = trajectory_length * rng.uniform(0.8, 1.2)
    steps = int(min(max_steps, max(1, round(length / step_size))))

    with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
        h0 = -state.log_density + 0.5 * float(np.dot(momentum * inv_mass, momentum))
        q, p, log_density, gradient, ok = _integrate(
            state.position, momentum, state.gradient, step_size, steps, model, inv_mass)
        h1 = -log_density + 0.5 * float(np.dot(p * inv_mass, p)) if ok else math.inf
        delta = h1 - h0

    u = rng.uniform()
    if not ok or not math.isfinite(delta) or delta > divergence_threshold:
        return state, 0.0, True

    accept_prob = 1.0 if delta <= 0 else math.exp(-delta)
    if u < accept_prob:
        return ChainState(q, float(log_density), gradient), accept_prob, False
    return state, accept_prob, False


def dual_averaging_step(adapt_state: DualAveragingState, accept_prob: float) -> DualAveragingState:
    """Advance dual averaging by one observed acceptance probability"""
    s = adapt_state
    t = s.t + 1
    eta = 1.0 / (t + s.t0)
    h_bar = (1.0 - eta) * s.h_bar + eta * (s.target - accept_prob)
    log_step = s.mu - math.sqrt(t) / s.gamma * h_bar
    weight = t ** (-s.kappa)
    log_step_bar = weight * log_step + (1.0 - weight) * s.log_step_bar
    return replace(s, t=t, h_bar=h_bar, log_step=log_step, log_step_bar=log_step_bar)


def find_reasonable_step_size(model: ModelDensity, state: ChainState, mass: np.ndarray,
                              rng: np.random.Generator) -> float:
    """Double or halve a unit step until one-step acceptance crosses 1/2"""
    step = 1.0
    inv_mass = 1.0 / mass
    momentum = rng.standard_normal(state.position.shape) * np.sqrt(mass)
    h0 = -state.log_density + 0.5 * float(np.dot(momentum * inv_mass, momentum))

    def log_ratio(eps: float) -> float:
        with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
            _, p, log_density, _, ok = _integrate(
                state.position, momentum, state.gradient, eps, 1, model, inv_mass)
            if not ok:
                return -math.inf
            value = h0 - (-log_density + 0.5 * float(np.dot(p * inv_mass, p)))
        return value if math.isfinite(value) else -math.inf

    direction = 1.0 if log_ratio(step) > math.log(0.5) else -1.0
    for _ in range(50):
        ratio = log_ratio(step)
        if direction * ratio <= direction * math.log(0.5):
            break
        step *= 2.0 ** direction
    return float(min(max(step, 1e-8), 1e3))


# ============================================================================
# CHAIN ORCHESTRATION
# ============================================================================

def warmup_windows(n_warmup: int) -> List[int]:
    """Iteration indices (exclusive ends) where a mass-adaptation window closes"""
    init = int(INIT_BUFFER * n_warmup)
    term = int(TERM_BUFFER * n_warmup)
    end = n_warmup - term
    ends = []
    start, size = init, BASE_WINDOW
    while start < end:
        stop = start + size
        # Fold a too-short tail into the current window
        if stop + 2 * size > end:
            stop = end
        ends.append(min(stop, end))
        start, size = stop, size * 2
    return ends


def _initialize(model: ModelDensity, rng: np.random.Generator) -> ChainState:
    for _ in range(INIT_ATTEMPTS):
        position = rng.uniform(-INIT_RADIUS, INIT_RADIUS, size=model.dim)
        with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
            log_density, gradient = _evaluate(model, position)
        if _is_finite(log_density, gradient):
            return ChainState(position, float(log_density), gradient)
    raise InitializationError(
        f"No finite log density at {INIT_ATTEMPTS} random starts in "
        f"[-{INIT_RADIUS:g}, {INIT_RADIUS:g}]^{model.dim} for model {model.name}")


def _regularized_mass(window: List[np.ndarray]) -> np.ndarray:
    samples = np.asarray(window)
    n = samples.shape[0]
    if n < 2:
        return np.ones(samples.shape[1])
    variance = samples.var(axis=0, ddof=1)
    variance = (n / (n + 5.0)) * variance + 1e-3 * (5.0 / (n + 5.0))
    return 1.0 / variance


def run_chain(model: ModelDensity, config: HmcConfig, chain_index: int) -> ChainDraws:
    """Warmup then sample one chain from its own PCG64 stream"""
    rng = np.random.Generator(np.random.PCG64(config.seed + chain_index))
    state = _initialize(model, rng)
    mass = np.ones(model.dim)
    n_warmup, n_sampling = config.warmup_iterations, config.sampling_iterations
    trajectory = config.base_trajectory_length

    def transition(current: ChainState, step: float):
        return hmc_transition(current, model, step, trajectory, rng, mass,
                              config.divergence_threshold, config.max_leapfrog_steps)

    adapt = DualAveragingState.start(find_reasonable_step_size(model, state, mass, rng),
                                     config.target_accept)
    window_ends = warmup_windows(n_warmup)
    window_start = int(INIT_BUFFER * n_warmup)
    window: List[np.ndarray] = []
    step_trace = np.empty(n_warmup)
    warmup_divergences = 0

    for it in range(n_warmup):
        state, accept_prob, divergent = transition(state, adapt.step_size)
        adapt = dual_averaging_step(adapt, accept_prob)
        step_trace[it] = adapt.step_size
        warmup_divergences += int(divergent)
        if window_ends and window_start <= it < window_ends[-1]:
            window.append(state.position)
        if it + 1 in window_ends:
            mass = _regularized_mass(window)
            window = []
            adapt = DualAveragingState.start(find_reasonable_step_size(model, state, mass, rng),
                                             config.target_accept)

    step_size = adapt.final_step_size if n_warmup > 0 else adapt.step_size

    draws = np.empty((n_sampling, model.dim))
    divergent_flags = np.zeros(n_sampling, dtype=bool)
    accept = np.empty(n_sampling)
    for it in range(n_sampling):
        state, accept[it], divergent_flags[it] = transition(state, step_size)
        draws[it] = model.constrain_array(state.position)

    return ChainDraws(
        draws=draws,
        divergent=divergent_flags,
        accept_prob=accept,
        final_step_size=step_size,
        mass_diagonal=mass,
        step_size_trace=step_trace,
        warmup_divergences=warmup_divergences,
    )


def _chain_job(job) -> ChainDraws:
    model, config, chain_index = job
    return run_chain(model, config, chain_index)


def run_chains(model: ModelDensity, config: HmcConfig) -> SampleRun:
    """
    Run config.chains independent chains and merge them by chain index

    Args:
        model: Target density
        config: Sampler settings

    Returns:
        SampleRun; identical (model, config) gives identical draws
    """
    started = time.perf_counter()
    jobs = [(model, config, c) for c in range(config.chains)]
    if config.parallel and config.chains > 1:
        with ProcessPoolExecutor(max_workers=config.chains) as pool:
            chains = list(pool.map(_chain_job, jobs))
    else:
        chains = [_chain_job(job) for job in jobs]
    return SampleRun(
        chains=chains,
        parameter_names=list(model.parameter_names),
        config=config,
        model_name=model.name,
        duration_seconds=time.perf_counter() - started,
    )
