"""
Convergence Diagnostics and Posterior Summaries
Split-Rhat, effective sample size, MCSE, quartile summaries and the
density / trace / curve series the plots are drawn from
"""

import math
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel
from scipy.special import expit
from scipy.stats import gaussian_kde

from app.core.errors import UnsupportedModelError, UsageError
from app.inference.sampler import SampleRun

RHAT_THRESHOLD = 1.01
MAX_DIVERGENT_FRACTION = 0.01

GLOBALS_ROWS = ['1st Qu.', 'Mean', '3rd Qu.', 'sd']
HIERARCHICAL_GLOBALS = ['mu_a', 'mu_b', 'sigma_a', 'sigma_b']

SUMMARY_COLUMNS = ['parameter', 'mean', 'sd', 'q2_5', 'q25', 'median', 'q75', 'q97_5',
                   'split_rhat', 'ess', 'mcse']


class ParameterSummary(BaseModel):
    """Pooled posterior summary of one parameter; None marks a degenerate diagnostic"""

    name: str
    mean: float
    sd: float
    q2_5: float
    q25: float
    median: float
    q75: float
    q97_5: float
    split_rhat: Optional[float] = None
    ess: Optional[float] = None
    mcse: Optional[float] = None


class PosteriorSummary(BaseModel):
    """Summary table of a SampleRun"""

    parameters: List[ParameterSummary]
    divergence_count: int = 0
    divergent_fraction: float = 0.0
    chains: int = 1
    draws_per_chain: int = 0

    def get(self, name: str) -> ParameterSummary:
        for row in self.parameters:
            if row.name == name:
                return row
        raise KeyError(name)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [row.model_dump() for row in self.parameters]
        ).rename(columns={'name': 'parameter'})[SUMMARY_COLUMNS]

    def globals_frame(self, parameters: Optional[Sequence[str]] = None) -> pd.DataFrame:
        """Rows 1st Qu. / Mean / 3rd Qu. / sd, one column per parameter"""
        names = list(parameters) if parameters else [row.name for row in self.parameters]
        frame = pd.DataFrame({
            name: [self.get(name).q25, self.get(name).mean, self.get(name).q75, self.get(name).sd]
            for name in names
        }, index=GLOBALS_ROWS)
        frame.index.name = 'statistic'
        return frame

    def to_dict(self) -> dict:
        return self.model_dump()


# ============================================================================
# CONVERGENCE STATISTICS
# ============================================================================

def _as_chains(chains) -> List[np.ndarray]:
    if isinstance(chains, np.ndarray) and chains.ndim == 1:
        chains = [chains]
    arrays = [np.asarray(chain, dtype=float) for chain in chains]
    if not arrays:
        raise UsageError("need at least one chain")
    if len({a.shape[0] for a in arrays}) != 1:
        raise UsageError("all chains must hold the same number of draws")
    return arrays


def split_rhat(chains) -> Optional[float]:
    """
    Potential scale reduction over chain halves

    An odd draw count drops the middle draw of each chain. A single chain is
    split into two halves like any other.

    Args:
        chains: Sequence of equal-length draw vectors

    Returns:
        sqrt((W(m-1)/m + B/m) / W); None when every draw is identical,
        inf when halves are internally constant but disagree
    """
    arrays = _as_chains(chains)
    n = arrays[0].shape[0]
    if n < 4:
        raise UsageError(f"split_rhat needs at least 4 draws per chain, got {n}")
    half = n // 2
    halves = np.array([part for a in arrays for part in (a[:half], a[n - half:])])
    m = half

    within = float(np.mean(halves.var(axis=1, ddof=1)))
    between = m * float(np.var(halves.mean(axis=1), ddof=1))
    if within <= 0.0:
        return None if between <= 0.0 else math.inf
    return math.sqrt((within * (m - 1) / m + between / m) / within)


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance by FFT"""
    n = x.shape[0]
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    centered = x - x.mean()
    spectrum = np.fft.rfft(centered, n=size)
    return np.fft.irfft(spectrum * np.conjugate(spectrum), n=size)[:n] / n


def effective_sample_size(chains) -> Optional[float]:
    """
    Multi-chain ESS with Geyer's initial positive and monotone sequences

    Returns:
        chains*draws / tau; tau is floored at 1/log10(chains*draws) so
        anti-correlated chains may report more than the nominal count.
        None for zero variance.
    """
    arrays = _as_chains(chains)
    samples = np.stack(arrays)
    m, n = samples.shape
    if n < 8:
        raise UsageError(f"effective_sample_size needs at least 8 draws per chain, got {n}")

    acov = np.stack([_autocovariance(chain) for chain in samples])
    mean_var = float(np.mean(acov[:, 0])) * n / (n - 1.0)
    var_plus = mean_var * (n - 1.0) / n
    if m > 1:
        var_plus += float(np.var(samples.mean(axis=1), ddof=1))
    if not var_plus > 0.0:
        return None

    rho = np.zeros(n)
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - float(np.mean(acov[:, 1]))) / var_plus
    rho[0], rho[1] = rho_even, rho_odd

    # Initial positive sequence over pair sums
    t = 1
    while t < n - 3 and rho_even + rho_odd > 0.0:
        rho_even = 1.0 - (mean_var - float(np.mean(acov[:, t + 1]))) / var_plus
        rho_odd = 1.0 - (mean_var - float(np.mean(acov[:, t + 2]))) / var_plus
        if rho_even + rho_odd >= 0.0:
            rho[t + 1] = rho_even
            rho[t + 2] = rho_odd
        t += 2
    max_t = t - 2
    if rho_even > 0.0:
        rho[max_t + 1] = rho_even

    # Initial monotone sequence
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2

    nominal = m * n
    tau = -1.0 + 2.0 * float(np.sum(rho[:max_t + 1])) + float(np.sum(rho[max_t + 1:max_t + 2]))
    tau = max(tau, 1.0 / math.log10(nominal))
    return nominal / tau


def mcse(chains) -> float:
    """Monte-Carlo standard error of the mean, sd / sqrt(ESS)"""
    arrays = _as_chains(chains)
    pooled = np.concatenate(arrays)
    ess = effective_sample_size(arrays)
    if ess is None:
        return 0.0
    return float(pooled.std(ddof=1)) / math.sqrt(ess)


# ============================================================================
# RUN SUMMARIES
# ============================================================================

def _summarize_parameter(name: str, per_chain: List[np.ndarray]) -> ParameterSummary:
    pooled = np.concatenate(per_chain)
    q2_5, q25, median, q75, q97_5 = np.quantile(pooled, [0.025, 0.25, 0.5, 0.75, 0.975], method='linear')
    sd = float(pooled.std(ddof=1)) if pooled.size > 1 else 0.0

    draws = per_chain[0].shape[0]
    rhat = split_rhat(per_chain) if draws >= 4 else None
    ess = effective_sample_size(per_chain) if draws >= 8 else None
    if ess is not None:
        error = sd / math.sqrt(ess)
    else:
        error = 0.0 if sd == 0.0 else None

    return ParameterSummary(
        name=name, mean=float(pooled.mean()), sd=sd,
        q2_5=float(q2_5), q25=float(q25), median=float(median), q75=float(q75), q97_5=float(q97_5),
        split_rhat=rhat, ess=ess, mcse=error,
    )


def summarize_run(run: SampleRun) -> PosteriorSummary:
    """Pooled summaries (type-7 quantiles) with split-Rhat and ESS per parameter"""
    if run.n_draws < 1:
        raise UsageError("cannot summarize a run without post-warmup draws")
    rows = [
        _summarize_parameter(name, run.chain_values(name))
        for name in run.parameter_names
    ]
    return PosteriorSummary(
        parameters=rows,
        divergence_count=run.divergence_count,
        divergent_fraction=run.divergent_fraction,
        chains=run.n_chains,
        draws_per_chain=run.n_draws,
    )


def convergence_failures(summary: PosteriorSummary, rhat_threshold: float = RHAT_THRESHOLD,
                         max_divergent_fraction: float = MAX_DIVERGENT_FRACTION) -> List[str]:
    """
    Parameters that fail the convergence gate

    Returns:
        Names with split_rhat above the threshold or degenerate, plus
        'divergences' when the divergent fraction is too high
    """
    failing = [
        row.name for row in summary.parameters
        if row.split_rhat is None or not row.split_rhat <= rhat_threshold
    ]
    if summary.divergent_fraction > max_divergent_fraction:
        failing.append('divergences')
    return failing


# ============================================================================
# PLOT SERIES
# ============================================================================

def silverman_bandwidth(draws: np.ndarray) -> float:
    values = np.asarray(draws, dtype=float)
    sd = float(values.std(ddof=1))
    q75, q25 = np.quantile(values, [0.75, 0.25])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * values.size ** (-0.2)


def density_series(draws, points: int = 512, bandwidth: Optional[float] = None) -> pd.DataFrame:
    """
    Gaussian KDE on an even grid over [min - 3h, max + 3h]

    Args:
        draws: At least 10 draws
        points: Grid size
        bandwidth: Kernel sd h; Silverman's rule when omitted

    Returns:
        DataFrame with columns x, density (a three-point spike for constant draws)
    """
    values = np.asarray(draws, dtype=float)
    if values.size < 10:
        raise UsageError(f"density_series needs at least 10 draws, got {values.size}")
    if points < 2:
        raise UsageError("density_series needs at least 2 grid points")

    sd = float(values.std(ddof=1))
    if sd == 0.0:
        c = float(values[0])
        half_width = 1e-6 * max(1.0, abs(c))
        return pd.DataFrame({'x': [c - half_width, c, c + half_width],
                             'density': [0.0, 1.0 / half_width, 0.0]})

    h = float(bandwidth) if bandwidth else silverman_bandwidth(values)
    if not h > 0:
        raise UsageError(f"bandwidth must be positive, got {h}")
    kde = gaussian_kde(values, bw_method=h / sd)
    grid = np.linspace(values.min() - 3 * h, values.max() + 3 * h, points)
    return pd.DataFrame({'x': grid, 'density': np.maximum(kde(grid), 0.0)})


def trace_series(run: SampleRun, parameter: str) -> pd.DataFrame:
    """Long frame (chain, iteration, value) for traceplots"""
    frames = [
        pd.DataFrame({'chain': c + 1, 'iteration': np.arange(1, values.size + 1), 'value': values})
        for c, values in enumerate(run.chain_values(parameter))
    ]
    return pd.concat(frames, ignore_index=True)


def curve_coefficients(run: SampleRun):
    """Names of the draws that define the population logistic curve"""
    names = run.parameter_names
    if 'alpha' in names and 'beta' in names:
        return 'alpha', 'beta'
    if 'mu_a' in names and 'mu_b' in names:
        return 'mu_a', 'mu_b'
    raise UnsupportedModelError(f"model {run.model_name} has no dose-response coefficients")


def posterior_curve(run: SampleRun, dosages) -> pd.DataFrame:
    """
    Posterior survival curve inverse_logit(alpha + beta*d) per dosage

    Hierarchical runs use the global means (mu_a, mu_b).

    Returns:
        DataFrame: dose, plug_in (curve at the posterior means), mean,
        q2_5, median, q97_5
    """
    a_name, b_name = curve_coefficients(run)
    pooled = run.pooled()
    a = pooled[:, run.index_of(a_name)]
    b = pooled[:, run.index_of(b_name)]
    doses = np.asarray(dosages, dtype=float)
    probs = expit(a[:, None] + b[:, None] * doses[None, :])
    q2_5, median, q97_5 = np.quantile(probs, [0.025, 0.5, 0.975], axis=0, method='linear')
    return pd.DataFrame({
        'dose': doses,
        'plug_in': expit(a.mean() + b.mean() * doses),
        'mean': probs.mean(axis=0),
        'q2_5': q2_5,
        'median': median,
        'q97_5': q97_5,
    })


def posterior_mean_curve(summary: PosteriorSummary, coefficients=('alpha', 'beta')):
    """Plug-in curve d -> inverse_logit(mean_a + mean_b*d)"""
    a = summary.get(coefficients[0]).mean
    b = summary.get(coefficients[1]).mean
    return lambda d: expit(a + b * np.asarray(d, dtype=float))


def global_parameters(parameter_names: Sequence[str]) -> List[str]:
    """Population-level parameters: hyperparameters of hierarchical runs, else everything"""
    if all(name in parameter_names for name in HIERARCHICAL_GLOBALS):
        return list(HIERARCHICAL_GLOBALS)
    return list(parameter_names)


def summary_frames(summary: PosteriorSummary) -> Dict[str, pd.DataFrame]:
    """Frames written next to a sample run: summary always, global-parameter quartiles for hierarchical runs"""
    frames = {'summary': summary.to_frame()}
    names = [row.name for row in summary.parameters]
    if global_parameters(names) == HIERARCHICAL_GLOBALS:
        frames['globals'] = summary.globals_frame(HIERARCHICAL_GLOBALS)
    return frames
