"""
SVG Figures
Survival-ratio scatter, posterior density, traceplot and model comparison
figures rendered with matplotlib's SVG backend
"""

import io
from typing import List, Sequence, Tuple

import matplotlib
matplotlib.use('Agg')  # Non-interactive backend for CLI runs
import matplotlib.pyplot as plt
import pandas as pd
from matplotlib.figure import Figure

# Stable element ids across runs
matplotlib.rcParams['svg.hashsalt'] = 'doseresp'

SCATTER_GID = 'survival-ratios'


def figure_to_svg(fig: Figure) -> str:
    buffer = io.StringIO()
    fig.savefig(buffer, format='svg', metadata={'Date': None})
    plt.close(fig)
    return buffer.getvalue()


def survival_scatter(ratios: Sequence[Tuple[float, float]]) -> Figure:
    """Survival ratio n/N against dosage, one marker per experiment"""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    doses = [d for d, _ in ratios]
    values = [r for _, r in ratios]
    ax.scatter(doses, values, s=18, color='#1f77b4', gid=SCATTER_GID)
    ax.set_xlabel('Dosage (d)')
    ax.set_ylabel('Survival ratio (n/N)')
    ax.set_title('Survival Ratio vs. Dosage')
    ax.set_ylim(-0.05, 1.05)
    ax.grid(alpha=0.3)
    return fig


def density_plot(series: pd.DataFrame, parameter: str) -> Figure:
    """Posterior density curve from a density_series frame"""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(series['x'], series['density'], color='#d62728')
    ax.fill_between(series['x'], series['density'], alpha=0.2, color='#d62728')
    ax.set_xlabel(parameter)
    ax.set_ylabel('density')
    ax.set_title(f'Posterior density of {parameter}')
    return fig


def trace_plot(trace: pd.DataFrame, parameter: str) -> Figure:
    """Overlaid per-chain traces from a trace_series frame"""
    fig, ax = plt.subplots(figsize=(8, 3.5))
    for chain, frame in trace.groupby('chain', sort=True):
        ax.plot(frame['iteration'], frame['value'], linewidth=0.6, label=f'chain {chain}')
    ax.set_xlabel('iteration')
    ax.set_ylabel(parameter)
    ax.set_title(f'Trace of {parameter}')
    ax.legend(loc='upper right', fontsize='small')
    return fig


def comparison_plot(ratios: Sequence[Tuple[float, float]], hill: pd.DataFrame,
                    bayes: pd.DataFrame) -> Figure:
    """Hill curve, Bayesian posterior-mean curve and raw ratios on shared axes"""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.scatter([d for d, _ in ratios], [r for _, r in ratios], s=14, color='#7f7f7f',
               label='survival ratio', gid=SCATTER_GID)
    ax.plot(hill['dose'], hill['response'], color='#2ca02c', label='Hill equation')
    ax.plot(bayes['dose'], bayes['plug_in'], color='#d62728', label='Bayesian posterior mean')
    doses: List[float] = list(hill['dose']) + list(bayes['dose']) + [d for d, _ in ratios]
    span = max(doses) - min(doses)
    ax.set_xlim(min(doses) - 0.02 * span, max(doses) + 0.02 * span)
    ax.set_ylim(-0.05, 1.05)
    ax.set_xlabel('Dosage (d)')
    ax.set_ylabel('Response')
    ax.set_title('Comparison of Models')
    ax.legend(loc='upper left')
    ax.grid(alpha=0.3)
    return fig
