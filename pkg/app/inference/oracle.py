"""
Grid Quadrature Oracle
Deterministic posterior evaluation for two-parameter targets by top-mass
grid refinement, and 1-D Simpson quadrature for normalizers and moments
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Protocol, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel
from scipy.integrate import simpson
from scipy.special import logsumexp

from app.core.errors import GridBoundsError, NumericalError, UsageError

Bounds = Tuple[Tuple[float, float], Tuple[float, float]]

DEFAULT_BOUNDS: Bounds = ((-40.0, 10.0), (-5.0, 30.0))
DEFAULT_RESOLUTION = 512
DEFAULT_REFINEMENTS = 6

SPLIT_MASS = 0.5
TIE_TOLERANCE = 1e-9
STABILITY_TOLERANCE = 0.01

LOG_TINY = math.log(np.finfo(float).tiny)

# Cells per target evaluation; bounds the (cells x experiments) work array
EVAL_CHUNK = 32768


class GridTarget(Protocol):
    """Anything with two parameter names and a vectorized constrained log density"""

    parameter_names: List[str]

    def log_density_constrained(self, points: np.ndarray) -> np.ndarray:
        ...


class GridMoments(BaseModel):
    mean: float
    sd: float
    q25: float
    median: float
    q75: float


@dataclass(frozen=True)
class GridPosterior:
    """
    Normalized cell masses tiling a 2-D box

    Cell j spans [a_lo[j], a_hi[j]] x [b_lo[j], b_hi[j]]; masses sum to 1.
    """

    parameter_names: List[str]
    a_lo: np.ndarray
    a_hi: np.ndarray
    b_lo: np.ndarray
    b_hi: np.ndarray
    mass: np.ndarray
    generations: int = 0
    history: List[Dict[str, Tuple[float, float]]] = field(default_factory=list)

    @property
    def n_cells(self) -> int:
        return int(self.mass.size)

    @property
    def a_mid(self) -> np.ndarray:
        return 0.5 * (self.a_lo + self.a_hi)

    @property
    def b_mid(self) -> np.ndarray:
        return 0.5 * (self.b_lo + self.b_hi)

    @property
    def max_mass(self) -> float:
        return float(self.mass.max())

    def is_stable(self, tolerance: float = STABILITY_TOLERANCE) -> bool:
        """Means and sds moved by less than tolerance over the last generation"""
        if len(self.history) < 2:
            return False
        previous, current = self.history[-2], self.history[-1]
        for name in self.parameter_names:
            (m0, s0), (m1, s1) = previous[name], current[name]
            scale = max(abs(m1), s1, 1e-12)
            if abs(m1 - m0) > tolerance * scale or abs(s1 - s0) > tolerance * max(s1, 1e-12):
                return False
        return True


class QuadratureResult(NamedTuple):
    log_normalizer: float
    mean: float
    sd: float

    @property
    def normalizer(self) -> float:
        return math.exp(self.log_normalizer)


# ============================================================================
# 2-D GRID
# ============================================================================

def _cell_log_mass(target: GridTarget, a_lo, a_hi, b_lo, b_hi) -> np.ndarray:
    """2-D midpoint rule in log space"""
    mids = np.column_stack([0.5 * (a_lo + a_hi), 0.5 * (b_lo + b_hi)])
    with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
        log_density = np.concatenate([
            np.asarray(target.log_density_constrained(mids[start:start + EVAL_CHUNK]), dtype=float)
            for start in range(0, mids.shape[0], EVAL_CHUNK)
        ]) if mids.shape[0] else np.zeros(0)
        log_area = np.log(a_hi - a_lo) + np.log(b_hi - b_lo)
    if np.any(np.isnan(log_density)) or np.any(log_density == np.inf):
        raise NumericalError("grid target returned NaN or +inf log density")
    return log_density + log_area


def _normalize(log_mass: np.ndarray) -> np.ndarray:
    # Sorted accumulation keeps the total independent of cell order
    total = logsumexp(np.sort(log_mass))
    return np.exp(log_mass - total)


def _summary_pairs(g: 'GridPosterior') -> Dict[str, Tuple[float, float]]:
    return {name: (m.mean, m.sd) for name, m in grid_moments(g).items()}


def grid_posterior(target: GridTarget, bounds: Bounds = DEFAULT_BOUNDS,
                   initial_resolution: int = DEFAULT_RESOLUTION,
                   refinements: int = DEFAULT_REFINEMENTS) -> GridPosterior:
    """
    Grid posterior refined toward its high-mass region

    Each generation splits every cell among the top-mass cells that hold half
    of the total mass (ties at the cut-off included) into four children.

    Args:
        target: Two-parameter GridTarget, e.g. SimpleLrModel
        bounds: ((a_min, a_max), (b_min, b_max)), finite
        initial_resolution: Cells per axis of the starting grid, >= 8
        refinements: Number of refinement generations, >= 0

    Returns:
        GridPosterior with masses summing to 1

    Raises:
        GridBoundsError: every cell is numerically zero inside the bounds
    """
    (a_min, a_max), (b_min, b_max) = bounds
    if not all(math.isfinite(v) for v in (a_min, a_max, b_min, b_max)):
        raise UsageError("grid bounds must be finite")
    if not (a_min < a_max and b_min < b_max):
        raise UsageError(f"grid bounds must be increasing, got {bounds}")
    if initial_resolution < 8:
        raise UsageError(f"initial_resolution must be at least 8, got {initial_resolution}")
    if refinements < 0:
        raise UsageError("refinements must be non-negative")
    names = list(getattr(target, 'parameter_names', ['a', 'b']))[:2]

    a_edges = np.linspace(a_min, a_max, initial_resolution + 1)
    b_edges = np.linspace(b_min, b_max, initial_resolution + 1)
    ia, ib = np.meshgrid(np.arange(initial_resolution), np.arange(initial_resolution), indexing='ij')
    ia, ib = ia.ravel(), ib.ravel()
    a_lo, a_hi = a_edges[ia], a_edges[ia + 1]
    b_lo, b_hi = b_edges[ib], b_edges[ib + 1]

    log_mass = _cell_log_mass(target, a_lo, a_hi, b_lo, b_hi)
    log_area = math.log((a_max - a_min) * (b_max - b_min) / initial_resolution ** 2)
    if not np.max(log_mass) - log_area >= LOG_TINY:
        raise GridBoundsError(
            f"posterior density is numerically zero on every cell of {bounds}; "
            f"widen the grid bounds")

    grid = GridPosterior(names, a_lo, a_hi, b_lo, b_hi, _normalize(log_mass))
    history = [_summary_pairs(grid)]

    for generation in range(1, refinements + 1):
        mass = grid.mass
        order = np.argsort(-mass, kind='stable')
        cumulative = np.cumsum(mass[order])
        k = int(np.searchsorted(cumulative, SPLIT_MASS)) + 1
        cutoff = mass[order[min(k, mass.size) - 1]]
        split = mass >= cutoff * (1.0 - TIE_TOLERANCE)

        keep = ~split
        a_mid = 0.5 * (a_lo[split] + a_hi[split])
        b_mid = 0.5 * (b_lo[split] + b_hi[split])
        child_a_lo = np.concatenate([a_lo[split], a_mid, a_lo[split], a_mid])
        child_a_hi = np.concatenate([a_mid, a_hi[split], a_mid, a_hi[split]])
        child_b_lo = np.concatenate([b_lo[split], b_lo[split], b_mid, b_mid])
        child_b_hi = np.concatenate([b_mid, b_mid, b_hi[split], b_hi[split]])

        child_log_mass = _cell_log_mass(target, child_a_lo, child_a_hi, child_b_lo, child_b_hi)
        a_lo = np.concatenate([a_lo[keep], child_a_lo])
        a_hi = np.concatenate([a_hi[keep], child_a_hi])
        b_lo = np.concatenate([b_lo[keep], child_b_lo])
        b_hi = np.concatenate([b_hi[keep], child_b_hi])
        log_mass = np.concatenate([log_mass[keep], child_log_mass])

        grid = GridPosterior(names, a_lo, a_hi, b_lo, b_hi, _normalize(log_mass), generation)
        history.append(_summary_pairs(grid))

    return GridPosterior(names, a_lo, a_hi, b_lo, b_hi, grid.mass, refinements, history)


def _marginal_quantiles(lo: np.ndarray, hi: np.ndarray, mass: np.ndarray,
                        levels: Sequence[float]) -> np.ndarray:
    """Quantiles of the marginal with each cell's mass spread uniformly over [lo, hi]"""
    if np.all(hi - lo <= 0):
        return np.full(len(levels), float(lo[0]))
    breaks, inverse = np.unique(np.concatenate([lo, hi]), return_inverse=True)
    density = mass / (hi - lo)
    slope_change = np.zeros(breaks.size)
    np.add.at(slope_change, inverse[:lo.size], density)
    np.add.at(slope_change, inverse[lo.size:], -density)
    slope = np.cumsum(slope_change)[:-1]
    cdf = np.concatenate([[0.0], np.cumsum(slope * np.diff(breaks))])
    cdf /= cdf[-1]
    return np.interp(levels, cdf, breaks)


def grid_moments(g: GridPosterior) -> Dict[str, GridMoments]:
    """
    Per-parameter moments and quartiles

    Means and sds use mass-weighted cell midpoints; quartiles come from the
    piecewise-uniform marginal CDF along each axis.
    """
    results = {}
    for name, mid, lo, hi in ((g.parameter_names[0], g.a_mid, g.a_lo, g.a_hi),
                              (g.parameter_names[1], g.b_mid, g.b_lo, g.b_hi)):
        mean = float(np.dot(g.mass, mid))
        variance = max(float(np.dot(g.mass, (mid - mean) ** 2)), 0.0)
        q25, median, q75 = _marginal_quantiles(lo, hi, g.mass, [0.25, 0.5, 0.75])
        results[name] = GridMoments(mean=mean, sd=math.sqrt(variance),
                                    q25=float(q25), median=float(median), q75=float(q75))
    return results


def grid_frame(g: GridPosterior) -> pd.DataFrame:
    """Cell dump: alpha_lo, alpha_hi, beta_lo, beta_hi, mass; cells whose mass underflowed to 0 are left out"""
    a, b = g.parameter_names
    order = np.lexsort((g.b_lo, g.a_lo))
    order = order[g.mass[order] > 0.0]
    return pd.DataFrame({
        f'{a}_lo': g.a_lo[order],
        f'{a}_hi': g.a_hi[order],
        f'{b}_lo': g.b_lo[order],
        f'{b}_hi': g.b_hi[order],
        'mass': g.mass[order],
    })


# ============================================================================
# 1-D QUADRATURE
# ============================================================================

def quadrature_1d(log_density: Callable[[float], float], lower: float, upper: float,
                  points: int = 4096) -> QuadratureResult:
    """
    Composite Simpson quadrature of exp(log_density) on [lower, upper]

    Args:
        log_density: Scalar log density; -inf is allowed at nodes
        lower: Finite lower limit
        upper: Finite upper limit
        points: Number of intervals (>= 64; rounded up to even)

    Returns:
        QuadratureResult(log_normalizer, mean, sd)

    Raises:
        NumericalError: NaN or +inf density at a node
    """
    if points < 64:
        raise UsageError(f"quadrature_1d needs at least 64 points, got {points}")
    if not (math.isfinite(lower) and math.isfinite(upper) and lower < upper):
        raise UsageError(f"quadrature limits must be finite with lower < upper, got [{lower}, {upper}]")
    intervals = points + (points % 2)
    nodes = np.linspace(lower, upper, intervals + 1)
    with np.errstate(divide='ignore', invalid='ignore'):
        values = np.array([float(log_density(x)) for x in nodes])

    bad = np.isnan(values) | (values == np.inf)
    if bad.any():
        raise NumericalError(f"non-finite log density at x = {nodes[np.argmax(bad)]:g}")
    peak = float(values.max())
    if not math.isfinite(peak):
        raise NumericalError("density is zero at every quadrature node")

    weights = np.exp(values - peak)
    z = float(simpson(weights, x=nodes))
    mean = float(simpson(weights * nodes, x=nodes)) / z
    variance = float(simpson(weights * (nodes - mean) ** 2, x=nodes)) / z
    return QuadratureResult(peak + math.log(z), mean, math.sqrt(max(variance, 0.0)))


def conjugate_grid_mean(model, points: int = 4096) -> QuadratureResult:
    """Quadrature moments of a single-probability model over theta in [0, 1]"""
    return quadrature_1d(lambda theta: float(model.log_density_constrained(theta)), 0.0, 1.0, points)
