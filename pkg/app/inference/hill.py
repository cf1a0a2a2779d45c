"""
Hill Equation Dose-Response Model
E(d) = r_max / (1 + (d50/d)^c_h), fitted by level crossings of the
isotonic-smoothed survival ratios and refined by coordinate descent
"""

import math
from typing import Callable, List, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import isotonic_regression, minimize_scalar
from scipy.special import expit

from app.core.errors import DataValidationError, UsageError
from app.inference.data import Dataset

LOG_81 = math.log(81.0)
LEVELS = (0.1, 0.5, 0.9)

REFINE_SWEEPS = 100
R_MAX_WINDOW = 0.2
D50_WINDOW = (0.7, 1.3)
C_H_WINDOW = (0.5, 1.5)
C_H_CAP = 1e3


class HillFit(BaseModel):
    """Fitted Hill curve; d10/d90 are the 10%/90%-of-maximum doses"""

    model_config = ConfigDict(frozen=True)

    r_max: float = Field(gt=0, le=1)
    d50: float = Field(gt=0)
    c_h: float
    d10: float = Field(gt=0)
    d90: float = Field(gt=0)
    loss: float = 0.0

    @classmethod
    def from_parameters(cls, r_max: float, d50: float, c_h: float, loss: float = 0.0) -> 'HillFit':
        d10, d90 = level_doses(d50, c_h)
        return cls(r_max=r_max, d50=d50, c_h=c_h, d10=d10, d90=d90, loss=loss)


def hill_coefficient(d10: float, d90: float) -> float:
    """log(81) / log(d90/d10)"""
    if not (d10 > 0 and d90 > 0):
        raise UsageError(f"doses must be positive, got d10={d10}, d90={d90}")
    if d10 == d90:
        raise UsageError("d10 and d90 coincide; the Hill coefficient is undefined")
    return LOG_81 / math.log(d90 / d10)


def level_doses(d50: float, c_h: float) -> Tuple[float, float]:
    """(d10, d90) implied by d50 and c_h"""
    if c_h == 0:
        raise UsageError("c_h = 0 has no 10%/90% doses")
    spread = 9.0 ** (1.0 / c_h)
    return d50 / spread, d50 * spread


def hill_response(d, fit: HillFit):
    """
    Response fraction at dose d

    Evaluated as r_max * inverse_logit(c_h * log(d/d50)), which equals
    r_max / (1 + (d50/d)^c_h) without overflow for steep curves.
    """
    return hill_equation(d, fit.r_max, fit.d50, fit.c_h)


def hill_equation(d, r_max: float, d50: float, c_h: float):
    """r_max / (1 + (d50/d)^c_h) for positive doses d"""
    doses = np.asarray(d, dtype=float)
    if np.any(~(doses > 0)):
        raise UsageError("Hill response needs positive doses")
    value = r_max * expit(c_h * (np.log(doses) - math.log(d50)))
    return float(value) if value.ndim == 0 else value


def weighted_residual(ds: Dataset, curve: Callable, weighted: bool = True) -> float:
    """sum_i N_i (n_i/N_i - curve(d_i))^2; weights 1 when weighted is False"""
    ratios = ds.improved / ds.totals
    weights = ds.totals.astype(float) if weighted else np.ones(ds.size)
    predicted = np.asarray(curve(ds.dosages), dtype=float)
    return float(np.sum(weights * (ratios - predicted) ** 2))


# ============================================================================
# FITTING
# ============================================================================

def _pooled_ratios(ds: Dataset) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unique sorted doses with tied experiments pooled"""
    grouped = ds.to_frame().groupby('dosage', sort=True)[['improved', 'total']].sum()
    doses = grouped.index.to_numpy(dtype=float)
    totals = grouped['total'].to_numpy(dtype=float)
    return doses, grouped['improved'].to_numpy(dtype=float) / totals, totals


def _level_crossing(doses: np.ndarray, smoothed: np.ndarray, level: float, label: str) -> float:
    above = np.nonzero(smoothed >= level)[0]
    if above.size == 0 or above[0] == 0:
        raise DataValidationError(
            f"the {label} response level ({level:.4g}) is not bracketed by the data")
    i = int(above[0])
    x0, x1 = doses[i - 1], doses[i]
    y0, y1 = smoothed[i - 1], smoothed[i]
    return float(x0 + (level - y0) * (x1 - x0) / (y1 - y0))


def initial_hill(ds: Dataset) -> HillFit:
    """Level-crossing estimate from the isotonic-smoothed survival ratios"""
    if ds.size < 4:
        raise DataValidationError(f"Hill fitting needs at least 4 experiments, got {ds.size}")
    doses, ratios, totals = _pooled_ratios(ds)
    if np.all(ratios == ratios[0]):
        raise DataValidationError("survival ratios are all equal; no dose-response to fit")

    smoothed = isotonic_regression(ratios, weights=totals, increasing=True).x
    r_max = float(smoothed.max())
    if r_max <= 0:
        raise DataValidationError("no improved subjects at any dose")

    d10, d50, d90 = (
        _level_crossing(doses, smoothed, fraction * r_max, f"{int(fraction * 100)}%")
        for fraction in LEVELS
    )
    c_h = min(hill_coefficient(d10, d90), C_H_CAP)
    return HillFit(r_max=min(r_max, 1.0), d50=d50, c_h=c_h, d10=d10, d90=d90)


def refine_hill(ds: Dataset, start: HillFit, sweeps: int = REFINE_SWEEPS,
                weighted: bool = True) -> Tuple[HillFit, List[float]]:
    """
    Coordinate-descent least squares over (r_max, d50, c_h)

    Each coordinate is minimized by bounded Brent search inside a window
    around its current value; a move is kept only if the loss does not grow.

    Returns:
        Refined fit and the loss after every sweep (non-increasing)
    """
    params = [start.r_max, start.d50, start.c_h]

    def loss(values) -> float:
        r_max, d50, c_h = values
        return weighted_residual(ds, lambda d: hill_equation(d, r_max, d50, c_h), weighted)

    def window(index: int, value: float) -> Tuple[float, float]:
        if index == 0:
            return max(1e-6, value - R_MAX_WINDOW), min(1.0, value + R_MAX_WINDOW)
        if index == 1:
            return value * D50_WINDOW[0], value * D50_WINDOW[1]
        return value * C_H_WINDOW[0], min(value * C_H_WINDOW[1], C_H_CAP)

    current = loss(params)
    history = []
    for _ in range(sweeps):
        for index in range(3):
            lower, upper = window(index, params[index])
            if not lower < upper:
                continue

            def along(x, index=index):
                trial = list(params)
                trial[index] = x
                return loss(trial)

            result = minimize_scalar(along, bounds=(lower, upper), method='bounded',
                                     options={'xatol': 1e-10})
            if result.fun <= current:
                params[index] = float(result.x)
                current = float(result.fun)
        history.append(current)

    return HillFit.from_parameters(params[0], params[1], params[2], loss=current), history


def fit_hill(ds: Dataset, sweeps: int = REFINE_SWEEPS, weighted: bool = True) -> HillFit:
    """
    Fit the Hill equation to a dataset

    Args:
        ds: Dataset with at least 4 experiments and non-constant ratios
        sweeps: Coordinate-descent sweeps
        weighted: Weight squared errors by N_i

    Returns:
        HillFit with d10/d90 back-solved from the refined (d50, c_h)

    Raises:
        DataValidationError: too few experiments or a level crossing the data never brackets
    """
    fit, _ = refine_hill(ds, initial_hill(ds), sweeps=sweeps, weighted=weighted)
    return fit


def hill_curve(fit: HillFit, ds: Dataset, points: int = 200) -> pd.DataFrame:
    """Fitted curve (dose, response) over [0.9 * min dose, 1.1 * max dose]"""
    grid = np.linspace(0.9 * ds.dosages.min(), 1.1 * ds.dosages.max(), points)
    return pd.DataFrame({'dose': grid, 'response': hill_response(grid, fit)})
