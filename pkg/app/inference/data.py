"""
Trial Data Module
Ingests, validates, summarizes and synthesizes dose-response trial datasets
"""

import io
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import expit

from app.core.errors import DataValidationError, EmptyDatasetError

HEADER = ['dosage', 'total', 'improved']

# Marginal ranges of the original 71-row study
DOSAGE_RANGE = (0.730, 1.890)
TOTAL_RANGE = (10, 52)

SUMMARY_ROWS = ['Min.', '1st Qu.', 'Median', 'Mean', '3rd Qu.', 'Max.']
SUMMARY_COLUMNS = {
    'dosage': 'Dosage (d)',
    'total': 'Total Subjects (N)',
    'improved': 'Improved Subjects (n)',
}


class TrialRecord(BaseModel):
    """One dosage experiment: d, N subjects, n improved"""

    model_config = ConfigDict(frozen=True)

    dosage: float = Field(gt=0)
    total: int = Field(gt=0)
    improved: int = Field(ge=0)

    @model_validator(mode='after')
    def _improved_within_total(self) -> 'TrialRecord':
        if self.improved > self.total:
            raise ValueError(f"improved ({self.improved}) exceeds total ({self.total})")
        return self


class Dataset(BaseModel):
    """Ordered collection of trial records (E = len(records))"""

    model_config = ConfigDict(frozen=True)

    records: Tuple[TrialRecord, ...]

    @model_validator(mode='after')
    def _non_empty(self) -> 'Dataset':
        if len(self.records) == 0:
            raise EmptyDatasetError("dataset holds no trial records")
        return self

    @classmethod
    def from_arrays(cls, dosage, total, improved) -> 'Dataset':
        records = tuple(
            TrialRecord(dosage=float(d), total=int(N), improved=int(n))
            for d, N, n in zip(dosage, total, improved)
        )
        return cls(records=records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def size(self) -> int:
        return len(self.records)

    @cached_property
    def dosages(self) -> np.ndarray:
        return np.array([r.dosage for r in self.records], dtype=float)

    @cached_property
    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.records], dtype=np.int64)

    @cached_property
    def improved(self) -> np.ndarray:
        return np.array([r.improved for r in self.records], dtype=np.int64)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'dosage': self.dosages,
            'total': self.totals,
            'improved': self.improved,
        })


class ColumnStats(BaseModel):
    """Six-number summary of one column"""

    min: float
    q1: float
    median: float
    mean: float
    q3: float
    max: float


class SummaryStats(BaseModel):
    """Six-number summary of every dataset column"""

    dosage: ColumnStats
    total: ColumnStats
    improved: ColumnStats

    def to_frame(self) -> pd.DataFrame:
        """Summary layout: statistic rows, one column per dataset column"""
        frame = pd.DataFrame({
            label: [getattr(self, column).min, getattr(self, column).q1,
                    getattr(self, column).median, getattr(self, column).mean,
                    getattr(self, column).q3, getattr(self, column).max]
            for column, label in SUMMARY_COLUMNS.items()
        }, index=SUMMARY_ROWS)
        frame.index.name = 'statistic'
        return frame


# ============================================================================
# INGEST
# ============================================================================

def parse_trials(csv_text: str) -> Dataset:
    """
    Parse a `dosage,total,improved` CSV document into a validated Dataset

    Args:
        csv_text: CSV text with header; one record per line

    Returns:
        Dataset with row order preserved

    Raises:
        DataValidationError: malformed numbers or broken invariants (with line number)
        EmptyDatasetError: header without records
    """
    if not csv_text or not csv_text.strip():
        raise EmptyDatasetError("input is empty; expected header 'dosage,total,improved'")

    try:
        raw = pd.read_csv(io.StringIO(csv_text), dtype=str, skip_blank_lines=True,
                          keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataValidationError(f"unreadable CSV: {e}")

    columns = [c.strip() for c in raw.columns]
    if columns != HEADER:
        raise DataValidationError(
            f"header must be '{','.join(HEADER)}', got '{','.join(columns)}'", line=1)
    raw.columns = columns
    if raw.empty:
        raise EmptyDatasetError("no trial records after the header")

    # Header is line 1; blank lines are skipped by the reader
    line_numbers = _data_line_numbers(csv_text)

    records = []
    for position, row in enumerate(raw.itertuples(index=False)):
        line = line_numbers[position] if position < len(line_numbers) else position + 2
        dosage = _parse_number(row.dosage, 'dosage', line)
        total = _parse_count(row.total, 'total', line)
        improved = _parse_count(row.improved, 'improved', line)

        if not np.isfinite(dosage) or dosage <= 0:
            raise DataValidationError(f"dosage must be positive, got {row.dosage}", line=line)
        if total <= 0:
            raise DataValidationError(f"total must be a positive integer, got {row.total}", line=line)
        if improved < 0:
            raise DataValidationError(f"improved must be non-negative, got {row.improved}", line=line)
        if improved > total:
            raise DataValidationError(
                f"improved ({improved}) exceeds total ({total})", line=line)
        records.append(TrialRecord(dosage=dosage, total=total, improved=improved))

    return Dataset(records=tuple(records))


def load_trials(path) -> Dataset:
    """Read a trial CSV file (UTF-8)"""
    return parse_trials(Path(path).read_text(encoding='utf-8'))


def serialize_trials(ds: Dataset) -> str:
    """Inverse of parse_trials"""
    return ds.to_frame().to_csv(index=False, lineterminator='\n')


def _data_line_numbers(csv_text: str) -> List[int]:
    lines = csv_text.splitlines()
    return [i + 1 for i, text in enumerate(lines) if i > 0 and text.strip()]


def _parse_number(text: str, column: str, line: int) -> float:
    try:
        return float(str(text).strip())
    except ValueError:
        raise DataValidationError(f"malformed {column} value {text!r}", line=line)


def _parse_count(text: str, column: str, line: int) -> int:
    value = _parse_number(text, column, line)
    if not np.isfinite(value) or value != int(value):
        raise DataValidationError(f"{column} must be an integer, got {text!r}", line=line)
    return int(value)


# ============================================================================
# SUMMARIES
# ============================================================================

def summarize(ds: Dataset) -> SummaryStats:
    """Dataset statistics; quartiles use linear interpolation (type 7)"""
    frame = ds.to_frame().astype(float)
    stats: Dict[str, ColumnStats] = {}
    for column in HEADER:
        values = frame[column]
        stats[column] = ColumnStats(
            min=float(values.min()),
            q1=float(values.quantile(0.25, interpolation='linear')),
            median=float(values.quantile(0.50, interpolation='linear')),
            mean=float(values.mean()),
            q3=float(values.quantile(0.75, interpolation='linear')),
            max=float(values.max()),
        )
    return SummaryStats(**stats)


def survival_ratios(ds: Dataset) -> List[Tuple[float, float]]:
    """(dosage, improved/total) pairs sorted by dosage; ties kept as separate points"""
    order = np.argsort(ds.dosages, kind='stable')
    ratios = ds.improved / ds.totals
    return [(float(ds.dosages[i]), float(ratios[i])) for i in order]


def pooled_counts(ds: Dataset) -> Tuple[int, int]:
    """Total improved and total subjects across every experiment"""
    return int(ds.improved.sum()), int(ds.totals.sum())


# ============================================================================
# SYNTHETIC DATA
# ============================================================================

def _design(E: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    if E < 1:
        raise DataValidationError(f"E must be at least 1, got {E}")
    dosage = np.round(rng.uniform(DOSAGE_RANGE[0], DOSAGE_RANGE[1], size=E), 3)
    total = rng.integers(TOTAL_RANGE[0], TOTAL_RANGE[1] + 1, size=E)
    return dosage, total


def synthesize(E: int, alpha_true: float, beta_true: float, seed: int) -> Dataset:
    """
    Draw a logistic dose-response dataset over the original study's ranges

    Args:
        E: Number of experiments
        alpha_true: Generating intercept
        beta_true: Generating dose slope
        seed: Generator seed; the same seed gives the same Dataset

    Returns:
        Dataset with improved ~ Binomial(total, inverse_logit(alpha + beta*d))
    """
    rng = np.random.default_rng(seed)
    dosage, total = _design(E, rng)
    improved = rng.binomial(total, expit(alpha_true + beta_true * dosage))
    return Dataset.from_arrays(dosage, total, improved)


def synthesize_hierarchical(E: int, mu_alpha: float, mu_beta: float,
                            sigma_alpha: float, sigma_beta: float, seed: int) -> Dataset:
    """Per-experiment (alpha_i, beta_i) drawn around global means; small sigmas give a funnel"""
    rng = np.random.default_rng(seed)
    dosage, total = _design(E, rng)
    alpha = rng.normal(mu_alpha, sigma_alpha, size=E)
    beta = rng.normal(mu_beta, sigma_beta, size=E)
    improved = rng.binomial(total, expit(alpha + beta * dosage))
    return Dataset.from_arrays(dosage, total, improved)


def synthesize_hill(E: int, r_max: float, d50: float, c_h: float, total: int,
                    seed: int, noise: bool = False) -> Dataset:
    """Hill-equation data; exact rounding of N*E(d) unless noise is requested"""
    from app.inference.hill import hill_equation

    if E < 1:
        raise DataValidationError(f"E must be at least 1, got {E}")
    rng = np.random.default_rng(seed)
    dosage = np.round(rng.uniform(DOSAGE_RANGE[0], DOSAGE_RANGE[1], size=E), 3)
    totals = np.full(E, int(total))
    response = hill_equation(dosage, r_max, d50, c_h)
    if noise:
        improved = rng.binomial(totals, response)
    else:
        improved = np.round(totals * response).astype(np.int64)
    return Dataset.from_arrays(dosage, totals, improved)
