"""Hill equation fitting"""

import math

import numpy as np
import pytest

from app.agents.hill_fit import HillFitAgent
from app.core.errors import DataValidationError, UsageError
from app.inference.data import Dataset
from app.inference.hill import (
    HillFit,
    fit_hill,
    hill_coefficient,
    hill_curve,
    hill_response,
    initial_hill,
    level_doses,
    refine_hill,
    weighted_residual,
)


class TestHillAlgebra:

    def test_coefficient_from_a_ninefold_spread(self):
        assert hill_coefficient(1.0, 9.0) == pytest.approx(2.0)

    def test_level_doses_invert_the_coefficient(self):
        d10, d90 = level_doses(1.3, 8.0)
        assert hill_coefficient(d10, d90) == pytest.approx(8.0)
        assert math.sqrt(d10 * d90) == pytest.approx(1.3)

    def test_coincident_doses(self):
        with pytest.raises(UsageError):
            hill_coefficient(1.0, 1.0)

    def test_response_at_d50_is_half_max(self):
        fit = HillFit.from_parameters(0.8, 1.5, 4.0)
        assert hill_response(1.5, fit) == pytest.approx(0.4)
        d10, d90 = level_doses(1.5, 4.0)
        assert hill_response(d10, fit) == pytest.approx(0.08, abs=1e-9)
        assert hill_response(d90, fit) == pytest.approx(0.72, abs=1e-9)

    @pytest.mark.parametrize("d10,d90,r_max", [(0.9, 1.6, 0.85), (1.2, 1.25, 1.0), (0.5, 3.0, 0.4)])
    def test_level_doses_close_the_curve(self, d10, d90, r_max):
        fit = HillFit.from_parameters(r_max, math.sqrt(d10 * d90), hill_coefficient(d10, d90))
        assert hill_response(d10, fit) == pytest.approx(0.1 * r_max, abs=1e-9)
        assert hill_response(d90, fit) == pytest.approx(0.9 * r_max, abs=1e-9)

    def test_steep_curve_does_not_overflow(self):
        fit = HillFit.from_parameters(1.0, 1.0, 1000.0)
        values = hill_response(np.array([0.5, 2.0]), fit)
        np.testing.assert_allclose(values, [0.0, 1.0], atol=1e-12)


class TestHillFit:

    def test_recovers_generating_parameters(self, hill_dataset):
        fit = fit_hill(hill_dataset)
        assert fit.r_max == pytest.approx(0.9, abs=0.03)
        assert fit.d50 == pytest.approx(1.3, rel=0.03)
        assert fit.c_h == pytest.approx(8.0, rel=0.15)

    def test_refinement_never_increases_the_loss(self, hill_dataset):
        start = initial_hill(hill_dataset)
        fit, history = refine_hill(hill_dataset, start, sweeps=20)
        start_loss = weighted_residual(hill_dataset, lambda d: hill_response(d, start))
        assert history[0] <= start_loss
        assert all(b <= a for a, b in zip(history, history[1:]))
        assert fit.loss == history[-1]

    def test_too_few_experiments(self):
        ds = Dataset.from_arrays([1.0, 1.2, 1.4], [10, 10, 10], [1, 5, 9])
        with pytest.raises(DataValidationError):
            fit_hill(ds)

    def test_constant_ratios(self):
        ds = Dataset.from_arrays([1.0, 1.2, 1.4, 1.6], [10] * 4, [5] * 4)
        with pytest.raises(DataValidationError):
            fit_hill(ds)

    def test_level_not_bracketed(self):
        ds = Dataset.from_arrays([1.0, 2.0, 3.0, 4.0], [10] * 4, [5, 6, 7, 8])
        with pytest.raises(DataValidationError, match="10%"):
            fit_hill(ds)

    def test_step_data_gives_a_steep_curve(self):
        ds = Dataset.from_arrays([1.0, 1.1, 1.2, 1.3, 1.4, 1.5], [10] * 6, [0, 0, 0, 10, 10, 10])
        fit = fit_hill(ds)
        assert fit.c_h > 20
        assert 1.2 < fit.d50 < 1.3

    def test_curve_spans_the_padded_dose_range(self, hill_dataset):
        curve = hill_curve(fit_hill(hill_dataset, sweeps=5), hill_dataset, points=50)
        assert len(curve) == 50
        assert curve['dose'].iloc[0] == pytest.approx(0.9 * hill_dataset.dosages.min())
        assert curve['dose'].iloc[-1] == pytest.approx(1.1 * hill_dataset.dosages.max())
        assert curve['response'].is_monotonic_increasing


class TestResidual:

    def test_weighting_by_totals(self):
        ds = Dataset.from_arrays([1.0, 2.0], [10, 40], [5, 10])
        flat = lambda d: np.full(np.shape(d), 0.5)
        assert weighted_residual(ds, flat, weighted=False) == pytest.approx(0.0625)
        assert weighted_residual(ds, flat) == pytest.approx(40 * 0.0625)

    def test_agent_reports_both_residuals(self, hill_dataset):
        result = HillFitAgent().fit(hill_dataset)
        assert 'error' not in result
        assert result['weighted_residual'] >= 0.0
        assert result['unweighted_residual'] <= result['weighted_residual']

    def test_agent_returns_an_error_dict(self):
        result = HillFitAgent().fit(Dataset.from_arrays([1.0, 1.2], [10, 10], [1, 9]))
        assert result['kind'] == 'DataValidationError'
        assert result['exit_code'] == 2
