"""Shared fixtures: synthetic datasets, fast sampler settings and analytic targets"""

import math

import numpy as np
import pytest

from app.inference.data import Dataset, synthesize, synthesize_hill
from app.inference.models import ModelDensity
from app.inference.sampler import HmcConfig

ALPHA_TRUE = -14.03
BETA_TRUE = 9.39


class GaussianTarget(ModelDensity):
    """Independent normals; also a GridTarget when dim == 2"""

    name = "gaussian"

    def __init__(self, means, sds):
        self.means = np.asarray(means, dtype=float)
        self.sds = np.asarray(sds, dtype=float)
        self.parameter_names = [f"x{i + 1}" for i in range(self.means.size)]

    def log_density_and_gradient(self, position):
        z = (np.asarray(position, dtype=float) - self.means) / self.sds
        return float(-0.5 * np.dot(z, z)), -z / self.sds

    def log_density_constrained(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        z = (points - self.means) / self.sds
        return -0.5 * np.sum(z * z, axis=1)

    def constrain_array(self, position):
        return np.asarray(position, dtype=float).copy()

    def unconstrain_array(self, values):
        return np.asarray(values, dtype=float).copy()


class FlatTarget:
    """Constant density over any box"""

    parameter_names = ['a', 'b']

    def log_density_constrained(self, points):
        return np.zeros(np.atleast_2d(points).shape[0])


class NowhereFinite(GaussianTarget):
    """Log density is -inf everywhere"""

    name = "nowhere"

    def log_density_and_gradient(self, position):
        return -math.inf, np.zeros_like(np.asarray(position, dtype=float))


class FlatDensity(GaussianTarget):
    """Constant log density with zero gradient"""

    name = "flat"

    def __init__(self, dim):
        super().__init__(np.zeros(dim), np.ones(dim))

    def log_density_and_gradient(self, position):
        return 0.0, np.zeros_like(np.asarray(position, dtype=float))


class RaisingDensity(GaussianTarget):
    """Log density that raises like math.log(0)"""

    name = "raising"

    def log_density_and_gradient(self, position):
        raise ValueError("math domain error")


@pytest.fixture(scope="session")
def logistic_dataset() -> Dataset:
    return synthesize(71, ALPHA_TRUE, BETA_TRUE, seed=1)


@pytest.fixture(scope="session")
def hill_dataset() -> Dataset:
    return synthesize_hill(200, r_max=0.9, d50=1.3, c_h=8.0, total=1000, seed=3)


@pytest.fixture(scope="session")
def dense_logistic_dataset() -> Dataset:
    """Noise-free logistic ratios on an even dose grid with large N"""
    doses = np.round(np.linspace(0.73, 1.89, 60), 4)
    totals = np.full(doses.size, 1000)
    improved = np.round(totals / (1.0 + np.exp(-(ALPHA_TRUE + BETA_TRUE * doses)))).astype(int)
    return Dataset.from_arrays(doses, totals, improved)


@pytest.fixture
def fast_hmc() -> HmcConfig:
    return HmcConfig(chains=2, total_iterations=400, seed=7)


@pytest.fixture
def gaussian_2d() -> GaussianTarget:
    return GaussianTarget([1.0, -2.0], [0.5, 1.5])


@pytest.fixture
def trial_csv(tmp_path, logistic_dataset):
    from app.inference.data import serialize_trials
    path = tmp_path / "trials.csv"
    path.write_text(serialize_trials(logistic_dataset), encoding="utf-8")
    return path
