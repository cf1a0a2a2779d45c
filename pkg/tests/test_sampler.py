"""HMC integrator, transitions, adaptation and chain orchestration"""

import math

import numpy as np
import pytest
from scipy import stats

from app.core.errors import InitializationError
from app.inference.conjugate import BetaParams, beta_moments
from app.inference.data import synthesize_hierarchical
from app.inference.diagnostics import mcse, summarize_run
from app.inference.models import BetaBinomialModel, HierLrModel, PriorSpec, SimpleLrModel
from app.inference.sampler import (
    BASE_WINDOW,
    INIT_BUFFER,
    TERM_BUFFER,
    ChainState,
    DualAveragingState,
    HmcConfig,
    dual_averaging_step,
    hmc_transition,
    leapfrog,
    run_chains,
    warmup_windows,
)
from conftest import FlatDensity, GaussianTarget, NowhereFinite, RaisingDensity


def energy(model, q, p):
    return -model.log_density(q) + 0.5 * float(np.dot(p, p))


class TestLeapfrog:

    def test_reversible(self, gaussian_2d):
        q0, p0 = np.array([0.3, -1.0]), np.array([0.7, 0.2])
        q1, p1 = leapfrog(q0, p0, 0.1, 25, gaussian_2d)
        q2, p2 = leapfrog(q1, -p1, 0.1, 25, gaussian_2d)
        np.testing.assert_allclose(q2, q0, atol=1e-10)
        np.testing.assert_allclose(-p2, p0, atol=1e-10)

    def test_reversible_over_random_cases(self, gaussian_2d):
        rng = np.random.default_rng(12)
        for _ in range(100):
            q0, p0 = rng.normal(size=2) * 2.0, rng.normal(size=2)
            mass = rng.uniform(0.5, 2.0, size=2)
            step, steps = rng.uniform(0.01, 0.3), int(rng.integers(1, 31))
            q1, p1 = leapfrog(q0, p0, step, steps, gaussian_2d, mass_diag=mass)
            q2, p2 = leapfrog(q1, -p1, step, steps, gaussian_2d, mass_diag=mass)
            np.testing.assert_allclose(q2, q0, atol=1e-10)
            np.testing.assert_allclose(-p2, p0, atol=1e-10)

    def test_free_particle_moves_in_a_straight_line(self):
        q0, p0 = np.array([0.5, -1.0, 2.0]), np.array([1.0, 0.25, -3.0])
        q, p = leapfrog(q0, p0, 0.1, 7, FlatDensity(3))
        np.testing.assert_allclose(q, q0 + 7 * 0.1 * p0, rtol=1e-12)
        np.testing.assert_array_equal(p, p0)

    def test_one_step_harmonic_oscillator(self):
        model = GaussianTarget([0.0], [1.0])
        q0, p0, step = 0.8, -0.3, 0.2
        p_half = p0 - 0.5 * step * q0
        q1 = q0 + step * p_half
        p1 = p_half - 0.5 * step * q1
        q, p = leapfrog(np.array([q0]), np.array([p0]), step, 1, model)
        assert q[0] == pytest.approx(q1, abs=1e-6)
        assert p[0] == pytest.approx(p1, abs=1e-6)

    def test_energy_error_is_second_order(self):
        model = GaussianTarget([0.0], [1.0])
        q0, p0 = np.array([1.0]), np.array([0.0])
        errors = []
        for step, steps in ((0.1, 10), (0.05, 20)):
            q, p = leapfrog(q0, p0, step, steps, model)
            errors.append(abs(energy(model, q, p) - energy(model, q0, p0)))
        assert 3.0 <= errors[0] / errors[1] <= 5.0

    def test_mass_matrix_scales_the_drift(self):
        model = GaussianTarget([0.0], [1.0])
        q_unit, _ = leapfrog(np.array([0.0]), np.array([1.0]), 0.01, 1, model)
        q_heavy, _ = leapfrog(np.array([0.0]), np.array([1.0]), 0.01, 1, model, mass_diag=np.array([4.0]))
        assert q_heavy[0] == pytest.approx(q_unit[0] / 4.0)


class TestTransition:

    def _state(self, model, position):
        position = np.asarray(position, dtype=float)
        log_density, gradient = model.log_density_and_gradient(position)
        return ChainState(position, log_density, gradient)

    def test_huge_step_is_divergent_and_keeps_state(self):
        model = GaussianTarget([0.0], [1.0])
        state = self._state(model, [0.5])
        rng = np.random.default_rng(0)
        new_state, accept, divergent = hmc_transition(state, model, 100.0, 2.0, rng)
        assert divergent
        assert accept == 0.0
        assert new_state is state

    def test_zero_energy_change_always_accepts(self):
        model = FlatDensity(2)
        state = self._state(model, [0.3, -0.7])
        rng = np.random.default_rng(2)
        for _ in range(20):
            new_state, accept, divergent = hmc_transition(state, model, 0.1, 1.0, rng)
            assert accept == 1.0
            assert not divergent
            assert not np.array_equal(new_state.position, state.position)
            state = new_state

    def test_raising_density_is_divergent_and_keeps_state(self):
        state = ChainState(np.array([0.5]), 0.0, np.zeros(1))
        rng = np.random.default_rng(3)
        new_state, accept, divergent = hmc_transition(state, RaisingDensity([0.0], [1.0]), 0.1, 1.0, rng)
        assert divergent
        assert accept == 0.0
        assert new_state is state

    def test_small_step_accepts(self):
        model = GaussianTarget([0.0, 0.0], [1.0, 1.0])
        state = self._state(model, [0.5, -0.5])
        rng = np.random.default_rng(1)
        accepts = []
        for _ in range(50):
            state, accept, divergent = hmc_transition(state, model, 0.05, 1.0, rng)
            assert not divergent
            accepts.append(accept)
        assert np.mean(accepts) > 0.95


class TestDualAveraging:

    def test_high_acceptance_grows_the_step(self):
        adapt = DualAveragingState.start(0.1, 0.8)
        for _ in range(50):
            adapt = dual_averaging_step(adapt, 1.0)
        assert adapt.step_size > 0.1
        assert adapt.final_step_size > 0.1

    def test_low_acceptance_shrinks_the_step(self):
        adapt = DualAveragingState.start(0.1, 0.8)
        for _ in range(50):
            adapt = dual_averaging_step(adapt, 0.0)
        assert adapt.step_size < 0.1

    def test_mu_is_log_ten_times_initial_step(self):
        assert DualAveragingState.start(0.5, 0.8).mu == pytest.approx(math.log(5.0))


class TestWarmupWindows:

    @pytest.mark.parametrize("n_warmup", [100, 1000, 2000])
    def test_windows_cover_the_middle_phase(self, n_warmup):
        ends = warmup_windows(n_warmup)
        init = int(INIT_BUFFER * n_warmup)
        assert ends[-1] == n_warmup - int(TERM_BUFFER * n_warmup)
        assert all(b > a for a, b in zip(ends, ends[1:]))
        if len(ends) > 1:
            assert ends[0] - init == BASE_WINDOW
            sizes = np.diff([init] + ends[:-1])
            np.testing.assert_array_equal(sizes, BASE_WINDOW * 2 ** np.arange(sizes.size))

    def test_short_warmup_has_one_window(self):
        assert warmup_windows(20) == [20 - int(TERM_BUFFER * 20)]


class TestRunChains:

    def test_same_seed_same_draws(self, gaussian_2d, fast_hmc):
        first = run_chains(gaussian_2d, fast_hmc)
        second = run_chains(gaussian_2d, fast_hmc)
        for a, b in zip(first.chains, second.chains):
            np.testing.assert_array_equal(a.draws, b.draws)

    def test_chains_use_distinct_streams(self, gaussian_2d, fast_hmc):
        run = run_chains(gaussian_2d, fast_hmc)
        assert not np.array_equal(run.chains[0].draws, run.chains[1].draws)

    def test_layout(self, gaussian_2d, fast_hmc):
        run = run_chains(gaussian_2d, fast_hmc)
        assert run.n_chains == 2
        assert run.n_draws == fast_hmc.sampling_iterations == 200
        assert run.pooled().shape == (400, 2)
        frame = run.draws_frame()
        assert list(frame.columns) == ['chain', 'iteration', 'divergent', 'x1', 'x2']
        assert len(frame) == 400
        assert 'duration' not in str(run.metadata())

    def test_initialization_failure(self, fast_hmc):
        with pytest.raises(InitializationError):
            run_chains(NowhereFinite([0.0], [1.0]), fast_hmc)

    def test_gaussian_moments(self, gaussian_2d):
        run = run_chains(gaussian_2d, HmcConfig(chains=4, total_iterations=2000, seed=3))
        for j, (mean, sd) in enumerate(zip(gaussian_2d.means, gaussian_2d.sds)):
            chains = [chain.draws[:, j] for chain in run.chains]
            pooled = np.concatenate(chains)
            assert abs(pooled.mean() - mean) <= 4 * mcse(chains)
            assert pooled.std() == pytest.approx(sd, rel=0.1)
        assert run.divergence_count == 0

    def test_mean_acceptance_near_target(self):
        model = GaussianTarget([0.0, 0.0], [1.0, 1.0])
        config = HmcConfig(chains=4, total_iterations=2000, seed=2)
        run = run_chains(model, config)
        mean_accept = np.mean(np.concatenate([chain.accept_prob for chain in run.chains]))
        assert config.target_accept - 0.1 <= mean_accept <= config.target_accept + 0.1

    def test_parallel_matches_serial(self, logistic_dataset):
        prior = PriorSpec.parse("normal(0,20)")
        model = SimpleLrModel(logistic_dataset, prior, prior)
        serial = run_chains(model, HmcConfig(chains=2, total_iterations=200, seed=5))
        parallel = run_chains(model, HmcConfig(chains=2, total_iterations=200, seed=5, parallel=True))
        for a, b in zip(serial.chains, parallel.chains):
            np.testing.assert_array_equal(a.draws, b.draws)


@pytest.mark.slow
class TestConjugateAgreement:

    def test_single_probability_matches_closed_form(self):
        model = BetaBinomialModel(4, 20, BetaParams(a=1, b=1))
        run = run_chains(model, HmcConfig(chains=4, total_iterations=4000, seed=1))
        summary = summarize_run(run)
        theta = summary.get('theta')
        mean, sd = beta_moments(BetaParams(a=5, b=17))
        assert abs(theta.mean - mean) <= 4 * theta.mcse
        assert theta.sd == pytest.approx(sd, rel=0.05)
        assert theta.split_rhat <= 1.01


@pytest.mark.slow
class TestLongRuns:

    def test_standard_normal_passes_kolmogorov_smirnov(self):
        model = GaussianTarget([0.0], [1.0])
        run = run_chains(model, HmcConfig(chains=4, total_iterations=20000, seed=4))
        assert stats.kstest(run.pooled()[:, 0], 'norm').statistic < 0.02

    def test_centered_funnel_completes(self):
        dataset = synthesize_hierarchical(10, -14.03, 9.39, 0.05, 0.05, seed=5)
        model = HierLrModel(dataset, 'centered')
        run = run_chains(model, HmcConfig(chains=2, total_iterations=1000, seed=1))
        assert run.n_draws == 500
        assert np.all(np.isfinite(run.pooled()))
