"""LangGraph sampling workflow, routing and model comparisons"""

import pytest

from app.agents.grid_oracle import GridOracleAgent, agreement_ratio
from app.agents.hmc_sampler import HmcSamplingAgent
from app.core.config import ModelConfig
from app.core.workflow import (
    analyze_dataset,
    convergence_node,
    should_continue,
    should_run_oracle,
)
from app.inference.conjugate import BetaParams, beta_binomial_posterior, beta_moments
from app.inference.data import pooled_counts, synthesize_hierarchical
from app.inference.diagnostics import curve_coefficients, posterior_mean_curve, summarize_run
from app.inference.hill import fit_hill, hill_response, weighted_residual
from app.inference.models import HierLrModel, PriorSpec, build_model
from app.inference.sampler import HmcConfig, run_chains
from conftest import ALPHA_TRUE, BETA_TRUE, GaussianTarget, NowhereFinite


def bare_state(**overrides):
    state = {'errors': [], 'exit_code': 0, 'run_oracle': False, 'diagnostics': {'failing': []}}
    state.update(overrides)
    return state


class TestRouting:

    def test_continue_without_errors(self):
        assert should_continue(bare_state()) == "continue"

    def test_halt_after_an_error(self):
        assert should_continue(bare_state(errors=['Model: bad prior'])) == "halt"

    def test_oracle_only_on_request(self):
        assert should_run_oracle(bare_state()) == "complete"
        assert should_run_oracle(bare_state(run_oracle=True)) == "oracle"

    def test_convergence_gate_passes(self):
        state = convergence_node(bare_state())
        assert state['converged'] and state['exit_code'] == 0

    def test_convergence_gate_fails_with_exit_3(self):
        state = convergence_node(bare_state(diagnostics={'failing': ['alpha', 'divergences']}))
        assert not state['converged']
        assert state['exit_code'] == 3
        assert 'alpha, divergences' in state['errors'][0]

    def test_first_failure_keeps_its_exit_code(self):
        state = convergence_node(bare_state(errors=['Oracle: x'], exit_code=2,
                                            diagnostics={'failing': ['beta']}))
        assert state['exit_code'] == 2


class BrokenTarget(GaussianTarget):

    def log_density_and_gradient(self, position):
        raise RuntimeError("density backend unavailable")


class TestSamplingAgent:

    def test_unexpected_failure_returns_an_error_dict(self, fast_hmc):
        result = HmcSamplingAgent().sample(BrokenTarget([0.0], [1.0]), fast_hmc)
        assert result == {'error': 'density backend unavailable', 'kind': 'RuntimeError', 'exit_code': 1}

    def test_initialization_failure_keeps_its_kind(self, fast_hmc):
        result = HmcSamplingAgent().sample(NowhereFinite([0.0], [1.0]), fast_hmc)
        assert result['kind'] == 'InitializationError'


class TestOracleAgent:

    def test_agreement_ratio(self):
        assert agreement_ratio(1.2, 1.0, 0.1) == pytest.approx(2.0)
        assert agreement_ratio(1.0, 1.0, 0.0) == 0.0
        assert agreement_ratio(1.1, 1.0, None) is None

    def test_hierarchical_model_is_rejected(self, logistic_dataset):
        prior = PriorSpec.parse("normal(0,20)")
        model = HierLrModel(logistic_dataset, 'ncp', prior, PriorSpec.parse("half_normal(0,2)"))
        result = GridOracleAgent().evaluate(model)
        assert result['kind'] == 'UnsupportedModelError'
        assert result['exit_code'] == 1


class TestBetaBinomialWorkflow:

    def test_sampling_and_oracle_agree_with_closed_form(self, logistic_dataset):
        result = analyze_dataset(logistic_dataset, ModelConfig(kind='beta_binomial'),
                                 HmcConfig(chains=4, total_iterations=2000, seed=11), run_oracle=True)
        assert result['exit_code'] == 0
        assert result['converged']
        assert result['workflow_stage'] == 'oracle_complete'

        n, N = pooled_counts(logistic_dataset)
        mean, sd = beta_moments(beta_binomial_posterior(BetaParams(a=1, b=1), n, N))
        oracle = result['oracle']
        assert oracle['quadrature'].mean == pytest.approx(mean, abs=1e-6)
        assert oracle['closed_form']['sd'] == pytest.approx(sd)
        theta = result['summary'].get('theta')
        assert abs(theta.mean - mean) <= 4 * theta.mcse
        assert oracle['agreement']['theta']['ratio'] <= 4.0

    def test_without_oracle_the_workflow_stops_at_the_gate(self, logistic_dataset):
        result = analyze_dataset(logistic_dataset, ModelConfig(kind='beta_binomial'),
                                 HmcConfig(chains=2, total_iterations=400, seed=2))
        assert result['oracle'] is None
        assert result['workflow_stage'] == 'convergence_complete'


@pytest.mark.slow
class TestGridAgreementAcrossPriors:

    @pytest.mark.parametrize("prior", ["flat", "normal(0,20)", "normal(0,100)",
                                       "logistic(0,10)", "uniform(-100,100)"])
    def test_hmc_matches_the_grid(self, logistic_dataset, prior):
        config = ModelConfig(kind='simple', prior_alpha=prior, prior_beta=prior)
        result = analyze_dataset(logistic_dataset, config, HmcConfig(seed=1), run_oracle=True)
        assert result['converged']
        for name in ('alpha', 'beta'):
            assert result['oracle']['agreement'][name]['ratio'] <= 4.0


@pytest.mark.slow
class TestTruthRecovery:

    def test_intervals_cover_the_generating_values(self, logistic_dataset):
        model = build_model(ModelConfig(kind='simple'), logistic_dataset)
        covered = 0
        for seed in range(1, 21):
            summary = summarize_run(run_chains(model, HmcConfig(chains=2, total_iterations=1000, seed=seed)))
            alpha, beta = summary.get('alpha'), summary.get('beta')
            covered += (alpha.q2_5 <= ALPHA_TRUE <= alpha.q97_5) and (beta.q2_5 <= BETA_TRUE <= beta.q97_5)
        assert covered >= 18


@pytest.mark.slow
class TestModelComparison:

    @staticmethod
    def _bayes_residual(dataset):
        result = analyze_dataset(dataset, ModelConfig(kind='simple'),
                                 HmcConfig(chains=2, total_iterations=1000, seed=4))
        curve = posterior_mean_curve(result['summary'], curve_coefficients(result['run']))
        return weighted_residual(dataset, curve)

    def test_logistic_data_favours_the_logistic_model(self, dense_logistic_dataset):
        fit = fit_hill(dense_logistic_dataset)
        hill = weighted_residual(dense_logistic_dataset, lambda d: hill_response(d, fit))
        assert self._bayes_residual(dense_logistic_dataset) <= hill

    def test_hill_data_favours_the_hill_model(self, hill_dataset):
        fit = fit_hill(hill_dataset)
        hill = weighted_residual(hill_dataset, lambda d: hill_response(d, fit))
        assert hill <= self._bayes_residual(hill_dataset)

    def test_non_centered_parameterization_beats_centered(self):
        dataset = synthesize_hierarchical(10, -14.03, 9.39, 0.05, 0.05, seed=5)
        ess_wins = 0
        for seed in range(1, 6):
            hmc = HmcConfig(chains=2, total_iterations=1000, seed=seed)
            runs = {
                kind: analyze_dataset(dataset, ModelConfig(kind=kind), hmc)['run']
                for kind in ('hier_centered', 'hier_ncp')
            }
            assert runs['hier_centered'].parameter_names == runs['hier_ncp'].parameter_names
            assert runs['hier_ncp'].divergence_count <= runs['hier_centered'].divergence_count

            summaries = {kind: summarize_run(run) for kind, run in runs.items()}
            min_ess = {
                kind: min(row.ess or 0.0 for row in summary.parameters)
                for kind, summary in summaries.items()
            }
            ess_wins += min_ess['hier_ncp'] >= min_ess['hier_centered']

            mu_a = summaries['hier_ncp'].get('mu_a')
            mu_b = summaries['hier_ncp'].get('mu_b')
            assert mu_a.q2_5 <= -14.03 <= mu_a.q97_5
            assert mu_b.q2_5 <= 9.39 <= mu_b.q97_5
        assert ess_wins >= 4
