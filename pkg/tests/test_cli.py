"""doseresp command line: exit codes, outputs and reproducibility"""

import json
import xml.etree.ElementTree as ET

import pandas as pd
import pytest

from app.utils.plots import SCATTER_GID
from cli.main import main


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for name in ('DOSERESP_SEED', 'DOSERESP_OUT_DIR', 'DOSERESP_DATASET', 'DOSERESP_PARALLEL'):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def synthetic_csv(tmp_path):
    path = tmp_path / 'trials.csv'
    assert main(['synthesize', '--seed', '1', '--output', str(path)]) == 0
    return path


def marker_count(svg_path, gid):
    root = ET.parse(svg_path).getroot()
    for element in root.iter():
        if element.get('id') == gid:
            return sum(1 for child in element.iter() if child.tag.endswith('use'))
    raise AssertionError(f"no element with id {gid}")


class TestSynthesizeAndSummarize:

    def test_synthetic_file_has_71_records(self, synthetic_csv):
        frame = pd.read_csv(synthetic_csv)
        assert list(frame.columns) == ['dosage', 'total', 'improved']
        assert len(frame) == 71

    def test_summarize_writes_summary_and_scatter(self, synthetic_csv, tmp_path):
        out = tmp_path / 'summary'
        assert main(['summarize', '--input', str(synthetic_csv), '--out-dir', str(out)]) == 0
        table = pd.read_csv(out / 'dataset_summary.csv', index_col=0)
        assert table.shape == (6, 3)
        assert marker_count(out / 'survival_ratios.svg', SCATTER_GID) == 71
        manifest = json.loads((out / 'manifest.json').read_text())
        assert manifest['command'] == 'summarize'
        assert set(manifest['outputs']) == {'dataset_summary.csv', 'survival_ratios.svg'}

    def test_hill_synthesis(self, tmp_path):
        path = tmp_path / 'hill.csv'
        assert main(['synthesize', '--kind', 'hill', '--experiments', '40', '--total', '100',
                     '--seed', '2', '--output', str(path)]) == 0
        assert len(pd.read_csv(path)) == 40


class TestExitCodes:

    def test_improved_above_total_names_the_line(self, tmp_path, capsys):
        path = tmp_path / 'bad.csv'
        path.write_text("dosage,total,improved\n1.0,10,5\n1.2,10,12\n")
        assert main(['summarize', '--input', str(path), '--out-dir', str(tmp_path / 'o')]) == 2
        assert 'line 3' in capsys.readouterr().err

    def test_missing_input(self, tmp_path):
        assert main(['summarize', '--input', str(tmp_path / 'absent.csv')]) == 1

    def test_unknown_flag(self, synthetic_csv):
        assert main(['summarize', '--input', str(synthetic_csv), '--frobnicate']) == 1

    def test_no_command(self):
        assert main([]) == 1

    def test_sweep_needs_two_priors(self, synthetic_csv, tmp_path):
        assert main(['sweep', '--input', str(synthetic_csv), '--out-dir', str(tmp_path), '--priors']) == 1

    def test_beta_prior_is_rejected(self, synthetic_csv, tmp_path, capsys):
        code = main(['sample', '--input', str(synthetic_csv), '--out-dir', str(tmp_path),
                     '--prior-alpha', 'beta(2,2)'])
        assert code == 1
        assert 'UnsupportedPriorError' in capsys.readouterr().err

    def test_oracle_refuses_hierarchical_models(self, synthetic_csv, tmp_path):
        assert main(['oracle', '--input', str(synthetic_csv), '--out-dir', str(tmp_path),
                     '--model', 'hier_ncp']) == 1

    def test_oracle_bounds_that_miss_the_posterior(self, synthetic_csv, tmp_path):
        code = main(['oracle', '--input', str(synthetic_csv), '--out-dir', str(tmp_path),
                     '--alpha-bounds', '50', '60', '--beta-bounds', '50', '60', '--resolution', '16'])
        assert code == 2

    def test_compare_rejects_hierarchical_models(self, synthetic_csv, tmp_path, capsys):
        code = main(['compare', '--input', str(synthetic_csv), '--out-dir', str(tmp_path),
                     '--model', 'hier_ncp'])
        assert code == 1
        assert 'UsageError' in capsys.readouterr().err

    def test_prior_flags_need_the_simple_model(self, synthetic_csv, tmp_path, capsys):
        code = main(['sample', '--input', str(synthetic_csv), '--out-dir', str(tmp_path),
                     '--model', 'hier_centered', '--prior-alpha', 'normal(0,5)'])
        assert code == 1
        assert '--prior-alpha' in capsys.readouterr().err

    def test_invalid_sampler_settings(self, synthetic_csv, tmp_path):
        assert main(['sample', '--input', str(synthetic_csv), '--out-dir', str(tmp_path),
                     '--chains', '0']) == 1

    def test_config(self, capsys):
        assert main(['config']) == 0
        assert json.loads(capsys.readouterr().out)['seed'] == 1


class TestBetaBinomialSample:

    ARGS = ['--model', 'beta_binomial', '--chains', '2', '--iters', '2000', '--seed', '3']

    def test_outputs_and_byte_identical_reruns(self, synthetic_csv, tmp_path):
        first, second = tmp_path / 'a', tmp_path / 'b'
        for out in (first, second):
            assert main(['sample', '--input', str(synthetic_csv), '--out-dir', str(out)] + self.ARGS) == 0

        expected = {'draws.csv', 'summary.csv', 'summary.json', 'run.json', 'densities.csv',
                    'density_theta.svg', 'trace_theta.svg', 'manifest.json'}
        assert {p.name for p in first.iterdir()} == expected
        for name in expected - {'manifest.json'}:
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

        manifest = json.loads((first / 'manifest.json').read_text())
        assert manifest['seed'] == 3 and manifest['exit_code'] == 0

    def test_oracle_quadrature(self, synthetic_csv, tmp_path):
        assert main(['oracle', '--input', str(synthetic_csv), '--out-dir', str(tmp_path)] + self.ARGS) == 0
        table = pd.read_csv(tmp_path / 'oracle_summary.csv')
        assert table['quadrature_mean'].iloc[0] == pytest.approx(table['closed_form_mean'].iloc[0], abs=1e-6)
        assert not (tmp_path / 'grid.csv').exists()


@pytest.mark.slow
class TestSimpleModelCommands:

    def test_sample_writes_curve_and_plots(self, synthetic_csv, tmp_path):
        assert main(['sample', '--input', str(synthetic_csv), '--out-dir', str(tmp_path),
                     '--iters', '2000', '--seed', '5']) == 0
        summary = pd.read_csv(tmp_path / 'summary.csv').set_index('parameter')
        assert -17.0 < summary.loc['alpha', 'mean'] < -11.0
        assert 7.0 < summary.loc['beta', 'mean'] < 12.0
        curve = pd.read_csv(tmp_path / 'curve.csv')
        assert len(curve) == 200 and curve['mean'].is_monotonic_increasing
        for name in ('density_alpha.svg', 'trace_beta.svg'):
            assert (tmp_path / name).exists()

    def test_compare_writes_both_residuals(self, tmp_path):
        data = tmp_path / 'hill.csv'
        assert main(['synthesize', '--kind', 'hill', '--experiments', '60', '--total', '200',
                     '--seed', '4', '--output', str(data)]) == 0
        out = tmp_path / 'compare'
        assert main(['compare', '--input', str(data), '--out-dir', str(out),
                     '--iters', '2000', '--seed', '4']) == 0
        residuals = pd.read_csv(out / 'residuals.csv').set_index('model')
        assert residuals.loc['hill', 'weighted_residual'] <= residuals.loc['bayesian', 'weighted_residual']
        assert (out / 'comparison.svg').exists()

    def test_sweep_marks_every_row(self, synthetic_csv, tmp_path):
        assert main(['sweep', '--input', str(synthetic_csv), '--out-dir', str(tmp_path),
                     '--priors', 'normal(0,20)', 'flat', '--iters', '600', '--chains', '2', '--seed', '2']) == 0
        sweep = pd.read_csv(tmp_path / 'sweep.csv')
        assert list(sweep['prior']) == ['normal(0,20)', 'flat']
        assert set(sweep['status']) <= {'ok', 'not_converged'}
        assert (sweep['iterations'] == 600).all()

    def test_sweep_shows_prior_insensitivity_and_shrinkage(self, synthetic_csv, tmp_path):
        priors = ['normal(0,20)', 'normal(0,100)', 'uniform(-100,100)', 'flat', 'normal(0,1)']
        assert main(['sweep', '--input', str(synthetic_csv), '--out-dir', str(tmp_path),
                     '--priors', *priors, '--iters', '2000', '--chains', '4', '--seed', '3']) == 0
        alpha = pd.read_csv(tmp_path / 'sweep.csv').set_index('prior')['alpha_mean']
        wide = alpha[priors[:4]]
        assert wide.max() - wide.min() <= 0.3
        assert abs(alpha['normal(0,1)']) <= 0.8 * abs(alpha['flat'])
