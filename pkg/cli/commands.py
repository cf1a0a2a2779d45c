"""
CLI Commands for the Dose-Response Analysis System
One handler per sub-command; each returns the process exit code
"""

import json
import sys
import time
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.agents.grid_oracle import GridOracleAgent
from app.agents.hill_fit import HillFitAgent
from app.agents.trial_data import TrialDataAgent
from app.core.config import Config, ModelConfig
from app.core.errors import StageError, UnsupportedModelError, UsageError
from app.core.workflow import analyze_dataset
from app.inference.data import (
    serialize_trials,
    synthesize,
    synthesize_hierarchical,
    synthesize_hill,
)
from app.inference.diagnostics import (
    curve_coefficients,
    density_series,
    global_parameters,
    posterior_curve,
    posterior_mean_curve,
    summary_frames,
    trace_series,
)
from app.inference.hill import weighted_residual
from app.inference.models import build_model
from app.inference.oracle import DEFAULT_BOUNDS, grid_frame
from app.inference.sampler import HmcConfig
from app.utils.io import OutputDirectory, RunManifest, file_digest, write_manifest, write_text_atomic
from app.utils.plots import comparison_plot, density_plot, figure_to_svg, survival_scatter, trace_plot
from app.utils.validators import require, validate_bounds, validate_input_file, validate_sampler_args

CURVE_POINTS = 200


# ============================================================================
# SHARED HELPERS
# ============================================================================

def _load_dataset(args) -> Tuple[Dict, Path]:
    """Resolve --input (or DOSERESP_DATASET) and load it through the data agent"""
    path = getattr(args, 'input', None)
    if not path and Config.dataset_path():
        path = str(Config.dataset_path())
    require(validate_input_file(path))
    loaded = TrialDataAgent().analyze(path)
    if 'error' in loaded:
        raise StageError.from_result(loaded)
    return loaded, Path(path)


def _model_config(args) -> ModelConfig:
    config = Config.load_model_config(
        getattr(args, 'config', None),
        kind=getattr(args, 'model', None),
        prior_alpha=getattr(args, 'prior_alpha', None),
        prior_beta=getattr(args, 'prior_beta', None),
    )
    flags = [flag for flag, attr in (('--prior-alpha', 'prior_alpha'), ('--prior-beta', 'prior_beta'))
             if getattr(args, attr, None) is not None]
    if flags and config.kind != 'simple':
        raise UsageError(f"{', '.join(flags)} only applies to the simple model, not {config.kind}")
    return config


def _hmc_config(args, iterations: Optional[int] = None) -> HmcConfig:
    require(validate_sampler_args(args.chains, args.iters, args.warmup_frac, args.target_accept))
    settings = {
        'chains': args.chains,
        'total_iterations': iterations if iterations is not None else args.iters,
        'warmup_fraction': args.warmup_frac,
        'target_accept': args.target_accept,
        'seed': Config.get_seed(args.seed),
        'parallel': bool(args.parallel) or Config.parallel_chains(),
    }
    try:
        return HmcConfig(**{k: v for k, v in settings.items() if v is not None})
    except ValidationError as e:
        raise UsageError(f"Invalid sampler settings: {e.errors()[0]['msg']}")


def _args_echo(args) -> Dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != 'handler'}


def _finish(out: OutputDirectory, command: str, args, input_path: Optional[Path],
            seed: Optional[int], exit_code: int, started: float) -> None:
    manifest = RunManifest(
        command=command,
        config=_args_echo(args),
        input_file=str(input_path) if input_path else None,
        input_sha256=file_digest(input_path) if input_path else None,
        seed=seed,
        outputs=list(out.names),
        exit_code=exit_code,
        duration_seconds=round(time.perf_counter() - started, 3),
    )
    write_manifest(out.root, manifest)
    print(f"📁 {len(out.names)} outputs + manifest.json in {out.root}")


def _sample(loaded: Dict, model_config: ModelConfig, hmc: HmcConfig, **options) -> Dict:
    """Run the workflow; stages that fail before a run exists abort the command"""
    result = analyze_dataset(loaded['dataset'], model_config, hmc, **options)
    if result['run'] is None or result['summary'] is None:
        raise StageError(result['errors'][0] if result['errors'] else "sampling failed",
                         result['exit_code'] or 1)
    return result


def _report_gate(result: Dict) -> int:
    if result['failing']:
        print(f"❌ convergence gate failed for: {', '.join(result['failing'])}", file=sys.stderr)
    return result['exit_code']


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_summarize(args) -> int:
    """dataset summary and survival-ratio scatter"""
    started = time.perf_counter()
    loaded, path = _load_dataset(args)
    out = OutputDirectory(Config.output_dir(args.out_dir))

    table = loaded['summary'].to_frame()
    out.frame('dataset_summary.csv', table, index=True)
    out.text('survival_ratios.svg', figure_to_svg(survival_scatter(loaded['ratios'])))

    print(table.to_string())
    _finish(out, 'summarize', args, path, None, 0, started)
    return 0


def cmd_sample(args) -> int:
    """Posterior sampling with diagnostics, curves and plots"""
    started = time.perf_counter()
    loaded, path = _load_dataset(args)
    model_config = _model_config(args)
    hmc = _hmc_config(args)
    result = _sample(loaded, model_config, hmc)
    run, summary = result['run'], result['summary']
    out = OutputDirectory(Config.output_dir(args.out_dir))

    out.frame('draws.csv', run.draws_frame())
    for name, frame in summary_frames(summary).items():
        out.frame(f'{name}.csv', frame, index=(name == 'globals'))
    out.json('summary.json', summary.to_dict())
    out.json('run.json', run.metadata())

    densities = []
    pooled = run.pooled()
    for name in global_parameters(run.parameter_names):
        series = density_series(pooled[:, run.index_of(name)], bandwidth=args.bandwidth)
        densities.append(series.assign(parameter=name)[['parameter', 'x', 'density']])
        out.text(f'density_{name}.svg', figure_to_svg(density_plot(series, name)))
        out.text(f'trace_{name}.svg', figure_to_svg(trace_plot(trace_series(run, name), name)))
    out.frame('densities.csv', pd.concat(densities, ignore_index=True))

    if model_config.kind != 'beta_binomial':
        doses = loaded['dataset'].dosages
        grid = np.linspace(0.5 * doses.min(), 1.5 * doses.max(), CURVE_POINTS)
        out.frame('curve.csv', posterior_curve(run, grid))

    print(summary.to_frame().head(12).to_string(index=False))
    exit_code = _report_gate(result)
    _finish(out, 'sample', args, path, hmc.seed, exit_code, started)
    return exit_code


def cmd_priors_sweep(args) -> int:
    """One simple-model posterior per prior row; failing rows are marked, not fatal"""
    started = time.perf_counter()
    loaded, path = _load_dataset(args)
    sweep = Config.load_sweep_config(args.config, priors=args.priors, iterations=args.iters)
    hmc = _hmc_config(args, iterations=sweep.iterations)
    out = OutputDirectory(Config.output_dir(args.out_dir))

    rows = []
    for prior in sweep.priors:
        model_config = ModelConfig(kind='simple', prior_alpha=prior, prior_beta=prior)
        run_started = time.perf_counter()
        result = analyze_dataset(loaded['dataset'], model_config, hmc)
        wall_time = time.perf_counter() - run_started

        summary = result['summary']
        if summary is None:
            status = 'failed'
        elif result['failing']:
            status = 'not_converged'
        else:
            status = 'ok'
        rows.append({
            'prior': prior,
            'iterations': sweep.iterations,
            'wall_time_seconds': round(wall_time, 3),
            'alpha_mean': summary.get('alpha').mean if summary else None,
            'beta_mean': summary.get('beta').mean if summary else None,
            'status': status,
            'failing': ';'.join(result['failing']) or ('; '.join(result['errors']) if summary is None else ''),
        })

    table = pd.DataFrame(rows)
    out.frame('sweep.csv', table)
    print(table.to_string(index=False))
    _finish(out, 'sweep', args, path, hmc.seed, 0, started)
    return 0


def cmd_compare(args) -> int:
    """Hill fit vs Bayesian posterior-mean curve over the raw ratios"""
    started = time.perf_counter()
    loaded, path = _load_dataset(args)
    dataset = loaded['dataset']

    model_config = _model_config(args)
    if model_config.kind != 'simple':
        raise UsageError(f"compare fits the simple logistic model, not {model_config.kind}")

    hill = HillFitAgent().fit(dataset)
    if 'error' in hill:
        raise StageError.from_result(hill)

    hmc = _hmc_config(args)
    result = _sample(loaded, model_config, hmc)
    run, summary = result['run'], result['summary']

    bayes_curve = posterior_curve(run, hill['curve']['dose'])
    bayes_fn = posterior_mean_curve(summary, curve_coefficients(run))
    fit = hill['fit']
    residuals = pd.DataFrame([
        {'model': 'hill', 'weighted_residual': hill['weighted_residual'],
         'unweighted_residual': hill['unweighted_residual']},
        {'model': 'bayesian', 'weighted_residual': weighted_residual(dataset, bayes_fn),
         'unweighted_residual': weighted_residual(dataset, bayes_fn, weighted=False)},
    ])

    out = OutputDirectory(Config.output_dir(args.out_dir))
    out.frame('residuals.csv', residuals)
    out.json('hill_fit.json', fit)
    out.frame('hill_curve.csv', hill['curve'])
    out.frame('bayes_curve.csv', bayes_curve)
    out.text('comparison.svg', figure_to_svg(comparison_plot(loaded['ratios'], hill['curve'], bayes_curve)))

    print(residuals.to_string(index=False))
    exit_code = _report_gate(result)
    _finish(out, 'compare', args, path, hmc.seed, exit_code, started)
    return exit_code


def cmd_oracle(args) -> int:
    """Grid (or 1-D quadrature) oracle next to the HMC summary"""
    started = time.perf_counter()
    loaded, path = _load_dataset(args)
    model_config = _model_config(args)
    if model_config.kind.startswith('hier'):
        raise UnsupportedModelError(
            "the grid oracle integrates two parameters; the hierarchical posterior has "
            "2E+4 dimensions and is validated by the NCP/centered cross-check instead")

    alpha_bounds = tuple(args.alpha_bounds) if args.alpha_bounds else DEFAULT_BOUNDS[0]
    beta_bounds = tuple(args.beta_bounds) if args.beta_bounds else DEFAULT_BOUNDS[1]
    require(validate_bounds(alpha_bounds, 'alpha'))
    require(validate_bounds(beta_bounds, 'beta'))
    if args.resolution < 8:
        raise UsageError(f"--resolution must be at least 8, got {args.resolution}")
    grid_options = {
        'bounds': (alpha_bounds, beta_bounds),
        'resolution': args.resolution,
        'refinements': args.refinements,
    }

    # Bounds that miss the posterior fail before any sampling
    if model_config.kind == 'simple':
        bounds_check = GridOracleAgent(grid_options['bounds'], args.resolution, 0)
        checked = bounds_check.evaluate(build_model(model_config, loaded['dataset']))
        if 'error' in checked:
            raise StageError.from_result(checked)

    hmc = _hmc_config(args)
    result = _sample(loaded, model_config, hmc, run_oracle=True, grid_options=grid_options)
    oracle = result['oracle']
    if oracle is None or 'error' in oracle:
        raise StageError.from_result(oracle or {'error': 'oracle did not run'})

    out = OutputDirectory(Config.output_dir(args.out_dir))
    rows = []
    for name, agreement in oracle['agreement'].items():
        row = {'parameter': name}
        if 'moments' in oracle:
            row.update({f'grid_{k}': v for k, v in oracle['moments'][name].model_dump().items()})
        else:
            row.update({'quadrature_mean': oracle['quadrature'].mean,
                        'quadrature_sd': oracle['quadrature'].sd,
                        'closed_form_mean': oracle['closed_form']['mean'],
                        'closed_form_sd': oracle['closed_form']['sd']})
        row.update({'hmc_mean': agreement['hmc_mean'], 'hmc_mcse': agreement['hmc_mcse'],
                    'agreement_ratio': agreement['ratio']})
        rows.append(row)
    table = pd.DataFrame(rows)
    out.frame('oracle_summary.csv', table)
    if 'grid' in oracle:
        out.frame('grid.csv', grid_frame(oracle['grid']))
    out.json('oracle.json', {
        'agreement': oracle['agreement'],
        'generations': oracle['grid'].generations if 'grid' in oracle else None,
        'stable': oracle.get('stable'),
    })

    print(table.to_string(index=False))
    exit_code = _report_gate(result)
    _finish(out, 'oracle', args, path, hmc.seed, exit_code, started)
    return exit_code


def cmd_synthesize(args) -> int:
    """Write a synthetic trial CSV"""
    seed = Config.get_seed(args.seed)
    if args.experiments < 1:
        raise UsageError(f"--experiments must be at least 1, got {args.experiments}")
    if args.kind == 'logistic':
        dataset = synthesize(args.experiments, args.alpha, args.beta, seed)
    elif args.kind == 'hierarchical':
        dataset = synthesize_hierarchical(args.experiments, args.alpha, args.beta,
                                          args.sigma_alpha, args.sigma_beta, seed)
    else:
        dataset = synthesize_hill(args.experiments, args.r_max, args.d50, args.c_h,
                                  args.total, seed, noise=args.noise)
    write_text_atomic(args.output, serialize_trials(dataset))
    print(f"🧬 wrote {dataset.size} {args.kind} experiments to {args.output} (seed {seed})")
    return 0


def cmd_config(args) -> int:
    """Print the resolved environment configuration"""
    print(json.dumps(Config.validate_config(), indent=2, sort_keys=True))
    return 0
