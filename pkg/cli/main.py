"""
Command-Line Interface for the Dose-Response Analysis System
Main entry point: doseresp <command> [flags]
"""

import argparse
import sys
import warnings
from pathlib import Path
from typing import List, Optional

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from app.core.errors import DoseResponseError, UsageError
from app.inference.oracle import DEFAULT_REFINEMENTS, DEFAULT_RESOLUTION
from cli import commands

warnings.filterwarnings('ignore')

MODEL_KINDS = ['simple', 'hier_centered', 'hier_ncp', 'beta_binomial']


class ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped onto exit code 1"""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common_flags() -> argparse.ArgumentParser:
    parent = ArgumentParser(add_help=False)
    parent.add_argument('--input', help="trial CSV (dosage,total,improved); falls back to DOSERESP_DATASET")
    parent.add_argument('--out-dir', dest='out_dir', help="output directory (default DOSERESP_OUT_DIR or ./out)")
    return parent


def _model_flags() -> argparse.ArgumentParser:
    parent = ArgumentParser(add_help=False)
    parent.add_argument('--model', choices=MODEL_KINDS)
    parent.add_argument('--prior-alpha', dest='prior_alpha', help="e.g. normal(0,20), logistic(0,10), flat")
    parent.add_argument('--prior-beta', dest='prior_beta')
    parent.add_argument('--config', help="JSON model configuration document")
    return parent


def _sampler_flags() -> argparse.ArgumentParser:
    parent = ArgumentParser(add_help=False)
    parent.add_argument('--chains', type=int)
    parent.add_argument('--iters', type=int, help="total iterations per chain, warmup included")
    parent.add_argument('--warmup-frac', dest='warmup_frac', type=float)
    parent.add_argument('--target-accept', dest='target_accept', type=float)
    parent.add_argument('--seed', type=int, help="falls back to DOSERESP_SEED, then 1")
    parent.add_argument('--parallel', action='store_true', help="run chains in a process pool")
    return parent


def build_parser() -> ArgumentParser:
    """Create the doseresp argument parser"""
    parser = ArgumentParser(prog='doseresp', description="Bayesian dose-response analysis")
    sub = parser.add_subparsers(dest='command', parser_class=ArgumentParser)
    common, model, sampler = _common_flags(), _model_flags(), _sampler_flags()

    summarize = sub.add_parser('summarize', parents=[common], help="dataset summary and ratio scatter")
    summarize.set_defaults(handler=commands.cmd_summarize)

    sample = sub.add_parser('sample', parents=[common, model, sampler], help="HMC posterior sampling")
    sample.add_argument('--bandwidth', type=float, help="KDE bandwidth (default Silverman)")
    sample.set_defaults(handler=commands.cmd_sample)

    sweep = sub.add_parser('sweep', parents=[common, sampler], help="simple-model prior sweep")
    sweep.add_argument('--config', help="JSON sweep document {\"priors\": [...], \"iterations\": N}")
    sweep.add_argument('--priors', nargs='*', help="prior rows applied to both alpha and beta")
    sweep.set_defaults(handler=commands.cmd_priors_sweep)

    compare = sub.add_parser('compare', parents=[common, model, sampler], help="Hill vs Bayesian curves")
    compare.set_defaults(handler=commands.cmd_compare)

    oracle = sub.add_parser('oracle', parents=[common, model, sampler], help="grid oracle vs HMC")
    oracle.add_argument('--alpha-bounds', dest='alpha_bounds', type=float, nargs=2, metavar=('LO', 'HI'))
    oracle.add_argument('--beta-bounds', dest='beta_bounds', type=float, nargs=2, metavar=('LO', 'HI'))
    oracle.add_argument('--resolution', type=int, default=DEFAULT_RESOLUTION)
    oracle.add_argument('--refinements', type=int, default=DEFAULT_REFINEMENTS)
    oracle.set_defaults(handler=commands.cmd_oracle)

    synth = sub.add_parser('synthesize', help="write a synthetic trial CSV")
    synth.add_argument('--kind', choices=['logistic', 'hierarchical', 'hill'], default='logistic')
    synth.add_argument('--experiments', type=int, default=71)
    synth.add_argument('--alpha', type=float, default=-14.03, help="alpha (or mu_alpha)")
    synth.add_argument('--beta', type=float, default=9.39, help="beta (or mu_beta)")
    synth.add_argument('--sigma-alpha', dest='sigma_alpha', type=float, default=1.0)
    synth.add_argument('--sigma-beta', dest='sigma_beta', type=float, default=0.5)
    synth.add_argument('--r-max', dest='r_max', type=float, default=0.9)
    synth.add_argument('--d50', type=float, default=1.3)
    synth.add_argument('--c-h', dest='c_h', type=float, default=8.0)
    synth.add_argument('--total', type=int, default=20)
    synth.add_argument('--noise', action='store_true', help="binomial draws instead of rounded means")
    synth.add_argument('--seed', type=int)
    synth.add_argument('--output', required=True)
    synth.set_defaults(handler=commands.cmd_synthesize)

    config = sub.add_parser('config', help="print the resolved environment configuration")
    config.set_defaults(handler=commands.cmd_config)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command and return its exit code"""
    try:
        args = build_parser().parse_args(argv)
        if not getattr(args, 'handler', None):
            raise UsageError("a command is required: summarize, sample, sweep, compare, oracle, synthesize, config")
        return args.handler(args)
    except DoseResponseError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
