"""
HMC Sampling Agent
Runs the multi-chain Hamiltonian Monte-Carlo sampler on a model
"""

from typing import Dict

from app.core.errors import DoseResponseError
from app.inference.models import ModelDensity
from app.inference.sampler import HmcConfig, run_chains


class HmcSamplingAgent:
    """Posterior sampling agent"""

    def __init__(self):
        self.name = "HMC Sampler"

    def sample(self, model: ModelDensity, config: HmcConfig) -> Dict:
        """Draw posterior samples"""
        print(f"🎲 {self.name}: {config.chains} chains × {config.total_iterations} iterations "
              f"(model {model.name}, seed {config.seed})")

        try:
            run = run_chains(model, config)
            step_sizes = ", ".join(f"{chain.final_step_size:.3g}" for chain in run.chains)
            print(f"   → step sizes [{step_sizes}], {run.divergence_count} divergences")

            return {
                'agent': self.name,
                'run': run,
                'divergences': run.divergence_count,
                'divergent_fraction': run.divergent_fraction,
                'duration_seconds': run.duration_seconds,
            }

        except DoseResponseError as e:
            return e.to_dict()
        except Exception as e:
            return {'error': str(e), 'kind': type(e).__name__, 'exit_code': 1}
