"""
Model Builder Agent
Turns a model configuration document into a sampled model density
"""

from typing import Dict

from app.core.config import ModelConfig
from app.core.errors import DoseResponseError
from app.inference.data import Dataset
from app.inference.models import build_model


class ModelBuilderAgent:
    """Model construction agent"""

    def __init__(self):
        self.name = "Model Builder"

    def build(self, dataset: Dataset, config: ModelConfig) -> Dict:
        """Instantiate the configured model over a dataset"""
        print(f"🏗️  {self.name}: {config.kind} model on {dataset.size} experiments")

        try:
            model = build_model(config, dataset)
            if config.kind == 'simple':
                print(f"   → priors alpha ~ {config.prior_alpha}, beta ~ {config.prior_beta}")
            elif config.kind.startswith('hier'):
                print(f"   → mu ~ {config.mu_prior}, sigma ~ {config.sigma_prior}")

            return {
                'agent': self.name,
                'model': model,
                'kind': config.kind,
                'dim': model.dim,
                'parameter_names': list(model.parameter_names),
            }

        except DoseResponseError as e:
            return e.to_dict()
