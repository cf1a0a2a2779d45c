"""
Grid Oracle Agent
Sampler-independent posterior moments: grid quadrature for the two-parameter
model and Simpson quadrature for the single-probability model
"""

from typing import Dict, Optional

from app.core.errors import DoseResponseError, UnsupportedModelError
from app.inference.conjugate import beta_binomial_posterior, beta_moments
from app.inference.diagnostics import PosteriorSummary
from app.inference.models import BetaBinomialModel, ModelDensity, SimpleLrModel
from app.inference.oracle import (
    DEFAULT_BOUNDS,
    DEFAULT_REFINEMENTS,
    DEFAULT_RESOLUTION,
    conjugate_grid_mean,
    grid_moments,
    grid_posterior,
)


def agreement_ratio(hmc_mean: float, oracle_mean: float, mcse: Optional[float]) -> Optional[float]:
    """|HMC mean - oracle mean| in units of the Monte-Carlo standard error"""
    gap = abs(hmc_mean - oracle_mean)
    if not mcse:
        return 0.0 if gap == 0 else None
    return gap / mcse


class GridOracleAgent:
    """Deterministic posterior oracle agent"""

    def __init__(self, bounds=DEFAULT_BOUNDS, resolution: int = DEFAULT_RESOLUTION,
                 refinements: int = DEFAULT_REFINEMENTS):
        self.name = "Grid Oracle"
        self.bounds = bounds
        self.resolution = resolution
        self.refinements = refinements

    def evaluate(self, model: ModelDensity, summary: Optional[PosteriorSummary] = None) -> Dict:
        """Oracle moments, compared with the sampler summary when one is given"""
        print(f"🧮 {self.name}: {model.name} model")

        try:
            if isinstance(model, SimpleLrModel):
                result = self._grid(model)
            elif isinstance(model, BetaBinomialModel):
                result = self._conjugate(model)
            else:
                raise UnsupportedModelError(
                    f"the grid oracle covers only the two-parameter simple model and the "
                    f"single-probability model; {model.name} has {model.dim} parameters")

            if summary is not None:
                result['agreement'] = {
                    name: {
                        'oracle_mean': oracle_mean,
                        'hmc_mean': summary.get(name).mean,
                        'hmc_mcse': summary.get(name).mcse,
                        'ratio': agreement_ratio(summary.get(name).mean, oracle_mean,
                                                 summary.get(name).mcse),
                    }
                    for name, oracle_mean in result['oracle_means'].items()
                }
                worst = max((v['ratio'] for v in result['agreement'].values() if v['ratio'] is not None),
                            default=None)
                if worst is not None:
                    print(f"   → worst |HMC - oracle| / MCSE = {worst:.2f}")

            result['agent'] = self.name
            return result

        except DoseResponseError as e:
            return e.to_dict()

    def _grid(self, model: SimpleLrModel) -> Dict:
        grid = grid_posterior(model, self.bounds, self.resolution, self.refinements)
        moments = grid_moments(grid)
        print(f"   → {grid.n_cells} cells after {grid.generations} generations"
              f"{' (stable)' if grid.is_stable() else ''}")
        return {
            'grid': grid,
            'moments': moments,
            'stable': grid.is_stable(),
            'oracle_means': {name: m.mean for name, m in moments.items()},
        }

    def _conjugate(self, model: BetaBinomialModel) -> Dict:
        quadrature = conjugate_grid_mean(model)
        closed_mean, closed_sd = beta_moments(beta_binomial_posterior(model.prior, model.n, model.N))
        print(f"   → quadrature mean {quadrature.mean:.6f}, closed form {closed_mean:.6f}")
        return {
            'quadrature': quadrature,
            'closed_form': {'mean': closed_mean, 'sd': closed_sd},
            'oracle_means': {'theta': quadrature.mean},
        }
