"""
Hill Fit Agent
Fits the Hill equation to a dataset and reports its weighted residual
"""

from typing import Dict

from app.core.errors import DoseResponseError
from app.inference.data import Dataset
from app.inference.hill import fit_hill, hill_curve, hill_response, weighted_residual


class HillFitAgent:
    """Hill-equation curve fitting agent"""

    def __init__(self):
        self.name = "Hill Curve Fitter"

    def fit(self, dataset: Dataset) -> Dict:
        """Fit r_max, d50 and c_h"""
        print(f"📐 {self.name}: Fitting {dataset.size} experiments")

        try:
            fit = fit_hill(dataset)
            print(f"   → r_max {fit.r_max:.3f}, d50 {fit.d50:.3f}, c_h {fit.c_h:.2f}")

            return {
                'agent': self.name,
                'fit': fit,
                'curve': hill_curve(fit, dataset),
                'weighted_residual': weighted_residual(dataset, lambda d: hill_response(d, fit)),
                'unweighted_residual': weighted_residual(dataset, lambda d: hill_response(d, fit),
                                                         weighted=False),
            }

        except DoseResponseError as e:
            return e.to_dict()
