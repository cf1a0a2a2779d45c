"""
Diagnostics Agent
Summarizes a sample run and applies the convergence gate
"""

from typing import Dict

from app.core.errors import DoseResponseError
from app.inference.diagnostics import (
    MAX_DIVERGENT_FRACTION,
    RHAT_THRESHOLD,
    convergence_failures,
    summarize_run,
)
from app.inference.sampler import SampleRun


class DiagnosticsAgent:
    """Convergence diagnostics agent"""

    def __init__(self, rhat_threshold: float = RHAT_THRESHOLD,
                 max_divergent_fraction: float = MAX_DIVERGENT_FRACTION):
        self.name = "Convergence Inspector"
        self.rhat_threshold = rhat_threshold
        self.max_divergent_fraction = max_divergent_fraction

    def analyze(self, run: SampleRun) -> Dict:
        """Posterior summary plus the list of parameters failing the gate"""
        print(f"🩺 {self.name}: {run.n_chains} chains × {run.n_draws} draws")

        try:
            summary = summarize_run(run)
            failing = convergence_failures(summary, self.rhat_threshold, self.max_divergent_fraction)
            rhats = [row.split_rhat for row in summary.parameters if row.split_rhat is not None]
            worst = max(rhats) if rhats else None

            if failing:
                print(f"   ⚠️  {len(failing)} failing: {', '.join(failing[:8])}")
            else:
                print(f"   ✅ max split-Rhat {worst:.4f} ≤ {self.rhat_threshold}")

            return {
                'agent': self.name,
                'summary': summary,
                'failing': failing,
                'converged': not failing,
                'max_split_rhat': worst,
            }

        except DoseResponseError as e:
            return e.to_dict()
