"""
Trial Data Agent
Loads and validates a dose-response CSV and computes its dataset summary
"""

from typing import Dict

from app.core.errors import DoseResponseError
from app.inference.data import load_trials, summarize, survival_ratios


class TrialDataAgent:
    """Trial data ingest agent"""

    def __init__(self):
        self.name = "Trial Data Curator"

    def analyze(self, path) -> Dict:
        """Load a trial file and summarize it"""
        print(f"🧪 {self.name}: Reading {path}")

        try:
            dataset = load_trials(path)
            summary = summarize(dataset)
            print(f"   → {dataset.size} experiments, mean dosage {summary.dosage.mean:.3f}")

            return {
                'agent': self.name,
                'dataset': dataset,
                'experiments': dataset.size,
                'summary': summary,
                'ratios': survival_ratios(dataset),
            }

        except DoseResponseError as e:
            return e.to_dict()
        except OSError as e:
            return {'error': f"Cannot read {path}: {e}", 'kind': 'UsageError', 'exit_code': 1}
