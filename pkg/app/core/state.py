"""
State definitions for the Dose-Response pipeline
Defines the SamplingState TypedDict for the LangGraph workflow
"""

from typing import Any, Dict, List, Optional, TypedDict


class SamplingState(TypedDict):
    """State schema for the LangGraph workflow"""

    # Input
    dataset: Any
    model_config: Any
    hmc_config: Any
    run_oracle: bool
    grid_options: Dict

    # Agent outputs
    model: Optional[Dict]
    sampling: Optional[Dict]
    diagnostics: Optional[Dict]
    oracle: Optional[Dict]

    # Convergence gate
    converged: bool
    failing: List[str]

    # Metadata
    timestamp: str
    workflow_stage: str
    errors: List[str]
    exit_code: int
