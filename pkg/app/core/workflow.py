"""
LangGraph Workflow for Dose-Response Analysis
Orchestrates model building, sampling, diagnostics and the optional oracle
"""

from datetime import datetime
from typing import Dict, Optional

from langgraph.graph import END, StateGraph

from app.agents.diagnostics import DiagnosticsAgent
from app.agents.grid_oracle import GridOracleAgent
from app.agents.hmc_sampler import HmcSamplingAgent
from app.agents.model_builder import ModelBuilderAgent
from app.core.config import ModelConfig
from app.core.errors import ConvergenceError
from app.core.state import SamplingState
from app.inference.data import Dataset
from app.inference.sampler import HmcConfig


def _record_error(state: SamplingState, stage: str, result: Dict) -> None:
    state['errors'].append(f"{stage}: {result['error']}")
    if not state['exit_code']:
        state['exit_code'] = result.get('exit_code', 1)


# ============================================================================
# LANGGRAPH NODES
# ============================================================================

def model_node(state: SamplingState) -> SamplingState:
    """LangGraph node: Model construction"""
    agent = ModelBuilderAgent()
    result = agent.build(state['dataset'], state['model_config'])
    state['model'] = result
    state['workflow_stage'] = 'model_complete'
    if 'error' in result:
        _record_error(state, 'Model', result)
    return state


def sampling_node(state: SamplingState) -> SamplingState:
    """LangGraph node: HMC sampling"""
    agent = HmcSamplingAgent()
    result = agent.sample(state['model']['model'], state['hmc_config'])
    state['sampling'] = result
    state['workflow_stage'] = 'sampling_complete'
    if 'error' in result:
        _record_error(state, 'Sampling', result)
    return state


def diagnostics_node(state: SamplingState) -> SamplingState:
    """LangGraph node: Posterior summary and diagnostics"""
    agent = DiagnosticsAgent()
    result = agent.analyze(state['sampling']['run'])
    state['diagnostics'] = result
    state['workflow_stage'] = 'diagnostics_complete'
    if 'error' in result:
        _record_error(state, 'Diagnostics', result)
    return state


def convergence_node(state: SamplingState) -> SamplingState:
    """LangGraph node: Convergence gate"""
    failing = state['diagnostics'].get('failing', [])
    state['failing'] = failing
    state['converged'] = not failing
    if failing:
        error = ConvergenceError(f"convergence gate failed for: {', '.join(failing)}", failing)
        _record_error(state, 'Convergence', error.to_dict())
    state['workflow_stage'] = 'convergence_complete'
    return state


def oracle_node(state: SamplingState) -> SamplingState:
    """LangGraph node: Grid / quadrature oracle"""
    options = state.get('grid_options') or {}
    agent = GridOracleAgent(**options)
    result = agent.evaluate(state['model']['model'], state['diagnostics'].get('summary'))
    state['oracle'] = result
    state['workflow_stage'] = 'oracle_complete'
    if 'error' in result:
        _record_error(state, 'Oracle', result)
    return state


def should_continue(state: SamplingState) -> str:
    """Conditional edge: Stop after a failed stage"""
    if state['errors']:
        return "halt"
    return "continue"


def should_run_oracle(state: SamplingState) -> str:
    """Conditional edge: Oracle only when requested"""
    if state.get('run_oracle', False):
        return "oracle"
    return "complete"


# ============================================================================
# WORKFLOW CREATION
# ============================================================================

def create_sampling_workflow() -> StateGraph:
    """Create LangGraph workflow for posterior sampling"""

    workflow = StateGraph(SamplingState)

    # Add nodes
    workflow.add_node("model", model_node)
    workflow.add_node("sampling", sampling_node)
    workflow.add_node("diagnostics", diagnostics_node)
    workflow.add_node("convergence", convergence_node)
    workflow.add_node("oracle", oracle_node)

    # Set entry point
    workflow.set_entry_point("model")

    # Define edges
    workflow.add_conditional_edges("model", should_continue, {"continue": "sampling", "halt": END})
    workflow.add_conditional_edges("sampling", should_continue, {"continue": "diagnostics", "halt": END})
    workflow.add_conditional_edges("diagnostics", should_continue, {"continue": "convergence", "halt": END})

    # The oracle runs even when the convergence gate fails
    workflow.add_conditional_edges(
        "convergence",
        should_run_oracle,
        {
            "oracle": "oracle",
            "complete": END
        }
    )

    workflow.add_edge("oracle", END)

    return workflow.compile()


# ============================================================================
# MAIN ANALYSIS FUNCTION
# ============================================================================

def analyze_dataset(dataset: Dataset, model_config: ModelConfig, hmc_config: HmcConfig,
                    run_oracle: bool = False, grid_options: Optional[Dict] = None) -> Dict:
    """
    Main function to sample a posterior using the LangGraph workflow

    Args:
        dataset: Validated trial dataset
        model_config: Model kind and priors
        hmc_config: Sampler settings
        run_oracle: Also evaluate the grid / quadrature oracle
        grid_options: GridOracleAgent keyword arguments (bounds, resolution, refinements)

    Returns:
        Result dict; 'exit_code' is 0 on success and the first failing
        stage's exit code otherwise
    """

    print(f"\n{'='*80}")
    print(f"🚀 BAYESIAN DOSE-RESPONSE ANALYSIS")
    print(f"{'='*80}")
    print(f"📊 Model: {model_config.kind} | Experiments: {dataset.size} | Seed: {hmc_config.seed}")
    print(f"⏰ Started: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    print(f"{'='*80}\n")

    start_time = datetime.now()

    # Create workflow
    app = create_sampling_workflow()

    # Initialize state
    initial_state: SamplingState = {
        'dataset': dataset,
        'model_config': model_config,
        'hmc_config': hmc_config,
        'run_oracle': run_oracle,
        'grid_options': grid_options or {},
        'model': None,
        'sampling': None,
        'diagnostics': None,
        'oracle': None,
        'converged': False,
        'failing': [],
        'timestamp': datetime.now().isoformat(),
        'workflow_stage': 'initialized',
        'errors': [],
        'exit_code': 0,
    }

    # Execute workflow
    final_state = app.invoke(initial_state)

    # Calculate duration
    duration = (datetime.now() - start_time).total_seconds()

    model_result = final_state.get('model') or {}
    sampling_result = final_state.get('sampling') or {}
    diagnostics_result = final_state.get('diagnostics') or {}

    result = {
        'model': model_result.get('model'),
        'run': sampling_result.get('run'),
        'summary': diagnostics_result.get('summary'),
        'failing': final_state.get('failing', []),
        'converged': final_state.get('converged', False),
        'oracle': final_state.get('oracle'),
        'errors': final_state.get('errors', []),
        'exit_code': final_state.get('exit_code', 0),
        'workflow_stage': final_state.get('workflow_stage'),
        'duration_seconds': duration,
    }

    print(f"\n{'='*80}")
    verdict = "✅ CONVERGED" if result['converged'] else "❌ NOT CONVERGED"
    print(f"{verdict} | Duration: {duration:.2f}s | Exit code: {result['exit_code']}")
    for error in result['errors']:
        print(f"   • {error}")
    print(f"{'='*80}\n")

    return result
