"""Consensus-based distributed economic dispatch over a topic-based message bus."""

from .bus import DeliveryPolicy, Message, MessageBus, Topic, topic_matches
from .consensus import (
    AgentState,
    DivergenceError,
    RunResult,
    SolverConfig,
    consensus_reached,
    init_states,
    local_update,
    run_dispatch,
    run_dispatch_matrix,
    trace_laplacian_potential,
)
from .graph import (
    CommGraph,
    build_graph,
    is_connected,
    laplacian,
    laplacian_potential,
    metropolis_weights,
    preset_graph,
)
from .model import (
    ConsumerParams,
    Dispatch,
    GeneratorParams,
    Scenario,
    cost,
    gen_response,
    load_response,
    marginal_cost,
    marginal_utility,
    social_cost,
    utility,
)
from .oracle import (
    DispatchSolution,
    aggregate_generation,
    aggregate_load,
    solve_centralized,
    verify_kkt,
)
from .scenario import generate_scenario, load_scenario, parse_scenario

__version__ = "0.1.0"
