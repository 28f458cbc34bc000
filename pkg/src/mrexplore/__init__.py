"""Heterogeneous multi-robot exploration under uncertainty.

Sector-graph worlds, mobility-dependent traversal risk, artifact search
with communication constraints, and a receding-horizon Monte Carlo tree
search planner with double progressive widening, plus scripted baselines
and batch experiment drivers.
"""

from .world_model import (
    DEFAULT_COVERAGE_VALUES,
    EnvConfig,
    HazardSpec,
    MapBelief,
    MapGraph,
    SectorGroundTruth,
    TERRAIN_CLASSES,
    UNVISITED,
    VISITED,
)
from .robot_model import (
    DEFAULT_CAPABILITY_MATRIX,
    MobilityClass,
    RobotCapability,
    RobotState,
    make_mobility,
    traversal_success_prob,
)
from .mdp_core import (
    BeliefModel,
    GroundTruthModel,
    JointActionSpace,
    JointState,
    Mission,
    RobotAction,
    A_FRONTIER,
    A_SEARCH,
    A_STAY,
    guided,
    reward_value,
)
from .planner import (
    MctsParams,
    MctsSearch,
    OracleInfeasible,
    expectimax_action_values,
    expectimax_best,
    expectimax_value,
    naive_action,
    plan_action,
    run_policy,
    supervised_action,
)
from .scenarios import (
    Scenario,
    ScenarioError,
    ScenarioParseError,
    ScenarioValidationError,
    build_subt121,
    build_urban7,
    comm_autonomy_grid,
    formation_variants,
    load_scenario,
    load_scenario_file,
    serialize_scenario,
    with_autonomy,
    with_comm_fraction,
)
from .simulator import (
    BatchStats,
    EpisodeResult,
    MetricStats,
    run_batch,
    run_episode,
    summarize,
    validate_trace,
)

__version__ = "0.1.0"

__all__ = [
    "A_FRONTIER",
    "A_SEARCH",
    "A_STAY",
    "BatchStats",
    "BeliefModel",
    "DEFAULT_CAPABILITY_MATRIX",
    "DEFAULT_COVERAGE_VALUES",
    "EnvConfig",
    "EpisodeResult",
    "GroundTruthModel",
    "HazardSpec",
    "JointActionSpace",
    "JointState",
    "MapBelief",
    "MapGraph",
    "MctsParams",
    "MctsSearch",
    "MetricStats",
    "Mission",
    "MobilityClass",
    "OracleInfeasible",
    "RobotAction",
    "RobotCapability",
    "RobotState",
    "Scenario",
    "ScenarioError",
    "ScenarioParseError",
    "ScenarioValidationError",
    "SectorGroundTruth",
    "TERRAIN_CLASSES",
    "UNVISITED",
    "VISITED",
    "build_subt121",
    "build_urban7",
    "comm_autonomy_grid",
    "expectimax_action_values",
    "expectimax_best",
    "expectimax_value",
    "formation_variants",
    "guided",
    "load_scenario",
    "load_scenario_file",
    "make_mobility",
    "naive_action",
    "plan_action",
    "reward_value",
    "run_batch",
    "run_episode",
    "run_policy",
    "serialize_scenario",
    "summarize",
    "supervised_action",
    "traversal_success_prob",
    "validate_trace",
    "with_autonomy",
    "with_comm_fraction",
]
