"""Lifelong multi-agent path finding on 4-connected grids.

Agents continuously receive new goal locations while they move, so plans are
recomputed on a rolling basis: every `h` timesteps a bounded-horizon MAPF
solver resolves collisions among the next `w >= h` steps of every agent's
route, the first `h` steps are executed, and the cycle repeats.  The package
provides the grid/map layer, four windowed solvers (CBS, ECBS, prioritized
and cooperative A*), the replanning loop with a deadlock-avoiding horizon
extension rule, a warehouse simulator with task assigners, and a benchmark
CLI.
"""

from .grid import (
    UNREACHABLE,
    DistanceTables,
    Grid,
    Location,
    MapError,
    Move,
    Role,
    dump_map,
    generate_sorting_directions,
    load_map,
)
from .search import (
    INFINITE,
    Conflict,
    ConstraintSet,
    NoSolution,
    Path,
    TimeLimit,
    compute_h_value,
    constraints_from_paths,
    count_conflicts,
    detect_conflicts,
    find_first_conflict,
    multi_label_astar,
)
from .replanning import (
    AgentState,
    EpisodeResult,
    GoalSource,
    HorizonConfig,
    advance,
    plan_episode,
    progress_potential,
    remaining_distance,
    top_up_goals,
)
from .sim import (
    SCENARIOS,
    AlternatingStationAssigner,
    ScriptedAssigner,
    SimulationConfig,
    SimulationResult,
    UniformRandomAssigner,
    audit_history,
    fulfillment_assigner,
    run_simulation,
    sorting_assigner,
)
from .solvers import (
    SOLVERS,
    Solution,
    WindowedMapfProblem,
    solve_castar,
    solve_cbs,
    solve_ecbs,
    solve_pbs,
)

__version__ = "0.1.0"

__all__ = [
    "UNREACHABLE",
    "INFINITE",
    "SCENARIOS",
    "SOLVERS",
    "AgentState",
    "AlternatingStationAssigner",
    "Conflict",
    "ConstraintSet",
    "DistanceTables",
    "EpisodeResult",
    "GoalSource",
    "Grid",
    "HorizonConfig",
    "Location",
    "MapError",
    "Move",
    "NoSolution",
    "Path",
    "Role",
    "ScriptedAssigner",
    "SimulationConfig",
    "SimulationResult",
    "Solution",
    "TimeLimit",
    "UniformRandomAssigner",
    "WindowedMapfProblem",
    "advance",
    "audit_history",
    "compute_h_value",
    "constraints_from_paths",
    "count_conflicts",
    "detect_conflicts",
    "dump_map",
    "find_first_conflict",
    "fulfillment_assigner",
    "generate_sorting_directions",
    "load_map",
    "multi_label_astar",
    "plan_episode",
    "progress_potential",
    "remaining_distance",
    "run_simulation",
    "solve_castar",
    "solve_cbs",
    "solve_ecbs",
    "solve_pbs",
    "sorting_assigner",
    "top_up_goals",
    "__version__",
]
