"""Lifelong warehouse simulation: task assigners, agent placement, and the
episode loop that turns windowed plans into measured throughput.

A simulation owns a grid, ``m`` agents, a goal source matching the scenario,
and a timestep budget ``T``.  Every ``h`` timesteps it tops up each agent's
goal queue, plans one episode, and executes the first ``h`` steps of the
answer.  Throughput is goals completed divided by ``T``.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import DistanceTables, Grid, Location, Role
from .replanning import (
    AgentState,
    GoalSource,
    HorizonConfig,
    advance,
    ensure_distinct_parking,
    plan_episode,
    top_up_goals,
)
from .search import NoSolution, TimeLimit
from .solvers import SOLVERS

SCENARIOS = ("auto", "fulfillment", "sorting", "uniform")


class ScriptedAssigner:
    """Fixed per-agent goal streams; a stream that empties stays empty."""

    def __init__(self, streams: dict[int, Sequence[Location]]):
        self._queues = {i: list(goals) for i, goals in streams.items()}

    def next_goal(self, agent: AgentState) -> Location | None:
        queue = self._queues.get(agent.id)
        return queue.pop(0) if queue else None


class UniformRandomAssigner:
    """Draws every goal uniformly at random from a fixed cell pool,
    independent of which agent is asking."""

    def __init__(self, cells: Sequence[Location], rng: np.random.Generator):
        if not cells:
            raise ValueError("assigner needs a non-empty cell pool")
        self._cells = list(cells)
        self._rng = rng

    def next_goal(self, agent: AgentState) -> Location:
        return self._cells[int(self._rng.integers(len(self._cells)))]


class AlternatingStationAssigner:
    """Sorting-floor goals: each agent alternates between a work station and
    a random drop cell, starting with a station (pick up, then drop).

    The station is the one nearest the agent's current location, ties going
    to the lowest cell index; drop cells are drawn uniformly.
    """

    def __init__(self, grid: Grid, tables: DistanceTables, rng: np.random.Generator):
        self._stations = sorted(grid.cells_with_role(Role.WORK_STATION), key=grid.index)
        self._drops = grid.cells_with_role(Role.ENDPOINT)
        if not self._stations:
            raise ValueError("sorting scenario needs work-station cells")
        if not self._drops:
            raise ValueError("sorting scenario needs drop-endpoint cells")
        self._tables = tables
        self._rng = rng
        self._wants_station: dict[int, bool] = {}

    def next_goal(self, agent: AgentState) -> Location:
        if self._wants_station.get(agent.id, True):
            self._wants_station[agent.id] = False
            best, best_d = None, None
            for station in self._stations:
                d = self._tables.dist(agent.location, station)
                if best_d is None or d < best_d:
                    best, best_d = station, d
            return best
        self._wants_station[agent.id] = True
        return self._drops[int(self._rng.integers(len(self._drops)))]


def fulfillment_assigner(grid: Grid, seed) -> UniformRandomAssigner:
    """Pod-storage scenario: every goal is a uniform draw over the
    designated endpoint cells."""
    endpoints = grid.cells_with_role(Role.ENDPOINT)
    if not endpoints:
        raise ValueError("fulfillment scenario needs endpoint cells")
    return UniformRandomAssigner(endpoints, np.random.default_rng(seed))


def sorting_assigner(grid: Grid, tables: DistanceTables, seed) -> AlternatingStationAssigner:
    """Sorting-floor scenario: alternate nearest work station and uniform
    drop endpoint, station first."""
    return AlternatingStationAssigner(grid, tables, np.random.default_rng(seed))


@dataclass
class SimulationConfig:
    """One simulation run: scenario, team size, horizon, solver, budget."""

    grid: Grid
    m: int
    horizon: HorizonConfig
    solver: str = "pbs"
    subopt: float = 1.1
    timesteps: int = 500
    seed: int = 0
    scenario: str = "auto"
    time_limit: float = 60.0

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; pick one of {sorted(SOLVERS)}")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; pick one of {SCENARIOS}")
        if self.m < 0:
            raise ValueError(f"agent count must be non-negative, got {self.m}")
        if self.timesteps < 1:
            raise ValueError(f"timestep budget must be positive, got {self.timesteps}")
        if self.subopt < 1.0:
            raise ValueError(f"suboptimality factor must be >= 1, got {self.subopt}")
        if self.time_limit <= 0:
            raise ValueError(f"time limit must be positive, got {self.time_limit}")
        cells = start_cells(self.grid, resolve_scenario(self.grid, self.scenario))
        if self.m > len(cells):
            raise ValueError(
                f"{self.m} agents do not fit the {len(cells)} available start cells"
            )


@dataclass
class SimulationResult:
    """Outcome of one run; timing fields are host measurements, everything
    else is a deterministic function of the configuration."""

    throughput: float
    completed: int
    episodes: int
    runtimes: list[float]
    w_used: list[int | float]
    capped_episodes: int
    failed: bool
    agents: list[AgentState]
    history: list[list[Location]]
    completions: list[tuple[int, int]] = field(default_factory=list)  # (timestep, agent)

    @property
    def mean_runtime_s(self) -> float:
        return statistics.fmean(self.runtimes) if self.runtimes else 0.0

    @property
    def std_runtime_s(self) -> float:
        return statistics.pstdev(self.runtimes) if len(self.runtimes) > 1 else 0.0


def resolve_scenario(grid: Grid, scenario: str = "auto") -> str:
    """Map ``auto`` onto the scenario the grid's cell roles imply."""
    if scenario != "auto":
        return scenario
    if grid.cells_with_role(Role.LOADING):
        return "fulfillment"
    if grid.cells_with_role(Role.WORK_STATION):
        return "sorting"
    return "uniform"


def start_cells(grid: Grid, scenario: str) -> list[Location]:
    """Cells agents may start on under a scenario's placement rule."""
    if scenario == "fulfillment":
        return grid.cells_with_role(Role.LOADING)
    if scenario == "sorting":
        return [c for c in grid.passable_cells() if grid.role_at(c) == Role.NONE]
    return grid.passable_cells()


def _make_assigner(grid: Grid, tables: DistanceTables, scenario: str, rng) -> GoalSource:
    if scenario == "fulfillment":
        endpoints = grid.cells_with_role(Role.ENDPOINT)
        if not endpoints:
            raise ValueError("fulfillment scenario needs endpoint cells")
        return UniformRandomAssigner(endpoints, rng)
    if scenario == "sorting":
        return AlternatingStationAssigner(grid, tables, rng)
    return UniformRandomAssigner(grid.passable_cells(), rng)


def _completion_events(
    agents: Sequence[AgentState], paths, step: int, now: int
) -> list[tuple[int, int]]:
    """Real goals each agent will retire this episode, with global times.
    Mirrors the retirement rule in ``advance``."""
    events = []
    for agent, path in zip(agents, paths):
        visited = sum(1 for v in path.goal_visit_times if v <= step)
        visited = min(visited, len(agent.goals))
        times = path.goal_visit_times[:visited]
        if agent.parked:
            times = times[1:]  # the stand-in goal is not work
        events.extend((now + v, agent.id) for v in times)
    return events


def audit_history(history: Sequence[Sequence[Location]]) -> list[tuple]:
    """Scan full global trajectories for vertex and edge collisions.

    Returns one tuple per violation: ``("vertex", i, j, cell, t)`` or
    ``("edge", i, j, frm, to, t)``.  An empty list means the whole run was
    collision-free.
    """
    if not history:
        return []
    horizon = max(len(h) for h in history)

    def cell(i: int, t: int) -> Location:
        h = history[i]
        return h[t] if t < len(h) else h[-1]

    violations: list[tuple] = []
    for t in range(horizon):
        seen: dict[Location, list[int]] = {}
        for i in range(len(history)):
            c = cell(i, t)
            occupants = seen.setdefault(c, [])
            violations.extend(("vertex", j, i, c, t) for j in occupants)
            occupants.append(i)
    for t in range(1, horizon):
        moves: dict[tuple[Location, Location], int] = {}
        for i in range(len(history)):
            frm, to = cell(i, t - 1), cell(i, t)
            if frm == to:
                continue
            if (to, frm) in moves:
                violations.append(("edge", moves[(to, frm)], i, frm, to, t))
            moves[(frm, to)] = i
    return violations


def run_simulation(
    cfg: SimulationConfig,
    assigner: GoalSource | None = None,
    starts: Sequence[Location] | None = None,
) -> SimulationResult:
    """Run one lifelong simulation and aggregate its statistics.

    Placement, goal draws, and solver restarts use three independent
    substreams of ``cfg.seed``, so changing e.g. the solver never perturbs
    the goal sequence.  ``assigner`` and ``starts`` override the scenario's
    defaults (used by scripted experiments and tests).  A solver failure
    stops the run early and flags the partial result instead of raising.
    """
    grid = cfg.grid
    scenario = resolve_scenario(grid, cfg.scenario)
    tables = DistanceTables(grid)
    place_ss, assign_ss, solver_ss = np.random.SeedSequence(cfg.seed).spawn(3)

    if starts is None:
        cells = start_cells(grid, scenario)
        rng = np.random.default_rng(place_ss)
        picks = rng.choice(len(cells), size=cfg.m, replace=False)
        starts = [cells[int(i)] for i in picks]
    else:
        starts = [Location(*s) for s in starts]
        if len(starts) != cfg.m:
            raise ValueError(f"{len(starts)} start cells for m={cfg.m} agents")
    if assigner is None:
        assigner = _make_assigner(grid, tables, scenario, np.random.default_rng(assign_ss))

    agents = [AgentState(i, s, []) for i, s in enumerate(starts)]
    history = [[a.location] for a in agents]
    adapter = SOLVERS[cfg.solver]
    solver_rng = np.random.default_rng(solver_ss)

    def solver(problem):
        return adapter(problem, cfg.subopt, solver_rng, cfg.time_limit)

    runtimes: list[float] = []
    w_used: list[int | float] = []
    completions: list[tuple[int, int]] = []
    capped = 0
    completed = 0
    failed = False
    now = 0
    while now < cfg.timesteps and cfg.m > 0:
        step = min(cfg.horizon.h, cfg.timesteps - now)
        for agent in agents:
            top_up_goals(agent, assigner, cfg.horizon.h, tables)
        begin = time.perf_counter()
        try:
            episode = plan_episode(grid, agents, cfg.horizon, solver, tables)
        except (NoSolution, TimeLimit):
            failed = True
            break
        runtimes.append(time.perf_counter() - begin)
        w_used.append(episode.w_used)
        capped += bool(episode.escalation_capped)
        events = _completion_events(agents, episode.paths, step, now)
        done = advance(agents, episode, step)
        assert done == len(events)
        completions.extend(events)
        completed += done
        for agent, path, trail in zip(agents, episode.paths, history):
            trail.extend(path.at(t) for t in range(1, step + 1))
            assert trail[-1] == agent.location
        now += step

    violations = audit_history(history)
    assert not violations, f"committed trajectories collide: {violations[:3]}"
    return SimulationResult(
        throughput=completed / cfg.timesteps,
        completed=completed,
        episodes=len(w_used),
        runtimes=runtimes,
        w_used=w_used,
        capped_episodes=capped,
        failed=failed,
        agents=agents,
        history=history,
        completions=completions,
    )
