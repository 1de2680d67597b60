"""Rolling-horizon replanning: plan ``w`` steps ahead, commit ``h``.

Agents carry short queues of goals.  Each episode tops the queues up so that
every agent has at least ``h`` timesteps of work, solves a single windowed
MAPF instance for the whole team, executes the first ``h`` timesteps of the
answer, and repeats.  Because collisions are only resolved inside the window,
a team can stall forever on plans that postpone every crossing past the
horizon; the progress potential detects that and widens the window until
enough agents are strictly closer to their goals than when the episode began.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

from .grid import DistanceTables, Grid, Location, UNREACHABLE
from .search import INFINITE, Path, compute_h_value
from .solvers import Solution, WindowedMapfProblem

Solver = Callable[[WindowedMapfProblem], Solution]


class GoalSource(Protocol):
    """Anything that deals out goals; ``None`` means it has none left."""

    def next_goal(self, agent: "AgentState") -> Location | None: ...


@dataclass
class HorizonConfig:
    """Replanning knobs.

    ``w``
        planning window: collisions are resolved up to timestep ``w``
        (``INFINITE`` recovers classic full-horizon planning).
    ``h``
        replanning period: how many timesteps of each plan are executed.
    ``p``
        progress demand: minimum number of agents that must end the window
        strictly closer to their goals; episodes that fall short widen the
        window by ``w_step`` and re-solve.
    """

    w: int | float
    h: int
    p: int = 0
    w_step: int = 1

    def __post_init__(self):
        if not (isinstance(self.h, int) and self.h >= 1):
            raise ValueError(f"replanning period must be a positive integer, got {self.h!r}")
        if self.w != INFINITE and not (isinstance(self.w, int) and self.w >= self.h):
            raise ValueError(f"window must be INFINITE or an integer >= h={self.h}, got {self.w!r}")
        if not (isinstance(self.p, int) and self.p >= 0):
            raise ValueError(f"progress demand must be a non-negative integer, got {self.p!r}")
        if not (isinstance(self.w_step, int) and self.w_step >= 1):
            raise ValueError(f"window step must be a positive integer, got {self.w_step!r}")


@dataclass
class AgentState:
    """One agent's live status between episodes.

    ``goals`` is the remaining queue, nearest first.  ``parked`` marks a
    stand-in goal at the agent's own cell (queue exhausted or task
    unreachable); parked agents plan like everyone else but their stand-in
    goal never counts as completed work.  ``stranded`` records that some
    assigned task was unreachable and had to be dropped.
    """

    id: int
    location: Location
    goals: list[Location] = field(default_factory=list)
    completed: int = 0
    parked: bool = False
    stranded: bool = False


@dataclass
class EpisodeResult:
    """One committed episode: the team plan plus how it was obtained."""

    paths: list[Path]
    w_used: int | float
    potential: int
    escalation_capped: bool
    solution: Solution
    attempts: int


def remaining_distance(tables: DistanceTables, agent: AgentState) -> int:
    """Lower bound on the timesteps ``agent`` needs to clear its queue:
    distance to the first goal plus the goal-to-goal legs after it."""
    if not agent.goals:
        return 0
    return compute_h_value(tables, agent.goals, agent.location, 0)


def _park(agent: AgentState) -> None:
    agent.goals = [agent.location]
    agent.parked = True


def top_up_goals(
    agent: AgentState,
    source: GoalSource,
    h: int,
    tables: DistanceTables,
) -> AgentState:
    """Refill ``agent``'s queue until it holds at least ``h`` timesteps of
    work, so the next plan cannot run out of goals mid-period.

    If the source runs dry and the queue is empty, the agent is parked on a
    stand-in goal at its own cell (the solver requires one goal per agent).
    If the refilled queue is unreachable, the whole queue is dropped, the
    agent is parked, and ``stranded`` is set; it will ask for fresh work
    next episode rather than wedge the team forever.
    """
    while not agent.goals or remaining_distance(tables, agent) < h:
        nxt = source.next_goal(agent)
        if nxt is None:
            if not agent.goals:
                _park(agent)
            break
        if agent.parked:
            # A stand-in goal is a placeholder, not work; replace it.
            agent.goals.clear()
            agent.parked = False
        agent.goals.append(nxt)
    if agent.goals and remaining_distance(tables, agent) >= UNREACHABLE:
        _park(agent)
        agent.stranded = True
    return agent


def ensure_distinct_parking(
    agents: Sequence[AgentState],
    source: GoalSource,
    tables: DistanceTables,
) -> None:
    """Extend queues until no two agents' queues end at the same cell.

    With an unbounded window every plan terminates in an endless rest at the
    agent's last queued goal, so two agents sharing that cell are unsolvable
    under any priority order or constraint tree.  Pulling one more goal for
    the later claimant restores feasibility without touching anyone's
    committed work.  Stand-in goals of parked agents claim their cells first
    (they cannot move), and a dry source simply leaves the clash in place for
    the solver to report.
    """
    taken: set[Location] = {a.goals[-1] for a in agents if a.parked and a.goals}
    for agent in agents:
        if agent.parked or not agent.goals:
            continue
        rounds = 0
        while agent.goals[-1] in taken:
            nxt = source.next_goal(agent)
            rounds += 1
            if nxt is None or rounds > 4 * max(len(agents), 4):
                break
            agent.goals.append(nxt)
        if remaining_distance(tables, agent) >= UNREACHABLE:
            _park(agent)
            agent.stranded = True
        taken.add(agent.goals[-1])


def progress_potential(
    tables: DistanceTables,
    goal_lists: Sequence[Sequence[Location]],
    paths: Sequence[Path],
    w: int | float,
) -> int:
    """Count the agents that end the window strictly closer to finishing
    their queue than they started.

    "Closer" compares the remaining-distance estimate at the position (and
    goal progress) reached by timestep ``w`` against the estimate at the
    start; an agent that finishes every goal counts whenever it had any
    distance to cover.  With ``w = INFINITE`` the plans are measured at
    their joint completion time instead.
    """
    if w == INFINITE:
        t_eval = max(path.cost for path in paths)
    else:
        t_eval = w
    count = 0
    for goals, path in zip(goal_lists, paths):
        before = compute_h_value(tables, goals, path.at(0), 0) if goals else 0
        visited = sum(1 for v in path.goal_visit_times if v <= t_eval)
        visited = min(visited, len(goals))
        if visited == len(goals):
            after = 0
        else:
            after = compute_h_value(tables, goals, path.at(t_eval), visited)
        if after < before:
            count += 1
    return count


def plan_episode(
    grid: Grid,
    agents: Sequence[AgentState],
    cfg: HorizonConfig,
    solver: Solver,
    tables: DistanceTables | None = None,
    max_w: int | float | None = None,
) -> EpisodeResult:
    """Solve one episode, widening the window until the plan shows enough
    progress.

    The instance is solved at ``cfg.w`` first; while fewer than ``cfg.p``
    agents make strict progress, the window grows by ``cfg.w_step`` and the
    episode is re-solved from scratch.  Escalation stops at ``max_w``
    (default four times the starting window): the best attempt seen so far
    is returned with ``escalation_capped`` set instead of looping forever.
    Solver failures (``NoSolution``, ``TimeLimit``) propagate.
    """
    if tables is None:
        tables = DistanceTables(grid)
    if max_w is None:
        max_w = cfg.w if math.isinf(cfg.w) else 4 * cfg.w
    starts = [a.location for a in agents]
    goal_lists = [list(a.goals) for a in agents]
    w = cfg.w
    best: EpisodeResult | None = None
    attempts = 0
    while True:
        attempts += 1
        problem = WindowedMapfProblem(grid, starts, goal_lists, w, tables)
        solution = solver(problem)
        potential = progress_potential(tables, goal_lists, solution.paths, w)
        result = EpisodeResult(solution.paths, w, potential, False, solution, attempts)
        if potential >= cfg.p:
            return result
        if best is None or potential > best.potential:
            best = result
        if w == INFINITE or w + cfg.w_step > max_w:
            best.escalation_capped = True
            best.attempts = attempts
            return best
        w += cfg.w_step


def advance(agents: Sequence[AgentState], result: EpisodeResult, h: int) -> int:
    """Execute the first ``h`` timesteps of an episode plan.

    Every agent moves to its planned position at timestep ``h`` and retires
    the goals it visited on the way (visit time <= ``h``).  Returns the
    number of real goals completed; stand-in goals on parked agents are
    retired but never counted.
    """
    done = 0
    for agent, path in zip(agents, result.paths):
        agent.location = path.at(h)
        visited = sum(1 for v in path.goal_visit_times if v <= h)
        visited = min(visited, len(agent.goals))
        if visited:
            del agent.goals[:visited]
            real = visited - 1 if agent.parked else visited
            agent.parked = False
            agent.completed += real
            done += real
    return done
