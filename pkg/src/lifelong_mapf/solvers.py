"""Windowed MAPF solvers: plans for a team of agents, collision-free for the
first w timesteps, each agent visiting an ordered goal sequence.

Four high-level strategies over the same low-level search:

* CBS: optimal flowtime; branches on one conflict at a time, adding a single
  spatio-temporal prohibition per child.
* ECBS: bounded-suboptimal CBS; both levels run focal searches, so the
  returned flowtime is within a user factor of the reported lower bound.
* PBS: depth-first search over partial priority orderings; unbounded
  suboptimality but very fast in practice.
* CA*: cooperative A* -- plan agents one by one in a random total order,
  restarting with a new order on failure.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import DistanceTables, Grid, Location
from .search import (
    INFINITE,
    ConstraintSet,
    NoSolution,
    Path,
    TimeLimit,
    compute_h_value,
    conflict_pairs,
    constraints_from_paths,
    count_conflicts,
    find_first_conflict,
    multi_label_astar,
)

__all__ = [
    "SOLVERS",
    "Solution",
    "WindowedMapfProblem",
    "solve_castar",
    "solve_cbs",
    "solve_ecbs",
    "solve_pbs",
]

DEFAULT_TIME_LIMIT = 60.0


@dataclass
class WindowedMapfProblem:
    """One multi-agent query: starts, per-agent goal sequences, horizon w."""

    grid: Grid
    starts: list[Location]
    goal_lists: list[list[Location]]
    w: int | float
    tables: DistanceTables | None = None

    def __post_init__(self):
        if len(self.starts) != len(self.goal_lists):
            raise ValueError("starts and goal_lists must have the same length")
        if not self.starts:
            raise ValueError("need at least one agent")
        if any(not gl for gl in self.goal_lists):
            raise ValueError("every agent needs at least one goal")
        if self.w != INFINITE and (self.w != int(self.w) or self.w < 0):
            raise ValueError(f"horizon must be a nonnegative integer or INFINITE, got {self.w!r}")
        seen = set()
        for s in self.starts:
            key = tuple(s)
            if key in seen:
                raise ValueError(f"two agents start at {key}")
            seen.add(key)
        for loc in self.starts:
            if not self.grid.is_passable(loc):
                raise ValueError(f"start {tuple(loc)} is not passable")
        if self.tables is None:
            self.tables = DistanceTables(self.grid)

    @property
    def num_agents(self) -> int:
        return len(self.starts)


@dataclass
class Solution:
    """A team plan, collision-free for the first w timesteps."""

    paths: list[Path]
    cost: int                     # flowtime: sum of per-agent completion times
    lower_bound: int              # proven lower bound on the optimal flowtime
    solver: str
    high_level_nodes: int = field(default=0, compare=False)
    low_level_expanded: int = field(default=0, compare=False)


class _Deadline:
    def __init__(self, seconds: float | None):
        self.at = None if seconds is None else time.perf_counter() + seconds
        self.seconds = seconds

    def check(self):
        if self.at is not None and time.perf_counter() > self.at:
            raise TimeLimit(f"solver exceeded its {self.seconds:g}s budget")


def _flowtime(paths: Sequence[Path]) -> int:
    return sum(p.cost for p in paths)


def _move_count(paths: Sequence[Path]) -> int:
    """Non-wait actions across the team; used as a final tie-break so that,
    among equally good plans, quieter ones win."""
    total = 0
    for p in paths:
        total += sum(1 for a, b in zip(p.locations, p.locations[1:]) if a != b)
    return total


def _build_constraints(problem: WindowedMapfProblem, records: tuple) -> ConstraintSet:
    cons = ConstraintSet(problem.grid, problem.w)
    for rec in records:
        if rec[0] == "v":
            cons.add_vertex(rec[1], rec[2])
        else:
            cons.add_edge(rec[1], rec[2], rec[3])
    return cons


def _plan_agent(
    problem: WindowedMapfProblem,
    agent: int,
    records: tuple,
    focal_w: float | None,
    soft_paths: Sequence[Path],
) -> Path:
    cons = _build_constraints(problem, records)
    return multi_label_astar(
        problem.grid,
        problem.starts[agent],
        problem.goal_lists[agent],
        cons=cons,
        focal_w=focal_w,
        soft_paths=soft_paths,
        tables=problem.tables,
    )


def _branch_records(conflict) -> list[tuple[int, tuple]]:
    """The two single-agent prohibitions that rule out `conflict`, lower
    agent first."""
    i, j = conflict.agents
    t = conflict.when
    if conflict.kind == "vertex":
        return [(i, ("v", conflict.loc, t)), (j, ("v", conflict.loc, t))]
    # Agent i moved loc -> loc2; agent j made the reverse traversal.
    return [
        (i, ("e", conflict.loc, conflict.loc2, t)),
        (j, ("e", conflict.loc2, conflict.loc, t)),
    ]


# -- CBS -----------------------------------------------------------------------


def solve_cbs(problem: WindowedMapfProblem, time_limit: float | None = DEFAULT_TIME_LIMIT) -> Solution:
    """Optimal windowed flowtime via conflict-based search.

    Tree nodes are ordered by (flowtime, conflicts within w, conflicts over
    the whole plan, move actions, insertion); everything after flowtime only
    steers which equally-cheap plan is returned, and the move-action key makes
    the solver settle on waiting rather than shuffling when both resolve the
    same collisions at the same cost.
    """
    deadline = _Deadline(time_limit)
    m = problem.num_agents
    low_expanded = 0

    paths: list[Path] = []
    for i in range(m):
        p = _plan_agent(problem, i, (), 1.0, paths)
        low_expanded += p.expanded
        paths.append(p)

    counter = 0
    root_records: tuple = tuple(() for _ in range(m))
    wc, tc = count_conflicts(problem.grid, paths, problem.w)
    heap = [(_flowtime(paths), wc, tc, _move_count(paths), 0, paths, root_records)]
    popped = 0

    while heap:
        deadline.check()
        cost, wc, tc, moves, _, paths, records = heapq.heappop(heap)
        popped += 1
        conflict = find_first_conflict(problem.grid, paths, problem.w)
        if conflict is None:
            return Solution(
                list(paths), cost, cost, "cbs",
                high_level_nodes=popped, low_level_expanded=low_expanded,
            )
        for agent, record in _branch_records(conflict):
            new_records = tuple(
                recs + (record,) if k == agent else recs for k, recs in enumerate(records)
            )
            soft = [p for k, p in enumerate(paths) if k != agent]
            try:
                new_path = _plan_agent(problem, agent, new_records[agent], 1.0, soft)
            except NoSolution:
                continue
            low_expanded += new_path.expanded
            new_paths = list(paths)
            new_paths[agent] = new_path
            wc, tc = count_conflicts(problem.grid, new_paths, problem.w)
            counter += 1
            heapq.heappush(
                heap,
                (_flowtime(new_paths), wc, tc, _move_count(new_paths), counter, new_paths, new_records),
            )
    raise NoSolution("conflict tree exhausted without a collision-free plan")


# -- ECBS ----------------------------------------------------------------------


def solve_ecbs(
    problem: WindowedMapfProblem,
    subopt: float = 1.1,
    time_limit: float | None = DEFAULT_TIME_LIMIT,
) -> Solution:
    """Bounded-suboptimal CBS: returned flowtime <= subopt * lower_bound.

    Both levels are focal searches with the same factor.  The low level
    reports a per-agent admissible bound; their sum bounds a tree node, and
    the minimum over open nodes bounds the whole problem.
    """
    if subopt < 1.0:
        raise ValueError(f"suboptimality factor must be >= 1, got {subopt!r}")
    deadline = _Deadline(time_limit)
    m = problem.num_agents
    low_expanded = 0

    paths: list[Path] = []
    lbs: list[int] = []
    for i in range(m):
        p = _plan_agent(problem, i, (), subopt, paths)
        low_expanded += p.expanded
        paths.append(p)
        lbs.append(p.fmin)

    root_records: tuple = tuple(() for _ in range(m))
    # anchor orders open nodes by lower bound; focal holds the admitted ones
    # ordered by conflict count; deferred parks the rest until the bound grows.
    # Every node satisfies cost <= subopt * lb (the low level enforces it per
    # agent), so the anchor top is always admissible and focal never starves.
    node0 = (0, paths, root_records, tuple(lbs))
    serial = 0
    anchor = [(sum(lbs), 0, node0)]
    wc, tc = count_conflicts(problem.grid, paths, problem.w)
    focal = [(wc, _flowtime(paths), tc, _move_count(paths), 0, node0)]
    deferred: list = []
    closed: set[int] = set()
    popped = 0

    def admit(node, cost, lb_min):
        paths_ = node[1]
        if cost <= subopt * lb_min:
            wc_, tc_ = count_conflicts(problem.grid, paths_, problem.w)
            heapq.heappush(focal, (wc_, cost, tc_, _move_count(paths_), node[0], node))
        else:
            heapq.heappush(deferred, (cost, node[0], node))

    while True:
        deadline.check()
        while anchor and anchor[0][2][0] in closed:
            heapq.heappop(anchor)
        if not anchor:
            raise NoSolution("conflict tree exhausted without a collision-free plan")
        lb_min = anchor[0][0]
        while deferred and deferred[0][0] <= subopt * lb_min:
            _, _, node = heapq.heappop(deferred)
            admit(node, _flowtime(node[1]), lb_min)
        wc, cost, tc, moves, _, node = heapq.heappop(focal)
        if node[0] in closed:
            continue
        closed.add(node[0])
        popped += 1
        _, paths, records, node_lbs = node
        conflict = find_first_conflict(problem.grid, paths, problem.w)
        if conflict is None:
            return Solution(
                list(paths), cost, lb_min, "ecbs",
                high_level_nodes=popped, low_level_expanded=low_expanded,
            )
        for agent, record in _branch_records(conflict):
            new_records = tuple(
                recs + (record,) if k == agent else recs for k, recs in enumerate(records)
            )
            soft = [p for k, p in enumerate(paths) if k != agent]
            try:
                new_path = _plan_agent(problem, agent, new_records[agent], subopt, soft)
            except NoSolution:
                continue
            low_expanded += new_path.expanded
            new_paths = list(paths)
            new_paths[agent] = new_path
            new_lbs = tuple(
                new_path.fmin if k == agent else lb for k, lb in enumerate(node_lbs)
            )
            serial += 1
            child = (serial, new_paths, new_records, new_lbs)
            heapq.heappush(anchor, (sum(new_lbs), serial, child))
            admit(child, _flowtime(new_paths), lb_min)


# -- PBS -----------------------------------------------------------------------


def _topological_order(m: int, pairs: frozenset) -> list[int]:
    """Agents sorted so higher-priority ones come first; ties by id."""
    after: dict[int, set[int]] = {i: set() for i in range(m)}
    indeg = [0] * m
    for hi, lo in pairs:
        if lo not in after[hi]:
            after[hi].add(lo)
            indeg[lo] += 1
    ready = [i for i in range(m) if indeg[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for j in sorted(after[i]):
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(ready, j)
    assert len(order) == m, "priority order contains a cycle"
    return order


def _higher_sets(m: int, pairs: frozenset) -> list[set[int]]:
    """Transitive higher-priority agents per agent."""
    direct: dict[int, set[int]] = {i: set() for i in range(m)}
    for hi, lo in pairs:
        direct[lo].add(hi)
    higher: list[set[int]] = [set() for _ in range(m)]
    for i in range(m):
        stack, seen = list(direct[i]), set()
        while stack:
            k = stack.pop()
            if k in seen:
                continue
            seen.add(k)
            stack.extend(direct[k])
        higher[i] = seen
    return higher


def solve_pbs(problem: WindowedMapfProblem, time_limit: float | None = DEFAULT_TIME_LIMIT) -> Solution:
    """Depth-first search over priority orderings.

    Each tree node fixes a partial order; every agent's path avoids all its
    (transitively) higher-priority agents for the first w timesteps.  On a
    conflict between two unordered agents the node branches on which of the
    two outranks the other, cheaper child first.  Returned plans carry no
    optimality guarantee; the lower bound reported is the sum of unconstrained
    shortest paths.
    """
    deadline = _Deadline(time_limit)
    m = problem.num_agents
    grid = problem.grid
    low_expanded = 0

    root_paths: list[Path] = []
    for i in range(m):
        p = _plan_agent(problem, i, (), None, ())
        low_expanded += p.expanded
        root_paths.append(p)
    lower_bound = _flowtime(root_paths)

    def partner_map(paths: list[Path]) -> list[set[int]]:
        """Who conflicts with whom (within the window) under these paths."""
        partners: list[set[int]] = [set() for _ in range(m)]
        for a, b in conflict_pairs(grid, paths, problem.w):
            partners[a].add(b)
            partners[b].add(a)
        return partners

    def update_plan(paths: list[Path], pairs: frozenset, target: int) -> list[Path] | None:
        nonlocal low_expanded
        new_paths = list(paths)
        order = _topological_order(m, pairs)
        higher = _higher_sets(m, pairs)
        partners = partner_map(new_paths)
        started = False
        for j in order:
            if j == target:
                started = True
            elif not started:
                continue
            if j != target and not (higher[j] & partners[j]):
                continue
            deadline.check()
            cons = constraints_from_paths(grid, [new_paths[k] for k in sorted(higher[j])], problem.w)
            try:
                replanned = multi_label_astar(
                    grid, problem.starts[j], problem.goal_lists[j],
                    cons=cons, tables=problem.tables,
                )
            except NoSolution:
                return None
            low_expanded += replanned.expanded
            new_paths[j] = replanned
            partners = partner_map(new_paths)
        return new_paths

    stack = [(root_paths, frozenset())]
    popped = 0
    while stack:
        deadline.check()
        paths, pairs = stack.pop()
        popped += 1
        conflict = find_first_conflict(grid, paths, problem.w)
        if conflict is None:
            return Solution(
                list(paths), _flowtime(paths), lower_bound, "pbs",
                high_level_nodes=popped, low_level_expanded=low_expanded,
            )
        i, j = conflict.agents
        children = []
        for which, (hi, lo) in enumerate(((i, j), (j, i))):
            new_pairs = pairs | {(hi, lo)}
            new_paths = update_plan(paths, new_pairs, lo)
            if new_paths is not None:
                children.append((_flowtime(new_paths), which, new_paths, new_pairs))
        # LIFO stack: push the dearer child first so the cheaper one is
        # explored first; on a cost tie, "i outranks j" is explored first.
        children.sort(key=lambda c: (c[0], c[1]), reverse=True)
        for _, _, new_paths, new_pairs in children:
            stack.append((new_paths, new_pairs))
    raise NoSolution("every priority ordering leaves a collision in the window")


# -- CA* -----------------------------------------------------------------------


def solve_castar(
    problem: WindowedMapfProblem,
    rng: np.random.Generator | None = None,
    max_restarts: int = 50,
    time_limit: float | None = DEFAULT_TIME_LIMIT,
) -> Solution:
    """Cooperative A*: plan agents sequentially in a random total priority
    order, each avoiding all earlier ones for the first w timesteps.  On
    failure, restart with a fresh random order, up to `max_restarts` orders.
    """
    deadline = _Deadline(time_limit)
    if rng is None:
        rng = np.random.default_rng(0)
    m = problem.num_agents
    lower_bound = sum(
        compute_h_value(problem.tables, problem.goal_lists[i], problem.starts[i], 0)
        for i in range(m)
    )
    low_expanded = 0
    attempts = 0
    for attempt in range(max_restarts):
        attempts += 1
        order = rng.permutation(m)
        paths_by_agent: dict[int, Path] = {}
        placed: list[Path] = []
        try:
            for i in order:
                deadline.check()
                cons = constraints_from_paths(problem.grid, placed, problem.w)
                p = multi_label_astar(
                    problem.grid, problem.starts[int(i)], problem.goal_lists[int(i)],
                    cons=cons, tables=problem.tables,
                )
                low_expanded += p.expanded
                paths_by_agent[int(i)] = p
                placed.append(p)
        except NoSolution:
            continue
        paths = [paths_by_agent[i] for i in range(m)]
        return Solution(
            paths, _flowtime(paths), lower_bound, "castar",
            high_level_nodes=attempts, low_level_expanded=low_expanded,
        )
    raise NoSolution(f"no collision-free order found in {max_restarts} restarts")


# -- registry ------------------------------------------------------------------


def _adapt_cbs(problem, subopt, rng, time_limit):
    return solve_cbs(problem, time_limit=time_limit)


def _adapt_ecbs(problem, subopt, rng, time_limit):
    return solve_ecbs(problem, subopt=subopt, time_limit=time_limit)


def _adapt_pbs(problem, subopt, rng, time_limit):
    return solve_pbs(problem, time_limit=time_limit)


def _adapt_castar(problem, subopt, rng, time_limit):
    return solve_castar(problem, rng=rng, time_limit=time_limit)


# name -> callable(problem, subopt, rng, time_limit) -> Solution
SOLVERS: dict[str, Callable[..., Solution]] = {
    "cbs": _adapt_cbs,
    "ecbs": _adapt_ecbs,
    "pbs": _adapt_pbs,
    "castar": _adapt_castar,
}
