"""Deliberately naive reference implementations used to check the fast code.

Everything here is written from the movement rules up: no neighbor tables, no
heaps, no pruning.  Exhaustive enumeration keeps these trustworthy at the cost
of only working on small instances.
"""

from __future__ import annotations

import heapq
from collections import deque

from lifelong_mapf.grid import MOVE_DELTAS, Grid, Location, Move


def bfs_distance_to(grid: Grid, goal: tuple[int, int]) -> dict[tuple[int, int], int]:
    """Distance from every cell to `goal`, following allowed moves forward.

    Walks reversed edges discovered by scanning every (cell, move) pair with
    Grid.allowed, so directed maps are respected.
    """
    preds: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for r in range(grid.height):
        for c in range(grid.width):
            for move in (Move.NORTH, Move.EAST, Move.SOUTH, Move.WEST):
                if grid.allowed((r, c), move):
                    dr, dc = MOVE_DELTAS[move]
                    preds.setdefault((r + dr, c + dc), []).append((r, c))
    goal = (goal[0], goal[1])
    if not grid.is_passable(goal):
        return {}
    dist = {goal: 0}
    queue = deque([goal])
    while queue:
        v = queue.popleft()
        for u in preds.get(v, []):
            if u not in dist:
                dist[u] = dist[v] + 1
                queue.append(u)
    return dist


def _allowed_steps(grid: Grid, cell: tuple[int, int]) -> list[tuple[int, int]]:
    steps = []
    for move in Move:
        if grid.allowed(cell, move):
            dr, dc = MOVE_DELTAS[move]
            steps.append((cell[0] + dr, cell[1] + dc))
    return steps


def _blocked_vertex(cell, t, forbid_vertex, rest) -> bool:
    if (cell, t) in forbid_vertex:
        return True
    t0 = rest.get(cell)
    return t0 is not None and t >= t0


def shortest_multi_goal_cost(
    grid: Grid,
    start: tuple[int, int],
    goals: list[tuple[int, int]],
    forbid_vertex: set[tuple[tuple[int, int], int]] = frozenset(),
    forbid_edge: set[tuple[tuple[int, int], tuple[int, int], int]] = frozenset(),
    rest: dict[tuple[int, int], int] | None = None,
    time_cap: int = 400,
) -> int | None:
    """Minimum timesteps to visit `goals` in order and then rest at the last
    one without ever violating a constraint.  Layered breadth-first search
    over (cell, goals-visited) states; the visited count advances at most once
    per timestep, so revisiting an identical consecutive goal costs a step.

    `forbid_edge` entries are (from, to, t): arriving at `to` at timestep t
    from `from` is prohibited.  `rest` maps a cell to the first timestep from
    which it is permanently occupied.  Returns None if no plan exists within
    `time_cap` timesteps.
    """
    rest = rest or {}
    nlegs = len(goals)
    final = goals[-1]
    if rest.get(final) is not None:
        return None
    # Resting at the final goal must outlast every prohibition placed on it.
    min_end = 0
    for (cell, t) in forbid_vertex:
        if cell == final:
            min_end = max(min_end, t + 1)

    def bump(cell, label):
        return label + 1 if label < nlegs and cell == goals[label] else label

    start = (start[0], start[1])
    if _blocked_vertex(start, 0, forbid_vertex, rest):
        return None
    # Full time-expanded states: (cell, label) alone is not a valid search
    # state because prohibitions are timed -- a cell that led nowhere at one
    # timestep may work when re-entered later.
    layer = {(start, bump(start, 0))}
    for t in range(time_cap + 1):
        for cell, label in layer:
            if label == nlegs and cell == final and t >= min_end:
                return t
        nxt = set()
        for cell, label in layer:
            for to in _allowed_steps(grid, cell):
                if _blocked_vertex(to, t + 1, forbid_vertex, rest):
                    continue
                if (cell, to, t + 1) in forbid_edge:
                    continue
                nxt.add((to, bump(to, label)))
        layer = nxt
        if not layer:
            break
    return None


def validate_path(
    grid: Grid,
    locations: list[tuple[int, int]],
    goals: list[tuple[int, int]],
    forbid_vertex: set[tuple[tuple[int, int], int]] = frozenset(),
    forbid_edge: set[tuple[tuple[int, int], tuple[int, int], int]] = frozenset(),
    rest: dict[tuple[int, int], int] | None = None,
) -> list[str]:
    """All rule violations of a candidate plan (empty list means valid)."""
    rest = rest or {}
    problems = []
    nlegs = len(goals)
    label = 1 if nlegs and tuple(locations[0]) == tuple(goals[0]) else 0
    for t, loc in enumerate(locations):
        loc = (loc[0], loc[1])
        if not grid.is_passable(loc):
            problems.append(f"t={t}: {loc} impassable")
        if _blocked_vertex(loc, t, forbid_vertex, rest):
            problems.append(f"t={t}: {loc} prohibited")
        if t > 0:
            prev = (locations[t - 1][0], locations[t - 1][1])
            legal = any(
                (prev[0] + dr, prev[1] + dc) == loc and grid.allowed(prev, move)
                for move, (dr, dc) in zip(Move, MOVE_DELTAS)
            )
            if not legal:
                problems.append(f"t={t}: illegal move {prev} -> {loc}")
            if (prev, loc, t) in forbid_edge:
                problems.append(f"t={t}: prohibited move {prev} -> {loc}")
            if label < nlegs and loc == tuple(goals[label]):
                label += 1
    if label < nlegs:
        problems.append(f"only {label} of {nlegs} goals visited in order")
    final = (locations[-1][0], locations[-1][1])
    if nlegs and final != tuple(goals[-1]):
        problems.append(f"path ends at {final}, not the final goal {tuple(goals[-1])}")
    end = len(locations) - 1
    for (cell, t) in forbid_vertex:
        if cell == final and t >= end:
            problems.append(f"rests on {final} which is prohibited at t={t}")
    if rest.get(final) is not None:
        problems.append(f"rests on {final} which is permanently occupied")
    return problems


def pairwise_conflicts(paths: list[list[tuple[int, int]]], w: float) -> list[tuple]:
    """Every (t, i, j, kind) collision with arrival time t <= w, by direct
    quadratic comparison.  Paths are padded with their final cell."""
    if not paths:
        return []
    makespan = max(len(p) for p in paths) - 1
    t_max = makespan if w == float("inf") else min(int(w), makespan)

    def at(p, t):
        return tuple(p[t]) if t < len(p) else tuple(p[-1])

    out = []
    for i in range(len(paths)):
        for j in range(i + 1, len(paths)):
            for t in range(t_max + 1):
                a0, a1 = at(paths[i], t), at(paths[j], t)
                if a0 == a1:
                    out.append((t, i, j, "vertex"))
                elif t > 0 and a0 == at(paths[j], t - 1) and a1 == at(paths[i], t - 1):
                    out.append((t, i, j, "edge"))
    out.sort()
    return out


def joint_flowtime(
    grid: Grid,
    starts: list[tuple[int, int]],
    goal_lists: list[list[tuple[int, int]]],
    w: float = float("inf"),
    time_cap: int = 60,
) -> int | None:
    """Exact minimum flowtime for a team, by Dijkstra over the joint state
    space.  Collisions (vertex and swap) are forbidden for arrival times <= w
    and ignored afterwards, matching the windowed solver contract.

    An agent that has finished pays nothing to stay parked; moving again
    retroactively charges the parked interval, so path cost equals the final
    completion time.  Exponential in the number of agents: keep instances tiny.
    """
    n = len(starts)
    nlegs = [len(g) for g in goal_lists]
    finals = [tuple(g[-1]) for g in goal_lists]

    def bump(i, cell, label):
        return label + 1 if label < nlegs[i] and cell == tuple(goal_lists[i][label]) else label

    cells0 = tuple((s[0], s[1]) for s in starts)
    if len(set(cells0)) < n:
        return None
    labels0 = tuple(bump(i, cells0[i], 0) for i in range(n))
    # Timesteps past the window all behave alike, so fold them together when
    # keying visited states (keeps finite-w searches finite).
    t_key = (lambda t: min(t, int(w) + 1)) if w != float("inf") else (lambda t: 0)
    start_state = (cells0, labels0, (0,) * n)
    dist = {(start_state, 0): 0}
    heap = [(0, 0, start_state)]
    while heap:
        g, t, (cells, labels, parked) = heapq.heappop(heap)
        if g > dist.get(((cells, labels, parked), t_key(t)), -1):
            continue
        if all(labels[i] == nlegs[i] and cells[i] == finals[i] for i in range(n)):
            return g
        if t >= time_cap:
            continue
        options = []
        for i in range(n):
            done = labels[i] == nlegs[i] and cells[i] == finals[i]
            moves = []
            for to in _allowed_steps(grid, cells[i]):
                if to == cells[i]:
                    moves.append((to, 0 if done else 1, parked[i] + 1 if done else 0))
                else:
                    moves.append((to, parked[i] + 1 if done else 1, 0))
            options.append(moves)
        # Cartesian product of per-agent moves, collision-checked below w.
        stack = [((), 0, ())]
        for i in range(n):
            stack = [
                (cs + (to,), dg + step, ps + (pk,))
                for cs, dg, ps in stack
                for to, step, pk in options[i]
            ]
        check = t + 1 <= w
        for new_cells, dg, new_parked in stack:
            if check:
                if len(set(new_cells)) < n:
                    continue
                if any(
                    new_cells[i] == cells[j] and new_cells[j] == cells[i] and cells[i] != cells[j]
                    for i in range(n)
                    for j in range(i + 1, n)
                ):
                    continue
            new_labels = tuple(bump(i, new_cells[i], labels[i]) for i in range(n))
            state = (new_cells, new_labels, new_parked)
            ng = g + dg
            if ng < dist.get((state, t_key(t + 1)), 1 << 60):
                dist[(state, t_key(t + 1))] = ng
                heapq.heappush(heap, (ng, t + 1, state))
    return None
