"""Single-agent layer: horizon-truncated constraints, the multi-goal A*
wrapper around the planning kernel, and plan conflict detection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernel
from .grid import UNREACHABLE, DistanceTables, Grid, Location

__all__ = [
    "INFINITE",
    "Conflict",
    "ConstraintSet",
    "NoSolution",
    "Path",
    "TimeLimit",
    "compute_h_value",
    "constraints_from_paths",
    "count_conflicts",
    "detect_conflicts",
    "find_first_conflict",
    "multi_label_astar",
    "soft_collision_tables",
]

INFINITE = math.inf  # time-horizon sentinel


class NoSolution(Exception):
    """No path satisfies the constraints within the search depth cap."""


class TimeLimit(Exception):
    """Wall-clock budget for a solver call was exhausted."""


@dataclass
class Path:
    """A timestep-indexed route; ``locations[t]`` is the cell occupied at
    episode-local timestep t.  ``goal_visit_times[j]`` is the timestep at
    which the j-th goal was counted as visited."""

    locations: list[Location]
    goal_visit_times: list[int]
    fmin: int = field(default=0, compare=False)       # admissible cost bound from the search
    expanded: int = field(default=0, compare=False)   # low-level nodes expanded
    cells: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def cost(self) -> int:
        """Timesteps until the agent is done (its search objective)."""
        return len(self.locations) - 1

    def at(self, t: int) -> Location:
        """Location at timestep t; agents rest at their final cell."""
        return self.locations[t] if t < len(self.locations) else self.locations[-1]

    def __len__(self) -> int:
        return len(self.locations)

    def cell_ids(self, grid: Grid) -> np.ndarray:
        """Locations as flat cell ids, computed once and cached."""
        if self.cells is None:
            self.cells = np.fromiter(
                (grid.index(loc) for loc in self.locations),
                dtype=np.int32,
                count=len(self.locations),
            )
        return self.cells


def compute_h_value(
    tables: DistanceTables,
    goals: Sequence[Location],
    x: Location | tuple[int, int],
    l: int,
) -> int:
    """Admissible remaining-cost estimate: distance to the current goal plus
    the sum of the remaining goal-to-goal leg distances.  Unreachable
    propagates (saturates at the UNREACHABLE sentinel)."""
    assert 0 <= l < len(goals)
    h = tables.dist(x, goals[l])
    for j in range(l + 1, len(goals)):
        if h >= UNREACHABLE:
            return UNREACHABLE
        h += tables.dist(goals[j - 1], goals[j])
    return min(h, UNREACHABLE)


class ConstraintSet:
    """Spatio-temporal prohibitions for one agent, truncated at horizon w.

    Edge prohibitions use arrival semantics: (u, v, t) outlaws occupying v at
    timestep t having moved from u.  A prohibition later than the horizon can
    never correspond to a conflict the solver must resolve (conflicts are
    detected for t <= w), so insertions beyond w are dropped and adding one is
    a no-op.  Rest prohibitions (cell blocked from some timestep onward) exist
    for infinite horizons, where a finished higher-priority agent parks at its
    final cell forever; with a finite horizon the equivalent vertex
    prohibitions up to w are stored instead.
    """

    def __init__(self, grid: Grid, w: int | float = INFINITE):
        if w != INFINITE and (w != int(w) or w < 0):
            raise ValueError(f"horizon must be a nonnegative integer or INFINITE, got {w!r}")
        self.grid = grid
        self.w = w if w == INFINITE else int(w)
        self._ncells = grid.ncells
        self._vertex: set[int] = set()
        self._edge: set[int] = set()
        self._rest: dict[int, int] = {}
        self.max_time = 0

    def _within(self, t: int) -> bool:
        return t >= 0 and (self.w == INFINITE or t <= self.w)

    def add_vertex(self, loc: Location | tuple[int, int], t: int) -> bool:
        if not self._within(t):
            return False
        self._vertex.add(t * self._ncells + self.grid.index(loc))
        self.max_time = max(self.max_time, t)
        return True

    def add_edge(self, frm: Location | tuple[int, int], to: Location | tuple[int, int], t: int) -> bool:
        """Prohibit arriving at `to` from `frm` at timestep t."""
        if tuple(frm) == tuple(to):
            raise ValueError("edge prohibitions need two distinct cells; use add_vertex")
        if t < 1 or not self._within(t):
            return False
        key = (t * self._ncells + self.grid.index(to)) * self._ncells + self.grid.index(frm)
        self._edge.add(key)
        self.max_time = max(self.max_time, t)
        return True

    def add_rest(self, loc: Location | tuple[int, int], t0: int) -> bool:
        """Prohibit `loc` for every timestep >= t0."""
        t0 = max(t0, 0)
        if self.w != INFINITE:
            for t in range(t0, self.w + 1):
                self.add_vertex(loc, t)
            return True
        cell = self.grid.index(loc)
        self._rest[cell] = min(self._rest.get(cell, t0), t0)
        self.max_time = max(self.max_time, t0)
        return True

    def forbids_vertex(self, loc: Location | tuple[int, int], t: int) -> bool:
        cell = self.grid.index(loc)
        rest = self._rest.get(cell)
        if rest is not None and t >= rest:
            return True
        return t * self._ncells + cell in self._vertex

    def forbids_edge(self, frm: Location | tuple[int, int], to: Location | tuple[int, int], t: int) -> bool:
        if self.forbids_vertex(to, t):
            return True
        key = (t * self._ncells + self.grid.index(to)) * self._ncells + self.grid.index(frm)
        return key in self._edge

    def __len__(self) -> int:
        return len(self._vertex) + len(self._edge) + len(self._rest)

    # -- kernel views --------------------------------------------------------

    def vertex_keys(self) -> np.ndarray:
        return np.fromiter(self._vertex, dtype=np.int64, count=len(self._vertex))

    def edge_keys(self) -> np.ndarray:
        return np.fromiter(self._edge, dtype=np.int64, count=len(self._edge))

    def rest_array(self) -> np.ndarray:
        rest = np.full(self._ncells, -1, dtype=np.int32)
        for cell, t0 in self._rest.items():
            rest[cell] = t0
        return rest

    def rest_start(self, loc: Location | tuple[int, int]) -> int | None:
        return self._rest.get(self.grid.index(loc))

    def min_end_time(self, goal: Location | tuple[int, int]) -> int:
        """Earliest timestep at which the agent may finish and rest at `goal`."""
        cell = self.grid.index(goal)
        latest = -1
        for key in self._vertex:
            if key % self._ncells == cell:
                latest = max(latest, key // self._ncells)
        return latest + 1


def _reduced_tables(grid: Grid, goal_cells: list[int], rest: np.ndarray) -> np.ndarray:
    """Distance-to-goal tables on the grid with rest cells removed entirely."""
    rev = grid.reverse_table()
    blocked = rest >= 0
    out = np.empty((len(goal_cells), grid.ncells), dtype=np.int32)
    for i, gid in enumerate(goal_cells):
        dist = np.full(grid.ncells, UNREACHABLE, dtype=np.int32)
        if not blocked[gid] and grid.passable.ravel()[gid]:
            dist[gid] = 0
            frontier = np.array([gid], dtype=np.int32)
            level = 0
            while frontier.size:
                level += 1
                preds = rev[frontier].ravel()
                preds = preds[preds >= 0]
                preds = preds[(dist[preds] == UNREACHABLE) & ~blocked[preds]]
                if preds.size == 0:
                    break
                frontier = np.unique(preds)
                dist[frontier] = level
        out[i] = dist
    return out


def soft_collision_tables(
    grid: Grid, soft_paths: Sequence[Path]
) -> tuple[dict[int, int], dict[int, int], np.ndarray, int]:
    """Occupancy of the given paths, used as the focal tie-breaking signal.

    Returns per-(cell, t) and per-(edge, t) counts covering each path's
    moving phase, an ncells array marking where (and since when) finished
    paths rest, and the last timestep at which any of them still moves.
    """
    ncells = grid.ncells
    soft_vertex: dict[int, int] = {}
    soft_edge: dict[int, int] = {}
    soft_rest = np.full(ncells, -1, dtype=np.int32)
    if not soft_paths:
        return soft_vertex, soft_edge, soft_rest, 0
    moving_max = 0
    for p in soft_paths:
        cells = [grid.index(loc) for loc in p.locations]
        end = len(cells) - 1
        moving_max = max(moving_max, end)
        for t in range(1, end + 1):
            here = cells[t]
            vkey = t * ncells + here
            soft_vertex[vkey] = soft_vertex.get(vkey, 0) + 1
            if cells[t - 1] != here:
                # Reverse traversal of this path's move is the soft edge.
                ekey = (t * ncells + cells[t - 1]) * ncells + here
                soft_edge[ekey] = soft_edge.get(ekey, 0) + 1
        # The path rests at its final cell for every t > end.
        last = cells[-1]
        if soft_rest[last] < 0 or end < soft_rest[last]:
            soft_rest[last] = end
    return soft_vertex, soft_edge, soft_rest, moving_max


_EMPTY_KEYS = np.empty(0, dtype=np.int64)


class _NoSoftRest:
    """Cache of all -1 "never parked" arrays, one per grid size."""

    def __init__(self):
        self._arrays: dict[int, np.ndarray] = {}

    def get(self, ncells: int) -> np.ndarray:
        arr = self._arrays.get(ncells)
        if arr is None:
            arr = np.full(ncells, -1, dtype=np.int32)
            arr.setflags(write=False)
            self._arrays[ncells] = arr
        return arr


_NO_SOFT_REST = _NoSoftRest()


def multi_label_astar(
    grid: Grid,
    start: Location | tuple[int, int],
    goals: Sequence[Location | tuple[int, int]],
    cons: ConstraintSet | None = None,
    focal_w: float | None = None,
    soft_paths: Sequence[Path] = (),
    tables: DistanceTables | None = None,
) -> Path:
    """Shortest path visiting `goals` in order under `cons`.

    Best-first mode (focal_w=None) returns a minimum-cost path.  Focal mode
    returns one within focal_w of minimal, preferring fewer collisions with
    `soft_paths`.  Raises NoSolution when the constraints block every route
    within the search depth cap.
    """
    if not goals:
        raise ValueError("goals must be nonempty")
    if tables is None:
        tables = DistanceTables(grid)
    if cons is None:
        cons = ConstraintSet(grid, INFINITE)
    start_cell = grid.index(start)
    goal_cells = [grid.index(g) for g in goals]
    nlegs = len(goal_cells)
    ncells = grid.ncells

    leg_tables = np.empty((nlegs, ncells), dtype=np.int32)
    for i, gid in enumerate(goal_cells):
        leg_tables[i] = tables.table(gid)
    h_suffix = np.zeros(nlegs, dtype=np.int64)
    for i in range(nlegs - 2, -1, -1):
        leg = int(leg_tables[i + 1][goal_cells[i]])
        h_suffix[i] = min(h_suffix[i + 1] + leg, UNREACHABLE)

    if int(leg_tables[0][start_cell]) >= UNREACHABLE or int(h_suffix[0]) >= UNREACHABLE:
        raise NoSolution(f"goal sequence unreachable from {start!r}")

    rest = cons.rest_array()
    final_rest = cons.rest_start(goals[-1])
    if final_rest is not None:
        raise NoSolution("final goal cell is occupied from some timestep onward")

    have_rest = bool(cons._rest)
    if have_rest:
        red_tables = _reduced_tables(grid, goal_cells, rest)
    else:
        red_tables = leg_tables
    red_suffix = np.zeros(nlegs, dtype=np.int64)
    for i in range(nlegs - 2, -1, -1):
        leg = int(red_tables[i + 1][goal_cells[i]])
        red_suffix[i] = min(red_suffix[i + 1] + max(leg, 1), UNREACHABLE)

    min_end = cons.min_end_time(goals[-1])
    t_shortcut = cons.max_time
    soft_vertex: dict[int, int] = {}
    soft_edge: dict[int, int] = {}
    soft_rest = _NO_SOFT_REST.get(ncells)
    use_focal = focal_w is not None and focal_w > 0.0
    if use_focal:
        soft_vertex, soft_edge, soft_rest, soft_moving_max = soft_collision_tables(grid, soft_paths)
        t_shortcut = max(t_shortcut, soft_moving_max)

    w_cap = cons.w if cons.w != INFINITE else max(t_shortcut, min_end) + 1
    depth_cap = (nlegs + 1) * ncells + int(w_cap)

    result = kernel.plan_path(
        grid.neighbor_table(),
        leg_tables,
        h_suffix,
        red_tables,
        red_suffix,
        start_cell,
        np.asarray(goal_cells, dtype=np.int32),
        cons.vertex_keys() if len(cons._vertex) else _EMPTY_KEYS,
        cons.edge_keys() if len(cons._edge) else _EMPTY_KEYS,
        rest,
        min_end,
        t_shortcut,
        depth_cap,
        float(focal_w) if use_focal else 0.0,
        soft_vertex,
        soft_edge,
        soft_rest,
    )
    if result is None:
        raise NoSolution(f"no path from {start!r} through {len(goals)} goals under {len(cons)} constraints")
    cells, fmin, expanded = result
    locations = [grid.location(c) for c in cells]
    visits: list[int] = []
    label = 0
    for t, c in enumerate(cells):
        if label < nlegs and c == goal_cells[label]:
            visits.append(t)
            label += 1
    assert label == nlegs, "returned path does not visit every goal"
    return Path(
        locations, visits, fmin=fmin, expanded=expanded,
        cells=np.asarray(cells, dtype=np.int32),
    )


# -- conflict detection ------------------------------------------------------


@dataclass(frozen=True, order=True)
class Conflict:
    """A vertex or edge (swap) collision between two agents.

    `when` uses arrival semantics; for an edge conflict, `loc`/`loc2` are the
    lower-indexed agent's move source and destination.
    """

    when: int
    agents: tuple[int, int]
    kind: str  # "vertex" | "edge"
    loc: Location
    loc2: Location | None = None


def _padded_rows(paths: Sequence[Path], w: int | float) -> list[list[Location]]:
    """Each path's first min(w, makespan)+1 positions, resting at the end."""
    makespan = max(len(p) for p in paths) - 1
    t_max = makespan if w == INFINITE else min(int(w), makespan)
    rows = []
    for p in paths:
        locs = p.locations
        if len(locs) <= t_max:
            rows.append(list(locs) + [locs[-1]] * (t_max + 1 - len(locs)))
        else:
            rows.append(locs[: t_max + 1])
    return rows


def _conflicts_at(rows: Sequence[Sequence[Location]], t: int) -> Iterable[tuple]:
    """Yield (i, j, kind, cells...) conflicts at arrival timestep t, each
    pair once with i < j; ended paths rest at their final location."""
    seen: dict[Location, int] = {}
    piles: dict[Location, list[int]] | None = None
    for i, row in enumerate(rows):
        cell = row[t]
        first = seen.get(cell)
        if first is None:
            seen[cell] = i
        else:
            if piles is None:
                piles = {}
            piles.setdefault(cell, [first]).append(i)
    if piles is not None:
        for cell, members in piles.items():
            for a in range(len(members)):
                for b in range(a + 1, len(members)):
                    yield members[a], members[b], "vertex", cell
    if t == 0:
        return
    moves: dict[tuple[Location, Location], int] = {}
    for j, row in enumerate(rows):
        frm, to = row[t - 1], row[t]
        if frm == to:
            continue
        partner = moves.get((to, frm))
        if partner is not None:
            yield partner, j, "edge", frm, to
        moves[(frm, to)] = j


def detect_conflicts(grid: Grid, paths: Sequence[Path], w: int | float) -> list[Conflict]:
    """Every vertex and edge conflict with arrival timestep <= w, sorted by
    (timestep, agent pair).  Agents whose paths have ended rest at their final
    location.  The static configuration after the last path ends is checked
    once, at that final timestep."""
    if not paths:
        return []
    rows = _padded_rows(paths, w)
    out: list[Conflict] = []
    for t in range(len(rows[0])):
        for item in _conflicts_at(rows, t):
            if item[2] == "vertex":
                i, j, _, cell = item
                out.append(Conflict(t, (i, j), "vertex", cell))
            else:
                # For an edge conflict the recorded cells are the
                # lower-indexed agent's move source and destination.
                i, j, _, frm, to = item
                out.append(Conflict(t, (i, j), "edge", to, frm))
    out.sort(key=lambda c: (c.when, c.agents, c.kind))
    return out


def _position_matrix(grid: Grid, paths: Sequence[Path], w: int | float) -> np.ndarray:
    """Padded cell-id positions, one row per agent, one column per timestep
    up to min(w, makespan)."""
    makespan = max(len(p) for p in paths) - 1
    t_max = makespan if w == INFINITE else min(int(w), makespan)
    pos = np.empty((len(paths), t_max + 1), dtype=np.int32)
    for i, p in enumerate(paths):
        cells = p.cell_ids(grid)
        n = len(cells)
        if n > t_max + 1:
            pos[i] = cells[: t_max + 1]
        else:
            pos[i, :n] = cells
            pos[i, n:] = cells[n - 1]
    return pos


def find_first_conflict(grid: Grid, paths: Sequence[Path], w: int | float) -> Conflict | None:
    """Earliest-timestep conflict (ties: lowest agent pair), or None."""
    if not paths:
        return None
    hit = kernel.first_conflict(_position_matrix(grid, paths, w), grid.ncells)
    if hit is None:
        return None
    t, i, j, kind, a, b = hit
    if kind == 1:
        return Conflict(t, (i, j), "vertex", grid.location(a))
    return Conflict(t, (i, j), "edge", grid.location(a), grid.location(b))


def count_conflicts(grid: Grid, paths: Sequence[Path], w: int | float) -> tuple[int, int]:
    """(number of conflicts with t <= w, number over the whole padded plan)."""
    if not paths:
        return 0, 0
    all_conflicts = detect_conflicts(grid, paths, INFINITE)
    if w == INFINITE:
        return len(all_conflicts), len(all_conflicts)
    windowed = sum(1 for c in all_conflicts if c.when <= w)
    return windowed, len(all_conflicts)


def conflict_pairs(grid: Grid, paths: Sequence[Path], w: int | float) -> set[tuple[int, int]]:
    """Unordered agent pairs (i < j) that collide within the window.  Leaner
    than ``detect_conflicts`` when only the who-hits-whom relation matters."""
    if not paths:
        return set()
    return set(kernel.scan_pairs(_position_matrix(grid, paths, w), grid.ncells))


def constraints_from_paths(
    grid: Grid,
    paths: Sequence[Path],
    w: int | float,
    base: ConstraintSet | None = None,
) -> ConstraintSet:
    """Hard prohibitions equivalent to treating `paths` as higher-priority
    traffic: their cells at each timestep up to w (vertex), the reversals of
    their moves (edge), and -- for infinite horizons -- their final cells from
    arrival onward (rest)."""
    cons = base if base is not None else ConstraintSet(grid, w)
    for p in paths:
        cells = [grid.index(loc) for loc in p.locations]
        end = len(cells) - 1
        t_max = end if w == INFINITE else int(w)
        for t in range(0, min(end, t_max) + 1):
            cons.add_vertex(p.locations[t], t)
            if t >= 1 and cells[t] != cells[t - 1]:
                cons.add_edge(p.locations[t], p.locations[t - 1], t)
        if w == INFINITE:
            cons.add_rest(p.locations[end], end)
        else:
            for t in range(end + 1, t_max + 1):
                cons.add_vertex(p.locations[end], t)
    return cons
