"""Grid world: map parsing, movement rules, and goal-rooted distance tables."""

from __future__ import annotations

import threading
from enum import IntEnum
from typing import NamedTuple

import numpy as np

__all__ = [
    "UNREACHABLE",
    "DimensionMismatch",
    "DistanceTables",
    "Grid",
    "InvalidDirection",
    "Location",
    "MapError",
    "Move",
    "Role",
    "UnknownGlyph",
    "dump_map",
    "generate_sorting_directions",
    "load_map",
]

# Sentinel distance for disconnected cells.  Large, but small enough that sums
# of a few of these still fit comfortably in int64 arithmetic.
UNREACHABLE = 1 << 30


class Move(IntEnum):
    """Unit moves in fixed expansion order; WAIT is always last."""

    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3
    WAIT = 4


MOVE_DELTAS: tuple[tuple[int, int], ...] = ((-1, 0), (0, 1), (1, 0), (0, -1), (0, 0))
_MOVE_LETTERS = "NESW"


class Role(IntEnum):
    """Endpoint role of a cell, parsed from the map glyph."""

    NONE = 0
    ENDPOINT = 1      # 'E': generic goal endpoint (pod- or chute-adjacent)
    WORK_STATION = 2  # 'W': work station
    LOADING = 3       # 'S': loading / start endpoint


_GLYPH_TO_ROLE = {
    ".": Role.NONE,
    "E": Role.ENDPOINT,
    "W": Role.WORK_STATION,
    "S": Role.LOADING,
}
_ROLE_TO_GLYPH = {role: glyph for glyph, role in _GLYPH_TO_ROLE.items()}


class Location(NamedTuple):
    row: int
    col: int


class MapError(ValueError):
    """Malformed map file."""


class UnknownGlyph(MapError):
    pass


class DimensionMismatch(MapError):
    pass


class InvalidDirection(MapError):
    pass


class Grid:
    """Immutable 4-neighbor grid with optional directional move restrictions.

    ``move_mask``, when present, restricts the directional moves allowed *out
    of* each cell (directed maps).  Wait is always allowed on passable cells,
    and an allowed move never leaves the grid or enters an impassable cell.
    """

    def __init__(
        self,
        passable: np.ndarray,
        roles: np.ndarray | None = None,
        move_mask: np.ndarray | None = None,
    ):
        passable = np.array(passable, dtype=bool)
        if passable.ndim != 2:
            raise ValueError("passable must be a 2-D array")
        self.height, self.width = passable.shape
        self.ncells = self.height * self.width
        passable.setflags(write=False)
        self.passable = passable
        if roles is None:
            roles = np.zeros(passable.shape, dtype=np.int8)
        roles = np.array(roles, dtype=np.int8)
        if roles.shape != passable.shape:
            raise ValueError("roles shape must match passable shape")
        roles.setflags(write=False)
        self.roles = roles
        if move_mask is not None:
            move_mask = np.array(move_mask, dtype=bool)
            if move_mask.shape != (self.height, self.width, 4):
                raise ValueError("move_mask must have shape (height, width, 4)")
            move_mask.setflags(write=False)
        self.move_mask = move_mask
        # RLock: reverse_table() builds the forward table while holding it.
        self._lock = threading.RLock()
        self._neighbor_table: np.ndarray | None = None
        self._reverse_table: np.ndarray | None = None

    # -- cell addressing ---------------------------------------------------

    def index(self, x: Location | tuple[int, int]) -> int:
        r, c = x
        return r * self.width + c

    def location(self, idx: int) -> Location:
        return Location(idx // self.width, idx % self.width)

    def in_bounds(self, x: tuple[int, int]) -> bool:
        r, c = x
        return 0 <= r < self.height and 0 <= c < self.width

    def is_passable(self, x: tuple[int, int]) -> bool:
        return self.in_bounds(x) and bool(self.passable[x])

    # -- movement ----------------------------------------------------------

    def allowed(self, x: Location | tuple[int, int], move: Move) -> bool:
        """True iff `move` may be taken from cell `x`."""
        if not self.is_passable(x):
            return False
        if move == Move.WAIT:
            return True
        dr, dc = MOVE_DELTAS[move]
        target = (x[0] + dr, x[1] + dc)
        if not self.is_passable(target):
            return False
        return self.move_mask is None or bool(self.move_mask[x[0], x[1], move])

    def neighbors(self, x: Location | tuple[int, int]) -> set[tuple[Move, Location]]:
        """All allowed (move, target) pairs at `x`, including (Wait, x)."""
        assert self.is_passable(x), f"neighbors() called on impassable cell {x}"
        row = self.neighbor_table()[self.index(x)]
        result = {(Move.WAIT, Location(*x))}
        for move in range(4):
            if row[move] >= 0:
                result.add((Move(move), self.location(int(row[move]))))
        return result

    def neighbor_table(self) -> np.ndarray:
        """(ncells, 4) int32 table of target cell ids; -1 where the move is not allowed."""
        if self._neighbor_table is None:
            with self._lock:
                if self._neighbor_table is None:
                    self._neighbor_table = self._build_neighbor_table()
        return self._neighbor_table

    def _build_neighbor_table(self) -> np.ndarray:
        ids = np.arange(self.ncells, dtype=np.int32).reshape(self.height, self.width)
        table = np.full((self.height, self.width, 4), -1, dtype=np.int32)
        table[1:, :, Move.NORTH] = ids[:-1, :]
        table[:, :-1, Move.EAST] = ids[:, 1:]
        table[:-1, :, Move.SOUTH] = ids[1:, :]
        table[:, 1:, Move.WEST] = ids[:, :-1]
        flat_passable = self.passable.ravel()
        for move in range(4):
            t = table[..., move]
            ok = (t >= 0) & self.passable
            ok[ok] = flat_passable[t[ok]]
            if self.move_mask is not None:
                ok &= self.move_mask[..., move]
            t[~ok] = -1
        table = table.reshape(self.ncells, 4)
        table.setflags(write=False)
        return table

    def reverse_table(self) -> np.ndarray:
        """(ncells, 4) int32 table: entry [v, k] is the cell u with an allowed
        move k from u into v, or -1.  Used for distances *to* a goal on
        directed maps."""
        if self._reverse_table is None:
            with self._lock:
                if self._reverse_table is None:
                    fwd = self.neighbor_table()
                    rev = np.full_like(fwd, -1)
                    src = np.arange(self.ncells, dtype=np.int32)
                    for move in range(4):
                        dst = fwd[:, move]
                        ok = dst >= 0
                        rev[dst[ok], move] = src[ok]
                    rev.setflags(write=False)
                    self._reverse_table = rev
        return self._reverse_table

    # -- roles -------------------------------------------------------------

    def role_at(self, x: tuple[int, int]) -> Role:
        return Role(int(self.roles[x]))

    def cells_with_role(self, role: Role) -> list[Location]:
        rows, cols = np.nonzero((self.roles == role) & self.passable)
        return [Location(int(r), int(c)) for r, c in zip(rows, cols)]

    def passable_cells(self) -> list[Location]:
        rows, cols = np.nonzero(self.passable)
        return [Location(int(r), int(c)) for r, c in zip(rows, cols)]

    # -- derivation --------------------------------------------------------

    def with_move_mask(self, move_mask: np.ndarray | None) -> "Grid":
        return Grid(self.passable, self.roles, move_mask)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        if (self.height, self.width) != (other.height, other.width):
            return False
        if not (np.array_equal(self.passable, other.passable) and np.array_equal(self.roles, other.roles)):
            return False
        # Masks compare by effect: only entries of passable cells matter.
        return np.array_equal(self.neighbor_table(), other.neighbor_table())

    def __hash__(self):
        return hash((self.height, self.width, self.passable.tobytes()))

    def __repr__(self):
        kind = "directed" if self.move_mask is not None else "undirected"
        return f"Grid({self.height}x{self.width}, {kind}, {int(self.passable.sum())} passable)"


# -- map file I/O ----------------------------------------------------------


def load_map(text: str, name: str = "<map>") -> Grid:
    """Parse a map file: header ``rows cols``, glyph rows, optional DIRECTIONS section."""
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise DimensionMismatch(f"{name}:1: missing 'rows cols' header")
    header = lines[0].split()
    try:
        rows, cols = (int(header[0]), int(header[1])) if len(header) == 2 else (None, None)
    except ValueError:
        rows = cols = None
    if rows is None or cols is None or rows <= 0 or cols <= 0:
        raise DimensionMismatch(f"{name}:1: header must be 'rows cols', got {lines[0]!r}")

    passable = np.zeros((rows, cols), dtype=bool)
    roles = np.zeros((rows, cols), dtype=np.int8)
    idx = 1
    for r in range(rows):
        if idx >= len(lines):
            raise DimensionMismatch(f"{name}:{len(lines) + 1}: expected {rows} map rows, found {r}")
        line = lines[idx].rstrip()
        if len(line) != cols:
            raise DimensionMismatch(f"{name}:{idx + 1}: row has {len(line)} cells, expected {cols}")
        for c, glyph in enumerate(line):
            if glyph == "@":
                continue
            role = _GLYPH_TO_ROLE.get(glyph)
            if role is None:
                raise UnknownGlyph(f"{name}:{idx + 1}: unknown cell glyph {glyph!r} at column {c}")
            passable[r, c] = True
            roles[r, c] = role
        idx += 1

    while idx < len(lines) and not lines[idx].strip():
        idx += 1
    move_mask = None
    if idx < len(lines):
        if lines[idx].strip() != "DIRECTIONS":
            raise DimensionMismatch(f"{name}:{idx + 1}: unexpected content after map rows: {lines[idx]!r}")
        move_mask = np.ones((rows, cols, 4), dtype=bool)
        for idx in range(idx + 1, len(lines)):
            line = lines[idx].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise InvalidDirection(f"{name}:{idx + 1}: expected 'row col moves', got {line!r}")
            try:
                r, c = int(parts[0]), int(parts[1])
            except ValueError:
                raise InvalidDirection(f"{name}:{idx + 1}: bad cell coordinates in {line!r}") from None
            if not (0 <= r < rows and 0 <= c < cols):
                raise InvalidDirection(f"{name}:{idx + 1}: cell ({r}, {c}) out of bounds")
            if not passable[r, c]:
                raise InvalidDirection(f"{name}:{idx + 1}: direction entry for impassable cell ({r}, {c})")
            subset = parts[2]
            if subset != "-" and any(ch not in _MOVE_LETTERS for ch in subset):
                raise InvalidDirection(f"{name}:{idx + 1}: moves must be a subset of NESW or '-', got {subset!r}")
            for move, letter in enumerate(_MOVE_LETTERS):
                move_mask[r, c, move] = subset != "-" and letter in subset

    return Grid(passable, roles, move_mask)


def dump_map(grid: Grid) -> str:
    """Serialize a Grid back to the map file format (inverse of load_map)."""
    out = [f"{grid.height} {grid.width}"]
    for r in range(grid.height):
        out.append(
            "".join(
                _ROLE_TO_GLYPH[Role(int(grid.roles[r, c]))] if grid.passable[r, c] else "@"
                for c in range(grid.width)
            )
        )
    if grid.move_mask is not None:
        out.append("DIRECTIONS")
        for r in range(grid.height):
            for c in range(grid.width):
                if not grid.passable[r, c]:
                    continue
                mask = grid.move_mask[r, c]
                if mask.all():
                    continue
                subset = "".join(letter for move, letter in enumerate(_MOVE_LETTERS) if mask[move])
                out.append(f"{r} {c} {subset or '-'}")
    return "\n".join(out) + "\n"


def generate_sorting_directions(grid: Grid) -> Grid:
    """Highway pattern for sorting-center maps: horizontal movement alternates
    East/West in two-row bands, vertical movement alternates South/North in
    two-column bands; Wait is always retained.  Recomputed from scratch, so the
    operation is idempotent."""
    rows = np.arange(grid.height)
    cols = np.arange(grid.width)
    east = np.broadcast_to(((rows // 2) % 2 == 0)[:, None], (grid.height, grid.width))
    south = np.broadcast_to(((cols // 2) % 2 == 0)[None, :], (grid.height, grid.width))
    mask = np.zeros((grid.height, grid.width, 4), dtype=bool)
    mask[..., Move.EAST] = east
    mask[..., Move.WEST] = ~east
    mask[..., Move.SOUTH] = south
    mask[..., Move.NORTH] = ~south
    return grid.with_move_mask(mask)


# -- distance tables ---------------------------------------------------------


class DistanceTables:
    """Per-goal shortest-distance tables: distance FROM each cell TO the goal.

    Tables are built lazily on first use and cached forever.  Lookup is safe
    from concurrent threads and each table is built at most once.  The BFS runs
    over reversed allowed moves, so asymmetric (directed) maps are handled
    correctly.  Wait moves never shorten a path and are excluded.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        self._tables: dict[int, np.ndarray] = {}
        self._lock = threading.Lock()

    def table(self, goal: Location | tuple[int, int] | int) -> np.ndarray:
        gid = goal if isinstance(goal, (int, np.integer)) else self.grid.index(goal)
        gid = int(gid)
        t = self._tables.get(gid)
        if t is None:
            with self._lock:
                t = self._tables.get(gid)
                if t is None:
                    t = self._bfs(gid)
                    t.setflags(write=False)
                    self._tables[gid] = t
        return t

    def dist(self, src: Location | tuple[int, int] | int, goal: Location | tuple[int, int] | int) -> int:
        sid = src if isinstance(src, (int, np.integer)) else self.grid.index(src)
        return int(self.table(goal)[int(sid)])

    def __len__(self) -> int:
        return len(self._tables)

    def _bfs(self, gid: int) -> np.ndarray:
        rev = self.grid.reverse_table()
        dist = np.full(self.grid.ncells, UNREACHABLE, dtype=np.int32)
        if not self.grid.passable.ravel()[gid]:
            return dist
        dist[gid] = 0
        frontier = np.array([gid], dtype=np.int32)
        level = 0
        while frontier.size:
            level += 1
            preds = rev[frontier].ravel()
            preds = preds[preds >= 0]
            preds = preds[dist[preds] == UNREACHABLE]
            if preds.size == 0:
                break
            frontier = np.unique(preds)
            dist[frontier] = level
        return dist
