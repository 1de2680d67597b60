#!/usr/bin/env python3
"""Regenerate the packaged map fixtures.

Round-trips each generated map through the parser before writing, so a broken
generator fails loudly instead of producing unloadable fixtures.
"""

from __future__ import annotations

import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from lifelong_mapf.grid import Grid, Role, dump_map, generate_sorting_directions, load_map

MAPS_DIR = pathlib.Path(__file__).resolve().parents[1] / "src" / "lifelong_mapf" / "maps"


def ring_corridor() -> Grid:
    """4x4 map whose 12 perimeter cells form a single closed corridor."""
    passable = np.ones((4, 4), dtype=bool)
    passable[1:3, 1:3] = False
    return Grid(passable)


def fulfillment_33x46() -> Grid:
    """Fulfillment-warehouse floor: pod blocks in the center, task endpoints on
    the cells around each pod block, start cells along the left/right edges."""
    height, width = 33, 46
    passable = np.ones((height, width), dtype=bool)
    pod = np.zeros((height, width), dtype=bool)
    for top in (5, 10, 15, 20, 25):
        for left in (4, 11, 18, 25, 32, 39):
            pod[top : top + 2, left : left + 4] = True
    passable[pod] = False

    roles = np.zeros((height, width), dtype=np.int8)
    # Endpoints: every passable 4-neighbor of a pod cell.
    adjacent = np.zeros_like(pod)
    adjacent[1:, :] |= pod[:-1, :]
    adjacent[:-1, :] |= pod[1:, :]
    adjacent[:, 1:] |= pod[:, :-1]
    adjacent[:, :-1] |= pod[:, 1:]
    roles[adjacent & passable] = Role.ENDPOINT
    # Start cells: the two leftmost and two rightmost columns.
    roles[:, [0, 1, width - 2, width - 1]] = Role.LOADING
    return Grid(passable, roles)


def sorting_37x77() -> Grid:
    """Sorting-center floor: a 3-step lattice of chutes, drop-off endpoints on
    each chute's 4-neighbors, work stations along the top and bottom edges,
    and the alternating highway direction pattern."""
    height, width = 37, 77
    passable = np.ones((height, width), dtype=bool)
    chute = np.zeros((height, width), dtype=bool)
    chute[3:34:3, 3:76:3] = True
    passable[chute] = False
    # Under the direction pattern the NW corner has no incoming move and the SE
    # corner has no outgoing move (a trap), so both are blocked.  The other two
    # corners are regular flow-through cells; blocking them would turn their
    # boundary neighbors into new traps.
    passable[0, 0] = False
    passable[height - 1, width - 1] = False

    roles = np.zeros((height, width), dtype=np.int8)
    adjacent = np.zeros_like(chute)
    adjacent[1:, :] |= chute[:-1, :]
    adjacent[:-1, :] |= chute[1:, :]
    adjacent[:, 1:] |= chute[:, :-1]
    adjacent[:, :-1] |= chute[:, 1:]
    roles[adjacent & passable] = Role.ENDPOINT
    for c in range(3, 76, 3):
        roles[0, c] = Role.WORK_STATION
        roles[height - 1, c] = Role.WORK_STATION
    return generate_sorting_directions(Grid(passable, roles))


def main() -> None:
    MAPS_DIR.mkdir(parents=True, exist_ok=True)
    fixtures = {
        "ring_corridor.map": ring_corridor(),
        "fulfillment_33x46.map": fulfillment_33x46(),
        "sorting_37x77.map": sorting_37x77(),
    }
    for name, grid in fixtures.items():
        text = dump_map(grid)
        reloaded = load_map(text, name)
        assert reloaded == grid, f"{name} does not round-trip"
        path = MAPS_DIR / name
        path.write_text(text)
        obstacles = grid.ncells - int(grid.passable.sum())
        print(
            f"{name}: {grid.height}x{grid.width}, {obstacles} obstacles "
            f"({100.0 * obstacles / grid.ncells:.1f}%), "
            f"{len(grid.cells_with_role(Role.ENDPOINT))} endpoints, "
            f"{len(grid.cells_with_role(Role.WORK_STATION))} stations, "
            f"{len(grid.cells_with_role(Role.LOADING))} start cells"
        )


if __name__ == "__main__":
    main()
