from __future__ import annotations

import random

import pytest

from lifelong_mapf import _pykernel, kernel
from lifelong_mapf.grid import DistanceTables, load_map
from lifelong_mapf.search import INFINITE, ConstraintSet, NoSolution, multi_label_astar

pytestmark = pytest.mark.skipif(
    not kernel.IS_COMPILED, reason="compiled kernel not available"
)


def both_kernels(grid, tables, start, goals, cons, focal_w, soft):
    """Run the same query through the native and pure kernels."""
    out = []
    for impl in (kernel._impl.plan_path, _pykernel.plan_path):
        saved = kernel.plan_path
        kernel.plan_path = impl
        try:
            try:
                p = multi_label_astar(
                    grid, start, goals, cons=cons, focal_w=focal_w,
                    soft_paths=soft, tables=tables,
                )
                out.append(([tuple(l) for l in p.locations], p.fmin, p.expanded))
            except NoSolution:
                out.append(None)
        finally:
            kernel.plan_path = saved
    return out


@pytest.mark.parametrize("seed", range(80))
def test_kernels_agree_step_for_step(seed):
    """The native kernel must reproduce the pure one exactly: same cells, same
    bound, same expansion count.  Any drift here means the tie-breaking rules
    diverged."""
    rng = random.Random(seed * 31 + 7)
    height, width = rng.randint(2, 6), rng.randint(2, 6)
    rows = ["".join("." if rng.random() > 0.2 else "@" for _ in range(width)) for _ in range(height)]
    grid = load_map(f"{height} {width}\n" + "\n".join(rows) + "\n")
    cells = grid.passable_cells()
    if len(cells) < 3:
        return
    tables = DistanceTables(grid)
    start = rng.choice(cells)
    goals = [rng.choice(cells) for _ in range(rng.randint(1, 3))]
    w = rng.choice([4, 9, INFINITE])
    cons = ConstraintSet(grid, w)
    cap = 12 if w == INFINITE else int(w)
    for _ in range(rng.randint(0, 10)):
        roll = rng.random()
        c1, c2 = rng.choice(cells), rng.choice(cells)
        t = rng.randint(0, cap)
        if roll < 0.5:
            cons.add_vertex(c1, t)
        elif roll < 0.8 and tuple(c1) != tuple(c2):
            cons.add_edge(c1, c2, max(t, 1))
        elif w == INFINITE:
            cons.add_rest(c1, t)
    focal_w = rng.choice([None, 1.0, 1.3, 2.0])
    soft = []
    if focal_w is not None:
        for _ in range(rng.randint(0, 3)):
            try:
                soft.append(multi_label_astar(grid, rng.choice(cells), [rng.choice(cells)], tables=tables))
            except NoSolution:
                pass
    native, pure = both_kernels(grid, tables, start, goals, cons, focal_w, soft)
    assert native == pure


def test_directed_map_parity():
    # 6x6 so that the one-way band pattern leaves a connected core
    # (a bare 4x4 is all corner blocks and has none).
    text = "6 6\n" + "......\n" * 6
    from lifelong_mapf.grid import generate_sorting_directions

    grid = generate_sorting_directions(load_map(text))
    tables = DistanceTables(grid)
    cons = ConstraintSet(grid, 6)
    cons.add_vertex((2, 3), 2)
    cons.add_edge((2, 2), (2, 3), 1)
    native, pure = both_kernels(grid, tables, (0, 2), [(3, 3), (2, 0)], cons, None, [])
    assert native == pure
    assert native is not None

# -- conflict scans ---------------------------------------------------------------


@pytest.mark.parametrize("seed", range(60))
def test_scan_kernels_agree(seed):
    """The native conflict scanners must match the pure ones on arbitrary
    position matrices, including triple pile-ups and simultaneous swaps."""
    import numpy as np

    rng = np.random.default_rng(seed * 97 + 11)
    m = int(rng.integers(1, 7))
    steps = int(rng.integers(1, 9))
    ncells = int(rng.integers(2, 7))  # tiny cell pool so collisions are common
    pos = rng.integers(0, ncells, size=(m, steps + 1), dtype=np.int32)
    assert kernel._impl.scan_pairs(pos, ncells) == _pykernel.scan_pairs(pos, ncells)
    assert kernel._impl.first_conflict(pos, ncells) == _pykernel.first_conflict(pos, ncells)


def test_scan_kernels_agree_on_clean_matrix():
    import numpy as np

    pos = np.array([[0, 1, 2], [3, 4, 5]], dtype=np.int32)
    assert kernel._impl.scan_pairs(pos, 6) == []
    assert _pykernel.scan_pairs(pos, 6) == []
    assert kernel._impl.first_conflict(pos, 6) is None
    assert _pykernel.first_conflict(pos, 6) is None
