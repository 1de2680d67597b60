"""Pure-Python planning kernel: time-expanded multi-goal A* under
spatio-temporal constraints.

`_speedups.pyx` implements the same entry point natively and `kernel`
selects one at import time.  The two implementations must stay in exact
behavioral lockstep -- the parity tests compare them path for path -- so any
change here needs the same change there.

Conventions shared by both kernels:
  - cells are flat ids (row * width + col); moves expand in N, E, S, W, Wait
    order via the -1-padded neighbor table;
  - a node's label counts goals already visited and increments at pop, at
    most once per timestep (visiting the same goal twice in a row therefore
    costs a wait step);
  - vertex keys are t * ncells + cell, edge keys (t * ncells + v) * ncells + u
    for arrival at v at timestep t coming from u;
  - from `t_shortcut` on, the world is static (all timed constraints expired,
    rest cells permanently blocked): a popped node is completed greedily down
    the `red_tables` distance tables.  When that exact completion cost exceeds
    the node's admissible f, the node is re-queued at its exact cost instead,
    which preserves optimality.
"""

from __future__ import annotations

import heapq

import numpy as np

UNREACHABLE = 1 << 30


def plan_path(
    neighbors: np.ndarray,     # int32 (ncells, 4); target cell id or -1
    leg_tables: np.ndarray,    # int32 (nlegs, ncells); admissible dist-to-goal per leg
    h_suffix: np.ndarray,      # int64 (nlegs,); sum of later leg distances
    red_tables: np.ndarray,    # int32 (nlegs, ncells); static completion tables
    red_suffix: np.ndarray,    # int64 (nlegs,); exact later-leg costs (waits for repeats included)
    start: int,
    goals: np.ndarray,         # int32 (nlegs,)
    vertex_keys: np.ndarray,   # int64, any order
    edge_keys: np.ndarray,     # int64, any order
    rest_from: np.ndarray,     # int32 (ncells,); cell blocked for all t >= value, -1 = never
    min_end_time: int,
    t_shortcut: int,
    depth_cap: int,
    focal_w: float,            # 0.0 = plain best-first
    soft_vertex: dict,         # key -> collision count (focal only)
    soft_edge: dict,
    soft_rest: np.ndarray,     # int32 (ncells,); cell softly occupied for all t > value, -1 = never
):
    """Return (locations, fmin, expanded) or None when no path exists."""
    ncells = neighbors.shape[0]
    nlegs = len(goals)
    goal_list = [int(g) for g in goals]
    final_goal = goal_list[-1]
    vset = frozenset(vertex_keys.tolist())
    eset = frozenset(edge_keys.tolist())
    focal = focal_w > 0.0

    if start in vset:  # vertex key for t=0 is plain cell id
        return None
    if rest_from[start] == 0:
        return None

    def heuristic(cell: int, label: int, t: int) -> int:
        if label >= nlegs:
            h = int(leg_tables[nlegs - 1][cell])
        else:
            h = int(leg_tables[label][cell])
            if h >= UNREACHABLE:
                return UNREACHABLE
            h += int(h_suffix[label])
        if h >= UNREACHABLE:
            return UNREACHABLE
        floor = min_end_time - t
        return h if h >= floor else floor

    def static_remaining(cell: int, label: int, t: int) -> int:
        """Exact completion cost from `cell` at time t in the static world."""
        if label >= nlegs:
            rem = 0 if cell == final_goal else int(red_tables[nlegs - 1][cell])
        else:
            cur = int(red_tables[label][cell])
            if cur >= UNREACHABLE:
                return UNREACHABLE
            if cur == 0:
                cur = 1  # repeated goal: the extra visit costs one wait step
            rem = cur + int(red_suffix[label])
        if rem >= UNREACHABLE:
            return UNREACHABLE
        floor = min_end_time - t
        return rem if rem >= floor else floor

    # Node storage (struct-of-lists).
    n_cell = [start]
    n_time = [0]
    n_label = [0]
    n_parent = [-1]
    n_dc = [0]
    closed = [False]
    requeued = [False]

    h0 = heuristic(start, 0, 0)
    if h0 >= UNREACHABLE:
        return None

    push_ctr = 0
    # Best-first: `anchor` is the only queue.  Focal: `anchor` tracks fmin,
    # `focal_heap` holds nodes within the bound ordered by collision count,
    # `deferred` holds the rest until the bound grows enough.
    anchor = [(h0, 0, 0, 0, False)]  # (f, -g, ctr, node, exact)
    focal_heap = []
    deferred = []
    if focal:
        focal_heap.append((0, h0, 0, 0, 0, False))  # (dc, f, -g, ctr, node, exact)
    fmin = h0
    expanded = 0

    def state_key(cell: int, t: int, label: int) -> int:
        return (t * ncells + cell) * (nlegs + 1) + label

    seen = {state_key(start, 0, 0)}

    def soft_hit(cell: int, t: int, came_from: int) -> int:
        """Soft collisions incurred by being at `cell` at time t (plus the
        reverse-traversal count when arriving from `came_from` >= 0)."""
        hits = soft_vertex.get(t * ncells + cell, 0)
        r = soft_rest[cell]
        if 0 <= r < t:
            hits += 1
        if came_from >= 0 and came_from != cell:
            hits += soft_edge.get((t * ncells + cell) * ncells + came_from, 0)
        return hits

    def complete_tail(tail_cell: int, tail_time: int, tail_label: int) -> tuple[list[int], int]:
        """Greedy static completion from a popped node onward; returns the
        appended cells and the soft collisions they incur.  In focal mode a
        tie between equally-descending neighbors is broken toward the one
        colliding least, then move order."""
        tail: list[int] = []
        dc = 0
        cell, t, label = tail_cell, tail_time, tail_label
        while True:
            if label >= nlegs:
                if cell == final_goal:
                    if t >= min_end_time:
                        return tail, dc
                    t += 1
                    tail.append(cell)
                    if focal:
                        dc += soft_hit(cell, t, -1)
                    continue
                table = red_tables[nlegs - 1]
            elif cell == goal_list[label]:
                # Repeated goal: wait one step, then count the next visit.
                t += 1
                tail.append(cell)
                if focal:
                    dc += soft_hit(cell, t, -1)
                label += 1
                continue
            else:
                table = red_tables[label]
            d = int(table[cell])
            best = -1
            best_hits = 0
            for move in range(4):
                y = int(neighbors[cell, move])
                if y >= 0 and int(table[y]) == d - 1:
                    if not focal:
                        best = y
                        break
                    hits = soft_hit(y, t + 1, cell)
                    if best < 0 or hits < best_hits:
                        best = y
                        best_hits = hits
                        if hits == 0:
                            break
            cell = best
            t += 1
            tail.append(cell)
            dc += best_hits
            if label < nlegs and cell == goal_list[label]:
                label += 1

    def reconstruct(node: int, tail_cell: int, tail_time: int, tail_label: int) -> list[int]:
        locs = []
        i = node
        while i >= 0:
            locs.append(n_cell[i])
            i = n_parent[i]
        locs.reverse()
        locs.extend(complete_tail(tail_cell, tail_time, tail_label)[0])
        return locs

    def push(node: int, f: int, g: int, dc: int, exact: bool):
        nonlocal push_ctr
        push_ctr += 1
        heapq.heappush(anchor, (f, -g, push_ctr, node, exact))
        if focal:
            if f <= focal_w * fmin:
                heapq.heappush(focal_heap, (dc, f, -g, push_ctr, node, exact))
            else:
                heapq.heappush(deferred, (f, -g, push_ctr, node, dc, exact))

    def refresh_focal():
        """Update fmin from the anchor and admit newly-bounded nodes."""
        nonlocal fmin
        # Drop closed nodes and the stale (pre-requeue) entries of nodes that
        # were re-queued at their exact completion cost.
        while anchor and (closed[anchor[0][3]] or (requeued[anchor[0][3]] and not anchor[0][4])):
            heapq.heappop(anchor)
        if anchor and anchor[0][0] > fmin:
            fmin = anchor[0][0]
        bound = focal_w * fmin
        while deferred and deferred[0][0] <= bound:
            f, neg_g, ctr, node, dc, exact = heapq.heappop(deferred)
            heapq.heappush(focal_heap, (dc, f, neg_g, ctr, node, exact))

    while True:
        if focal:
            refresh_focal()
            if not focal_heap:
                return None
            dc, f, neg_g, ctr, node, exact = heapq.heappop(focal_heap)
        else:
            if not anchor:
                return None
            f, neg_g, ctr, node, exact = heapq.heappop(anchor)
            if f > fmin:
                fmin = f
        if closed[node]:
            continue

        cell = n_cell[node]
        t = n_time[node]
        label = n_label[node]
        if label < nlegs and cell == goal_list[label]:
            label += 1  # visit the current goal: at most one per pop

        if exact:
            return reconstruct(node, cell, t, label), fmin, expanded

        if label >= nlegs and cell == final_goal and t >= min_end_time:
            closed[node] = True
            return reconstruct(node, cell, t, label), fmin, expanded

        if t >= t_shortcut:
            if requeued[node]:
                continue
            rem = static_remaining(cell, label, t)
            if rem >= UNREACHABLE:
                closed[node] = True
                continue
            exact_f = t + rem
            if focal:
                exact_dc = n_dc[node] + complete_tail(cell, t, label)[1]
            else:
                exact_dc = dc = 0
            if exact_f <= f and exact_dc <= dc:
                closed[node] = True
                if not focal and exact_f < fmin:
                    fmin = exact_f  # the completion is optimal, so tighten the bound
                return reconstruct(node, cell, t, label), fmin, expanded
            # The exact completion is dearer (in cost or collisions) than this
            # node advertised: re-queue it at its exact values.
            requeued[node] = True
            push(node, exact_f, t, exact_dc, True)
            continue

        closed[node] = True
        expanded += 1
        t1 = t + 1
        if t1 > depth_cap:
            continue
        dc0 = n_dc[node]
        for move in range(5):
            y = cell if move == 4 else int(neighbors[cell, move])
            if y < 0:
                continue
            r = rest_from[y]
            if 0 <= r <= t1:
                continue
            vkey = t1 * ncells + y
            if vkey in vset:
                continue
            if move != 4:
                ekey = (t1 * ncells + y) * ncells + cell
                if ekey in eset:
                    continue
            skey = state_key(y, t1, label)
            if skey in seen:
                continue
            h = heuristic(y, label, t1)
            if h >= UNREACHABLE:
                continue
            seen.add(skey)
            dc = dc0
            if focal:
                dc += soft_vertex.get(vkey, 0)
                sr = soft_rest[y]
                if 0 <= sr < t1:
                    dc += 1
                if move != 4:
                    dc += soft_edge.get(ekey, 0)
            n_cell.append(y)
            n_time.append(t1)
            n_label.append(label)
            n_parent.append(node)
            n_dc.append(dc)
            closed.append(False)
            requeued.append(False)
            push(len(n_cell) - 1, t1 + h, t1, dc, False)


def scan_pairs(pos: np.ndarray, ncells: int) -> list[tuple[int, int]]:
    """Unordered conflicting agent pairs over a padded position matrix
    (one row per agent, one column per timestep), sorted, each pair once.

    A pair conflicts if the agents share a cell at some timestep (vertex)
    or traverse the same edge in opposite directions (swap)."""
    m, horizon = pos.shape
    rows = pos.tolist()
    pairs: set[tuple[int, int]] = set()
    for t in range(horizon):
        seen: dict[int, int] = {}
        piles: dict[int, list[int]] | None = None
        for i in range(m):
            c = rows[i][t]
            first = seen.get(c)
            if first is None:
                seen[c] = i
            else:
                if piles is None:
                    piles = {}
                piles.setdefault(c, [first]).append(i)
        if piles is not None:
            for members in piles.values():
                for a in range(len(members)):
                    for b in range(a + 1, len(members)):
                        pairs.add((members[a], members[b]))
        if t == 0:
            continue
        moves: dict[int, int] = {}
        for j in range(m):
            frm = rows[j][t - 1]
            to = rows[j][t]
            if frm == to:
                continue
            partner = moves.get(to * ncells + frm)
            if partner is not None:
                pairs.add((partner, j))
            moves[frm * ncells + to] = j
    return sorted(pairs)


def first_conflict(pos: np.ndarray, ncells: int) -> tuple | None:
    """Earliest conflict in a padded position matrix, or None.

    Returns (t, i, j, kind, a, b) with kind 1 = vertex (a = b = shared
    cell) or kind 0 = edge (a, b = agent i's move source and destination).
    Ties at a timestep resolve to the smallest (i, j), edges first."""
    m, horizon = pos.shape
    rows = pos.tolist()
    for t in range(horizon):
        best = None
        seen: dict[int, int] = {}
        piles: dict[int, list[int]] | None = None
        for i in range(m):
            c = rows[i][t]
            first = seen.get(c)
            if first is None:
                seen[c] = i
            else:
                if piles is None:
                    piles = {}
                piles.setdefault(c, [first]).append(i)
        if piles is not None:
            for c, members in piles.items():
                for a in range(len(members)):
                    for b in range(a + 1, len(members)):
                        cand = (members[a], members[b], 1, c, c)
                        if best is None or cand[:3] < best[:3]:
                            best = cand
        if t:
            moves: dict[int, int] = {}
            for j in range(m):
                frm = rows[j][t - 1]
                to = rows[j][t]
                if frm == to:
                    continue
                partner = moves.get(to * ncells + frm)
                if partner is not None:
                    cand = (partner, j, 0, to, frm)
                    if best is None or cand[:3] < best[:3]:
                        best = cand
                moves[frm * ncells + to] = j
        if best is not None:
            i, j, kind, a, b = best
            return t, i, j, kind, a, b
    return None
