# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Native planning kernel: time-expanded multi-goal A* under spatio-temporal
constraints.

This is a line-for-line port of ``_pykernel.plan_path`` (see that module for
the shared conventions); the parity tests compare the two path for path, so
any behavioral change here needs the same change there.
"""

import numpy as np

from libcpp.unordered_map cimport unordered_map
from libcpp.unordered_set cimport unordered_set
from libcpp.vector cimport vector

cdef extern from *:
    """
    #include <queue>
    #include <vector>

    struct PqEntry {
        long long k1, k2, k3, k4;
        int node, dc;
        bool exact;
    };
    struct PqEntryGreater {
        bool operator()(const PqEntry& a, const PqEntry& b) const {
            if (a.k1 != b.k1) return a.k1 > b.k1;
            if (a.k2 != b.k2) return a.k2 > b.k2;
            if (a.k3 != b.k3) return a.k3 > b.k3;
            return a.k4 > b.k4;
        }
    };
    typedef std::priority_queue<PqEntry, std::vector<PqEntry>, PqEntryGreater> PqHeap;
    """
    cdef struct PqEntry:
        long long k1, k2, k3, k4
        int node, dc
        bint exact
    cdef cppclass PqHeap:
        PqHeap() except +
        void push(const PqEntry&) except +
        const PqEntry& top()
        void pop()
        bint empty()

UNREACHABLE = 1 << 30

cdef long long C_UNREACHABLE = 1 << 30


cdef inline long long _heuristic(
    const int[:, ::1] leg_tables, const long long[::1] h_suffix,
    int nlegs, long long min_end_time,
    int cell, int label, long long t,
) noexcept nogil:
    cdef long long h, floor
    if label >= nlegs:
        h = leg_tables[nlegs - 1, cell]
    else:
        h = leg_tables[label, cell]
        if h >= C_UNREACHABLE:
            return C_UNREACHABLE
        h += h_suffix[label]
    if h >= C_UNREACHABLE:
        return C_UNREACHABLE
    floor = min_end_time - t
    return h if h >= floor else floor


cdef inline long long _static_remaining(
    const int[:, ::1] red_tables, const long long[::1] red_suffix,
    int nlegs, int final_goal, long long min_end_time,
    int cell, int label, long long t,
) noexcept nogil:
    """Exact completion cost from `cell` at time t in the static world."""
    cdef long long rem, cur, floor
    if label >= nlegs:
        rem = 0 if cell == final_goal else red_tables[nlegs - 1, cell]
    else:
        cur = red_tables[label, cell]
        if cur >= C_UNREACHABLE:
            return C_UNREACHABLE
        if cur == 0:
            cur = 1  # repeated goal: the extra visit costs one wait step
        rem = cur + red_suffix[label]
    if rem >= C_UNREACHABLE:
        return C_UNREACHABLE
    floor = min_end_time - t
    return rem if rem >= floor else floor


cdef inline long long _soft_hit(
    unordered_map[long long, int]& sv, unordered_map[long long, int]& se,
    const int[::1] soft_rest, int ncells,
    int cell, long long t, int came_from,
) noexcept nogil:
    """Soft collisions incurred by being at `cell` at time t (plus the
    reverse-traversal count when arriving from `came_from` >= 0)."""
    cdef long long hits = 0
    cdef long long vkey = t * ncells + cell
    cdef int r
    if sv.count(vkey):
        hits += sv[vkey]
    r = soft_rest[cell]
    if 0 <= r < t:
        hits += 1
    if came_from >= 0 and came_from != cell:
        if se.count(vkey * ncells + came_from):
            hits += se[vkey * ncells + came_from]
    return hits


cdef long long _complete_tail(
    const int[:, ::1] neighbors, const int[:, ::1] red_tables,
    const int[::1] goals, int nlegs, int final_goal, long long min_end_time,
    bint focal,
    unordered_map[long long, int]& sv, unordered_map[long long, int]& se,
    const int[::1] soft_rest, int ncells,
    int tail_cell, long long tail_time, int tail_label,
    vector[int]& tail,
) noexcept nogil:
    """Greedy static completion from a popped node onward; fills `tail` and
    returns the soft collisions it incurs.  In focal mode a tie between
    equally-descending neighbors is broken toward the one colliding least,
    then move order."""
    cdef long long dc = 0
    cdef int cell = tail_cell
    cdef long long t = tail_time
    cdef int label = tail_label
    cdef int leg, move, y, d, best
    cdef long long hits, best_hits
    while True:
        if label >= nlegs:
            if cell == final_goal:
                if t >= min_end_time:
                    return dc
                t += 1
                tail.push_back(cell)
                if focal:
                    dc += _soft_hit(sv, se, soft_rest, ncells, cell, t, -1)
                continue
            leg = nlegs - 1
        elif cell == goals[label]:
            # Repeated goal: wait one step, then count the next visit.
            t += 1
            tail.push_back(cell)
            if focal:
                dc += _soft_hit(sv, se, soft_rest, ncells, cell, t, -1)
            label += 1
            continue
        else:
            leg = label
        d = red_tables[leg, cell]
        best = -1
        best_hits = 0
        for move in range(4):
            y = neighbors[cell, move]
            if y >= 0 and red_tables[leg, y] == d - 1:
                if not focal:
                    best = y
                    break
                hits = _soft_hit(sv, se, soft_rest, ncells, y, t + 1, cell)
                if best < 0 or hits < best_hits:
                    best = y
                    best_hits = hits
                    if hits == 0:
                        break
        cell = best
        t += 1
        tail.push_back(cell)
        dc += best_hits
        if label < nlegs and cell == goals[label]:
            label += 1


def plan_path(
    const int[:, ::1] neighbors not None,
    const int[:, ::1] leg_tables not None,
    const long long[::1] h_suffix not None,
    const int[:, ::1] red_tables not None,
    const long long[::1] red_suffix not None,
    int start,
    const int[::1] goals not None,
    const long long[::1] vertex_keys not None,
    const long long[::1] edge_keys not None,
    const int[::1] rest_from not None,
    long long min_end_time,
    long long t_shortcut,
    long long depth_cap,
    double focal_w,
    dict soft_vertex,
    dict soft_edge,
    const int[::1] soft_rest not None,
):
    """Return (locations, fmin, expanded) or None when no path exists."""
    cdef int ncells = neighbors.shape[0]
    cdef int nlegs = goals.shape[0]
    cdef int final_goal = goals[nlegs - 1]
    cdef bint focal = focal_w > 0.0
    cdef Py_ssize_t i

    cdef unordered_set[long long] vset, eset, seen
    for i in range(vertex_keys.shape[0]):
        vset.insert(vertex_keys[i])
    for i in range(edge_keys.shape[0]):
        eset.insert(edge_keys[i])

    if vset.count(start):  # vertex key for t=0 is plain cell id
        return None
    if rest_from[start] == 0:
        return None

    cdef unordered_map[long long, int] sv, se
    cdef long long k
    cdef int v
    if focal:
        for k, v in soft_vertex.items():
            sv[k] = v
        for k, v in soft_edge.items():
            se[k] = v

    # Node storage (struct-of-lists).
    cdef vector[int] n_cell, n_time, n_label, n_parent, n_dc
    cdef vector[char] closed, requeued
    n_cell.push_back(start)
    n_time.push_back(0)
    n_label.push_back(0)
    n_parent.push_back(-1)
    n_dc.push_back(0)
    closed.push_back(0)
    requeued.push_back(0)

    cdef long long h0 = _heuristic(leg_tables, h_suffix, nlegs, min_end_time, start, 0, 0)
    if h0 >= C_UNREACHABLE:
        return None

    cdef long long push_ctr = 0
    # Best-first: `anchor` is the only queue.  Focal: `anchor` tracks fmin,
    # `focal_heap` holds nodes within the bound ordered by collision count,
    # `deferred` holds the rest until the bound grows enough.
    cdef PqHeap anchor, focal_heap, deferred
    cdef PqEntry e
    e.k1 = h0; e.k2 = 0; e.k3 = 0; e.k4 = 0; e.node = 0; e.dc = 0; e.exact = False
    anchor.push(e)
    if focal:
        e.k1 = 0; e.k2 = h0; e.k3 = 0; e.k4 = 0
        focal_heap.push(e)
    cdef long long fmin = h0
    cdef long long expanded = 0

    seen.insert((<long long>0 * ncells + start) * (nlegs + 1) + 0)

    cdef long long f, t, t1, rem, exact_f, exact_dc, dc_pop, vkey, ekey, skey, hh
    cdef int node, child, cell, label, dc, dc0, move, y, r
    cdef bint exact
    cdef vector[int] scratch_tail

    while True:
        dc_pop = 0
        if focal:
            # Refresh: update fmin from the anchor and admit newly-bounded
            # nodes.  Drop closed nodes and the stale (pre-requeue) entries of
            # nodes that were re-queued at their exact completion cost.
            while not anchor.empty() and (
                closed[anchor.top().node]
                or (requeued[anchor.top().node] and not anchor.top().exact)
            ):
                anchor.pop()
            if not anchor.empty() and anchor.top().k1 > fmin:
                fmin = anchor.top().k1
            while not deferred.empty() and <double>deferred.top().k1 <= focal_w * <double>fmin:
                e = deferred.top()
                deferred.pop()
                # deferred key (f, -g, ctr) -> focal key (dc, f, -g, ctr)
                e.k4 = e.k3; e.k3 = e.k2; e.k2 = e.k1; e.k1 = e.dc
                focal_heap.push(e)
            if focal_heap.empty():
                return None
            e = focal_heap.top()
            focal_heap.pop()
            dc_pop = e.k1
            f = e.k2
            node = e.node
            exact = e.exact
        else:
            if anchor.empty():
                return None
            e = anchor.top()
            anchor.pop()
            f = e.k1
            node = e.node
            exact = e.exact
            if f > fmin:
                fmin = f
        if closed[node]:
            continue

        cell = n_cell[node]
        t = n_time[node]
        label = n_label[node]
        if label < nlegs and cell == goals[label]:
            label += 1  # visit the current goal: at most one per pop

        if exact:
            return (
                _reconstruct(neighbors, red_tables, goals, nlegs, final_goal,
                             min_end_time, focal, sv, se, soft_rest, ncells,
                             n_cell, n_parent, node, cell, t, label),
                fmin,
                expanded,
            )

        if label >= nlegs and cell == final_goal and t >= min_end_time:
            closed[node] = 1
            return (
                _reconstruct(neighbors, red_tables, goals, nlegs, final_goal,
                             min_end_time, focal, sv, se, soft_rest, ncells,
                             n_cell, n_parent, node, cell, t, label),
                fmin,
                expanded,
            )

        if t >= t_shortcut:
            if requeued[node]:
                continue
            rem = _static_remaining(red_tables, red_suffix, nlegs, final_goal,
                                    min_end_time, cell, label, t)
            if rem >= C_UNREACHABLE:
                closed[node] = 1
                continue
            exact_f = t + rem
            exact_dc = 0
            if focal:
                scratch_tail.clear()
                exact_dc = n_dc[node] + _complete_tail(
                    neighbors, red_tables, goals, nlegs, final_goal, min_end_time,
                    focal, sv, se, soft_rest, ncells, cell, t, label, scratch_tail)
            if exact_f <= f and exact_dc <= dc_pop:
                closed[node] = 1
                if not focal and exact_f < fmin:
                    fmin = exact_f  # the completion is optimal, so tighten the bound
                return (
                    _reconstruct(neighbors, red_tables, goals, nlegs, final_goal,
                                 min_end_time, focal, sv, se, soft_rest, ncells,
                                 n_cell, n_parent, node, cell, t, label),
                    fmin,
                    expanded,
                )
            # The exact completion is dearer (in cost or collisions) than this
            # node advertised: re-queue it at its exact values.
            requeued[node] = 1
            push_ctr += 1
            e.k1 = exact_f; e.k2 = -t; e.k3 = push_ctr; e.k4 = 0
            e.node = node; e.dc = <int>exact_dc; e.exact = True
            anchor.push(e)
            if focal:
                if <double>exact_f <= focal_w * <double>fmin:
                    e.k1 = exact_dc; e.k2 = exact_f; e.k3 = -t; e.k4 = push_ctr
                    focal_heap.push(e)
                else:
                    deferred.push(e)
            continue

        closed[node] = 1
        expanded += 1
        t1 = t + 1
        if t1 > depth_cap:
            continue
        dc0 = n_dc[node]
        for move in range(5):
            y = cell if move == 4 else neighbors[cell, move]
            if y < 0:
                continue
            r = rest_from[y]
            if 0 <= r <= t1:
                continue
            vkey = t1 * ncells + y
            if vset.count(vkey):
                continue
            if move != 4:
                ekey = vkey * ncells + cell
                if eset.count(ekey):
                    continue
            skey = vkey * (nlegs + 1) + label
            if seen.count(skey):
                continue
            hh = _heuristic(leg_tables, h_suffix, nlegs, min_end_time, y, label, t1)
            if hh >= C_UNREACHABLE:
                continue
            seen.insert(skey)
            dc = dc0
            if focal:
                if sv.count(vkey):
                    dc += sv[vkey]
                r = soft_rest[y]
                if 0 <= r < t1:
                    dc += 1
                if move != 4 and se.count(ekey):
                    dc += se[ekey]
            n_cell.push_back(y)
            n_time.push_back(<int>t1)
            n_label.push_back(label)
            n_parent.push_back(node)
            n_dc.push_back(dc)
            closed.push_back(0)
            requeued.push_back(0)
            child = <int>n_cell.size() - 1
            push_ctr += 1
            e.k1 = t1 + hh; e.k2 = -t1; e.k3 = push_ctr; e.k4 = 0
            e.node = child; e.dc = dc; e.exact = False
            anchor.push(e)
            if focal:
                if <double>(t1 + hh) <= focal_w * <double>fmin:
                    e.k1 = dc; e.k2 = t1 + hh; e.k3 = -t1; e.k4 = push_ctr
                    focal_heap.push(e)
                else:
                    deferred.push(e)


cdef list _reconstruct(
    const int[:, ::1] neighbors, const int[:, ::1] red_tables,
    const int[::1] goals, int nlegs, int final_goal, long long min_end_time,
    bint focal,
    unordered_map[long long, int]& sv, unordered_map[long long, int]& se,
    const int[::1] soft_rest, int ncells,
    vector[int]& n_cell, vector[int]& n_parent,
    int node, int tail_cell, long long tail_time, int tail_label,
):
    cdef list locs = []
    cdef int i = node
    while i >= 0:
        locs.append(n_cell[i])
        i = n_parent[i]
    locs.reverse()
    cdef vector[int] tail
    _complete_tail(neighbors, red_tables, goals, nlegs, final_goal, min_end_time,
                   focal, sv, se, soft_rest, ncells,
                   tail_cell, tail_time, tail_label, tail)
    cdef size_t j
    for j in range(tail.size()):
        locs.append(tail[j])
    return locs


def scan_pairs(const int[:, ::1] pos, int ncells):
    """Unordered conflicting agent pairs over a padded position matrix
    (one row per agent, one column per timestep), sorted, each pair once.

    A pair conflicts if the agents share a cell at some timestep (vertex)
    or traverse the same edge in opposite directions (swap)."""
    cdef Py_ssize_t m = pos.shape[0]
    cdef Py_ssize_t horizon = pos.shape[1]
    cdef unordered_map[long long, int] seen
    cdef unordered_map[long long, int] moves
    cdef vector[long long] hits   # encoded i * m + j
    cdef Py_ssize_t t, i, j, k
    cdef int frm, to
    cdef long long c, key
    with nogil:
        for t in range(horizon):
            seen.clear()
            for i in range(m):
                c = pos[i, t]
                if seen.count(c):
                    # pair the latecomer with every earlier occupant
                    for k in range(i):
                        if pos[k, t] == c:
                            hits.push_back(k * m + i)
                else:
                    seen[c] = <int>i
            if t == 0:
                continue
            moves.clear()
            for j in range(m):
                frm = pos[j, t - 1]
                to = pos[j, t]
                if frm == to:
                    continue
                key = (<long long>to) * ncells + frm
                if moves.count(key):
                    hits.push_back((<long long>moves[key]) * m + j)
                moves[(<long long>frm) * ncells + to] = <int>j
    out = set()
    for k in range(<Py_ssize_t>hits.size()):
        key = hits[k]
        out.add((int(key // m), int(key % m)))
    return sorted(out)


def first_conflict(const int[:, ::1] pos, int ncells):
    """Earliest conflict in a padded position matrix, or None.

    Returns (t, i, j, kind, a, b) with kind 1 = vertex (a = b = shared
    cell) or kind 0 = edge (a, b = agent i's move source and destination).
    Ties at a timestep resolve to the smallest (i, j), edges first."""
    cdef Py_ssize_t m = pos.shape[0]
    cdef Py_ssize_t horizon = pos.shape[1]
    cdef unordered_map[long long, int] seen
    cdef unordered_map[long long, int] moves
    cdef Py_ssize_t t = 0, i, j, k
    cdef int frm, to, partner
    cdef long long c, key
    cdef int bi, bj, bkind, ba, bb
    cdef bint found = False
    with nogil:
        for t in range(horizon):
            bi = bj = bkind = ba = bb = -1
            for i in range(m):
                c = pos[i, t]
                if seen.count(c):
                    for k in range(i):
                        if pos[k, t] == c:
                            if bi < 0 or (k < bi or (k == bi and (i < bj or (i == bj and 1 < bkind)))):
                                bi = <int>k; bj = <int>i; bkind = 1
                                ba = <int>c; bb = <int>c
                            break  # the smallest partner for this latecomer
                else:
                    seen[c] = <int>i
            if t:
                moves.clear()
                for j in range(m):
                    frm = pos[j, t - 1]
                    to = pos[j, t]
                    if frm == to:
                        continue
                    key = (<long long>to) * ncells + frm
                    if moves.count(key):
                        partner = moves[key]
                        if bi < 0 or (partner < bi or (partner == bi and (<int>j < bj or (<int>j == bj and 0 < bkind)))):
                            bi = partner; bj = <int>j; bkind = 0
                            ba = to; bb = frm
                    moves[(<long long>frm) * ncells + to] = <int>j
            seen.clear()
            if bi >= 0:
                found = True
                break
    if not found:
        return None
    return int(t), int(bi), int(bj), int(bkind), int(ba), int(bb)
