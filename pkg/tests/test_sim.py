"""Tests for the warehouse simulation layer: assigners, placement, and the
episode loop's bookkeeping."""

from __future__ import annotations

from importlib import resources

import numpy as np
import pytest

from lifelong_mapf import (
    AgentState,
    AlternatingStationAssigner,
    DistanceTables,
    HorizonConfig,
    Location,
    Role,
    ScriptedAssigner,
    SimulationConfig,
    UniformRandomAssigner,
    audit_history,
    fulfillment_assigner,
    load_map,
    run_simulation,
    sorting_assigner,
)
from lifelong_mapf.sim import resolve_scenario, start_cells

OPEN_5X5 = load_map("5 5\n" + ".....\n" * 5)
LINE = load_map("1 6\n......\n")
# Two work stations up top, three drop endpoints along the bottom.
SORT_FLOOR = load_map("3 5\nW...W\n.....\nE.E.E\n")


def fixture_text(name: str) -> str:
    return (resources.files("lifelong_mapf") / "maps" / name).read_text()


WAREHOUSE = load_map(fixture_text("fulfillment_33x46.map"), name="fulfillment_33x46.map")


def _agent(i: int = 0, loc: tuple[int, int] = (0, 0)) -> AgentState:
    return AgentState(i, Location(*loc), [])


# ---------------------------------------------------------------------------
# assigners


def test_scripted_assigner_pops_in_order_then_dries():
    src = ScriptedAssigner({0: [Location(0, 1), Location(0, 2)]})
    a = _agent(0)
    assert src.next_goal(a) == (0, 1)
    assert src.next_goal(a) == (0, 2)
    assert src.next_goal(a) is None
    assert src.next_goal(a) is None


def test_scripted_assigner_unknown_agent_gets_nothing():
    src = ScriptedAssigner({0: [Location(0, 1)]})
    assert src.next_goal(_agent(3)) is None
    # and asking for agent 3 must not consume agent 0's stream
    assert src.next_goal(_agent(0)) == (0, 1)


def test_uniform_assigner_rejects_empty_pool():
    with pytest.raises(ValueError):
        UniformRandomAssigner([], np.random.default_rng(0))


def test_uniform_assigner_is_deterministic_per_seed():
    cells = OPEN_5X5.passable_cells()
    a = UniformRandomAssigner(cells, np.random.default_rng(7))
    b = UniformRandomAssigner(cells, np.random.default_rng(7))
    c = UniformRandomAssigner(cells, np.random.default_rng(8))
    agent = _agent()
    draws_a = [a.next_goal(agent) for _ in range(50)]
    draws_b = [b.next_goal(agent) for _ in range(50)]
    draws_c = [c.next_goal(agent) for _ in range(50)]
    assert draws_a == draws_b
    assert draws_a != draws_c


def test_fulfillment_goals_come_from_endpoint_cells():
    src = fulfillment_assigner(WAREHOUSE, 3)
    endpoints = set(WAREHOUSE.cells_with_role(Role.ENDPOINT))
    agent = _agent()
    assert all(src.next_goal(agent) in endpoints for _ in range(200))


def test_fulfillment_draws_are_uniform_over_endpoints():
    # 10,000 draws over k endpoints: every per-cell count must sit within
    # five binomial standard deviations of the uniform expectation n/k.
    src = fulfillment_assigner(WAREHOUSE, 42)
    k = len(WAREHOUSE.cells_with_role(Role.ENDPOINT))
    n = 10_000
    agent = _agent()
    counts: dict[Location, int] = {}
    for _ in range(n):
        g = src.next_goal(agent)
        counts[g] = counts.get(g, 0) + 1
    expected = n / k
    sigma = (n * (1 / k) * (1 - 1 / k)) ** 0.5
    worst = max(abs(c - expected) for c in counts.values())
    assert len(counts) == k, "some endpoint was never drawn"
    assert worst <= 5 * sigma, f"count off by {worst:.1f} (5 sigma = {5 * sigma:.1f})"


def test_sorting_assigner_alternates_station_then_drop():
    src = sorting_assigner(SORT_FLOOR, DistanceTables(SORT_FLOOR), 0)
    stations = set(SORT_FLOOR.cells_with_role(Role.WORK_STATION))
    drops = set(SORT_FLOOR.cells_with_role(Role.ENDPOINT))
    agent = _agent(0, (1, 1))
    for round_trip in range(5):
        assert src.next_goal(agent) in stations, f"round {round_trip}"
        assert src.next_goal(agent) in drops, f"round {round_trip}"


def test_sorting_assigner_picks_nearest_station():
    src = sorting_assigner(SORT_FLOOR, DistanceTables(SORT_FLOOR), 0)
    assert src.next_goal(_agent(0, (1, 4))) == (0, 4)
    assert src.next_goal(_agent(1, (1, 0))) == (0, 0)


def test_sorting_assigner_breaks_station_ties_by_cell_index():
    # (1, 2) is distance 3 from both stations; the lower flat index wins.
    src = sorting_assigner(SORT_FLOOR, DistanceTables(SORT_FLOOR), 0)
    assert src.next_goal(_agent(0, (1, 2))) == (0, 0)


def test_sorting_assigner_tracks_each_agent_separately():
    src = sorting_assigner(SORT_FLOOR, DistanceTables(SORT_FLOOR), 0)
    stations = set(SORT_FLOOR.cells_with_role(Role.WORK_STATION))
    first = _agent(0, (1, 0))
    second = _agent(1, (1, 4))
    assert src.next_goal(first) in stations
    # agent 0 now wants a drop, but agent 1 still starts with a station
    assert src.next_goal(second) in stations


def test_sorting_assigner_drop_draws_are_deterministic_per_seed():
    tables = DistanceTables(SORT_FLOOR)
    agent = _agent(0, (1, 2))

    def drops(seed):
        src = sorting_assigner(SORT_FLOOR, tables, seed)
        out = []
        for _ in range(20):
            src.next_goal(agent)          # station, deterministic anyway
            out.append(src.next_goal(agent))
        return out

    assert drops(5) == drops(5)
    assert drops(5) != drops(6)


def test_sorting_assigner_requires_stations_and_drops():
    no_stations = load_map("1 3\nE.E\n")
    with pytest.raises(ValueError):
        AlternatingStationAssigner(no_stations, DistanceTables(no_stations), np.random.default_rng(0))
    no_drops = load_map("1 3\nW.W\n")
    with pytest.raises(ValueError):
        AlternatingStationAssigner(no_drops, DistanceTables(no_drops), np.random.default_rng(0))


# ---------------------------------------------------------------------------
# scenario resolution and placement


def test_scenario_inferred_from_cell_roles():
    assert resolve_scenario(WAREHOUSE, "auto") == "fulfillment"
    assert resolve_scenario(SORT_FLOOR, "auto") == "sorting"
    assert resolve_scenario(OPEN_5X5, "auto") == "uniform"
    assert resolve_scenario(OPEN_5X5, "sorting") == "sorting"  # explicit wins


def test_start_cells_follow_the_scenario_rules():
    loading = start_cells(WAREHOUSE, "fulfillment")
    assert loading and all(WAREHOUSE.role_at(c) == Role.LOADING for c in loading)
    plain = start_cells(SORT_FLOOR, "sorting")
    assert plain and all(SORT_FLOOR.role_at(c) == Role.NONE for c in plain)
    assert start_cells(OPEN_5X5, "uniform") == OPEN_5X5.passable_cells()


def test_fulfillment_agents_start_on_distinct_loading_cells():
    cfg = SimulationConfig(
        WAREHOUSE, 10, HorizonConfig(w=5, h=5), solver="pbs", timesteps=5, seed=2
    )
    res = run_simulation(cfg)
    starts = [trail[0] for trail in res.history]
    assert len(set(starts)) == 10
    assert all(WAREHOUSE.role_at(s) == Role.LOADING for s in starts)


def test_explicit_starts_are_honoured_and_validated():
    cfg = SimulationConfig(OPEN_5X5, 2, HorizonConfig(w=4, h=2), timesteps=6, seed=0)
    res = run_simulation(cfg, starts=[(0, 0), (4, 4)])
    assert [trail[0] for trail in res.history] == [(0, 0), (4, 4)]
    with pytest.raises(ValueError):
        run_simulation(cfg, starts=[(0, 0)])  # one start for two agents


# ---------------------------------------------------------------------------
# history audit


def test_audit_passes_clean_histories():
    assert audit_history([]) == []
    assert audit_history([[(0, 0), (0, 1)], [(1, 0), (1, 1)]]) == []


def test_audit_reports_vertex_collision():
    hist = [[(0, 0), (0, 1)], [(0, 2), (0, 1)]]
    assert audit_history(hist) == [("vertex", 0, 1, (0, 1), 1)]


def test_audit_reports_edge_swap():
    hist = [[(0, 0), (0, 1)], [(0, 1), (0, 0)]]
    assert audit_history(hist) == [("edge", 0, 1, (0, 1), (0, 0), 1)]


def test_audit_pads_short_histories_with_rest():
    # agent 0 stops at (0, 1); agent 1 drives into it two steps later
    hist = [[(0, 0), (0, 1)], [(0, 3), (0, 2), (0, 1)]]
    assert audit_history(hist) == [("vertex", 0, 1, (0, 1), 2)]


def test_audit_reports_every_pair_in_a_pileup():
    hist = [[(0, 0)], [(0, 0)], [(0, 0)]]
    pairs = {(v[1], v[2]) for v in audit_history(hist)}
    assert pairs == {(0, 1), (0, 2), (1, 2)}


# ---------------------------------------------------------------------------
# run_simulation bookkeeping


def test_zero_agents_means_zero_episodes():
    cfg = SimulationConfig(OPEN_5X5, 0, HorizonConfig(w=4, h=2), timesteps=50, seed=0)
    res = run_simulation(cfg)
    assert res.episodes == 0
    assert res.completed == 0
    assert res.throughput == 0.0
    assert res.history == []
    assert not res.failed


def test_single_agent_zigzag_matches_hand_count():
    # One agent shuttling the full length of a 6-cell corridor: goals fall
    # at timesteps 5, 10, and 15, after which the stream dries up and the
    # agent parks where it stands.
    cfg = SimulationConfig(
        LINE, 1, HorizonConfig(w=2, h=2), solver="pbs", timesteps=20, seed=0
    )
    script = ScriptedAssigner({0: [Location(0, 5), Location(0, 0), Location(0, 5)]})
    res = run_simulation(cfg, assigner=script, starts=[(0, 0)])
    assert res.completions == [(5, 0), (10, 0), (15, 0)]
    assert res.completed == 3
    assert res.throughput == 3 / 20
    assert res.episodes == 10
    assert not res.failed
    # once the stream dries the agent idles on stand-in goals, which retire
    # without counting; by the end its queue is empty again
    assert res.agents[0].goals == []
    assert res.agents[0].completed == 3
    assert res.agents[0].location == (0, 5)
    assert len(res.history[0]) == 21
    assert res.w_used == [2] * 10


def test_single_agent_run_matches_independent_replay():
    """Replay the run from the outside: replicate the seed's placement and
    goal draws, then walk the committed history retiring goals by hand.  Uses
    only Manhattan distances, so it cross-checks the planner's bookkeeping
    without sharing any of its code."""
    cfg = SimulationConfig(
        OPEN_5X5, 1, HorizonConfig(w=10, h=5), solver="pbs", timesteps=100, seed=11
    )
    res = run_simulation(cfg)
    assert not res.failed

    place_ss, assign_ss, _ = np.random.SeedSequence(11).spawn(3)
    cells = OPEN_5X5.passable_cells()
    pick = np.random.default_rng(place_ss).choice(len(cells), size=1, replace=False)
    assert res.history[0][0] == cells[int(pick[0])]

    trail = res.history[0]
    assert len(trail) == 101
    for a, b in zip(trail, trail[1:]):
        assert abs(a[0] - b[0]) + abs(a[1] - b[1]) <= 1, "illegal move"

    def manhattan(a, b):
        return abs(a[0] - b[0]) + abs(a[1] - b[1])

    rng = np.random.default_rng(assign_ss)
    queue: list[Location] = []
    replayed: list[tuple[int, int]] = []
    now = 0
    while now < 100:
        step = min(5, 100 - now)
        total, prev = 0, trail[now]
        while True:
            total, prev = 0, trail[now]
            for g in queue:
                total += manhattan(prev, g)
                prev = g
            if total >= 5:
                break
            queue.append(cells[int(rng.integers(len(cells)))])
        for rel in range(0, step + 1):
            if queue and trail[now + rel] == queue[0]:
                replayed.append((now + rel, 0))
                queue.pop(0)
        now += step

    assert res.completions == replayed
    assert res.completed == len(replayed)


def test_throughput_is_exactly_completed_over_budget():
    cfg = SimulationConfig(
        OPEN_5X5, 3, HorizonConfig(w=6, h=3), solver="pbs", timesteps=30, seed=4
    )
    res = run_simulation(cfg)
    assert res.throughput == res.completed / cfg.timesteps
    assert res.completed == len(res.completions)
    assert res.completed == sum(a.completed for a in res.agents)
    assert all(0 <= t <= cfg.timesteps for t, _ in res.completions)


def test_same_seed_reproduces_the_run_exactly():
    cfg = SimulationConfig(
        OPEN_5X5, 4, HorizonConfig(w=6, h=3), solver="pbs", timesteps=30, seed=5
    )
    first, second = run_simulation(cfg), run_simulation(cfg)
    assert first.history == second.history
    assert first.completions == second.completions
    assert first.w_used == second.w_used
    assert first.throughput == second.throughput


def test_changing_solver_leaves_placement_alone():
    runs = {}
    for solver in ("pbs", "castar"):
        cfg = SimulationConfig(
            WAREHOUSE, 6, HorizonConfig(w=5, h=5), solver=solver, timesteps=5, seed=9
        )
        runs[solver] = run_simulation(cfg)
    starts = {name: [trail[0] for trail in r.history] for name, r in runs.items()}
    assert starts["pbs"] == starts["castar"]


def test_final_partial_episode_commits_the_remainder():
    cfg = SimulationConfig(
        OPEN_5X5, 2, HorizonConfig(w=4, h=3), solver="pbs", timesteps=7, seed=1
    )
    res = run_simulation(cfg)
    assert not res.failed
    assert res.episodes == 3  # 3 + 3 + 1
    assert all(len(trail) == 8 for trail in res.history)
    assert len(res.runtimes) == 3
    assert len(res.w_used) == 3


def test_solver_failure_flags_partial_result():
    # A hopeless time budget: the solver trips its deadline check on the
    # first episode and the run reports a flagged, empty partial result.
    cfg = SimulationConfig(
        OPEN_5X5, 3, HorizonConfig(w=4, h=2), solver="cbs",
        timesteps=20, seed=0, time_limit=1e-9,
    )
    res = run_simulation(cfg)
    assert res.failed
    assert res.episodes == 0
    assert res.completed == 0
    assert res.throughput == 0.0
    assert res.runtimes == []
    assert all(len(trail) == 1 for trail in res.history)


def test_runtime_statistics_cover_each_episode():
    cfg = SimulationConfig(
        OPEN_5X5, 2, HorizonConfig(w=4, h=2), solver="pbs", timesteps=10, seed=3
    )
    res = run_simulation(cfg)
    assert len(res.runtimes) == res.episodes == 5
    assert all(r >= 0 for r in res.runtimes)
    assert res.mean_runtime_s == pytest.approx(sum(res.runtimes) / 5)
    empty = SimulationConfig(OPEN_5X5, 0, HorizonConfig(w=4, h=2), timesteps=10)
    blank = run_simulation(empty)
    assert blank.mean_runtime_s == 0.0
    assert blank.std_runtime_s == 0.0


# ---------------------------------------------------------------------------
# configuration validation


@pytest.mark.parametrize(
    "kwargs",
    [
        {"solver": "dijkstra"},
        {"scenario": "museum"},
        {"m": -1},
        {"timesteps": 0},
        {"subopt": 0.9},
        {"time_limit": 0.0},
        {"m": 26},  # only 25 passable cells
    ],
)
def test_config_rejects_bad_values(kwargs):
    base = dict(grid=OPEN_5X5, m=2, horizon=HorizonConfig(w=4, h=2))
    base.update(kwargs)
    with pytest.raises(ValueError):
        SimulationConfig(**base)


def test_config_counts_starts_for_the_scenario():
    # the warehouse floor has far fewer loading cells than passable cells;
    # placement must respect the scenario-specific pool
    loading = len(WAREHOUSE.cells_with_role(Role.LOADING))
    with pytest.raises(ValueError):
        SimulationConfig(WAREHOUSE, loading + 1, HorizonConfig(w=5, h=5))
    SimulationConfig(WAREHOUSE, loading, HorizonConfig(w=5, h=5))  # fits exactly
