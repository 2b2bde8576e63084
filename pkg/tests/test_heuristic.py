import itertools
from dataclasses import replace

import numpy as np
import pytest

from errors import ConfigurationError
from heuristic import Heuristic, build_cost_to_go, query_dp, query_mb, query_zero
from obstacles import SpeedLimitZone
from spacetime import GridSpec
from vehicle import RoadProfile, cost_trans, resistive_force

SMALL_GRID = GridSpec(dv=1.0, ds_grid=10.0, ds_exp=10.0, n_lanes=1, v_max=6.0)
STEPS = 6
GOAL = STEPS * SMALL_GRID.ds_grid


def random_corridor(rng):
    s = np.arange(STEPS) * SMALL_GRID.ds_grid
    return RoadProfile(s, rng.uniform(-0.05, 0.05, STEPS), np.full(STEPS, np.inf))


def enumerate_optimum(vp, profile, gs, zones=()):
    """Cheapest grid velocity sequence from every (row, v) to the goal, by listing all of them."""
    v_axis = np.arange(gs.n_v) * gs.dv
    s_axis = np.arange(STEPS + 1) * gs.ds_grid
    feasible = np.ones((STEPS + 1, gs.n_v), dtype=bool)
    for z in zones:
        rows = (s_axis >= z.s_k) & (s_axis <= z.s_end)
        feasible[rows] &= v_axis < z.v_limit

    edges = []
    for i in range(STEPS):
        slope = float(profile.slope_at(s_axis[i]))
        c = np.full((gs.n_v, gs.n_v), np.inf)
        for j, v_j in enumerate(v_axis):
            for k, v_k in enumerate(v_axis):
                v_mean = 0.5 * (v_j + v_k)
                if v_mean <= 0:
                    continue
                dt = gs.ds_grid / v_mean
                a = (v_k - v_j) / dt
                if vp.a_min - 1e-9 <= a <= vp.a_max + 1e-9 and feasible[i + 1, k]:
                    c[j, k] = cost_trans(vp, float(v_j), float(v_k), dt, slope)
        edges.append(c)

    best = np.full((STEPS + 1, gs.n_v), np.inf)
    best[STEPS] = np.where(feasible[STEPS], 0.0, np.inf)
    for i in range(STEPS):
        n = STEPS - i
        seqs = np.array(list(itertools.product(range(gs.n_v), repeat=n)))
        for j in range(gs.n_v):
            if not feasible[i, j]:
                continue
            cost = edges[i][j, seqs[:, 0]]
            for step in range(1, n):
                cost = cost + edges[i + step][seqs[:, step - 1], seqs[:, step]]
            best[i, j] = cost.min()
    return best


def test_goal_row_is_zero_on_terminal_set(vp, flat, gs):
    cmap = build_cost_to_go(vp, flat, gs, 200.0, terminal_v_set=(10.0, 11.0))
    assert cmap.values[-1, 10] == 0.0 and cmap.values[-1, 11] == 0.0
    assert np.isinf(cmap.values[-1, 5])
    assert np.all(cmap.values[np.isfinite(cmap.values)] >= 0.0)


def test_goal_must_lie_on_grid(vp, flat, gs):
    with pytest.raises(ConfigurationError):
        build_cost_to_go(vp, flat, gs, 205.0)
    with pytest.raises(ConfigurationError):
        build_cost_to_go(vp, flat, gs, 200.0, terminal_v_set=(10.5,))


def test_unreachable_terminal_set_gives_infinite_map(vp, gs):
    slow_road = RoadProfile([0.0], [0.0], [8.0])
    cmap = build_cost_to_go(vp, slow_road, gs, 100.0, terminal_v_set=(12.0,))
    assert np.isinf(cmap.values).all()


def test_queries_at_and_past_goal(vp, flat, gs):
    cmap = build_cost_to_go(vp, flat, gs, 200.0)
    assert query_dp(cmap, 250.0, 10.0) == 0.0
    assert query_dp(cmap, 195.0, 10.0) == 0.0
    assert query_dp(cmap, 100.0, 10.0) == pytest.approx(cmap.values[10, 10])
    # off-grid s takes the next row
    assert query_dp(cmap, 95.0, 10.0) == pytest.approx(cmap.values[10, 10])
    assert query_zero(0.0, 10.0) == 0.0


def test_cruise_is_an_upper_bound(vp, flat, gs):
    cmap = build_cost_to_go(vp, flat, gs, 300.0)
    v = 5.0
    for s in cmap.s_axis:
        cruise = resistive_force(vp, v, 0.0) * (300.0 - s) / vp.eta_drive
        assert query_dp(cmap, s, v) <= cruise * (1 + 1e-9) + 1e-6


def test_monotone_in_distance(vp, flat, gs):
    cmap = build_cost_to_go(vp, flat, gs, 300.0)
    diffs = np.diff(cmap.values, axis=0)
    finite = np.isfinite(diffs)
    assert np.all(diffs[finite] <= 1e-9)


def test_map_is_deterministic(vp, gs, rng):
    profile = RoadProfile([0.0, 50.0, 120.0], [0.0, 0.03, -0.02], [np.inf, 14.0, np.inf])
    a = build_cost_to_go(vp, profile, gs, 200.0)
    b = build_cost_to_go(vp, profile, gs, 200.0)
    assert np.array_equal(a.values, b.values)
    assert len(list(a.to_rows())) == a.values.size


@pytest.mark.parametrize("corridor", range(5))
def test_dp_and_mb_are_admissible(vp, corridor):
    rng = np.random.default_rng(100 + corridor)
    vp0 = replace(vp, eta_regen=0.0)
    profile = random_corridor(rng)
    cmap = build_cost_to_go(vp0, profile, SMALL_GRID, GOAL)
    optimum = enumerate_optimum(vp0, profile, SMALL_GRID)
    mb = Heuristic("mb", cmap, vp0, profile)
    for i, s in enumerate(cmap.s_axis):
        for j, v in enumerate(cmap.v_axis):
            dp_value = query_dp(cmap, s, v)
            assert dp_value <= optimum[i, j] + 1e-6 * max(1.0, abs(optimum[i, j]))
            if np.isfinite(optimum[i, j]):
                assert dp_value == pytest.approx(optimum[i, j], rel=1e-9)
            assert mb(s, v) <= dp_value + 1e-6
            assert query_mb(vp0, profile, s, v, GOAL, ds_grid=SMALL_GRID.ds_grid) <= dp_value + 1e-6


def test_zone_matches_enumeration(vp):
    vp0 = replace(vp, eta_regen=0.0)
    profile = RoadProfile.flat()
    zone = SpeedLimitZone(s_k=20.0, ds_k=20.0, v_limit=3.0)
    cmap = build_cost_to_go(vp0, profile, SMALL_GRID, GOAL, zones=(zone,))
    optimum = enumerate_optimum(vp0, profile, SMALL_GRID, zones=(zone,))
    np.testing.assert_allclose(cmap.values, optimum, rtol=1e-9)
    # rows 20, 30 and 40 lie in the zone: v_limit and above are ruled out there only
    assert np.all(np.isinf(cmap.values[2:5, 3:]))
    assert np.all(np.isfinite(cmap.values[2:5, :3]))
    assert np.all(np.isfinite(cmap.values[[0, 1, 5], :]))


def test_mb_below_dp_on_full_grid(vp, gs):
    profile = RoadProfile([0.0, 100.0, 200.0], [0.0, 0.04, -0.03], [np.inf, np.inf, np.inf])
    cmap = build_cost_to_go(vp, profile, gs, 300.0, terminal_v_set=tuple(float(v) for v in range(8, 21)))
    mb = Heuristic("mb", cmap, vp, profile)
    for s in cmap.s_axis:
        for v in cmap.v_axis:
            assert 0.0 <= mb(s, v) <= query_dp(cmap, s, v) + 1e-6


def test_heuristic_kinds(vp, flat, gs):
    cmap = build_cost_to_go(vp, flat, gs, 200.0)
    assert Heuristic("zero", cmap)(50.0, 10.0) == 0.0
    assert Heuristic("dp", cmap)(50.0, 10.0) == query_dp(cmap, 50.0, 10.0)
    assert Heuristic("zero", cmap).terminal(50.0, 10.0) == query_dp(cmap, 50.0, 10.0)
    with pytest.raises(ConfigurationError):
        Heuristic("mb", cmap)
    with pytest.raises(ConfigurationError):
        Heuristic("astar", cmap)
