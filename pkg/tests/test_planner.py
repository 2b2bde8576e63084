from dataclasses import replace

import numpy as np
import pytest

from conftest import sample
from errors import ConfigurationError, DomainError, StartInCollisionError
from heuristic import Heuristic, build_cost_to_go, query_dp
from obstacles import (
    ObstacleSet,
    PredictionConfig,
    SpeedLimitZone,
    TrafficLightObstacle,
    VehicleObstacle,
    check_all,
    check_traffic_light,
    check_vehicle_collision,
)
from planner import (
    PlannerConfig,
    Termination,
    _Search,
    closer_to_horizons,
    farther_along,
    horizon_progress,
    plan,
)
from spacetime import EgoState, GridSpec, LaneDir, SearchNode
from vehicle import RoadProfile, cost_trans

ONE_LANE = GridSpec(n_lanes=1)


def dp_heuristic(vp, profile, gs, goal=200.0, zones=()):
    return Heuristic("dp", build_cost_to_go(vp, profile, gs, goal, zones=zones))


# --- optimality against the uninformed search ------------------------------------------

ORACLE_GRID = GridSpec(dv=2.0, ds_grid=10.0, dt_grid=1.0, ds_exp=10.0, dt_exp=10.0, n_lanes=1, v_max=10.0)
ORACLE_GOAL = 100.0


def oracle_scenario(rng):
    s = np.arange(10) * 10.0
    profile = RoadProfile(s, rng.uniform(-0.03, 0.03, 10), np.full(10, np.inf))
    zone = SpeedLimitZone(
        s_k=10.0 * rng.integers(1, 6), ds_k=10.0 * rng.integers(1, 4), v_limit=float(rng.choice([5.0, 7.0, 9.0]))
    )
    v0 = float(rng.choice([4.0, 6.0, 8.0]))
    return profile, zone, EgoState(0.0, 0.0, 1.0, v0)


def test_dp_guided_search_matches_uninformed_search(vp, rc):
    vp0 = replace(vp, eta_regen=0.0)
    # without the progress band every kind returns the cheapest horizon node
    cfg = PlannerConfig(S_hor=60.0, T_hor=30.0, timeout=60.0, progress_slack_rel=0.0, progress_slack_abs=0.0)
    pc = PredictionConfig(T_hor=40.0)
    strictly_fewer = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        profile, zone, start = oracle_scenario(rng)
        cmap = build_cost_to_go(
            vp0, profile, ORACLE_GRID, ORACLE_GOAL, terminal_v_set=(6.0, 8.0, 10.0), zones=(zone,)
        )
        obstacles = ObstacleSet(limits=(zone,))
        heuristics = (Heuristic("dp", cmap), Heuristic("mb", cmap, vp0, profile), Heuristic("zero", cmap))
        dp, mb, zero = (
            plan(start, obstacles, heuristic, cfg, ORACLE_GRID, vp0, rc, pc, profile) for heuristic in heuristics
        )
        assert dp.termination == mb.termination == zero.termination == Termination.HORIZON_REACHED
        assert dp.objective == pytest.approx(zero.objective, rel=1e-6)
        assert mb.objective == pytest.approx(zero.objective, rel=1e-6)
        assert dp.nodes_expanded <= mb.nodes_expanded <= zero.nodes_expanded
        strictly_fewer += dp.nodes_expanded < zero.nodes_expanded

        end = dp.trajectory.state_at(dp.trajectory.t_end)
        assert dp.objective == pytest.approx(dp.trajectory.total_cost + query_dp(cmap, end.s, end.v), rel=1e-9)
    assert strictly_fewer >= 18


# --- behaviour in front of obstacles ------------------------------------------------------

def test_blocked_road_holds_still(vp, rc, pc, flat):
    wreck = VehicleObstacle(s0=60.0, v0=0.0, lane=1.0, L_k=4.5, t0=0.0, name="wreck")
    start = EgoState(0.0, 52.0, 1.0, 0.0)
    result = plan(
        start, ObstacleSet(vehicles=(wreck,)), dp_heuristic(vp, flat, ONE_LANE),
        PlannerConfig(), ONE_LANE, vp, rc, pc, flat,
    )
    assert result.termination == Termination.HORIZON_REACHED
    assert not result.failed
    assert all(seg.v_start == 0.0 and seg.v_end == 0.0 for seg in result.trajectory)
    assert result.trajectory.state_at(result.trajectory.t_end).s < 52.5
    assert result.trajectory.t_end == pytest.approx(10.0)


def test_start_inside_obstacle_raises(vp, rc, pc, flat):
    wreck = VehicleObstacle(s0=60.0, v0=0.0, lane=1.0, L_k=4.5, t0=0.0)
    with pytest.raises(StartInCollisionError):
        plan(
            EgoState(0.0, 58.0, 1.0, 0.0), ObstacleSet(vehicles=(wreck,)), dp_heuristic(vp, flat, ONE_LANE),
            PlannerConfig(), ONE_LANE, vp, rc, pc, flat,
        )


def test_waits_at_red_light(vp, rc, pc, flat):
    light = TrafficLightObstacle(s_k=50.0, phases=((0.0, 30.0),), name="signal")
    result = plan(
        EgoState(0.0, 0.0, 1.0, 10.0), ObstacleSet(lights=(light,)), dp_heuristic(vp, flat, ONE_LANE),
        PlannerConfig(), ONE_LANE, vp, rc, pc, flat,
    )
    assert result.termination == Termination.HORIZON_REACHED
    assert all(not check_traffic_light(seg, light) for seg in result.trajectory)
    assert result.trajectory.state_at(result.trajectory.t_end).s <= 50.0


def test_no_expansion_falls_back_to_stop(vp, rc, pc, flat):
    light = TrafficLightObstacle(s_k=50.0, phases=((0.0, 30.0),))
    result = plan(
        EgoState(0.0, 45.0, 1.0, 10.0), ObstacleSet(lights=(light,)), dp_heuristic(vp, flat, ONE_LANE),
        PlannerConfig(), ONE_LANE, vp, rc, pc, flat,
    )
    assert result.failed
    assert result.termination == Termination.OPEN_EXHAUSTED
    assert result.nodes_expanded == 1
    end = result.trajectory.state_at(result.trajectory.t_end)
    assert end.v == 0.0
    assert end.t == pytest.approx(10.0)


def test_slow_leader_is_never_touched(vp, rc, pc, flat, gs):
    truck = VehicleObstacle(s0=30.0, v0=5.0, lane=1.0, L_k=12.0, t0=0.0, name="truck")
    result = plan(
        EgoState(0.0, 0.0, 1.0, 12.0), ObstacleSet(vehicles=(truck,)), dp_heuristic(vp, flat, gs),
        PlannerConfig(), gs, vp, rc, pc, flat,
    )
    assert not result.failed
    for seg in result.trajectory:
        assert not check_vehicle_collision(seg, truck, rc, pc)


def test_stopped_ego_drives_off_on_a_clear_road(vp, rc, pc, flat):
    cmap = build_cost_to_go(vp, flat, ONE_LANE, 750.0, terminal_v_set=tuple(float(v) for v in range(10, 21)))
    start = EgoState(50.0, 191.625, 1.0, 0.0)
    result = plan(
        start, ObstacleSet(), Heuristic("dp", cmap), PlannerConfig(timeout=60.0), ONE_LANE, vp, rc, pc, flat,
    )
    assert result.termination == Termination.HORIZON_REACHED
    assert not result.failed
    end = result.trajectory.state_at(result.trajectory.t_end)
    assert end.s > start.s + 10.0
    assert end.v > 0.0


def test_progress_band_trades_little_energy_for_distance(vp, rc, pc, flat):
    cmap = build_cost_to_go(vp, flat, ONE_LANE, 750.0, terminal_v_set=tuple(float(v) for v in range(10, 21)))
    start = EgoState(50.0, 191.625, 1.0, 0.0)
    cfg = PlannerConfig(timeout=60.0, progress_slack_rel=0.0, progress_slack_abs=0.0)
    cheapest = plan(start, ObstacleSet(), Heuristic("dp", cmap), cfg, ONE_LANE, vp, rc, pc, flat)
    band = plan(start, ObstacleSet(), Heuristic("dp", cmap), PlannerConfig(timeout=60.0), ONE_LANE, vp, rc, pc, flat)
    reach = [r.trajectory.state_at(r.trajectory.t_end).s for r in (cheapest, band)]
    assert reach[1] > reach[0]
    assert band.objective <= cheapest.objective + PlannerConfig().slack(cheapest.objective) + 1e-6


def test_lane_beyond_the_road_is_rejected(vp, rc, pc, flat):
    with pytest.raises(DomainError):
        plan(
            EgoState(0.0, 0.0, 2.0, 10.0), ObstacleSet(), dp_heuristic(vp, flat, ONE_LANE),
            PlannerConfig(), ONE_LANE, vp, rc, pc, flat,
        )


def random_traffic(rng, n_lanes=3):
    return tuple(
        VehicleObstacle(
            s0=float(rng.uniform(10.0, 150.0)), v0=float(rng.uniform(0.0, 14.0)),
            lane=int(rng.integers(1, n_lanes + 1)), L_k=float(rng.uniform(3.5, 6.0)), t0=0.0, name=f"car_{i}",
        )
        for i in range(int(rng.integers(3, 7)))
    )


def test_planned_segments_never_touch_a_vehicle(vp, rc, pc, gs, flat):
    heuristic = dp_heuristic(vp, flat, gs, goal=300.0)
    cfg = PlannerConfig(timeout=60.0, max_expansions=3000)
    checked = 0
    for seed in range(10):
        rng = np.random.default_rng(500 + seed)
        vehicles = random_traffic(rng)
        obstacles = ObstacleSet(vehicles=vehicles)
        start = EgoState(0.0, 0.0, float(rng.integers(1, 4)), float(rng.uniform(4.0, 14.0)))
        try:
            result = plan(start, obstacles, heuristic, cfg, gs, vp, rc, pc, flat)
        except StartInCollisionError:
            continue
        if result.failed:
            continue
        checked += 1
        for seg in result.trajectory:
            assert check_all(seg, obstacles, rc, pc).passed
            ts, s, l, _ = sample(seg, step=1e-2)
            for o in vehicles:
                half = 0.5 * o.L_k + 0.5 * rc.L_ego + np.where(ts < o.t0 + pc.T_rep, pc.ds_max, 3.0 * pc.ds_max)
                depth = np.minimum(half - np.abs(s - o.center(ts)), 1.0 - np.abs(l - o.lane))
                assert depth.max() < 1e-6, (seed, o.name, seg)
    assert checked >= 5


# --- search bookkeeping --------------------------------------------------------------------

def test_horizon_progress(gs):
    cfg = PlannerConfig(S_hor=100.0, T_hor=10.0)
    origin = EgoState(0.0, 0.0, 1.0, 10.0)
    half_way = SearchNode.from_state(EgoState(2.0, 50.0, 1.0, 10.0), gs)
    assert horizon_progress(half_way, origin, cfg, gs) == pytest.approx(0.5)
    assert horizon_progress(SearchNode.from_state(EgoState(4.0, 110.0, 1.0, 10.0), gs), origin, cfg, gs) == 1.0
    assert horizon_progress(SearchNode.from_state(EgoState(10.0, 20.0, 1.0, 0.0), gs), origin, cfg, gs) == 1.0


def test_closer_to_horizons():
    a = SearchNode(v_k=1, t_k=0, s_k=0, l_k=1, f=5.0)
    b = SearchNode(v_k=1, t_k=0, s_k=0, l_k=1, f=7.0)
    assert closer_to_horizons(b, 0.6, a, 0.5)
    assert closer_to_horizons(a, 0.5, b, 0.5)
    assert not closer_to_horizons(b, 0.5, a, 0.5)
    assert not closer_to_horizons(a, 0.4, b, 0.5)


@pytest.fixture
def search(vp, rc, pc, gs, flat):
    cmap = build_cost_to_go(vp, flat, gs, 200.0)
    return _Search(
        EgoState(0.0, 0.0, 1.0, 10.0), ObstacleSet(), Heuristic("dp", cmap), PlannerConfig(), gs, vp, rc, pc, flat
    )


def test_lane_options_at_road_edges(search):
    right_lane = SearchNode(v_k=10, t_k=0, s_k=0, l_k=1)
    lanes = [(l, d) for l, d, _ in search.lateral_variants(right_lane, 1.0)]
    assert lanes == [(1.0, LaneDir.NONE), (1.25, LaneDir.LEFT)]

    left_lane = SearchNode(v_k=10, t_k=0, s_k=0, l_k=3)
    lanes = [(l, d) for l, d, _ in search.lateral_variants(left_lane, 1.0)]
    assert lanes == [(3.0, LaneDir.NONE), (2.75, LaneDir.RIGHT)]


def test_lane_change_in_progress_only_continues(search):
    node = SearchNode(v_k=10, t_k=0, s_k=0, l_k=1, l_r=0.5, l_dir=LaneDir.LEFT)
    assert search.lateral_variants(node, 1.0) == [(1.75, LaneDir.LEFT, False)]
    assert search.lateral_variants(node, 3.0) == [(2.0, LaneDir.NONE, False)]

    node = SearchNode(v_k=10, t_k=0, s_k=0, l_k=2, l_r=0.5, l_dir=LaneDir.RIGHT)
    assert search.lateral_variants(node, 2.0) == [(2.0, LaneDir.NONE, False)]


def test_lane_keeping_config(vp, rc, pc, gs, flat):
    cmap = build_cost_to_go(vp, flat, gs, 200.0)
    search = _Search(
        EgoState(0.0, 0.0, 2.0, 10.0), ObstacleSet(), Heuristic("dp", cmap),
        PlannerConfig(allow_lane_changes=False), gs, vp, rc, pc, flat,
    )
    assert search.lateral_variants(SearchNode(v_k=10, t_k=0, s_k=0, l_k=2), 1.0) == [(2.0, LaneDir.NONE, False)]


def test_children_pay_lane_change_once(search, vp):
    root = SearchNode.from_state(EgoState(0.0, 0.0, 1.0, 10.0), search.gs)
    children = search.expand(root)
    cruise = [c for c in children if c.v_k == 10]
    assert len(cruise) == 2
    keep = next(c for c in cruise if c.l_dir == LaneDir.NONE)
    change = next(c for c in cruise if c.l_dir == LaneDir.LEFT)
    assert change.g - keep.g == pytest.approx(vp.C_LC)
    assert keep.g == pytest.approx(cost_trans(vp, 10.0, 10.0, 1.0, 0.0))


def test_standing_still_never_starts_a_lane_change(search):
    root = SearchNode.from_state(EgoState(0.0, 0.0, 1.0, 0.0), search.gs)
    stand = [c for c in search.expand(root) if c.v_k == 0]
    assert len(stand) == 1
    assert stand[0].l_dir == LaneDir.NONE and stand[0].l == 1.0


def test_trajectory_is_contiguous_and_costed(vp, rc, pc, gs, flat):
    result = plan(
        EgoState(0.0, 0.0, 1.0, 8.0), ObstacleSet(), dp_heuristic(vp, flat, gs), PlannerConfig(), gs, vp, rc, pc, flat,
    )
    segments = result.trajectory.segments
    assert segments[0].t_start == 0.0 and segments[0].s_start == 0.0
    for prev, nxt in zip(segments, segments[1:]):
        assert nxt.t_start == pytest.approx(prev.t_end)
        assert nxt.s_start == pytest.approx(prev.s_end)
        assert nxt.v_start == pytest.approx(prev.v_end)
        assert nxt.l_start == pytest.approx(prev.l_end)
    assert sum(seg.cost for seg in segments) == pytest.approx(result.trajectory.total_cost)
    for seg in segments:
        if seg.l_start == seg.l_end:
            assert seg.cost == pytest.approx(cost_trans(vp, seg.v_start, seg.v_end, seg.duration, 0.0))


def test_expansion_budget_and_tree_dump(vp, rc, pc, gs, flat):
    cfg = PlannerConfig(max_expansions=5)
    result = plan(
        EgoState(0.0, 0.0, 1.0, 8.0), ObstacleSet(), Heuristic("zero", build_cost_to_go(vp, flat, gs, 200.0)),
        cfg, gs, vp, rc, pc, flat, dump_tree=True,
    )
    assert result.termination == Termination.TIMEOUT
    assert result.nodes_expanded == 5
    assert len(result.tree) == 5
    assert result.tree[0].parent is None


def test_planner_config_validation():
    with pytest.raises(ConfigurationError):
        PlannerConfig(S_hor=0.0)
    with pytest.raises(ConfigurationError):
        PlannerConfig(heuristic_kind="greedy")
    with pytest.raises(ConfigurationError):
        PlannerConfig(max_expansions=0)
    with pytest.raises(ConfigurationError):
        PlannerConfig(progress_slack_rel=-0.01)
    with pytest.raises(ConfigurationError):
        PlannerConfig(progress_slack_abs=-1.0)


def test_progress_slack():
    cfg = PlannerConfig(progress_slack_rel=0.02, progress_slack_abs=3000.0)
    assert cfg.slack(100000.0) == pytest.approx(3000.0)
    assert cfg.slack(300000.0) == pytest.approx(6000.0)
    assert cfg.slack(-300000.0) == pytest.approx(6000.0)
    assert PlannerConfig(progress_slack_rel=0.0, progress_slack_abs=0.0).slack(5.0e5) == 0.0


def test_farther_along():
    a = SearchNode(v_k=1, t_k=0, s_k=0, l_k=1, f=5.0)
    b = SearchNode(v_k=1, t_k=0, s_k=0, l_k=1, f=7.0)
    cfg = PlannerConfig()
    assert farther_along(b, 30.0, a, 20.0, cfg)
    assert farther_along(a, 20.0, b, 20.0, cfg)
    assert not farther_along(b, 20.0, a, 20.0, cfg)
    assert not farther_along(a, 10.0, b, 20.0, cfg)
