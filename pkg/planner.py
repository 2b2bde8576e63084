"""
Hybrid A* over the (t, s, l) grid with velocity as augmented state.

OPEN is a binary heap ordered by (f, h, insertion order) with lazy deletion; CLOSED is
a set of discrete keys. The search stops when the popped node lies on the time or the
distance horizon, when OPEN runs dry, or when the wall-clock/expansion budget is spent,
and the trajectory is rebuilt backwards from the node closest to the horizons.

Energy alone puts no price on waiting, so a node that reached only the time horizon is
not taken as is: popping goes on while f stays within a small slack of it, and the
horizon node that covered the most distance wins.
"""

import heapq
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Tuple

from config import get_logger
from errors import ConfigurationError, ReconstructionError, StartInCollisionError
from heuristic import HEURISTIC_KINDS
from obstacles import check_all, vehicle_bounds
from spacetime import (
    LANE_TOL,
    Configuration,
    LaneDir,
    SearchNode,
    Segment,
    Trajectory,
    advance,
    node_key,
    snap,
    stop_profile,
)
from vehicle import check_internal_limits, cost_trans, lane_change_progress, transition

logger = get_logger("PLANNER")

# Parameters
PROGRESS_TOL = 1e-9
LIMIT_TOL = 1e-9


class Termination(str, Enum):
    HORIZON_REACHED = "horizon_reached"
    OPEN_EXHAUSTED = "open_exhausted"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class PlannerConfig:
    S_hor: float = 100.0
    T_hor: float = 10.0
    timeout: float = 2.0
    heuristic_kind: str = "dp"
    max_expansions: Optional[int] = None
    allow_lane_changes: bool = True
    progress_slack_rel: float = 0.02  # fraction of the cheapest horizon node's f
    progress_slack_abs: float = 3000.0  # J

    def __post_init__(self):
        if self.S_hor <= 0 or self.T_hor <= 0 or self.timeout <= 0:
            raise ConfigurationError("planner horizons and timeout must be positive")
        if self.heuristic_kind not in HEURISTIC_KINDS:
            raise ConfigurationError(f"planner.heuristic_kind must be one of {HEURISTIC_KINDS}")
        if self.max_expansions is not None and self.max_expansions < 1:
            raise ConfigurationError("planner.max_expansions must be at least 1")
        if self.progress_slack_rel < 0 or self.progress_slack_abs < 0:
            raise ConfigurationError("planner progress slacks must be non-negative")

    def slack(self, f):
        """Cost band above the cheapest horizon node in which distance covered decides."""
        return max(self.progress_slack_rel * abs(f), self.progress_slack_abs)


@dataclass(frozen=True)
class TreeRow:
    t: float
    s: float
    l: float
    v: float
    g: float
    f: float
    key: tuple
    parent: Optional[tuple]


@dataclass
class PlanResult:
    trajectory: Trajectory
    nodes_expanded: int
    planning_time: float
    termination: Termination
    reached_progress: float
    objective: float = 0.0
    failed: bool = False
    tree: List[TreeRow] = field(default_factory=list)


def horizon_progress(node, start, cfg, gs):
    """Fraction of the nearer horizon covered since the start, capped at 1."""
    ds = node.s(gs) - start.s
    dt = node.t(gs) - start.t
    progress = max(ds / cfg.S_hor, dt / cfg.T_hor)
    if progress >= 1.0 - PROGRESS_TOL:
        return 1.0
    return progress


def closer_to_horizons(candidate, progress, best, best_progress):
    """Progress decides; equal progress goes to the lower f."""
    if progress > best_progress + PROGRESS_TOL:
        return True
    return abs(progress - best_progress) <= PROGRESS_TOL and candidate.f < best.f


def distance_covered(node, start, cfg, gs):
    """Metres gained since the start, capped at the distance horizon."""
    return min(node.s(gs) - start.s, cfg.S_hor)


def farther_along(candidate, reach, best, best_reach, cfg):
    """Among horizon nodes: more distance decides, equal distance goes to the lower f."""
    tol = PROGRESS_TOL * cfg.S_hor
    if reach > best_reach + tol:
        return True
    return abs(reach - best_reach) <= tol and candidate.f < best.f


class _Search:
    """Mutable state of one plan call."""

    def __init__(self, start, obstacles, heuristic, cfg, gs, vp, rc, pc, profile):
        self.start = start
        self.obstacles = obstacles
        self.heuristic = heuristic
        self.cfg = cfg
        self.gs = gs
        self.vp = vp
        self.rc = rc
        self.pc = pc
        self.profile = profile
        self.nodes = {}
        self.closed = set()
        self.open: List[Tuple[float, float, int, tuple, float]] = []
        self.seq = 0
        self.transitions = self._transition_table()

    def _transition_table(self):
        """Kinematically admissible (v_f index, dt, ds, a) per start velocity index."""
        table = []
        for i in range(self.gs.n_v):
            v_i = self.gs.velocity(i)
            row = []
            for k in range(self.gs.n_v):
                v_f = self.gs.velocity(k)
                dt, ds, a = transition(v_i, v_f, self.gs)
                if check_internal_limits(self.vp, a, v_f, self.gs):
                    row.append((k, v_f, dt, ds))
            table.append(row)
        return table

    def push(self, node, h):
        key = node_key(node)
        self.nodes[key] = node
        self.seq += 1
        heapq.heappush(self.open, (node.f, h, self.seq, key, node.g))

    def price(self, s, v, progress):
        if progress >= 1.0:
            return self.heuristic.terminal(s, v)
        return self.heuristic(s, v)

    def lateral_variants(self, node, dt):
        """(l_new, l_dir_new, started) for each lateral option of this expansion."""
        l = node.l
        if node.l_dir != LaneDir.NONE:
            if node.l_dir == LaneDir.LEFT:
                progressed, target = node.l_r, node.l_k + 1
            else:
                progressed, target = 1.0 - node.l_r, node.l_k
            dl = lane_change_progress(dt, self.vp.T_LC, progressed)
            l_new = l + dl * int(node.l_dir)
            if abs(l_new - target) <= LANE_TOL:
                return [(float(target), LaneDir.NONE, False)]
            return [(l_new, node.l_dir, False)]
        variants = [(l, LaneDir.NONE, False)]
        if not self.cfg.allow_lane_changes:
            return variants
        dl = lane_change_progress(dt, self.vp.T_LC)
        done = dl >= 1.0 - LANE_TOL
        if node.l_k > 1:
            variants.append((l - 1.0 if done else l - dl, LaneDir.NONE if done else LaneDir.RIGHT, True))
        if node.l_k < self.gs.n_lanes:
            variants.append((l + 1.0 if done else l + dl, LaneDir.NONE if done else LaneDir.LEFT, True))
        return variants

    def expand(self, node):
        gs = self.gs
        t, s, v_i = node.t(gs), node.s(gs), node.v(gs)
        slope = float(self.profile.slope_at(s))
        children = []
        for k, v_f, dt, ds in self.transitions[node.v_k]:
            if max(v_i, v_f) > self.profile.min_limit(s, s + ds) + LIMIT_TOL:
                continue
            energy = cost_trans(self.vp, v_i, v_f, dt, slope)
            t_k, t_r = advance(node.t_k, node.t_r, dt, gs.dt_grid)
            s_k, s_r = advance(node.s_k, node.s_r, ds, gs.ds_grid)
            standstill = v_i == 0.0 and v_f == 0.0
            for l_new, l_dir, started in self.lateral_variants(node, dt):
                if started and standstill:
                    continue
                cost = energy + (self.vp.C_LC if started else 0.0)
                seg = Segment(t, t + dt, s, v_i, v_f, node.l, l_new, cost)
                if not check_all(seg, self.obstacles, self.rc, self.pc).passed:
                    continue
                l_k, l_r = snap(l_new, 1.0)
                if l_dir == LaneDir.NONE:
                    l_r = 0.0
                child = SearchNode(
                    v_k=k, t_k=t_k, s_k=s_k, l_k=l_k, t_r=t_r, s_r=s_r, l_r=l_r, l_dir=l_dir,
                    g=node.g + cost, f=0.0, parent_key=node_key(node),
                )
                children.append(child)
        return children


def _check_start(start, obstacles, rc, pc):
    for o in obstacles.vehicles:
        if abs(o.lane - start.l) >= 1.0 or start.t < o.t0:
            continue
        lower, upper = vehicle_bounds(o, rc, pc, start.t)
        if lower <= start.s <= upper:
            raise StartInCollisionError(
                f"start s={start.s:.6g} lies inside {o.name} [{lower:.6g}, {upper:.6g}] at t={start.t:.6g}"
            )


def _start_node(start, gs, heuristic):
    node = SearchNode.from_state(start, gs)
    if node.l_r > 0 and node.l_dir == LaneDir.NONE:
        # mid-lane start without a known direction: finish towards the nearer centre
        node = replace(node, l_dir=LaneDir.LEFT if node.l_r >= 0.5 else LaneDir.RIGHT)
    h = heuristic(node.s(gs), node.v(gs))
    return replace(node, f=node.g + h), h


def reconstruct(n_r, nodes, gs):
    """Walk parent links from n_r back to the start and emit constant-acceleration segments."""
    chain = [n_r]
    seen = {node_key(n_r)}
    while chain[-1].parent_key is not None:
        key = chain[-1].parent_key
        if key not in nodes or key in seen:
            raise ReconstructionError(f"broken parent chain at key {key}")
        seen.add(key)
        chain.append(nodes[key])
    chain.reverse()
    segments = []
    for parent, child in zip(chain, chain[1:]):
        segments.append(
            Segment(
                parent.t(gs), child.t(gs), parent.s(gs), parent.v(gs), child.v(gs),
                parent.l, child.l, child.g - parent.g,
            )
        )
    return Trajectory(tuple(segments), n_r.g - chain[0].g)


def plan(start, obstacles, heuristic, cfg, gs, vp, rc, pc, profile=None, dump_tree=False):
    """
    Plan from `start` (an EgoState) until a horizon is reached.

    Interior nodes are guided by `heuristic`; nodes on a horizon are always priced with
    the DP cost-to-go so every heuristic kind optimises the same objective. Once a
    horizon node is popped, the result is the horizon node with f within cfg.slack()
    of it that covered the most distance.
    """
    if profile is None:
        from vehicle import RoadProfile

        profile = RoadProfile.flat()
    Configuration(start.t, start.s, start.l, gs.n_lanes)
    wall_start = time.perf_counter()
    deadline = wall_start + cfg.timeout
    _check_start(start, obstacles, rc, pc)

    search = _Search(start, obstacles, heuristic, cfg, gs, vp, rc, pc, profile)
    root, h_root = _start_node(start, gs, heuristic)
    search.push(root, h_root)
    root_key = node_key(root)
    origin = root.state(gs)

    best, best_progress = root, 0.0
    best_reach = 0.0
    band_top = None  # set by the first horizon node popped
    expanded = 0
    termination = Termination.OPEN_EXHAUSTED
    tree = []

    while search.open:
        out_of_budget = time.perf_counter() > deadline or (
            cfg.max_expansions is not None and expanded >= cfg.max_expansions
        )
        if out_of_budget:
            if band_top is None:
                termination = Termination.TIMEOUT
            break
        f, h, _, key, g = heapq.heappop(search.open)
        if key in search.closed:
            continue
        node = search.nodes[key]
        if g != node.g:
            continue
        if band_top is not None and f > band_top:
            break
        search.closed.add(key)
        progress = horizon_progress(node, origin, cfg, gs)
        if progress >= 1.0:
            reach = distance_covered(node, origin, cfg, gs)
            if band_top is None:
                termination = Termination.HORIZON_REACHED
                best, best_progress, best_reach = node, progress, reach
                band_top = node.f + cfg.slack(node.f) if math.isfinite(node.f) else node.f
            elif farther_along(node, reach, best, best_reach, cfg):
                best, best_reach = node, reach
            if best_reach >= cfg.S_hor * (1.0 - PROGRESS_TOL) or not math.isfinite(node.f):
                break
            continue

        expanded += 1
        if dump_tree:
            tree.append(TreeRow(node.t(gs), node.s(gs), node.l, node.v(gs), node.g, node.f, key, node.parent_key))
        for child in search.expand(node):
            child_key = node_key(child)
            if child_key in search.closed:
                continue
            known = search.nodes.get(child_key)
            if known is not None and known.g <= child.g:
                continue
            child_progress = horizon_progress(child, origin, cfg, gs)
            h_child = search.price(child.s(gs), child.v(gs), child_progress)
            child = replace(child, f=child.g + h_child)
            search.push(child, h_child)
            if band_top is None and closer_to_horizons(child, child_progress, best, best_progress):
                best, best_progress = child, child_progress

    # the stored node may have been re-parented since it was recorded
    best = search.nodes[node_key(best)]
    failed = node_key(best) == root_key
    if failed:
        segments = stop_profile(origin, vp.a_min, origin.t + cfg.T_hor, vp.T_LC)
        trajectory = Trajectory(segments, 0.0)
    else:
        trajectory = reconstruct(best, search.nodes, gs)
    elapsed = time.perf_counter() - wall_start
    logger.debug(
        f"{termination.value}: {expanded} expanded, progress {best_progress:.3g}, "
        f"cost {trajectory.total_cost:.6g} J, {elapsed * 1000:.1f} ms"
    )
    return PlanResult(
        trajectory=trajectory,
        nodes_expanded=max(expanded, 1),
        planning_time=elapsed,
        termination=termination,
        reached_progress=best_progress,
        objective=best.f,
        failed=failed,
        tree=tree,
    )
