"""
MPC-like replanning: observe, predict, plan from where the ego will be after T_plan,
and splice the new plan onto the one being executed.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

from config import get_logger
from errors import ConfigurationError, StartInCollisionError, StitchError
from obstacles import ObstacleSet, PredictionConfig, VehicleObstacle
from planner import Termination, plan
from spacetime import EgoState, LaneDir, Trajectory, stop_profile

logger = get_logger("REPLAN")

# Parameters
LANE_TOL = 1e-6
TIME_TOL = 1e-9


@dataclass(frozen=True)
class ReplanConfig:
    T_rep: float = 1.0
    T_plan: Optional[float] = None  # defaults to T_rep
    pc: PredictionConfig = field(default_factory=PredictionConfig)

    def __post_init__(self):
        if self.T_plan is None:
            object.__setattr__(self, "T_plan", self.T_rep)
        if not (0 < self.T_plan <= self.T_rep < self.pc.T_hor):
            raise ConfigurationError("replan needs 0 < T_plan <= T_rep < prediction T_hor")


@dataclass(frozen=True)
class Observation:
    name: str
    s: float
    v: float
    lane: float
    length: float
    t: float


@dataclass(frozen=True)
class WorldSnapshot:
    t0: float
    ego: EgoState
    observations: Sequence[Observation] = ()


@dataclass(frozen=True)
class PlannerInputs:
    """Everything plan() needs besides the start state and the vehicles."""

    static: ObstacleSet
    heuristic: object
    cfg: object
    gs: object
    vp: object
    rc: object
    profile: object = None


@dataclass(frozen=True)
class ReplanRecord:
    t0: float
    start_t: float
    start_s: float
    start_l: float
    start_v: float
    planning_time: float
    nodes_expanded: int
    termination: str
    fallback: bool
    note: str = ""

    def to_dict(self, include_timing=False):
        out = {
            "t0": self.t0,
            "start": {"t": self.start_t, "s": self.start_s, "l": self.start_l, "v": self.start_v},
            "nodes_expanded": self.nodes_expanded,
            "termination": self.termination,
            "fallback": self.fallback,
        }
        if self.note:
            out["note"] = self.note
        if include_timing:
            out["planning_time"] = self.planning_time
        return out


@dataclass(frozen=True)
class ReplanStep:
    trajectory: Trajectory
    record: ReplanRecord


def predict(observations, rc, pc, static=None, ego=None):
    """
    Constant-velocity obstacles with the step safety buffer.

    Vehicles behind the ego in its own lane are skipped; they bound nothing the ego can
    do, while their whole-lane band would always contain it.
    """
    static = static or ObstacleSet()
    vehicles = []
    for obs in observations:
        if ego is not None and obs.s < ego.s and abs(obs.lane - ego.l) < 1.0:
            continue
        vehicles.append(
            VehicleObstacle(s0=obs.s, v0=max(obs.v, 0.0), lane=obs.lane, L_k=obs.length, t0=obs.t, name=obs.name)
        )
    return static.with_vehicles(vehicles)


def stitch(old, new, t_switch, gs):
    """Old trajectory up to t_switch followed by the new one."""
    if not new.segments:
        raise StitchError("stitch: new trajectory is empty")
    if abs(new.t_start - t_switch) > TIME_TOL:
        raise StitchError(f"stitch: new trajectory starts at {new.t_start:.6g}, expected {t_switch:.6g}")
    if not old.covers(t_switch):
        raise StitchError(f"stitch: old trajectory does not reach t={t_switch:.6g}")
    a = old.state_at(t_switch)
    b = new.state_at(t_switch)
    if abs(a.s - b.s) > gs.ds_grid / 2 or abs(a.v - b.v) > gs.dv / 2 + TIME_TOL or abs(a.l - b.l) > LANE_TOL:
        raise StitchError(
            f"stitch: states disagree at t={t_switch:.6g}: "
            f"s {a.s:.6g}/{b.s:.6g}, v {a.v:.6g}/{b.v:.6g}, l {a.l:.6g}/{b.l:.6g}"
        )
    head = old.truncate(t_switch)
    return head.extend(new.segments)


def _lane_direction(trajectory, t):
    """Direction of a lane change running at t, read from the segment that leads into t."""
    state = trajectory.state_at(t)
    if state.l_dir != LaneDir.NONE or abs(state.l - round(state.l)) <= LANE_TOL:
        return state
    seg = trajectory.segment_at(max(t - TIME_TOL, trajectory.t_start))
    rate = seg.l_rate
    l_dir = LaneDir.LEFT if rate > 0 else LaneDir.RIGHT if rate < 0 else LaneDir.NONE
    return EgoState(state.t, state.s, state.l, state.v, l_dir)


def fallback_stop(previous, start, t_start, inputs):
    """Previous plan up to t_start, then a maximal-deceleration stop held to the horizon."""
    t_until = t_start + inputs.cfg.T_hor
    tail = stop_profile(start, inputs.vp.a_min, t_until, inputs.vp.T_LC)
    if previous is not None and previous.covers(t_start):
        return previous.truncate(t_start).extend(tail)
    return Trajectory(tail, 0.0)


def replan_step(snapshot, previous, cfg, inputs):
    """
    One replanning cycle at snapshot.t0.

    The first cycle plans from the measured state; later ones plan from the previous
    trajectory evaluated at t0 + T_plan and splice the result in at that instant.
    """
    first = previous is None
    T_plan = 0.0 if first else cfg.T_plan
    t_start = snapshot.t0 + T_plan
    gs, vp = inputs.gs, inputs.vp

    if first:
        start = snapshot.ego
    elif previous.covers(t_start):
        start = _lane_direction(previous, t_start)
    else:
        start = None

    def record(result, fallback, note=""):
        return ReplanRecord(
            t0=snapshot.t0,
            start_t=start.t if start else t_start,
            start_s=start.s if start else float("nan"),
            start_l=start.l if start else float("nan"),
            start_v=start.v if start else float("nan"),
            planning_time=result.planning_time if result else 0.0,
            nodes_expanded=result.nodes_expanded if result else 0,
            termination=result.termination.value if result else Termination.OPEN_EXHAUSTED.value,
            fallback=fallback,
            note=note,
        )

    if start is None:
        # previous plan ended early; hold its last state
        last = previous.state_at(previous.t_end)
        tail = stop_profile(last, vp.a_min, t_start + inputs.cfg.T_hor, vp.T_LC)
        logger.warning(f"t0={snapshot.t0:.6g}: previous plan ends at {previous.t_end:.6g}, stopping")
        trajectory = previous.extend(tail)
        return ReplanStep(trajectory, record(None, True, "previous plan too short"))

    obstacles = predict(snapshot.observations, inputs.rc, cfg.pc, inputs.static, ego=snapshot.ego)
    try:
        result = plan(start, obstacles, inputs.heuristic, inputs.cfg, gs, vp, inputs.rc, cfg.pc, inputs.profile)
    except StartInCollisionError as e:
        logger.warning(f"t0={snapshot.t0:.6g}: {e}; falling back to a stop")
        return ReplanStep(fallback_stop(previous, start, t_start, inputs), record(None, True, str(e)))

    if result.failed:
        logger.warning(f"t0={snapshot.t0:.6g}: planning failed ({result.termination.value}); falling back to a stop")
        return ReplanStep(fallback_stop(previous, start, t_start, inputs), record(result, True, "no expansion"))

    new = result.trajectory
    if new.t_end < t_start + cfg.T_rep - TIME_TOL:
        end = new.state_at(new.t_end)
        new = new.extend(stop_profile(end, vp.a_min, t_start + inputs.cfg.T_hor, vp.T_LC))
        note = "short plan, stop appended"
    else:
        note = ""

    if first:
        return ReplanStep(new, record(result, False, note))
    try:
        trajectory = stitch(previous, new, t_start, gs)
    except StitchError as e:
        logger.error(f"t0={snapshot.t0:.6g}: {e}; keeping the previous plan")
        return ReplanStep(previous, record(result, True, str(e)))
    return ReplanStep(trajectory, record(result, False, note))
