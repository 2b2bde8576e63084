"""
Deterministic closed-loop world for the eco-lane planner.

A scenario (JSON) describes the road, the static obstacles, IDM traffic and the ego.
run() replans every T_rep, executes the stitched plan exactly at a fixed tick, steps
the traffic and asserts there is never any ground-truth overlap between ego and agents.
"""

import csv
import json
import math
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from config import get_logger
from errors import ConfigurationError, ScenarioError, SimulationAbort
from heuristic import Heuristic, build_cost_to_go
from obstacles import (
    LaneChangeBan,
    ObstacleSet,
    PredictionConfig,
    RuleConfig,
    SpeedLimitZone,
    TrafficLightObstacle,
)
from planner import PlannerConfig, plan
from replan import Observation, PlannerInputs, ReplanConfig, WorldSnapshot, predict, replan_step
from spacetime import EgoState, GridSpec, stop_profile
from vehicle import RoadProfile, VehicleParams, cost_trans

logger = get_logger("SIM")

# Parameters
PERCEPTION_MODES = ("none", "uniform", "alternating")
PUSH_MARGIN = 1.0  # m, kept between agents moved apart after perturbation
TICK_COLUMNS = ("t", "s", "l", "v", "a", "cum_cost")
PHASE_ACCEL = 0.1  # m/s^2, below this a tick counts as steady


# --- traffic -------------------------------------------------------------------------

@dataclass(frozen=True)
class IDMParams:
    desired_speed: float = 12.0
    T: float = 1.5
    a: float = 1.0
    b: float = 2.0
    s0: float = 2.0
    delta: float = 4.0

    def __post_init__(self):
        # desired_speed 0 marks a parked vehicle
        if min(self.T, self.a, self.b) <= 0 or self.desired_speed < 0 or self.s0 < 0:
            raise ConfigurationError("idm parameters must be positive")


@dataclass
class Traffic:
    """Agent states as parallel arrays; agents keep their lane for the whole run."""

    names: Tuple[str, ...]
    s: np.ndarray
    v: np.ndarray
    lane: np.ndarray
    length: np.ndarray
    desired_speed: np.ndarray
    T: np.ndarray
    a: np.ndarray
    b: np.ndarray
    s0: np.ndarray
    delta: np.ndarray

    @classmethod
    def from_agents(cls, agents):
        """agents: iterable of (name, s, v, lane, length, IDMParams)."""
        agents = list(agents)

        def column(values):
            return np.asarray(values, dtype=float)

        return cls(
            names=tuple(a[0] for a in agents),
            s=column([a[1] for a in agents]),
            v=column([a[2] for a in agents]),
            lane=column([a[3] for a in agents]),
            length=column([a[4] for a in agents]),
            desired_speed=column([a[5].desired_speed for a in agents]),
            T=column([a[5].T for a in agents]),
            a=column([a[5].a for a in agents]),
            b=column([a[5].b for a in agents]),
            s0=column([a[5].s0 for a in agents]),
            delta=column([a[5].delta for a in agents]),
        )

    def __len__(self):
        return len(self.names)

    def copy(self, **changes):
        state = {f.name: getattr(self, f.name) for f in fields(self)}
        state = {k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in state.items()}
        state.update(changes)
        return Traffic(**state)


def idm_acceleration(v, v_lead, gap, p):
    """IDM acceleration for arrays of followers; p is a Traffic (or anything with IDM columns)."""
    gap = np.maximum(gap, 1e-3)
    s_star = p.s0 + v * p.T + v * (v - v_lead) / (2.0 * np.sqrt(p.a * p.b))
    s_star = np.maximum(s_star, 0.0)
    ratio = np.divide(v, p.desired_speed, out=np.full(np.shape(v), np.inf), where=p.desired_speed > 0)
    return p.a * (1.0 - ratio ** p.delta - (s_star / gap) ** 2)


def step_agents(agents, lights, dt, t, ego=None, L_ego=4.5):
    """
    Advance every agent by dt with IDM (semi-implicit Euler, v >= 0).

    Candidate leaders are the next agent in lane, the ego when it occupies the lane and a
    stopped virtual vehicle at every red stop line ahead that can still be stopped for.
    """
    n = len(agents)
    if n == 0:
        return agents.copy()
    s, v, lane, length = agents.s, agents.v, agents.lane, agents.length

    # free road
    acc = idm_acceleration(v, v, np.full(n, np.inf), agents)

    same_lane = lane[:, None] == lane[None, :]
    ahead = s[None, :] > s[:, None]
    gaps = s[None, :] - s[:, None] - 0.5 * (length[:, None] + length[None, :])
    gaps = np.where(same_lane & ahead, gaps, np.inf)
    leader = np.argmin(gaps, axis=1)
    has_leader = np.isfinite(gaps[np.arange(n), leader])
    if has_leader.any():
        lead_gap = gaps[np.arange(n), leader]
        acc = np.where(has_leader, np.minimum(acc, idm_acceleration(v, v[leader], lead_gap, agents)), acc)

    if ego is not None:
        behind_ego = (np.abs(lane - ego.l) < 1.0) & (s < ego.s)
        if behind_ego.any():
            ego_gap = ego.s - s - 0.5 * (length + L_ego)
            acc = np.where(behind_ego, np.minimum(acc, idm_acceleration(v, ego.v, ego_gap, agents)), acc)

    front = s + 0.5 * length
    for tl in lights:
        if not tl.is_red(t):
            continue
        affected = np.ones(n, dtype=bool) if tl.lanes is None else np.isin(lane, list(tl.lanes))
        line_gap = tl.s_k - front
        with np.errstate(divide="ignore"):
            needed = np.where(line_gap > 0, v * v / (2.0 * line_gap), np.inf)
        # an agent that can no longer stop comfortably carries on through the line
        stops = affected & (line_gap > 0) & (needed <= 2.0 * agents.b)
        if stops.any():
            acc = np.where(stops, np.minimum(acc, idm_acceleration(v, 0.0, line_gap, agents)), acc)

    v_new = np.maximum(v + acc * dt, 0.0)
    return agents.copy(s=s + v_new * dt, v=v_new)


def perturb_traffic(agents, rng, sigma_s, sigma_v, ego, L_ego):
    """Gaussian spread of agent s0/v0, then agents are pushed apart so nobody overlaps."""
    if len(agents) == 0:
        return agents.copy()
    s = agents.s + rng.normal(0.0, sigma_s, len(agents)) if sigma_s > 0 else agents.s.copy()
    v = np.maximum(agents.v + rng.normal(0.0, sigma_v, len(agents)), 0.0) if sigma_v > 0 else agents.v.copy()
    length = agents.length
    for lane in np.unique(agents.lane):
        idx = np.flatnonzero(agents.lane == lane)
        ref_s, ref_len = (ego.s, L_ego) if abs(lane - ego.l) < 1.0 else (-math.inf, 0.0)
        ahead = sorted((i for i in idx if s[i] >= ref_s), key=lambda i: s[i])
        prev_s, prev_len = ref_s, ref_len
        for i in ahead:
            s[i] = max(s[i], prev_s + 0.5 * (prev_len + length[i]) + PUSH_MARGIN)
            prev_s, prev_len = s[i], length[i]
        behind = sorted((i for i in idx if s[i] < ref_s), key=lambda i: -s[i])
        prev_s, prev_len = ref_s, ref_len
        for i in behind:
            s[i] = min(s[i], prev_s - 0.5 * (prev_len + length[i]) - PUSH_MARGIN)
            prev_s, prev_len = s[i], length[i]
    return agents.copy(s=s, v=v)


# --- scenario ------------------------------------------------------------------------

@dataclass(frozen=True)
class EgoSpec:
    s: float = 0.0
    v: float = 0.0
    lane: int = 1


@dataclass(frozen=True)
class SimSettings:
    dt: float = 0.01
    t_max: float = 300.0
    wall_clock_cap: float = 600.0
    perception: str = "none"

    def __post_init__(self):
        if self.dt <= 0 or self.t_max <= 0 or self.wall_clock_cap <= 0:
            raise ConfigurationError("sim.dt, sim.t_max and sim.wall_clock_cap must be positive")
        if self.perception not in PERCEPTION_MODES:
            raise ConfigurationError(f"sim.perception must be one of {PERCEPTION_MODES}")


@dataclass
class Scenario:
    name: str
    length: float
    n_lanes: int
    profile: RoadProfile
    lights: Tuple[TrafficLightObstacle, ...]
    limits: Tuple[SpeedLimitZone, ...]
    bans: Tuple[LaneChangeBan, ...]
    traffic: Traffic
    ego: EgoSpec
    vp: VehicleParams
    gs: GridSpec
    planner: PlannerConfig
    replan: ReplanConfig
    rc: RuleConfig
    sim: SimSettings = field(default_factory=SimSettings)
    goal_speed: Optional[float] = None
    seed: int = 0

    @property
    def static_obstacles(self):
        return ObstacleSet(lights=self.lights, limits=self.limits, bans=self.bans)

    @property
    def terminal_v_set(self):
        v_axis = np.arange(self.gs.n_v) * self.gs.dv
        if self.goal_speed is None:
            return tuple(float(v) for v in v_axis)
        return tuple(float(v) for v in v_axis if v >= self.goal_speed - 1e-9)


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _section(cls, data, where, **extra):
    """Build a config dataclass from a JSON object, naming the offending field on error."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ScenarioError(f"{where}: expected an object")
    known = {f.name: f for f in fields(cls) if f.init}
    for key, value in data.items():
        if key not in known:
            raise ScenarioError(f"{where}.{key}: unknown field")
        kind = known[key].type
        if kind is float and not _is_number(value):
            raise ScenarioError(f"{where}.{key}: expected a number, got {value!r}")
        if kind is int and not (isinstance(value, int) and not isinstance(value, bool)):
            raise ScenarioError(f"{where}.{key}: expected an integer, got {value!r}")
        if kind is bool and not isinstance(value, bool):
            raise ScenarioError(f"{where}.{key}: expected true or false, got {value!r}")
        if kind is str and not isinstance(value, str):
            raise ScenarioError(f"{where}.{key}: expected a string, got {value!r}")
    try:
        return cls(**{**data, **extra})
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"{where}: {e}") from e


def _number(data, key, where, default=None, minimum=None):
    if key not in data:
        if default is None:
            raise ScenarioError(f"{where}.{key}: required field missing")
        return default
    value = data[key]
    if not _is_number(value):
        raise ScenarioError(f"{where}.{key}: expected a number, got {value!r}")
    if minimum is not None and value < minimum:
        raise ScenarioError(f"{where}.{key}: must be at least {minimum}, got {value}")
    return float(value)


def _objects(data, key):
    items = data.get(key, [])
    if not isinstance(items, list):
        raise ScenarioError(f"{key}: expected a list")
    for i, item in enumerate(items):
        if not isinstance(item, dict):
            raise ScenarioError(f"{key}[{i}]: expected an object")
    return items


def _build_profile(road, length):
    samples = road.get("profile") or [{"s": 0.0, "slope": 0.0}]
    if not isinstance(samples, list):
        raise ScenarioError("road.profile: expected a list")
    s, slope, limit = [], [], []
    for i, item in enumerate(samples):
        where = f"road.profile[{i}]"
        if not isinstance(item, dict):
            raise ScenarioError(f"{where}: expected an object")
        s.append(_number(item, "s", where))
        slope.append(_number(item, "slope", where, default=0.0))
        raw_limit = item.get("speed_limit")
        limit.append(math.inf if raw_limit is None else _number(item, "speed_limit", where))
    if any(x > length for x in s):
        raise ScenarioError("road.profile: sample beyond road length")
    try:
        return RoadProfile(s, slope, limit)
    except ValueError as e:
        raise ScenarioError(f"road.profile: {e}") from e


def _build_light(item, i, n_lanes, length):
    where = f"lights[{i}]"
    s_k = _number(item, "s", where, minimum=0.0)
    if s_k > length:
        raise ScenarioError(f"{where}.s: beyond road length {length}")
    phases = item.get("phases")
    if not isinstance(phases, list) or not phases:
        raise ScenarioError(f"{where}.phases: expected a non-empty list of [offset, red_duration]")
    for j, ph in enumerate(phases):
        if not (isinstance(ph, list) and len(ph) == 2 and all(_is_number(x) for x in ph)):
            raise ScenarioError(f"{where}.phases[{j}]: expected [offset, red_duration]")
    lanes = item.get("lanes")
    if lanes is not None:
        if not isinstance(lanes, list) or not all(isinstance(x, int) and 1 <= x <= n_lanes for x in lanes):
            raise ScenarioError(f"{where}.lanes: expected lane indices in 1..{n_lanes}")
    period = item.get("period")
    if period is not None and not _is_number(period):
        raise ScenarioError(f"{where}.period: expected a number")
    try:
        return TrafficLightObstacle(
            s_k=s_k,
            phases=tuple(tuple(ph) for ph in phases),
            period=period,
            lanes=frozenset(lanes) if lanes is not None else None,
            name=str(item.get("name", f"light_{i}")),
        )
    except ValueError as e:
        raise ScenarioError(f"{where}: {e}") from e


def _generate_traffic(settings, length, n_lanes, ego, seed):
    """Evenly spaced agents with seeded jitter; a clear zone around the ego stays empty."""
    where = "traffic"
    if not isinstance(settings, dict):
        raise ScenarioError(f"{where}: expected an object")
    for key in settings:
        if key not in ("density", "mean_speed", "length", "jitter", "clear_zone", "lanes", "idm"):
            raise ScenarioError(f"{where}.{key}: unknown field")
    density = _number(settings, "density", where, minimum=0.0)
    mean_speed = _number(settings, "mean_speed", where, default=12.0, minimum=0.0)
    agent_length = _number(settings, "length", where, default=4.5, minimum=0.1)
    jitter = _number(settings, "jitter", where, default=0.2, minimum=0.0)
    clear_zone = _number(settings, "clear_zone", where, default=30.0, minimum=0.0)
    if jitter > 0.4:
        raise ScenarioError(f"{where}.jitter: at most 0.4 of the spacing")
    lanes = settings.get("lanes") or list(range(1, n_lanes + 1))
    if not all(isinstance(x, int) and 1 <= x <= n_lanes for x in lanes):
        raise ScenarioError(f"{where}.lanes: expected lane indices in 1..{n_lanes}")
    idm = _section(IDMParams, settings.get("idm"), f"{where}.idm")
    if density == 0:
        return []

    rng = np.random.default_rng(seed)
    spacing = 1000.0 / density
    count = int(round(density * length / 1000.0))
    agents = []
    for lane in lanes:
        phase = rng.uniform(0.0, spacing)
        for n in range(count):
            s = phase + n * spacing + rng.uniform(-jitter, jitter) * spacing
            if not (0.0 <= s <= length):
                continue
            if abs(s - ego.s) < clear_zone + 0.5 * agent_length:
                continue
            agents.append((f"car_{lane}_{n}", s, mean_speed, float(lane), agent_length, idm))
    return agents


def build_scenario(data, name="scenario"):
    """Validate a decoded scenario document and turn it into a Scenario."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario: expected a JSON object at the top level")
    known = {"name", "seed", "road", "lights", "limits", "bans", "agents", "traffic", "ego", "goal_speed",
             "grid", "planner", "replan", "prediction", "rules", "sim"}
    for key in data:
        if key not in known:
            raise ScenarioError(f"{key}: unknown field")
    name = str(data.get("name", name))
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ScenarioError("seed: expected an integer")

    road = data.get("road")
    if not isinstance(road, dict):
        raise ScenarioError("road: required object missing")
    length = _number(road, "length", "road", minimum=0.0)
    n_lanes = road.get("n_lanes", 1)
    if not isinstance(n_lanes, int) or isinstance(n_lanes, bool) or n_lanes < 1:
        raise ScenarioError("road.n_lanes: expected a positive integer")
    for key in road:
        if key not in ("length", "n_lanes", "profile"):
            raise ScenarioError(f"road.{key}: unknown field")

    grid_data = data.get("grid") or {}
    if "n_lanes" in grid_data and grid_data["n_lanes"] != n_lanes:
        raise ScenarioError("grid.n_lanes: must equal road.n_lanes")
    gs = _section(GridSpec, {k: v for k, v in grid_data.items() if k != "n_lanes"}, "grid", n_lanes=n_lanes)
    ratio = length / gs.ds_grid
    if length <= 0 or abs(ratio - round(ratio)) > 1e-9:
        raise ScenarioError(f"road.length: must be a positive multiple of grid.ds_grid ({gs.ds_grid})")

    profile = _build_profile(road, length)
    lights = tuple(_build_light(item, i, n_lanes, length) for i, item in enumerate(_objects(data, "lights")))

    limits = []
    for i, item in enumerate(_objects(data, "limits")):
        where = f"limits[{i}]"
        try:
            limits.append(SpeedLimitZone(
                s_k=_number(item, "s", where, minimum=0.0),
                ds_k=_number(item, "length", where),
                v_limit=_number(item, "v_limit", where),
                name=str(item.get("name", f"limit_{i}")),
            ))
        except ValueError as e:
            raise ScenarioError(f"{where}: {e}") from e

    bans = []
    for i, item in enumerate(_objects(data, "bans")):
        where = f"bans[{i}]"
        boundary = item.get("boundary")
        if not isinstance(boundary, int) or not (1 <= boundary < n_lanes):
            raise ScenarioError(f"{where}.boundary: expected a lane index in 1..{n_lanes - 1}")
        try:
            bans.append(LaneChangeBan(
                s_k=_number(item, "s", where, minimum=0.0),
                ds_k=_number(item, "length", where),
                l_i=boundary,
                direction=item.get("direction", "both"),
                name=str(item.get("name", f"ban_{i}")),
            ))
        except ValueError as e:
            raise ScenarioError(f"{where}: {e}") from e

    ego_data = dict(data.get("ego") or {})
    vehicle_data = ego_data.pop("vehicle", None)
    ego = _section(EgoSpec, ego_data, "ego")
    if not (0 <= ego.s <= length):
        raise ScenarioError(f"ego.s: must lie within the road [0, {length}]")
    if not (1 <= ego.lane <= n_lanes):
        raise ScenarioError(f"ego.lane: must lie in 1..{n_lanes}")
    if ego.v < 0 or ego.v > gs.v_max:
        raise ScenarioError(f"ego.v: must lie in [0, {gs.v_max}]")
    vp = _section(VehicleParams, vehicle_data, "ego.vehicle")
    rc = _section(RuleConfig, data.get("rules"), "rules")
    planner = _section(PlannerConfig, data.get("planner"), "planner")

    replan_data = data.get("replan") or {}
    T_rep = _number(replan_data, "T_rep", "replan", default=1.0)
    T_plan = _number(replan_data, "T_plan", "replan", default=T_rep)
    for key in replan_data:
        if key not in ("T_rep", "T_plan"):
            raise ScenarioError(f"replan.{key}: unknown field")
    prediction_data = dict(data.get("prediction") or {})
    prediction_data.setdefault("T_hor", planner.T_hor + T_plan + gs.dt_exp)
    if "T_rep" in prediction_data:
        raise ScenarioError("prediction.T_rep: taken from replan.T_rep")
    pc = _section(PredictionConfig, prediction_data, "prediction", T_rep=T_rep)
    if pc.T_hor < planner.T_hor + T_plan + gs.dt_exp - 1e-9:
        raise ScenarioError("prediction.T_hor: must cover planner.T_hor + replan.T_plan + grid.dt_exp")
    try:
        replan_cfg = ReplanConfig(T_rep=T_rep, T_plan=T_plan, pc=pc)
    except ValueError as e:
        raise ScenarioError(f"replan: {e}") from e

    settings = _section(SimSettings, data.get("sim"), "sim")
    ticks_per_cycle = T_rep / settings.dt
    if abs(ticks_per_cycle - round(ticks_per_cycle)) > 1e-6:
        raise ScenarioError("sim.dt: replan.T_rep must be a whole number of ticks")

    goal_speed = data.get("goal_speed")
    if goal_speed is not None:
        if not _is_number(goal_speed) or not (0 <= goal_speed <= gs.v_max):
            raise ScenarioError(f"goal_speed: expected a number in [0, {gs.v_max}]")
        goal_speed = float(goal_speed)

    agents = []
    for i, item in enumerate(_objects(data, "agents")):
        where = f"agents[{i}]"
        lane = item.get("lane")
        if not isinstance(lane, int) or isinstance(lane, bool) or not (1 <= lane <= n_lanes):
            raise ScenarioError(f"{where}.lane: expected an integer lane in 1..{n_lanes}")
        s = _number(item, "s", where, minimum=0.0)
        if s > length:
            raise ScenarioError(f"{where}.s: beyond road length {length}")
        agents.append((
            str(item.get("name", f"agent_{i}")),
            s,
            _number(item, "v", where, default=0.0, minimum=0.0),
            float(lane),
            _number(item, "length", where, default=4.5, minimum=0.1),
            _section(IDMParams, item.get("idm"), f"{where}.idm"),
        ))
        for key in item:
            if key not in ("name", "s", "v", "lane", "length", "idm"):
                raise ScenarioError(f"{where}.{key}: unknown field")
    if "traffic" in data:
        agents.extend(_generate_traffic(data["traffic"], length, n_lanes, ego, seed))
    _check_overlaps(agents, ego, rc.L_ego)

    return Scenario(
        name=name, length=length, n_lanes=n_lanes, profile=profile, lights=lights,
        limits=tuple(limits), bans=tuple(bans), traffic=Traffic.from_agents(agents), ego=ego,
        vp=vp, gs=gs, planner=planner, replan=replan_cfg, rc=rc, sim=settings,
        goal_speed=goal_speed, seed=seed,
    )


def _check_overlaps(agents, ego, L_ego):
    bodies = [("ego", ego.s, float(ego.lane), L_ego)] + [(a[0], a[1], a[3], a[4]) for a in agents]
    for i, (n1, s1, l1, L1) in enumerate(bodies):
        for n2, s2, l2, L2 in bodies[i + 1:]:
            if l1 == l2 and abs(s1 - s2) < 0.5 * (L1 + L2):
                raise ScenarioError(f"agents: '{n1}' and '{n2}' overlap initially in lane {int(l1)}")


def load_scenario(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ScenarioError(f"scenario: file {path} not found") from e
    except json.JSONDecodeError as e:
        raise ScenarioError(f"scenario: {path} is not valid JSON ({e})") from e
    scenario = build_scenario(data, name=path.stem)
    logger.info(
        f"loaded '{scenario.name}': {scenario.length:.6g} m, {scenario.n_lanes} lanes, "
        f"{len(scenario.lights)} lights, {len(scenario.traffic)} agents"
    )
    return scenario


# --- closed loop ---------------------------------------------------------------------

@dataclass
class SimLog:
    scenario: str
    heuristic: str
    seed: int
    outcome: str = "running"
    ticks: List[Tuple[float, ...]] = field(default_factory=list)
    cycles: list = field(default_factory=list)
    abort_reason: str = ""

    @property
    def completed(self):
        return self.outcome == "route_end"

    def metrics(self, include_timing=False):
        nodes = np.array([c.nodes_expanded for c in self.cycles if c.nodes_expanded > 0], dtype=float)
        out = {
            "total_cost_kj": self.ticks[-1][5] / 1000.0 if self.ticks else 0.0,
            "travel_time": self.ticks[-1][0] if self.ticks else 0.0,
            "cycles": len(self.cycles),
            "fallbacks": sum(1 for c in self.cycles if c.fallback),
            "nodes_mean": float(nodes.mean()) if len(nodes) else 0.0,
            "nodes_std": float(nodes.std()) if len(nodes) else 0.0,
        }
        if include_timing:
            times = np.array([c.planning_time for c in self.cycles if c.nodes_expanded > 0], dtype=float)
            out["planning_time_mean"] = float(times.mean()) if len(times) else 0.0
            out["planning_time_std"] = float(times.std()) if len(times) else 0.0
        return out

    def to_dict(self, include_timing=False):
        out = {
            "scenario": self.scenario,
            "heuristic": self.heuristic,
            "seed": self.seed,
            "outcome": self.outcome,
            "metrics": self.metrics(include_timing),
            "cycles": [c.to_dict(include_timing) for c in self.cycles],
        }
        if self.abort_reason:
            out["abort_reason"] = self.abort_reason
        return out

    def to_json(self, include_timing=False):
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True)

    def write_ticks_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(TICK_COLUMNS)
            for row in self.ticks:
                writer.writerow([f"{x:.6g}" for x in row])


def observe(agents, t, ds_max, mode, cycle, rng):
    """Agent observations at t with the configured measurement error on s."""
    if mode == "uniform":
        error = rng.uniform(-ds_max, ds_max, len(agents))
    elif mode == "alternating":
        error = np.full(len(agents), ds_max if cycle % 2 == 0 else -ds_max)
    else:
        error = np.zeros(len(agents))
    return [
        Observation(name, float(s + e), float(v), float(lane), float(length), t)
        for name, s, v, lane, length, e in zip(agents.names, agents.s, agents.v, agents.lane, agents.length, error)
    ]


def ground_truth_overlap(agents, ego, L_ego):
    """Name of the first agent whose body overlaps the ego in a shared lane, else None."""
    if len(agents) == 0:
        return None
    shared = np.abs(agents.lane - ego.l) < 1.0
    overlap = shared & (np.abs(agents.s - ego.s) < 0.5 * (agents.length + L_ego))
    hits = np.flatnonzero(overlap)
    return agents.names[hits[0]] if len(hits) else None


def run(sc, heuristic_kind=None, perturb=None, seed=None, perception=None, lane_keeping=False,
        wall_clock_cap=None):
    """Closed-loop simulation of one scenario; raises SimulationAbort on any ground-truth overlap."""
    kind = heuristic_kind or sc.planner.heuristic_kind
    seed = sc.seed if seed is None else seed
    mode = perception or sc.sim.perception
    if mode not in PERCEPTION_MODES:
        raise ConfigurationError(f"perception must be one of {PERCEPTION_MODES}")
    rng = np.random.default_rng(seed)
    gs, vp, rc = sc.gs, sc.vp, sc.rc
    pc = sc.replan.pc
    dt = sc.sim.dt
    n_rep = int(round(sc.replan.T_rep / dt))
    cap = wall_clock_cap or sc.sim.wall_clock_cap

    ego = EgoState(0.0, sc.ego.s, float(sc.ego.lane), sc.ego.v)
    agents = sc.traffic
    if perturb:
        agents = perturb_traffic(agents, rng, perturb[0], perturb[1], ego, rc.L_ego)

    cmap = build_cost_to_go(vp, sc.profile, gs, sc.length, sc.terminal_v_set, sc.limits)
    heuristic = Heuristic(kind, cmap, vp, sc.profile)
    cfg = replace(sc.planner, heuristic_kind=kind,
                  allow_lane_changes=sc.planner.allow_lane_changes and not lane_keeping)
    if cfg.max_expansions is not None:
        # the expansion budget alone ends a search, whatever the host's speed
        cfg = replace(cfg, timeout=math.inf)
    inputs = PlannerInputs(sc.static_obstacles, heuristic, cfg, gs, vp, rc, sc.profile)

    log = SimLog(sc.name, kind, seed)
    log.ticks.append((0.0, ego.s, ego.l, ego.v, 0.0, 0.0))
    trajectory = None
    cum_cost = 0.0
    tick = 0
    cycle = 0
    wall_start = time.perf_counter()
    logger.info(f"run '{sc.name}' heuristic={kind} seed={seed} perception={mode}")

    while True:
        t = tick * dt
        if tick % n_rep == 0:
            observations = observe(agents, t, pc.ds_max, mode, cycle, rng)
            step = replan_step(WorldSnapshot(t, ego, observations), trajectory, sc.replan, inputs)
            trajectory = step.trajectory
            log.cycles.append(step.record)
            cycle += 1
        t_next = (tick + 1) * dt
        if not trajectory.covers(t_next):
            end = trajectory.state_at(trajectory.t_end)
            trajectory = trajectory.extend(stop_profile(end, vp.a_min, t_next + cfg.T_hor, vp.T_LC))

        seg = trajectory.segment_at(t)
        new_agents = step_agents(agents, sc.lights, dt, t, ego, rc.L_ego)
        new_ego = trajectory.state_at(t_next)
        slope = float(sc.profile.slope_at(ego.s))
        cum_cost += cost_trans(vp, ego.v, new_ego.v, dt, slope) + vp.C_LC * abs(new_ego.l - ego.l)
        log.ticks.append((t_next, new_ego.s, new_ego.l, new_ego.v, seg.a, cum_cost))

        hit = ground_truth_overlap(new_agents, new_ego, rc.L_ego)
        if hit is not None:
            log.outcome = "collision"
            log.abort_reason = f"ego overlaps '{hit}' at t={t_next:.6g} s, s={new_ego.s:.6g} m"
            logger.error(log.abort_reason)
            raise SimulationAbort(log.abort_reason, log=log)

        agents, ego = new_agents, new_ego
        tick += 1
        if ego.s >= sc.length:
            log.outcome = "route_end"
            break
        if t_next >= sc.sim.t_max - 1e-9:
            log.outcome = "time_cap"
            break
        if time.perf_counter() - wall_start > cap:
            log.outcome = "wall_clock_cap"
            logger.warning(f"wall-clock cap of {cap:.6g} s reached at t={t_next:.6g}")
            break

    m = log.metrics()
    logger.info(
        f"'{sc.name}' {kind} seed={seed}: {log.outcome}, {m['total_cost_kj']:.6g} kJ, "
        f"{m['travel_time']:.6g} s, {m['nodes_mean']:.6g} nodes/cycle"
    )
    return log


# --- single plan ---------------------------------------------------------------------

def scenario_heuristic(sc, kind=None):
    cmap = build_cost_to_go(sc.vp, sc.profile, sc.gs, sc.length, sc.terminal_v_set, sc.limits)
    return Heuristic(kind or sc.planner.heuristic_kind, cmap, sc.vp, sc.profile)


def plan_once(sc, heuristic_kind=None, dump_tree=False):
    """One plan from the scenario's initial state against its traffic at t = 0."""
    heuristic = scenario_heuristic(sc, heuristic_kind)
    cfg = replace(sc.planner, heuristic_kind=heuristic.kind)
    ego = EgoState(0.0, sc.ego.s, float(sc.ego.lane), sc.ego.v)
    observations = observe(sc.traffic, 0.0, 0.0, "none", 0, None)
    obstacles = predict(observations, sc.rc, sc.replan.pc, sc.static_obstacles, ego=ego)
    return plan(ego, obstacles, heuristic, cfg, sc.gs, sc.vp, sc.rc, sc.replan.pc, sc.profile, dump_tree)


def trajectory_rows(trajectory):
    return [
        {
            "t_start": seg.t_start, "t_end": seg.t_end,
            "s_start": seg.s_start, "s_end": seg.s_end,
            "v_start": seg.v_start, "v_end": seg.v_end,
            "l_start": seg.l_start, "l_end": seg.l_end,
            "a": seg.a, "cost": seg.cost,
        }
        for seg in trajectory
    ]


def write_rows_csv(path, rows, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


# --- analysis ------------------------------------------------------------------------

def summarize(logs):
    """Mean and standard deviation of the benchmark columns over several runs."""
    rows = [log.metrics(include_timing=True) for log in logs]

    def stats(key):
        values = np.array([r[key] for r in rows], dtype=float)
        return float(values.mean()), float(values.std())

    return {
        "runs": len(rows),
        "planning_time": stats("planning_time_mean"),
        "nodes": stats("nodes_mean"),
        "cost_kj": stats("total_cost_kj"),
        "travel_time": stats("travel_time"),
    }


def maneuver_phases(log):
    """Collapse the tick stream into labelled phases (accelerate, decelerate, lane changes, ...)."""
    phases = []
    prev = None
    for row in log.ticks[1:]:
        t, s, l, v, a, _ = row
        if prev is not None and l - prev[2] > 1e-9:
            label = "lane_change_left"
        elif prev is not None and l - prev[2] < -1e-9:
            label = "lane_change_right"
        elif a > PHASE_ACCEL:
            label = "accelerate"
        elif a < -PHASE_ACCEL:
            label = "decelerate"
        elif v < 1e-6:
            label = "stand"
        else:
            label = "cruise"
        if not phases or phases[-1][0] != label:
            phases.append((label, t))
        prev = row
    return phases


def stop_line_crossings(log, lights):
    """(light name, crossing time, red at that time) for every stop line the ego passed."""
    out = []
    for tl in lights:
        for prev, row in zip(log.ticks, log.ticks[1:]):
            if prev[1] < tl.s_k <= row[1] and tl.affects(row[2]):
                frac = (tl.s_k - prev[1]) / (row[1] - prev[1])
                t_cross = prev[0] + frac * (row[0] - prev[0])
                out.append((tl.name, t_cross, tl.is_red(t_cross)))
                break
    return sorted(out, key=lambda x: x[1])
