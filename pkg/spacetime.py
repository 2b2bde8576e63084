"""
Search-space types shared by the planner, the obstacle predicates and the simulator.

A point of the space-time volume is (t, s, l): time, arc length along the road and the
lane coordinate (1 = rightmost lane centre, fractional while a lane change is running).
Search nodes keep integer grid indices plus the continuous remainder left over after
snapping, so repeated expansions never accumulate rounding errors.
"""

import bisect
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Optional, Tuple

from errors import ConfigurationError, DomainError, ReconstructionError

# Parameters
SNAP_TOL = 1e-10  # relative to the grid step
LANE_TOL = 1e-9
TIME_TOL = 1e-9


class LaneDir(IntEnum):
    """Direction of an in-progress lane change (sign of dl/dt)."""

    RIGHT = -1
    NONE = 0
    LEFT = 1


@dataclass(frozen=True)
class Configuration:
    t: float
    s: float
    l: float
    n_lanes: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        if self.t < 0 or self.s < 0:
            raise DomainError(f"configuration: t and s must be non-negative, got t={self.t}, s={self.s}")
        if self.l < 1:
            raise DomainError(f"configuration: lane coordinate {self.l} is below the rightmost lane")
        if self.n_lanes is not None and self.l > self.n_lanes + LANE_TOL:
            raise DomainError(f"configuration: lane coordinate {self.l} is beyond lane {self.n_lanes}")


@dataclass(frozen=True)
class GridSpec:
    dv: float = 1.0
    ds_grid: float = 10.0
    dt_grid: float = 1.0
    ds_exp: float = 10.0
    dt_exp: float = 2.0
    n_lanes: int = 3
    v_max: float = 20.0

    def __post_init__(self):
        for name in ("dv", "ds_grid", "dt_grid", "ds_exp", "dt_exp", "v_max"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"grid.{name} must be positive")
        if self.ds_exp < self.ds_grid:
            raise ConfigurationError("grid.ds_exp must be at least grid.ds_grid")
        if self.dt_exp < self.dt_grid:
            raise ConfigurationError("grid.dt_exp must be at least grid.dt_grid")
        if int(self.n_lanes) != self.n_lanes or self.n_lanes < 1:
            raise ConfigurationError("grid.n_lanes must be a positive integer")
        ratio = self.v_max / self.dv
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigurationError("grid.v_max must be an exact multiple of grid.dv")

    @property
    def n_v(self):
        """Number of grid velocities, 0 and v_max included."""
        return int(round(self.v_max / self.dv)) + 1

    def velocity(self, v_k):
        return v_k * self.dv

    def velocity_index(self, v):
        """Nearest grid velocity index, clamped to [0, v_max]."""
        return min(max(int(round(v / self.dv)), 0), self.n_v - 1)


def snap(value, step):
    """Split value into (index, remainder) with index*step + remainder == value and 0 <= remainder < step."""
    if step <= 0:
        raise ConfigurationError(f"snap: step must be positive, got {step}")
    if value < 0:
        raise DomainError(f"snap: value must be non-negative, got {value}")
    index = math.floor(value / step)
    remainder = value - index * step
    if remainder < 0:
        index -= 1
        remainder += step
    # values a hair below a grid line belong to that line
    if step - remainder <= SNAP_TOL * step:
        index += 1
        remainder = 0.0
    return int(index), max(remainder, 0.0)


def advance(index, remainder, delta, step):
    """Hybrid-A* accumulation: add delta to the remainder and carry whole steps into the index."""
    carry, rest = snap(remainder + delta, step)
    return index + carry, rest


def reconstruct(index, remainder, step):
    return index * step + remainder


@dataclass(frozen=True)
class EgoState:
    t: float
    s: float
    l: float
    v: float
    l_dir: LaneDir = LaneDir.NONE


DiscreteKey = Tuple[int, int, int, int, LaneDir]


@dataclass(frozen=True)
class SearchNode:
    v_k: int
    t_k: int
    s_k: int
    l_k: int
    t_r: float = 0.0
    s_r: float = 0.0
    l_r: float = 0.0
    l_dir: LaneDir = LaneDir.NONE
    g: float = 0.0
    f: float = 0.0
    parent_key: Optional[DiscreteKey] = None

    @classmethod
    def from_state(cls, state, gs, g=0.0, f=0.0, parent_key=None):
        t_k, t_r = snap(state.t, gs.dt_grid)
        s_k, s_r = snap(state.s, gs.ds_grid)
        l_k, l_r = snap(state.l, 1.0)
        l_dir = LaneDir(state.l_dir) if l_r > LANE_TOL else LaneDir.NONE
        if l_r <= LANE_TOL:
            l_r = 0.0
        return cls(gs.velocity_index(state.v), t_k, s_k, l_k, t_r, s_r, l_r, l_dir, g, f, parent_key)

    def t(self, gs):
        return reconstruct(self.t_k, self.t_r, gs.dt_grid)

    def s(self, gs):
        return reconstruct(self.s_k, self.s_r, gs.ds_grid)

    @property
    def l(self):
        return self.l_k + self.l_r

    def v(self, gs):
        return gs.velocity(self.v_k)

    def state(self, gs):
        return EgoState(self.t(gs), self.s(gs), self.l, self.v(gs), self.l_dir)


def node_key(n):
    """Closing key: remainders are excluded, velocity and lane-change direction are not."""
    return (n.v_k, n.t_k, n.s_k, n.l_k, LaneDir(n.l_dir))


@dataclass(frozen=True)
class Segment:
    """One constant-acceleration piece; l moves linearly from l_start to l_end."""

    t_start: float
    t_end: float
    s_start: float
    v_start: float
    v_end: float
    l_start: float
    l_end: float
    cost: float = 0.0

    @property
    def duration(self):
        return self.t_end - self.t_start

    @property
    def a(self):
        d = self.duration
        return (self.v_end - self.v_start) / d if d > 0 else 0.0

    @property
    def l_rate(self):
        d = self.duration
        return (self.l_end - self.l_start) / d if d > 0 else 0.0

    @property
    def s_end(self):
        return self.s_start + 0.5 * (self.v_start + self.v_end) * self.duration

    def s_at(self, t):
        tau = t - self.t_start
        return self.s_start + self.v_start * tau + 0.5 * self.a * tau * tau

    def v_at(self, t):
        return max(self.v_start + self.a * (t - self.t_start), 0.0)

    def l_at(self, t):
        return self.l_start + self.l_rate * (t - self.t_start)

    def split(self, t):
        """Return the pieces before and after t; cost is shared pro rata in time."""
        d = self.duration
        share = (t - self.t_start) / d if d > 0 else 1.0
        head = replace(self, t_end=t, v_end=self.v_at(t), l_end=self.l_at(t), cost=self.cost * share)
        tail = replace(
            self,
            t_start=t,
            s_start=self.s_at(t),
            v_start=self.v_at(t),
            l_start=self.l_at(t),
            cost=self.cost * (1.0 - share),
        )
        return head, tail


@dataclass(frozen=True)
class Trajectory:
    segments: Tuple[Segment, ...] = ()
    total_cost: float = 0.0
    _starts: Tuple[float, ...] = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        segments = tuple(self.segments)
        object.__setattr__(self, "segments", segments)
        object.__setattr__(self, "_starts", tuple(seg.t_start for seg in segments))
        for prev, nxt in zip(segments, segments[1:]):
            if abs(prev.t_end - nxt.t_start) > TIME_TOL:
                raise ReconstructionError(
                    f"trajectory: segments are not time-contiguous at t={prev.t_end} / {nxt.t_start}"
                )

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    @property
    def t_start(self):
        return self.segments[0].t_start

    @property
    def t_end(self):
        return self.segments[-1].t_end

    def covers(self, t):
        return bool(self.segments) and self.t_start - TIME_TOL <= t <= self.t_end + TIME_TOL

    def segment_at(self, t):
        if not self.covers(t):
            raise DomainError(f"trajectory: t={t} outside [{self.t_start if self.segments else None}, "
                              f"{self.t_end if self.segments else None}]")
        i = bisect.bisect_right(self._starts, t) - 1
        return self.segments[min(max(i, 0), len(self.segments) - 1)]

    def state_at(self, t):
        """EgoState on the trajectory at time t; l_dir follows the sign of the lane rate."""
        seg = self.segment_at(t)
        tc = min(max(t, seg.t_start), seg.t_end)
        l = seg.l_at(tc)
        rate = seg.l_rate
        # at the last instant of a segment the incoming motion decides the direction
        if abs(l - round(l)) <= LANE_TOL:
            l_dir = LaneDir.NONE
            l = float(round(l))
        else:
            l_dir = LaneDir.LEFT if rate > 0 else LaneDir.RIGHT if rate < 0 else LaneDir.NONE
        return EgoState(t, seg.s_at(tc), l, seg.v_at(tc), l_dir)

    def truncate(self, t):
        """Keep the part of the trajectory up to time t."""
        kept = []
        for seg in self.segments:
            if seg.t_end <= t + TIME_TOL:
                kept.append(seg)
            elif seg.t_start < t - TIME_TOL:
                kept.append(seg.split(t)[0])
                break
            else:
                break
        return Trajectory(tuple(kept), sum(seg.cost for seg in kept))

    def after(self, t):
        """Keep the part of the trajectory from time t on."""
        kept = []
        for seg in self.segments:
            if seg.t_start >= t - TIME_TOL:
                kept.append(seg)
            elif seg.t_end > t + TIME_TOL:
                kept.append(seg.split(t)[1])
        return Trajectory(tuple(kept), sum(seg.cost for seg in kept))

    def extend(self, segments):
        segments = tuple(segments)
        return Trajectory(self.segments + segments, self.total_cost + sum(seg.cost for seg in segments))


def stop_profile(state, a_min, t_until, T_LC=None):
    """
    Segments that brake at a_min from `state` to a standstill and then hold until t_until.

    A lane change in progress (state.l_dir != NONE) is carried on at 1/T_LC to its target
    lane so the tail never parks between lanes.
    """
    t0 = state.t
    if t_until <= t0 + TIME_TOL:
        return ()
    breaks = {t0, t_until}
    t_stop = t0 + state.v / -a_min if state.v > 0 else t0
    if t_stop < t_until:
        breaks.add(t_stop)

    rate = 0.0
    target = state.l
    if state.l_dir != LaneDir.NONE and T_LC:
        rate = float(state.l_dir) / T_LC
        target = math.floor(state.l) + 1 if state.l_dir == LaneDir.LEFT else math.floor(state.l)
        t_lane = t0 + abs(target - state.l) * T_LC
        if t_lane < t_until:
            breaks.add(t_lane)

    def s_v(t):
        tau = min(t, t_stop) - t0
        return state.s + state.v * tau + 0.5 * a_min * tau * tau, max(state.v + a_min * tau, 0.0)

    def lane(t):
        if rate == 0.0:
            return state.l
        l = state.l + rate * (t - t0)
        return min(l, target) if rate > 0 else max(l, target)

    points = sorted(b for b in breaks if b >= t0)
    segments = []
    for ta, tb in zip(points, points[1:]):
        if tb - ta <= TIME_TOL:
            continue
        s_a, v_a = s_v(ta)
        _, v_b = s_v(tb)
        segments.append(Segment(ta, tb, s_a, v_a, v_b, lane(ta), lane(tb)))
    return tuple(segments)
