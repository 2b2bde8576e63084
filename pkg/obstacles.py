"""
Obstacles in the space-time volume and analytic collision predicates.

Every predicate takes one constant-acceleration Segment (quadratic s, linear l) and
reduces the question to the sign of low-order polynomials in local time tau on
[0, duration]. The sampling oracle used to validate them lives in the tests.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import FrozenSet, Optional, Tuple

from errors import ConfigurationError, DomainError, ObstacleHorizonError

# Parameters
ROOT_TOL = 1e-9
EPS = 1e-9


class BanDirection(str, Enum):
    BOTH = "both"
    LEFT_ONLY = "left_only"
    RIGHT_ONLY = "right_only"


@dataclass(frozen=True)
class RuleConfig:
    L_ego: float = 4.5
    dv_ov: float = 2.78
    no_right_overtake: bool = False
    enforce_min_overtake_speed: bool = False

    def __post_init__(self):
        if self.L_ego <= 0:
            raise ConfigurationError("rules.L_ego must be positive")
        if self.dv_ov < 0:
            raise ConfigurationError("rules.dv_ov must be non-negative")


@dataclass(frozen=True)
class PredictionConfig:
    ds_max: float = 1.0
    T_rep: float = 1.0
    T_hor: float = 13.0

    def __post_init__(self):
        if self.ds_max < 0:
            raise ConfigurationError("prediction.ds_max must be non-negative")
        if not (0 < self.T_rep < self.T_hor):
            raise ConfigurationError("prediction needs 0 < T_rep < T_hor")

    def buffer(self, t, t0):
        """Step-shaped safety buffer: ds_max during the first replanning period, 3*ds_max after."""
        return self.ds_max if t < t0 + self.T_rep else 3.0 * self.ds_max


@dataclass(frozen=True)
class VehicleObstacle:
    s0: float
    v0: float
    lane: float
    L_k: float
    t0: float
    name: str = "vehicle"

    def __post_init__(self):
        if self.L_k <= 0:
            raise ConfigurationError(f"{self.name}: length must be positive")
        if self.v0 < 0:
            raise ConfigurationError(f"{self.name}: velocity must be non-negative")

    def center(self, t):
        return self.s0 + self.v0 * (t - self.t0)


@dataclass(frozen=True)
class TrafficLightObstacle:
    s_k: float
    phases: Tuple[Tuple[float, float], ...]
    period: Optional[float] = None
    lanes: Optional[FrozenSet[int]] = None  # None: every lane
    name: str = "light"

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple((float(o), float(d)) for o, d in self.phases))
        if self.lanes is not None:
            object.__setattr__(self, "lanes", frozenset(int(x) for x in self.lanes))
        if any(d <= 0 for _, d in self.phases):
            raise ConfigurationError(f"{self.name}: red durations must be positive")
        if self.period is not None:
            if self.period <= 0:
                raise ConfigurationError(f"{self.name}: period must be positive")
            spans = sorted(((o % self.period), (o % self.period) + d) for o, d in self.phases)
            for (_, end), (start, _) in zip(spans, spans[1:]):
                if start < end:
                    raise ConfigurationError(f"{self.name}: red intervals overlap within one period")
            if spans and spans[-1][1] - self.period > spans[0][0]:
                raise ConfigurationError(f"{self.name}: red intervals overlap within one period")

    def affects(self, l):
        if self.lanes is None:
            return True
        return any(abs(lane - l) < 1.0 for lane in self.lanes)

    def red_intervals(self, t_a, t_b):
        """Absolute red intervals intersecting [t_a, t_b], unrolled by the period."""
        out = []
        for offset, dur in self.phases:
            if self.period is None:
                if offset <= t_b and offset + dur >= t_a:
                    out.append((offset, offset + dur))
                continue
            k0 = math.floor((t_a - offset - dur) / self.period)
            k1 = math.floor((t_b - offset) / self.period)
            for k in range(k0, k1 + 1):
                start = offset + k * self.period
                if start <= t_b and start + dur >= t_a:
                    out.append((start, start + dur))
        return sorted(out)

    def is_red(self, t):
        return bool(self.red_intervals(t, t))


@dataclass(frozen=True)
class SpeedLimitZone:
    s_k: float
    ds_k: float
    v_limit: float
    name: str = "speed_limit"

    def __post_init__(self):
        if self.ds_k <= 0:
            raise ConfigurationError(f"{self.name}: zone length must be positive")
        if self.v_limit <= 0:
            raise ConfigurationError(f"{self.name}: v_limit must be positive")

    @property
    def s_end(self):
        return self.s_k + self.ds_k


@dataclass(frozen=True)
class LaneChangeBan:
    s_k: float
    ds_k: float
    l_i: int
    direction: BanDirection = BanDirection.BOTH
    name: str = "lane_ban"

    def __post_init__(self):
        object.__setattr__(self, "direction", BanDirection(self.direction))
        if self.ds_k <= 0:
            raise ConfigurationError(f"{self.name}: zone length must be positive")
        if self.l_i < 1:
            raise ConfigurationError(f"{self.name}: boundary index must be at least 1")


@dataclass(frozen=True)
class ObstacleSet:
    vehicles: Tuple[VehicleObstacle, ...] = ()
    lights: Tuple[TrafficLightObstacle, ...] = ()
    limits: Tuple[SpeedLimitZone, ...] = ()
    bans: Tuple[LaneChangeBan, ...] = ()

    def __post_init__(self):
        for name in ("vehicles", "lights", "limits", "bans"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def __len__(self):
        return len(self.vehicles) + len(self.lights) + len(self.limits) + len(self.bans)

    def with_vehicles(self, vehicles):
        return ObstacleSet(tuple(vehicles), self.lights, self.limits, self.bans)


@dataclass(frozen=True)
class CollisionReport:
    passed: bool
    obstacle: Optional[str] = None
    kind: Optional[str] = None

    def __bool__(self):
        return self.passed


PASS = CollisionReport(True)


# --- polynomial interval kernel -------------------------------------------------------

def _roots(c2, c1, c0):
    """Real roots of c2*x^2 + c1*x + c0, duplicates removed."""
    if abs(c2) < 1e-14:
        if abs(c1) < 1e-14:
            return []
        return [-c0 / c1]
    disc = c1 * c1 - 4.0 * c2 * c0
    scale = max(c1 * c1, abs(4.0 * c2 * c0), 1.0)
    if disc < -ROOT_TOL * scale:
        return []
    if disc <= ROOT_TOL * scale:
        return [-c1 / (2.0 * c2)]
    sq = math.sqrt(disc)
    # numerically stable pair
    q = -0.5 * (c1 + math.copysign(sq, c1))
    r1 = q / c2
    r2 = c0 / q if q != 0 else -c1 / (2.0 * c2)
    return sorted({r1, r2})


def nonpositive_intervals(poly, lo, hi, tol=ROOT_TOL):
    """Closed sub-intervals of [lo, hi] where c2*x^2 + c1*x + c0 <= tol."""
    if hi < lo:
        return []
    c2, c1, c0 = poly

    def p(x):
        return (c2 * x + c1) * x + c0

    cuts = [lo] + [r for r in _roots(c2, c1, c0) if lo < r < hi] + [hi]
    out = []
    for a, b in zip(cuts, cuts[1:]):
        if p(0.5 * (a + b)) <= tol:
            out.append((a, b))
    for x in cuts:
        if p(x) <= tol:
            out.append((x, x))
    return merge_intervals(out)


def merge_intervals(intervals):
    merged = []
    for a, b in sorted(intervals):
        if merged and a <= merged[-1][1] + EPS:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return merged


def intersect_intervals(xs, ys):
    out = []
    for a1, b1 in xs:
        for a2, b2 in ys:
            a, b = max(a1, a2), min(b1, b2)
            if a <= b:
                out.append((a, b))
    return merge_intervals(out)


def _all_nonpositive(polys, lo, hi):
    found = [(lo, hi)]
    for poly in polys:
        found = intersect_intervals(found, nonpositive_intervals(poly, lo, hi))
        if not found:
            break
    return found


def _open_lane_window(seg, center, half_width=1.0):
    """Local-time interval where |l(tau) - center| < half_width, or None when empty."""
    d = seg.duration
    rate = seg.l_rate
    offset = seg.l_start - center
    if rate == 0.0:
        return (0.0, d) if abs(offset) < half_width - EPS else None
    ta = (-half_width - offset) / rate
    tb = (half_width - offset) / rate
    lo, hi = max(min(ta, tb), 0.0), min(max(ta, tb), d)
    if hi - lo <= EPS:
        return None
    return lo, hi


def _gap_poly(seg, o):
    """d(tau) = s(tau) - center(t_start + tau) as (c2, c1, c0)."""
    return (0.5 * seg.a, seg.v_start - o.v0, seg.s_start - o.center(seg.t_start))


def _buffer_pieces(seg, o, rc, pc, lo, hi):
    """Split [lo, hi] at the buffer step; yields (lo, hi, half_width) pieces."""
    L_S = 0.5 * o.L_k + 0.5 * rc.L_ego
    split = o.t0 + pc.T_rep - seg.t_start
    if hi <= split:
        return [(lo, hi, L_S + pc.ds_max)]
    if lo >= split:
        return [(lo, hi, L_S + 3.0 * pc.ds_max)]
    return [(lo, split, L_S + pc.ds_max), (split, hi, L_S + 3.0 * pc.ds_max)]


def _check_horizon(seg, o, pc):
    if seg.t_end > o.t0 + pc.T_hor + EPS:
        raise ObstacleHorizonError(
            f"{o.name}: queried at t={seg.t_end:.6g} beyond prediction horizon t0+T_hor={o.t0 + pc.T_hor:.6g}"
        )


# --- predicates -----------------------------------------------------------------------

def vehicle_bounds(o, rc, pc, t):
    """(s_lower, s_upper) of the buffered vehicle obstacle at time t."""
    if t < o.t0 - EPS:
        raise DomainError(f"{o.name}: bounds requested before the observation time")
    if t > o.t0 + pc.T_hor + EPS:
        raise ObstacleHorizonError(f"{o.name}: t={t:.6g} beyond prediction horizon")
    half = 0.5 * o.L_k + 0.5 * rc.L_ego + pc.buffer(t, o.t0)
    c = o.center(t)
    return c - half, c + half


def check_vehicle_collision(seg, o, rc, pc):
    if seg.duration <= 0:
        return False
    _check_horizon(seg, o, pc)
    window = _open_lane_window(seg, o.lane)
    if window is None:
        return False
    lo, hi = window
    lo = max(lo, o.t0 - seg.t_start)
    if hi < lo:
        return False
    c2, c1, c0 = _gap_poly(seg, o)
    for a, b, width in _buffer_pieces(seg, o, rc, pc, lo, hi):
        candidates = [a, b]
        if c2 != 0.0:
            vertex = -c1 / (2.0 * c2)
            if a < vertex < b:
                candidates.append(vertex)
        values = [(c2 * x + c1) * x + c0 for x in candidates]
        if min(values) <= width and max(values) >= -width:
            return True
    return False


def check_overtaking_rules(seg, o, rc, pc):
    """True when the segment overtakes o on the right or overtakes it on the left too slowly."""
    if not (rc.no_right_overtake or rc.enforce_min_overtake_speed):
        return False
    d = seg.duration
    if d <= 0:
        return False
    _check_horizon(seg, o, pc)
    lo = max(0.0, o.t0 - seg.t_start)
    if lo > d:
        return False
    rate, l0 = seg.l_rate, seg.l_start
    gap = _gap_poly(seg, o)
    for a, b, width in _buffer_pieces(seg, o, rc, pc, lo, d):
        inside_band = [(gap[0], gap[1], gap[2] - width), (-gap[0], -gap[1], -gap[2] - width)]
        if rc.no_right_overtake:
            polys = [
                (0.0, rate, l0 - (o.lane - 1.0)),  # l <= l_k - 1
                (0.0, -rate, 1.0 - l0),  # l >= 1
                (0.0, -seg.a, o.v0 - seg.v_start),  # v >= v_k
                gap,  # s <= s_k
            ] + inside_band
            if _all_nonpositive(polys, a, b):
                return True
        if rc.enforce_min_overtake_speed:
            polys = [
                (0.0, -rate, (o.lane + 1.0) - l0),  # l >= l_k + 1
                (0.0, seg.a, seg.v_start - o.v0 - rc.dv_ov),  # v <= v_k + dv_ov
            ] + inside_band
            if _all_nonpositive(polys, a, b):
                return True
    return False


def _line_contact(seg, s_line):
    """Local-time intervals where the segment sits on the line s = s_line."""
    c2, c1 = 0.5 * seg.a, seg.v_start
    c0 = seg.s_start - s_line
    return _all_nonpositive([(c2, c1, c0), (-c2, -c1, -c0)], 0.0, seg.duration)


def check_traffic_light(seg, tl):
    if seg.s_start > tl.s_k + ROOT_TOL or seg.s_end < tl.s_k - ROOT_TOL:
        return False
    for a, b in _line_contact(seg, tl.s_k):
        if tl.lanes is None:
            hits = [(a, b)]
        else:
            windows = [_open_lane_window(seg, lane) for lane in tl.lanes]
            hits = intersect_intervals([(a, b)], merge_intervals(w for w in windows if w is not None))
        for ha, hb in hits:
            if tl.red_intervals(seg.t_start + ha, seg.t_start + hb):
                return True
    return False


def check_speed_limit(seg, z):
    if seg.s_end < z.s_k - ROOT_TOL or seg.s_start > z.s_end + ROOT_TOL:
        return False
    c2, c1 = 0.5 * seg.a, seg.v_start
    c0 = seg.s_start
    inside = _all_nonpositive(
        [(c2, c1, c0 - z.s_end), (-c2, -c1, z.s_k - c0)], 0.0, seg.duration
    )
    for a, b in inside:
        v_peak = max(seg.v_start + seg.a * a, seg.v_start + seg.a * b)
        if v_peak >= z.v_limit - EPS:
            return True
    return False


def check_lane_ban(seg, b):
    rate = seg.l_rate
    if seg.duration <= 0:
        return False
    if b.direction == BanDirection.LEFT_ONLY and rate <= 0:
        return False
    if b.direction == BanDirection.RIGHT_ONLY and rate >= 0:
        return False
    band = _open_lane_window(seg, b.l_i + 0.5, half_width=0.5)
    if band is None:
        return False
    c2, c1 = 0.5 * seg.a, seg.v_start
    c0 = seg.s_start
    zone = _all_nonpositive(
        [(c2, c1, c0 - (b.s_k + b.ds_k)), (-c2, -c1, b.s_k - c0)], 0.0, seg.duration
    )
    lo, hi = band
    for za, zb in zone:
        if max(lo, za) < min(hi, zb) or (za == zb and lo < za < hi):
            return True
    return False


def _may_touch_vehicle(seg, o, rc, pc):
    """Cheap rejection on lane and longitudinal reach before the exact test."""
    if min(seg.l_start, seg.l_end) >= o.lane + 1.0 or max(seg.l_start, seg.l_end) <= o.lane - 1.0:
        return False
    reach = 0.5 * o.L_k + 0.5 * rc.L_ego + 3.0 * pc.ds_max
    if seg.s_end < o.center(max(seg.t_start, o.t0)) - reach:
        return False
    if seg.s_start > o.center(seg.t_end) + reach:
        return False
    return True


def check_all(seg, obstacles, rc, pc):
    """First violated obstacle, lights and zones before vehicles."""
    for tl in obstacles.lights:
        if check_traffic_light(seg, tl):
            return CollisionReport(False, tl.name, "traffic_light")
    for z in obstacles.limits:
        if check_speed_limit(seg, z):
            return CollisionReport(False, z.name, "speed_limit")
    for b in obstacles.bans:
        if check_lane_ban(seg, b):
            return CollisionReport(False, b.name, "lane_ban")
    rules = rc.no_right_overtake or rc.enforce_min_overtake_speed
    for o in obstacles.vehicles:
        if seg.duration > 0:
            _check_horizon(seg, o, pc)
        if rules and check_overtaking_rules(seg, o, rc, pc):
            return CollisionReport(False, o.name, "overtaking_rule")
        if _may_touch_vehicle(seg, o, rc, pc) and check_vehicle_collision(seg, o, rc, pc):
            return CollisionReport(False, o.name, "vehicle")
    return PASS
