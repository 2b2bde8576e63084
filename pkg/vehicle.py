"""
Longitudinal point-mass energy model, expansion kinematics and the linear lane-change model.

Energy is the integral of motor power F_m * v over a constant-acceleration transition,
F_m = m*a + F_r(v). Traction power is divided by the drivetrain efficiency, braking power
is credited at the regeneration efficiency. Powertrain loss maps are not modelled.
"""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from errors import ConfigurationError

# Parameters
GRAVITY = 9.81
LIMIT_TOL = 1e-9
MAX_SLOPE = 0.2  # rad


@dataclass(frozen=True)
class VehicleParams:
    m: float = 1500.0
    c_rr: float = 0.01
    c_dA: float = 0.7
    rho: float = 1.2
    eta_drive: float = 0.9
    eta_regen: float = 0.3
    a_min: float = -3.0
    a_max: float = 2.0
    T_LC: float = 4.0
    C_LC: float = 5000.0

    def __post_init__(self):
        if self.m <= 0:
            raise ConfigurationError("vehicle.m must be positive")
        if not (self.a_min < 0 < self.a_max):
            raise ConfigurationError("vehicle acceleration limits must satisfy a_min < 0 < a_max")
        if self.T_LC <= 0:
            raise ConfigurationError("vehicle.T_LC must be positive")
        if not (0 < self.eta_drive <= 1):
            raise ConfigurationError("vehicle.eta_drive must lie in (0, 1]")
        if not (0 <= self.eta_regen <= 1):
            raise ConfigurationError("vehicle.eta_regen must lie in [0, 1]")
        if self.C_LC < 0 or self.c_rr < 0 or self.c_dA < 0 or self.rho < 0:
            raise ConfigurationError("vehicle resistance coefficients and C_LC must be non-negative")


class RoadProfile:
    """
    Piecewise-constant road description sampled along s.

    Each sample (s, slope, speed_limit) holds from its s up to the next sample; the first
    sample also covers everything before it.
    """

    def __init__(self, s: Sequence[float], slope: Sequence[float], speed_limit: Sequence[float]):
        self.s = np.asarray(s, dtype=float)
        self.slope = np.asarray(slope, dtype=float)
        self.speed_limit = np.asarray(speed_limit, dtype=float)
        if self.s.ndim != 1 or len(self.s) == 0:
            raise ConfigurationError("road profile needs at least one sample")
        if not (len(self.s) == len(self.slope) == len(self.speed_limit)):
            raise ConfigurationError("road profile columns differ in length")
        if np.any(np.diff(self.s) <= 0):
            raise ConfigurationError("road profile s must be strictly increasing")
        if np.any(np.abs(self.slope) >= MAX_SLOPE):
            raise ConfigurationError(f"road profile slopes must stay below {MAX_SLOPE} rad")
        if np.any(self.speed_limit <= 0):
            raise ConfigurationError("road profile speed limits must be positive")

    @classmethod
    def flat(cls, speed_limit=math.inf):
        return cls([0.0], [0.0], [speed_limit])

    def _index(self, s):
        idx = np.searchsorted(self.s, s, side="right") - 1
        return np.clip(idx, 0, len(self.s) - 1)

    def slope_at(self, s):
        return self.slope[self._index(s)]

    def limit_at(self, s):
        return self.speed_limit[self._index(s)]

    def min_limit(self, s_a, s_b):
        """Lowest profile speed limit over [s_a, s_b]."""
        i = int(self._index(s_a))
        j = int(self._index(s_b))
        return float(self.speed_limit[i:j + 1].min())

    def to_dict(self):
        return {
            "s": self.s.tolist(),
            "slope": self.slope.tolist(),
            "speed_limit": [None if math.isinf(x) else x for x in self.speed_limit.tolist()],
        }


def resistive_force(vp, v, slope):
    """Rolling + grade + aerodynamic resistance [N]."""
    return vp.m * GRAVITY * (vp.c_rr * math.cos(slope) + math.sin(slope)) + 0.5 * vp.rho * vp.c_dA * v * v


def transition(v_i, v_f, gs):
    """
    Kinematics of one expansion from v_i to v_f.

    Slow variants are limited by dt_exp, fast ones by ds_exp. Returns (dt, ds, a).
    """
    v_mean = 0.5 * (v_i + v_f)
    if v_mean < gs.ds_exp / gs.dt_exp:
        dt = gs.dt_exp
        ds = v_mean * dt
    else:
        ds = gs.ds_exp
        dt = ds / v_mean
    return dt, ds, (v_f - v_i) / dt


def _antiderivative(A, B, v):
    return A * v * v / 2.0 + B * v ** 4 / 4.0


def cost_trans(vp, v_i, v_f, dt, slope):
    """
    Energy [J] for a uniform acceleration from v_i to v_f over dt on a constant slope.

    P(v) = (A + B*v^2) * v with A = m*a + m*g*(c_rr*cos + sin) and B = rho*c_dA/2. With
    dv = a*dtau the time integral becomes a polynomial in v, split where P changes sign.
    """
    if dt <= 0:
        return 0.0
    a = (v_f - v_i) / dt
    A = vp.m * a + vp.m * GRAVITY * (vp.c_rr * math.cos(slope) + math.sin(slope))
    B = 0.5 * vp.rho * vp.c_dA

    if a == 0.0:
        power = (A + B * v_i * v_i) * v_i
        return _weigh(vp, power * dt)

    lo, hi = min(v_i, v_f), max(v_i, v_f)
    cuts = [lo]
    if A < 0 and B > 0:
        v_star = math.sqrt(-A / B)
        if lo < v_star < hi:
            cuts.append(v_star)
    cuts.append(hi)

    total = 0.0
    for va, vb in zip(cuts, cuts[1:]):
        # integrating over v from va to vb; the time direction is fixed by the sign of a
        energy = (_antiderivative(A, B, vb) - _antiderivative(A, B, va)) / a
        if a < 0:
            energy = -energy
        total += _weigh(vp, energy)
    return total


def _weigh(vp, energy):
    if energy >= 0:
        return energy / vp.eta_drive
    return energy * vp.eta_regen


def check_internal_limits(vp, a, v_f, gs):
    if v_f < -LIMIT_TOL or v_f > gs.v_max + LIMIT_TOL:
        return False
    return vp.a_min - LIMIT_TOL <= a <= vp.a_max + LIMIT_TOL


def lane_change_progress(dt, T_LC, progressed=0.0):
    """Lane coordinate increment for dt, clamped so one change never exceeds a full lane."""
    return max(min(dt / T_LC, 1.0 - progressed), 0.0)
