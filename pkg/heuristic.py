"""
Cost-to-go heuristics for the space-time search.

The DP map solves the relaxed problem (no moving vehicles, no light phases) exactly by a
backward sweep over (s, v) rows and is built once per route. The model-based bound and
the zero heuristic are the baselines the planner is compared against.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from config import get_logger
from errors import ConfigurationError
from vehicle import GRAVITY, cost_trans

logger = get_logger("HEURISTIC")

# Parameters
GRID_TOL = 1e-9
HEURISTIC_KINDS = ("dp", "mb", "zero")


@dataclass(frozen=True)
class CostToGoMap:
    s_axis: np.ndarray
    v_axis: np.ndarray
    values: np.ndarray  # shape (len(s_axis), len(v_axis))
    goal_s: float
    terminal_v_set: tuple
    slopes: np.ndarray = field(repr=False, default=None)  # slope used on the edge leaving each row

    @property
    def ds(self):
        return float(self.s_axis[1] - self.s_axis[0]) if len(self.s_axis) > 1 else 1.0

    @property
    def dv(self):
        return float(self.v_axis[1] - self.v_axis[0]) if len(self.v_axis) > 1 else 1.0

    def row_index(self, s):
        """Index of the first grid row at or beyond s."""
        idx = math.ceil((s - self.s_axis[0]) / self.ds - GRID_TOL)
        return min(max(idx, 0), len(self.s_axis) - 1)

    def to_rows(self):
        """(s, v, J) triples in row-major order; infeasible states keep inf."""
        for i, s in enumerate(self.s_axis):
            for j, v in enumerate(self.v_axis):
                yield float(s), float(v), float(self.values[i, j])


def _edge_costs(vp, v_axis, ds, slope):
    """Matrix C[j, k] of one ds-stride from v_j to v_k; inf where the move is not allowed."""
    n = len(v_axis)
    costs = np.full((n, n), np.inf)
    for j, v_j in enumerate(v_axis):
        for k, v_k in enumerate(v_axis):
            v_mean = 0.5 * (v_j + v_k)
            if v_mean <= 0:
                continue
            dt = ds / v_mean
            a = (v_k - v_j) / dt
            if a < vp.a_min - GRID_TOL or a > vp.a_max + GRID_TOL:
                continue
            costs[j, k] = cost_trans(vp, float(v_j), float(v_k), dt, slope)
    return costs


def build_cost_to_go(vp, profile, gs, goal_s, terminal_v_set=None, zones: Sequence = ()):
    """
    Backward DP from goal_s over rows spaced ds_grid apart.

    Edge costs use regeneration clamped to zero so every edge is non-negative.
    """
    ratio = goal_s / gs.ds_grid
    if goal_s <= 0 or abs(ratio - round(ratio)) > GRID_TOL:
        raise ConfigurationError(f"heuristic: goal_s={goal_s} is not on the {gs.ds_grid} m grid")
    n_rows = int(round(ratio)) + 1
    s_axis = np.arange(n_rows) * gs.ds_grid
    v_axis = np.arange(gs.n_v) * gs.dv

    if terminal_v_set is None:
        terminal_v_set = tuple(float(v) for v in v_axis)
    terminal_v_set = tuple(sorted(float(v) for v in terminal_v_set))
    terminal_idx = []
    for v in terminal_v_set:
        j = v / gs.dv
        if abs(j - round(j)) > GRID_TOL or not (0 <= round(j) < gs.n_v):
            raise ConfigurationError(f"heuristic: terminal velocity {v} is not on the velocity grid")
        terminal_idx.append(int(round(j)))

    vp_map = replace(vp, eta_regen=0.0)
    slopes = np.asarray(profile.slope_at(s_axis), dtype=float).reshape(n_rows)

    # feasibility mask: zones are exclusive at v_limit, profile limits are hard maxima
    feasible = np.ones((n_rows, gs.n_v), dtype=bool)
    limits = np.asarray(profile.limit_at(s_axis), dtype=float).reshape(n_rows)
    feasible &= v_axis[None, :] <= limits[:, None] + GRID_TOL
    for z in zones:
        in_zone = (s_axis >= z.s_k - GRID_TOL) & (s_axis <= z.s_end + GRID_TOL)
        feasible[in_zone] &= v_axis[None, :] < z.v_limit - GRID_TOL

    values = np.full((n_rows, gs.n_v), np.inf)
    values[-1, terminal_idx] = 0.0
    values[-1] = np.where(feasible[-1], values[-1], np.inf)

    cache = {}
    for i in range(n_rows - 2, -1, -1):
        slope = float(slopes[i])
        if slope not in cache:
            cache[slope] = _edge_costs(vp_map, v_axis, gs.ds_grid, slope)
        candidates = cache[slope] + values[i + 1][None, :]
        values[i] = np.where(feasible[i], candidates.min(axis=1), np.inf)

    if not np.isfinite(values).any():
        logger.warning("no feasible terminal state, cost-to-go map is infinite everywhere")
    logger.debug(f"cost-to-go map built: {n_rows} rows x {gs.n_v} velocities, goal {goal_s:.6g} m")
    return CostToGoMap(s_axis, v_axis, values, float(goal_s), terminal_v_set, slopes)


def query_dp(cmap, s, v):
    """Stored value at the next grid row at or beyond s; zero past the goal."""
    if s > cmap.goal_s + GRID_TOL:
        return 0.0
    j = int(round(v / cmap.dv))
    j = min(max(j, 0), len(cmap.v_axis) - 1)
    return float(cmap.values[cmap.row_index(s), j])


def query_mb(vp, profile, s, v, goal_s, v_goal=0.0, ds_grid=None):
    """
    Model-based lower bound: rolling and grade work over the remaining distance plus the
    kinetic energy still missing for v_goal, divided by the drive efficiency.

    Aerodynamic work is left out since it vanishes at the most efficient crawl speed.
    """
    if s >= goal_s - GRID_TOL:
        return 0.0
    if ds_grid:
        start = math.ceil(s / ds_grid - GRID_TOL) * ds_grid
        rows = np.arange(start, goal_s - GRID_TOL, ds_grid)
        slopes = np.asarray(profile.slope_at(rows), dtype=float)
        work = float(np.sum(vp.m * GRAVITY * (vp.c_rr * np.cos(slopes) + np.sin(slopes)) * ds_grid))
    else:
        slope = float(profile.slope_at(s))
        work = vp.m * GRAVITY * (vp.c_rr * math.cos(slope) + math.sin(slope)) * (goal_s - s)
    kinetic = 0.5 * vp.m * (v_goal * v_goal - v * v)
    return max(0.0, work + kinetic) / vp.eta_drive


def query_zero(s, v):
    return 0.0


class Heuristic:
    """
    The guide a search uses for interior nodes, bundled with the DP map that also prices
    nodes on a horizon.
    """

    def __init__(self, kind, cmap, vp=None, profile=None):
        if kind not in HEURISTIC_KINDS:
            raise ConfigurationError(f"heuristic: unknown kind '{kind}', expected one of {HEURISTIC_KINDS}")
        if kind == "mb" and (vp is None or profile is None):
            raise ConfigurationError("heuristic: 'mb' needs vehicle parameters and a road profile")
        self.kind = kind
        self.cmap = cmap
        self.vp = vp
        self.profile = profile
        self._v_goal = min(cmap.terminal_v_set) if cmap.terminal_v_set else 0.0
        self._mb_work: Optional[np.ndarray] = None
        if kind == "mb":
            # remaining rolling + grade work from each row, summed from the goal backwards
            per_row = vp.m * GRAVITY * (vp.c_rr * np.cos(cmap.slopes) + np.sin(cmap.slopes)) * cmap.ds
            per_row[-1] = 0.0
            self._mb_work = np.cumsum(per_row[::-1])[::-1]

    def __call__(self, s, v):
        if self.kind == "dp":
            return query_dp(self.cmap, s, v)
        if self.kind == "zero":
            return query_zero(s, v)
        if s > self.cmap.goal_s - GRID_TOL:
            return 0.0
        work = self._mb_work[self.cmap.row_index(s)]
        kinetic = 0.5 * self.vp.m * (self._v_goal * self._v_goal - v * v)
        return max(0.0, work + kinetic) / self.vp.eta_drive

    def terminal(self, s, v):
        return query_dp(self.cmap, s, v)
