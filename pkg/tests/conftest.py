import numpy as np
import pytest

from obstacles import PredictionConfig, RuleConfig
from spacetime import GridSpec, Segment
from vehicle import RoadProfile, VehicleParams

import config


@pytest.fixture
def gs():
    return GridSpec()


@pytest.fixture
def vp():
    return VehicleParams()


@pytest.fixture
def rc():
    return RuleConfig()


@pytest.fixture
def pc():
    return PredictionConfig()


@pytest.fixture
def flat():
    return RoadProfile.flat()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def scenario_path():
    def _path(name):
        return config.DEFAULT_SCENARIO_DIR / f"{name}.json"

    return _path


def make_segment(t0=0.0, duration=1.0, s0=0.0, v0=10.0, a=0.0, l0=1.0, l1=None, cost=0.0):
    v1 = max(v0 + a * duration, 0.0)
    return Segment(t0, t0 + duration, s0, v0, v1, l0, l0 if l1 is None else l1, cost)


def sample(seg, step=1e-3):
    """Dense (t, s, l, v) samples of a segment, end points included."""
    n = max(int(np.ceil(seg.duration / step)), 1)
    ts = seg.t_start + np.linspace(0.0, seg.duration, n + 1)
    tau = ts - seg.t_start
    s = seg.s_start + seg.v_start * tau + 0.5 * seg.a * tau * tau
    l = seg.l_start + seg.l_rate * tau
    v = seg.v_start + seg.a * tau
    return ts, s, l, v
