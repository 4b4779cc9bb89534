import numpy as np
import pytest

from tdbm.trajectory import LaneGeometry, Trajectory, TrajectoryLog

GEOM3 = LaneGeometry.uniform(3)


def make_traj(vid, t, s, y, v=None, geometry=GEOM3):
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    y = np.broadcast_to(np.asarray(y, dtype=float), t.shape)
    v = np.gradient(s, t) if v is None else np.broadcast_to(np.asarray(v, dtype=float), t.shape)
    dt = float(np.median(np.diff(t)))
    return Trajectory(vid, t, s, y, v, geometry.nearest_lane(y), dt)


def make_log(*trajs, geometry=GEOM3):
    return TrajectoryLog(geometry, {tr.vehicle_id: tr for tr in trajs})


def rel_close(a, b, rel=1e-9, abs_=1e-12):
    return abs(a - b) <= max(rel * max(abs(a), abs(b)), abs_)


@pytest.fixture
def geom3():
    return GEOM3


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line; printed in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(label, ok, detail=""):
        lines.append(f"criterion {label}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip())
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
