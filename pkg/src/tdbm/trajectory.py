"""Multi-vehicle trajectory logs on a straight multi-lane road.

Positions live in a road-aligned frame: ``s`` runs along the lanes in the
direction of travel and ``y`` is the lateral offset. Lane 0 is the leftmost
lane and lane centers increase with the lane index, so ``y`` grows towards
the right-hand side of the road (the NGSIM convention, where lane 1 is the
median lane).
"""

from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import LookupFailure, ParseError, UsageError, ValidationError

log = logging.getLogger(__name__)

CSV_HEADER = ("vehicle_id", "t", "s", "y", "v", "lane_id")
DEFAULT_DT = 0.1
_TIME_EPS = 1e-9


@dataclass(frozen=True)
class LaneGeometry:
    lane_count: int
    lane_width: float
    lane_centers: tuple[float, ...]

    def __post_init__(self):
        centers = tuple(float(c) for c in self.lane_centers)
        object.__setattr__(self, "lane_centers", centers)
        if self.lane_count < 1:
            raise ValidationError("lane_count must be positive")
        if not self.lane_width > 0:
            raise ValidationError("lane_width must be > 0")
        if len(centers) != self.lane_count:
            raise ValidationError(
                f"{len(centers)} lane centers given for {self.lane_count} lanes"
            )
        steps = np.diff(centers)
        if np.any(np.abs(steps - self.lane_width) > 1e-9 * max(1.0, self.lane_width)):
            raise ValidationError("lane centers must be spaced exactly one lane width apart")

    @classmethod
    def uniform(cls, lane_count: int, lane_width: float = 3.7, first_center: float | None = None):
        if first_center is None:
            first_center = lane_width / 2.0
        centers = tuple(first_center + i * lane_width for i in range(lane_count))
        return cls(lane_count, lane_width, centers)

    @property
    def bounds(self) -> tuple[float, float]:
        half = self.lane_width / 2.0
        return self.lane_centers[0] - half, self.lane_centers[-1] + half

    def nearest_lane(self, y):
        """Index of the lane whose center is closest to ``y`` (scalar or array)."""
        idx = np.rint((np.asarray(y, dtype=float) - self.lane_centers[0]) / self.lane_width)
        idx = np.clip(idx, 0, self.lane_count - 1).astype(int)
        return int(idx) if idx.ndim == 0 else idx

    def center(self, lane):
        lane = np.asarray(lane)
        out = self.lane_centers[0] + lane * self.lane_width
        return float(out) if out.ndim == 0 else out

    def has_lane(self, lane: int) -> bool:
        return 0 <= lane < self.lane_count

    def shifted(self, dy: float) -> "LaneGeometry":
        return LaneGeometry(self.lane_count, self.lane_width, tuple(c + dy for c in self.lane_centers))

    def to_dict(self) -> dict:
        return {
            "lane_count": self.lane_count,
            "lane_width": self.lane_width,
            "lane_centers": list(self.lane_centers),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "LaneGeometry":
        if "lane_centers" in d:
            return cls(int(d["lane_count"]), float(d["lane_width"]), tuple(d["lane_centers"]))
        return cls.uniform(int(d["lane_count"]), float(d.get("lane_width", 3.7)), d.get("first_center"))


class RelativePosition(enum.Enum):
    FRONT = "front"
    BACK = "back"
    LEFT = "left"
    RIGHT = "right"
    FAR = "far"


# integer codes used by the vectorised paths
FRONT, BACK, LEFT, RIGHT, FAR = range(5)
_CODE_TO_POSITION = (
    RelativePosition.FRONT,
    RelativePosition.BACK,
    RelativePosition.LEFT,
    RelativePosition.RIGHT,
    RelativePosition.FAR,
)


def classify_codes(own_lane, other_lane, ds):
    """Relative-position codes of ``other`` as seen from ``own``.

    Same lane splits on the sign of ``ds = s_other - s_own`` (a tie counts as
    FRONT); the lane with index one lower is LEFT, one higher is RIGHT, and
    everything else is FAR.
    """
    own_lane, other_lane, ds = np.broadcast_arrays(own_lane, other_lane, ds)
    dl = np.asarray(other_lane) - np.asarray(own_lane)
    codes = np.full(dl.shape, FAR, dtype=int)
    same = dl == 0
    codes[same & (ds >= 0)] = FRONT
    codes[same & (ds < 0)] = BACK
    codes[dl == -1] = LEFT
    codes[dl == 1] = RIGHT
    return codes


def classify(own_lane: int, other_lane: int, ds: float) -> RelativePosition:
    return _CODE_TO_POSITION[int(classify_codes(own_lane, other_lane, ds))]


@dataclass(frozen=True)
class VehicleSample:
    t: float
    s: float
    y: float
    v: float
    lane_id: int | None


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-ordered samples of one vehicle, stored column-wise."""

    vehicle_id: str
    t: np.ndarray
    s: np.ndarray
    y: np.ndarray
    v: np.ndarray
    lane: np.ndarray
    dt: float

    def __post_init__(self):
        cols = {}
        for name in ("t", "s", "y", "v"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            cols[name] = arr
        lane = np.array(self.lane, dtype=int)
        lane.setflags(write=False)
        cols["lane"] = lane
        n = len(cols["t"])
        if any(len(a) != n for a in cols.values()):
            raise ValidationError(f"vehicle {self.vehicle_id}: column lengths differ")
        if n < 3:
            raise ValidationError(f"vehicle {self.vehicle_id}: needs at least 3 samples, got {n}")
        if np.any(np.diff(cols["t"]) <= 0):
            raise ValidationError(f"vehicle {self.vehicle_id}: sample times must be strictly increasing")
        for name, arr in cols.items():
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.t)

    @property
    def t_begin(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def duration(self) -> float:
        return self.t_end - self.t_begin

    def samples(self) -> Iterator[VehicleSample]:
        for i in range(len(self)):
            yield VehicleSample(float(self.t[i]), float(self.s[i]), float(self.y[i]),
                                float(self.v[i]), int(self.lane[i]))

    def alive(self, t):
        """Whether the vehicle has data at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        eps = _TIME_EPS * np.maximum(1.0, np.abs(t))
        return (t >= self.t[0] - eps) & (t <= self.t[-1] + eps)

    def states_at(self, times):
        """Linearly interpolated ``(s, y, v)`` at ``times``; NaN where not alive."""
        times = np.asarray(times, dtype=float)
        ok = self.alive(times)
        out = []
        for col in (self.s, self.y, self.v):
            vals = np.interp(times, self.t, col)
            out.append(np.where(ok, vals, np.nan))
        return tuple(out)

    def window(self, t0: float | None = None, t1: float | None = None) -> "Trajectory":
        mask = np.ones(len(self), dtype=bool)
        if t0 is not None:
            mask &= self.t >= t0 - _TIME_EPS * max(1.0, abs(t0))
        if t1 is not None:
            mask &= self.t <= t1 + _TIME_EPS * max(1.0, abs(t1))
        if mask.all():
            return self
        return Trajectory(self.vehicle_id, self.t[mask], self.s[mask], self.y[mask],
                          self.v[mask], self.lane[mask], self.dt)


@dataclass(frozen=True, eq=False)
class TrajectoryLog:
    geometry: LaneGeometry
    trajectories: Mapping[str, Trajectory]
    time_span: tuple[float, float] = None
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        trajs = dict(self.trajectories)
        for key, traj in trajs.items():
            if key != traj.vehicle_id:
                raise ValidationError(f"trajectory keyed {key!r} carries id {traj.vehicle_id!r}")
        object.__setattr__(self, "trajectories", MappingProxyType(trajs))
        if self.time_span is None:
            if trajs:
                span = (min(tr.t_begin for tr in trajs.values()), max(tr.t_end for tr in trajs.values()))
            else:
                span = (0.0, 0.0)
            object.__setattr__(self, "time_span", span)
        else:
            t0, t1 = (float(x) for x in self.time_span)
            object.__setattr__(self, "time_span", (t0, t1))
            for tr in trajs.values():
                if tr.t_begin < t0 - _TIME_EPS * max(1.0, abs(t0)) or tr.t_end > t1 + _TIME_EPS * max(1.0, abs(t1)):
                    raise ValidationError(f"vehicle {tr.vehicle_id} has samples outside the log time span")
        object.__setattr__(self, "metadata", MappingProxyType(dict(self.metadata)))

    def __getitem__(self, vehicle_id) -> Trajectory:
        try:
            return self.trajectories[vehicle_id]
        except KeyError:
            raise LookupFailure(f"unknown vehicle {vehicle_id!r}") from None

    def __contains__(self, vehicle_id):
        return vehicle_id in self.trajectories

    def __len__(self):
        return len(self.trajectories)

    @property
    def vehicle_ids(self) -> list[str]:
        return list(self.trajectories)

    def others_at(self, target: str, times):
        """States of every vehicle except ``target`` at ``times``.

        Returns ``(ids, s, y, v, lane, alive)`` where the array entries have
        shape ``(len(ids), len(times))``; ``s``, ``y`` and ``v`` hold NaN where
        the vehicle is not alive.
        """
        times = np.asarray(times, dtype=float)
        ids = [vid for vid in self.trajectories if vid != target]
        shape = (len(ids), len(times))
        S, Y, V = np.full(shape, np.nan), np.full(shape, np.nan), np.full(shape, np.nan)
        for k, vid in enumerate(ids):
            S[k], Y[k], V[k] = self.trajectories[vid].states_at(times)
        alive = ~np.isnan(S)
        lane = self.geometry.nearest_lane(np.where(alive, Y, self.geometry.lane_centers[0]))
        return ids, S, Y, V, np.atleast_2d(lane).reshape(shape), alive


def neighbor_query(log_: TrajectoryLog, target: str, t: float, radius: float):
    """Vehicles within ``radius`` meters of ``target`` at time ``t``.

    Returns a list of ``(vehicle_id, RelativePosition)`` pairs, ordered by
    distance and then by id.
    """
    traj = log_[target]
    if not traj.alive(t):
        raise LookupFailure(f"vehicle {target!r} is not alive at t={t}")
    s0, y0, _ = (float(a[0]) for a in traj.states_at([t]))
    lane0 = log_.geometry.nearest_lane(y0)
    ids, S, Y, _, lanes, alive = log_.others_at(target, [t])
    found = []
    for k, vid in enumerate(ids):
        if not alive[k, 0]:
            continue
        ds, dy = S[k, 0] - s0, Y[k, 0] - y0
        dist = float(np.hypot(ds, dy))
        if dist <= radius:
            found.append((dist, vid, classify(lane0, int(lanes[k, 0]), ds)))
    found.sort(key=lambda item: (item[0], item[1]))
    return [(vid, cls) for _, vid, cls in found]


def _parse_float(text, what, line):
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"cannot parse {what} {text!r}", line) from None


def _build_trajectory(vid, t, s, y, v, stated_lane, geometry, dt, meta):
    t = np.asarray(t, dtype=float)
    steps = np.diff(t)
    if np.any(steps <= 0):
        raise ValidationError(f"vehicle {vid}: timestamps are not strictly increasing")
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    missing_v = np.isnan(v)
    if missing_v.any():
        v = np.where(missing_v, np.gradient(s, t), v)
    if np.any(steps > 3 * dt * (1 + 1e-9)):
        worst = float(steps.max())
        raise ValidationError(f"vehicle {vid}: gap of {worst:g} s exceeds 3*dt")
    if np.any(np.abs(steps - dt) > 1e-6 * dt):
        n = int(round((t[-1] - t[0]) / dt)) + 1
        grid = np.linspace(t[0], t[-1], n)
        grid[0], grid[-1] = t[0], t[-1]
        s, y, v = (np.interp(grid, t, col) for col in (s, y, v))
        t = grid
        meta["resampled"] += 1
        stated_lane = None
    lane = geometry.nearest_lane(y)
    if stated_lane is not None:
        stated = np.asarray(stated_lane, dtype=float)
        given = ~np.isnan(stated)
        meta["lane_id_corrected"] += int(np.count_nonzero(stated[given] != lane[given]))
    return Trajectory(vid, t, s, y, v, lane, dt)


def ingest_csv(path, geometry: LaneGeometry, dt: float | None = None) -> TrajectoryLog:
    """Read a trajectory CSV with header ``vehicle_id,t,s,y,v,lane_id``.

    Rows of one vehicle must appear in time order. Empty ``v`` cells are
    filled with ds/dt and empty ``lane_id`` cells with the nearest lane.
    Lane ids are always re-derived from ``y``; disagreeing stated ids are
    counted in ``metadata["lane_id_corrected"]``. Jittered timestamps are
    resampled to a uniform grid between the first and last sample, which
    keeps both endpoints exact. Vehicles with fewer than three rows are
    dropped and counted in ``metadata["dropped_short"]``.

    ``dt`` defaults to the median sample spacing in the file.
    """
    rows: dict[str, list] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("file is empty, expected a header row", 1) from None
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise ParseError(f"header must be {','.join(CSV_HEADER)!r}, got {','.join(header)!r}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(CSV_HEADER):
                raise ParseError(f"expected {len(CSV_HEADER)} fields, got {len(row)}", lineno)
            vid, t, s, y, v, lane = (c.strip() for c in row)
            if not vid:
                raise ParseError("empty vehicle_id", lineno)
            rec = (
                _parse_float(t, "t", lineno),
                _parse_float(s, "s", lineno),
                _parse_float(y, "y", lineno),
                _parse_float(v, "v", lineno) if v else np.nan,
                _parse_float(lane, "lane_id", lineno) if lane else np.nan,
            )
            if not all(np.isfinite(rec[:3])):
                raise ParseError("non-finite t, s or y", lineno)
            rows.setdefault(vid, []).append(rec)

    for vid, recs in rows.items():
        ts = [r[0] for r in recs]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValidationError(f"vehicle {vid}: timestamps are not strictly increasing")

    if dt is None:
        diffs = np.concatenate([np.diff([r[0] for r in recs]) for recs in rows.values()] or [[]])
        dt = round(float(np.median(diffs)), 9) if diffs.size else DEFAULT_DT
    if not dt > 0:
        raise UsageError("dt must be positive")

    meta = {"dropped_short": 0, "resampled": 0, "lane_id_corrected": 0, "dt": dt}
    trajectories = {}
    for vid, recs in rows.items():
        if len(recs) < 3:
            meta["dropped_short"] += 1
            continue
        cols = list(zip(*recs))
        trajectories[vid] = _build_trajectory(vid, *cols[:4], cols[4], geometry, dt, meta)
    if meta["dropped_short"]:
        log.warning("dropped %d trajectories with fewer than 3 samples", meta["dropped_short"])
    return TrajectoryLog(geometry, trajectories, metadata=meta)


def write_csv(log_: TrajectoryLog, path, vehicle_order: Sequence[str] | None = None) -> None:
    """Write ``log_`` in the format read by :func:`ingest_csv`.

    Floats are written with ``repr`` so a round trip is lossless.
    """
    order = list(vehicle_order) if vehicle_order is not None else log_.vehicle_ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for vid in order:
            tr = log_[vid]
            for i in range(len(tr)):
                w.writerow((vid, repr(float(tr.t[i])), repr(float(tr.s[i])), repr(float(tr.y[i])),
                            repr(float(tr.v[i])), int(tr.lane[i])))
