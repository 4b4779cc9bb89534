"""Trajectory features used to score driver behavior.

Ten candidate features are extracted per target vehicle::

    f0 v_front   mean relative speed to the nearest car ahead (same lane)
    f1 v_back    ... to the nearest car behind
    f2 v_left    ... to the nearest car in the lane on the left
    f3 v_right   ... to the nearest car in the lane on the right
    f4 v_nei     integrated, distance-weighted speed surplus over neighbors
    f5 v_avg     mean speed
    f6 s_front   mean gap to the car ahead, capped at d_max
    f7 j_l       mean |lateral jerk|   ("longitudinal" in the lane-change sense)
    f8 j_p       mean |along-lane jerk| ("progressive")
    f9 s_center  lane following metric

Relative speeds are ``v_target - v_neighbor``. f0-f3 are averaged only over
instants at which such a neighbor exists and are ``None`` if it never does.

All integrals are composite trapezoids on the sample grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, DegenerateInputError, DegenerateSpreadError, UsageError
from .trajectory import BACK, FRONT, LEFT, RIGHT, LaneGeometry, Trajectory, TrajectoryLog, classify_codes

FEATURE_NAMES = (
    "v_front", "v_back", "v_left", "v_right", "v_nei",
    "v_avg", "s_front", "j_l", "j_p", "s_center",
)
FEATURE_KEYS = tuple(f"f{i}" for i in range(len(FEATURE_NAMES)))
BEHAVIOR_FEATURES = ("s_center", "v_nei", "s_front", "v_avg", "j_l")
ATTENTION_FEATURES = ("s_center", "v_nei", "v_avg")

ONE_MILE = 1609.344


@dataclass(frozen=True)
class FeatureParams:
    k: float = 2.0  # lane-change dwell, s
    tau: float = 1.0  # drift-rate window, s
    mu: float = 0.1  # static-offset weight
    radius: float = ONE_MILE  # neighbor radius, m
    d_max: float = 100.0  # front-gap cap, m
    window: tuple[float, float] | None = None

    def to_dict(self):
        d = asdict(self)
        d["window"] = list(self.window) if self.window is not None else None
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("window") is not None:
            d["window"] = tuple(float(x) for x in d["window"])
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise UsageError(f"unknown feature parameters: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class FeatureVector:
    v_front: float | None = None
    v_back: float | None = None
    v_left: float | None = None
    v_right: float | None = None
    v_nei: float | None = None
    v_avg: float | None = None
    s_front: float | None = None
    j_l: float | None = None
    j_p: float | None = None
    s_center: float | None = None

    def __getitem__(self, name):
        if name in FEATURE_KEYS:
            name = FEATURE_NAMES[FEATURE_KEYS.index(name)]
        return getattr(self, name)

    def values(self, names: Sequence[str] = FEATURE_NAMES) -> list:
        return [self[n] for n in names]

    def to_dict(self) -> dict:
        """Keys ``f0``..``f9``; absent features are ``None``."""
        return {key: getattr(self, name) for key, name in zip(FEATURE_KEYS, FEATURE_NAMES)}

    @classmethod
    def from_dict(cls, d) -> "FeatureVector":
        kw = {}
        for key, name in zip(FEATURE_KEYS, FEATURE_NAMES):
            val = d.get(key, d.get(name))
            kw[name] = None if val is None else float(val)
        return cls(**kw)


@dataclass(frozen=True)
class LaneChangeEvents:
    times: tuple[float, ...]
    k: float


@dataclass(frozen=True)
class NormalizationParams:
    p5: dict = field(default_factory=dict)
    p95: dict = field(default_factory=dict)

    def __post_init__(self):
        if set(self.p5) != set(self.p95):
            raise UsageError("p5 and p95 must cover the same features")
        for name in self.p5:
            if not self.p95[name] > self.p5[name]:
                raise DegenerateSpreadError(name, self.p5[name])

    @property
    def features(self):
        return tuple(self.p5)

    def to_dict(self):
        return {"p5": dict(self.p5), "p95": dict(self.p95)}

    @classmethod
    def from_dict(cls, d):
        return cls({k: float(v) for k, v in d["p5"].items()}, {k: float(v) for k, v in d["p95"].items()})

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _trapezoid(y, t):
    y = np.asarray(y, dtype=float)
    if len(y) < 2:
        return 0.0
    return float(np.sum((y[1:] + y[:-1]) * np.diff(t)) / 2.0)


def detect_lane_changes(traj: Trajectory, geometry: LaneGeometry, k: float = 2.0) -> LaneChangeEvents:
    """Instants at which the vehicle enters a new lane and stays there >= k s.

    A brief excursion that returns to the previously settled lane is not a
    change, so neither the departure nor the return is reported.
    """
    lane = geometry.nearest_lane(traj.y)
    t = traj.t
    breaks = np.flatnonzero(np.diff(lane)) + 1
    starts = np.concatenate(([0], breaks))
    ends = np.concatenate((breaks - 1, [len(lane) - 1]))
    settled = lane[0]
    tol = 1e-9 * max(1.0, k)
    events = []
    for a, b in zip(starts[1:], ends[1:]):
        if lane[a] != settled and t[b] - t[a] >= k - tol:
            events.append(float(t[a]))
            settled = lane[a]
    return LaneChangeEvents(tuple(events), k)


def raw_drift(traj: Trajectory, geometry: LaneGeometry) -> np.ndarray:
    """Lateral offset from the center of the nearest lane, no masking."""
    return traj.y - geometry.center(geometry.nearest_lane(traj.y))


def lane_drift(traj: Trajectory, geometry: LaneGeometry, events: LaneChangeEvents, k: float | None = None):
    """Lane drift with lane changes masked out.

    Zero wherever some event time lies within ``k`` seconds, otherwise the
    offset from the current lane center.
    """
    k = events.k if k is None else k
    drift = raw_drift(traj, geometry)
    if events.times:
        ev = np.asarray(events.times)
        near = np.abs(traj.t[:, None] - ev[None, :]) <= k * (1 + 1e-12) + 1e-12
        drift = np.where(near.any(axis=1), 0.0, drift)
    return drift


def _window_integrals(g, t, tau):
    """For each sample i, trapezoid integral of g over [max(t0, t_i - tau), t_i]."""
    cum = np.concatenate(([0.0], np.cumsum((g[1:] + g[:-1]) * np.diff(t) / 2.0)))
    lower = t - tau
    out = cum.copy()
    inside = lower > t[0]
    if inside.any():
        lo = lower[inside]
        m = np.clip(np.searchsorted(t, lo, side="right") - 1, 0, len(t) - 2)
        h = t[m + 1] - t[m]
        frac = lo - t[m]
        g_lo = g[m] + (g[m + 1] - g[m]) * frac / h
        out[inside] = cum[inside] - (cum[m] + (g[m] + g_lo) * frac / 2.0)
    return out


def lane_following_metric(traj: Trajectory, geometry: LaneGeometry, k: float = 2.0,
                          tau: float = 1.0, mu: float = 0.1,
                          events: LaneChangeEvents | None = None) -> float:
    """Drift magnitude weighted by recent drift activity.

    Integrates ``|s_C(t)| * (mu + int_{t-tau}^{t} |d/du drift(u)| du)`` where
    ``s_C`` is the masked drift and the inner integrand is the rate of the
    unmasked drift, i.e. the lateral speed (the lane centre is piecewise
    constant, so the jumps at lane boundaries carry no drift motion). The
    inner window is truncated at the first sample.
    """
    if traj.duration < tau:
        raise DegenerateInputError(
            f"vehicle {traj.vehicle_id}: {traj.duration:g} s of data is shorter than tau={tau:g} s"
        )
    if events is None:
        events = detect_lane_changes(traj, geometry, k)
    masked = np.abs(lane_drift(traj, geometry, events, k))
    rate = np.abs(np.gradient(traj.y, traj.t))
    weight = mu + _window_integrals(rate, traj.t, tau)
    return _trapezoid(masked * weight, traj.t)


def _neighbors(log_: TrajectoryLog, traj: Trajectory, radius: float):
    ids, S, Y, V, lanes, alive = log_.others_at(traj.vehicle_id, traj.t)
    ds = S - traj.s[None, :]
    dist = np.hypot(ds, Y - traj.y[None, :])
    within = alive & (dist <= radius)
    if np.any(within & (dist == 0)):
        k, i = np.argwhere(within & (dist == 0))[0]
        raise DataError(f"vehicles {traj.vehicle_id!r} and {ids[k]!r} overlap at t={traj.t[i]:g}")
    own_lane = np.broadcast_to(np.asarray(traj.lane)[None, :], lanes.shape)
    codes = classify_codes(own_lane, lanes, np.nan_to_num(ds))
    return ids, ds, dist, V, within, codes


def _target(log_: TrajectoryLog, target: str, window) -> Trajectory:
    traj = log_[target]
    if window is not None:
        traj = traj.window(*window)
    return traj


def relative_speed_metric(log_: TrajectoryLog, target: str, radius: float = ONE_MILE,
                          window=None) -> float:
    """Integral over time of sum_n max(0, (v - v_n) / dist_n) for neighbors within ``radius``."""
    traj = _target(log_, target, window)
    _, _, dist, V, within, _ = _neighbors(log_, traj, radius)
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = np.maximum(0.0, (traj.v[None, :] - V) / dist)
    integrand = np.where(within, terms, 0.0).sum(axis=0)
    return _trapezoid(integrand, traj.t)


def _third_derivative(x: np.ndarray, h: float) -> np.ndarray:
    n = len(x)
    if n < 4:
        raise DegenerateInputError(f"jerk needs at least 4 samples, got {n}")
    if n < 7:
        # too short for the 5-point stencils: nearest 4-point third difference
        d4 = (x[3:] - 3 * x[2:-1] + 3 * x[1:-2] - x[:-3]) / h**3
        return d4[np.clip(np.arange(n) - 1, 0, len(d4) - 1)]
    d = np.empty(n)
    d[2:-2] = (x[4:] - 2 * x[3:-1] + 2 * x[1:-3] - x[:-4]) / (2 * h**3)
    # stencils act on offsets from their first point so constant input gives exactly 0
    fwd = np.array([-5.0, 18.0, -24.0, 14.0, -3.0])
    for i in (0, 1):
        seg = x[i:i + 5]
        d[i] = fwd @ (seg - seg[0]) / (2 * h**3)
    for i in (n - 2, n - 1):
        seg = x[i - 4:i + 1][::-1]
        d[i] = -(fwd @ (seg - seg[0])) / (2 * h**3)
    return d


def jerk_metrics(traj: Trajectory) -> tuple[float, float]:
    """``(j_l, j_p)``: mean absolute lateral and along-lane jerk.

    Third derivatives use the 5-point central stencil in the interior and
    second-order one-sided stencils at the two points nearest each end, so
    cubic motion is differentiated exactly.
    """
    if len(traj) < 4:
        raise DegenerateInputError(f"vehicle {traj.vehicle_id}: jerk needs at least 4 samples")
    h = float(np.mean(np.diff(traj.t)))
    j_l = float(np.mean(np.abs(_third_derivative(traj.y, h))))
    j_p = float(np.mean(np.abs(_third_derivative(traj.s, h))))
    return j_l, j_p


def directional_relative_speeds(log_: TrajectoryLog, target: str, radius: float = ONE_MILE,
                                window=None):
    """``(v_front, v_back, v_left, v_right)`` against the nearest car of each class."""
    traj = _target(log_, target, window)
    _, _, dist, V, within, codes = _neighbors(log_, traj, radius)
    out = []
    cols = np.arange(len(traj))
    for code in (FRONT, BACK, LEFT, RIGHT):
        mask = within & (codes == code)
        present = mask.any(axis=0) if mask.size else np.zeros(len(traj), dtype=bool)
        if not present.any():
            out.append(None)
            continue
        nearest = np.argmin(np.where(mask, dist, np.inf), axis=0)
        rel = traj.v - V[nearest, cols]
        out.append(float(np.mean(rel[present])))
    return tuple(out)


def simple_metrics(log_: TrajectoryLog, target: str, d_max: float = 100.0,
                   radius: float = ONE_MILE, window=None) -> tuple[float, float]:
    """``(v_avg, s_front)``; instants without a car ahead count as ``d_max``."""
    traj = _target(log_, target, window)
    v_avg = float(np.mean(traj.v))
    _, ds, _, _, within, codes = _neighbors(log_, traj, radius)
    mask = within & (codes == FRONT)
    gaps = np.where(mask, ds, np.inf).min(axis=0) if mask.size else np.full(len(traj), np.inf)
    s_front = float(np.mean(np.minimum(gaps, d_max)))
    return v_avg, s_front


def extract_all(log_: TrajectoryLog, target: str, params: FeatureParams | None = None) -> FeatureVector:
    params = params or FeatureParams()
    traj = _target(log_, target, params.window)
    geometry = log_.geometry
    f0, f1, f2, f3 = directional_relative_speeds(log_, target, params.radius, params.window)
    f4 = relative_speed_metric(log_, target, params.radius, params.window)
    f5, f6 = simple_metrics(log_, target, params.d_max, params.radius, params.window)
    f7, f8 = jerk_metrics(traj)
    f9 = lane_following_metric(traj, geometry, params.k, params.tau, params.mu)
    return FeatureVector(f0, f1, f2, f3, f4, f5, f6, f7, f8, f9)


def features_json(target: str, vector: FeatureVector, params: FeatureParams, window=None) -> dict:
    traj_window = window if window is not None else params.window
    return {
        "target": target,
        **vector.to_dict(),
        "window": list(traj_window) if traj_window is not None else None,
        "params": params.to_dict(),
    }


def fit_normalization(vectors: Iterable[FeatureVector],
                      features: Sequence[str] = BEHAVIOR_FEATURES) -> NormalizationParams:
    """5th/95th percentiles of each selected feature (absent values skipped)."""
    vectors = list(vectors)
    if len(vectors) < 20:
        raise DegenerateInputError(f"need at least 20 feature vectors, got {len(vectors)}")
    p5, p95 = {}, {}
    for name in features:
        vals = np.array([v[name] for v in vectors if v[name] is not None], dtype=float)
        if len(vals) < 20:
            raise DegenerateInputError(f"feature {name!r} present in only {len(vals)} vectors")
        lo, hi = np.percentile(vals, [5, 95])
        if not hi > lo:
            raise DegenerateSpreadError(name, float(lo))
        p5[name], p95[name] = float(lo), float(hi)
    return NormalizationParams(p5, p95)


def normalize(vector: FeatureVector, params: NormalizationParams) -> FeatureVector:
    """Map each selected feature by ``(x - p5) / (p95 - p5)``, without clamping."""
    changes = {}
    for name in params.features:
        x = vector[name]
        if x is not None:
            changes[name] = (x - params.p5[name]) / (params.p95[name] - params.p5[name])
    return replace(vector, **changes)


def is_finite_vector(vector: FeatureVector) -> bool:
    return all(v is None or math.isfinite(v) for v in vector.values())
