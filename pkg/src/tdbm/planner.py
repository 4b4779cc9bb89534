"""Sampling-based maneuver planner with pluggable proximity costs.

Every planning cycle samples one candidate per (lane delta, speed offset),
drops candidates that come too close to constant-velocity neighbor
predictions, and picks the cheapest remaining one. Three proximity costs are
available:

``BASELINE_EXP``
    ``F_vehicle * exp(-d)`` per neighbor: every vehicle looks the same.
``PAPER_EXACT``
    The published piecewise cost weighted by the neighbor's safety score,
    taken literally: it is discontinuous at ``d_t`` and, because the weight is
    the safety score itself, dangerous drivers (low score) are *cheap*.
``MONOTONE``
    Same shape with two repairs: the weight is ``danger`` in [0, 1]
    (1 for the lowest attainable safety score) with attention values shifted
    from [-2, 2] to [0, 4], and inside ``d_t`` the middle branch is continued
    and the attention excess ``max(B_r - B_far, 0)`` is added on top, so the
    cost is continuous, reaches ``W * max(B_r, B_far)`` at contact and never
    increases with distance.

Which attention value plays ``B_r`` depends on where the neighbor is. The
four attention responses are ratings made from a vantage point relative to
the rated car (ahead of it, behind it, beside it, far away), so with the
default ``survey`` mapping a neighbor ahead of the ego uses the first
response (``B_back``, the ego is at the back), one behind uses ``B_front``.
The ``literal`` mapping reads the names the other way round: a neighbor
behind uses ``B_back``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import LookupFailure, UsageError, ValidationError
from .geometry import rectangles_overlap
from .mapping.maps import PUBLISHED_MAPS, ScoreReport
from .trajectory import BACK, FAR, FRONT, LEFT, RIGHT, LaneGeometry, classify_codes

S_MIN, S_MAX = PUBLISHED_MAPS.safety_extrema()
ATTENTION_SHIFT = 2.0
ATTENTION_MAX = 4.0

ATTENTION_MAPPINGS = {
    "survey": {FRONT: 0, BACK: 1, LEFT: 2, RIGHT: 2, FAR: 3},
    "literal": {FRONT: 1, BACK: 0, LEFT: 2, RIGHT: 2, FAR: 3},
}


class CostMode(enum.Enum):
    BASELINE_EXP = "baseline-exp"
    PAPER_EXACT = "paper-exact"
    MONOTONE = "monotone"

    @classmethod
    def parse(cls, value) -> "CostMode":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower().replace("_", "-")
        for mode in cls:
            if text in (mode.value, mode.name.lower().replace("_", "-")):
                return mode
        raise UsageError(f"unknown cost mode {value!r}; expected one of {[m.value for m in cls]}")


@dataclass(frozen=True)
class PlannerConfig:
    horizon: float = 4.0  # s
    dt_plan: float = 0.2  # s
    lane_change_set: tuple[int, ...] = (-1, 0, 1)
    speed_offsets: tuple[float, ...] = (-2.0, -1.0, 0.0, 1.0, 2.0)  # m/s
    w_path: float = 1.0
    w_accel: float = 0.5
    w_lane: float = 0.3
    w_prox: float = 2.0
    d_t: float = 15.0  # m
    d_t2: float = 60.0  # m
    vehicle_length: float = 4.8  # m
    vehicle_width: float = 1.8  # m
    collision_margin: float = 0.3  # m added on every side of the ego box
    cost_mode: CostMode = CostMode.MONOTONE
    f_vehicle: float = 1.0
    lateral_time: float = 3.0  # s to reach the target lane center
    speed_ramp_time: float = 2.0  # s to reach the target speed
    v_max: float = 40.0  # m/s
    max_brake: float = 6.0  # m/s^2, fallback maneuver
    speed_scale: float = 5.0  # m/s of speed error that costs 1
    accel_scale: float = 2.0  # m/s^2 of acceleration that costs 1
    s_max: float = S_MAX
    s_min: float = S_MIN
    attention_mapping: str = "survey"  # or "literal", see the module docstring

    def __post_init__(self):
        object.__setattr__(self, "cost_mode", CostMode.parse(self.cost_mode))
        if self.attention_mapping not in ATTENTION_MAPPINGS:
            raise ValidationError(f"attention_mapping must be one of {sorted(ATTENTION_MAPPINGS)}")
        object.__setattr__(self, "lane_change_set", tuple(int(x) for x in self.lane_change_set))
        object.__setattr__(self, "speed_offsets", tuple(float(x) for x in self.speed_offsets))
        if not 0 < self.d_t < self.d_t2:
            raise ValidationError(f"need 0 < d_t < d_t2, got d_t={self.d_t}, d_t2={self.d_t2}")
        if not (self.horizon > 0 and self.dt_plan > 0):
            raise ValidationError("horizon and dt_plan must be positive")
        if min(self.w_path, self.w_accel, self.w_lane, self.w_prox) < 0:
            raise ValidationError("cost weights must be >= 0")
        if not self.s_max > self.s_min:
            raise ValidationError("s_max must exceed s_min")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt_plan))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cost_mode"] = self.cost_mode.value
        d["lane_change_set"] = list(self.lane_change_set)
        d["speed_offsets"] = list(self.speed_offsets)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "PlannerConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValidationError(f"unknown planner settings: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class EgoState:
    s: float
    y: float
    v: float
    v_des: float
    vy: float = 0.0  # lateral velocity, m/s


@dataclass(frozen=True)
class NeighborState:
    """Current state of a neighbor; predicted forward at constant velocity."""

    vehicle_id: str
    s: float
    y: float
    v: float
    length: float = 4.8
    width: float = 1.8

    def predict(self, times):
        times = np.asarray(times, dtype=float)
        return self.s + self.v * times, np.full(times.shape, self.y)


@dataclass(frozen=True)
class NeighborAssessment:
    vehicle_id: str
    s_tdbm: float
    attentions: tuple[float, float, float, float]  # B_back, B_front, B_adj, B_far

    @classmethod
    def from_scores(cls, vehicle_id: str, report: ScoreReport) -> "NeighborAssessment":
        return cls(vehicle_id, report.s_tdbm, tuple(report.attentions))

    @classmethod
    def neutral(cls, vehicle_id: str, config: PlannerConfig | None = None) -> "NeighborAssessment":
        """Stand-in before any history exists: danger 0.5, every attention 0."""
        cfg = config or PlannerConfig()
        return cls(vehicle_id, 0.5 * (cfg.s_max + cfg.s_min), (0.0, 0.0, 0.0, 0.0))

    @property
    def B_back(self):
        return self.attentions[0]

    @property
    def B_front(self):
        return self.attentions[1]

    @property
    def B_adj(self):
        return self.attentions[2]

    @property
    def B_far(self):
        return self.attentions[3]

    def danger(self, config: PlannerConfig | None = None) -> float:
        cfg = config or PlannerConfig()
        return danger(self.s_tdbm, cfg.s_max, cfg.s_min)


def danger(s_tdbm, s_max: float = S_MAX, s_min: float = S_MIN):
    """Safety score rescaled to [0, 1], 1 being the most dangerous."""
    return np.clip((s_max - np.asarray(s_tdbm, dtype=float)) / (s_max - s_min), 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class CandidateTrajectory:
    lane_delta: int
    speed_offset: float
    target_lane: int
    target_speed: float
    times: np.ndarray
    s: np.ndarray
    y: np.ndarray
    v: np.ndarray
    heading: np.ndarray
    accel: np.ndarray
    lat_accel: np.ndarray
    profile: tuple = field(repr=False, default=())
    feasible: bool = True
    fallback: bool = False

    @property
    def maneuver(self) -> tuple[int, float]:
        return (self.lane_delta, self.speed_offset)

    def state_at(self, t):
        """``(s, y, v, heading)`` at arbitrary times within the horizon."""
        return _evaluate_profile(*self.profile, np.asarray(t, dtype=float))[:4]

    def lateral_velocity_at(self, t):
        return _evaluate_profile(*self.profile, np.asarray(t, dtype=float))[6]


@dataclass(frozen=True)
class CostBreakdown:
    path_deviation: float
    smoothness: float
    lane_change: float
    proximity: float
    total: float

    def to_dict(self) -> dict:
        return asdict(self)


def _evaluate_profile(s0, y0, v0, vy0, y1, v1, t_lat, t_ramp, t):
    """Cubic lateral blend to ``y1`` over ``t_lat`` and linear speed ramp to ``v1`` over ``t_ramp``.

    The lateral blend is the cubic Hermite curve that starts at ``y0`` with
    lateral velocity ``vy0`` and arrives at ``y1`` at rest.
    """
    t = np.asarray(t, dtype=float)
    dv = v1 - v0
    if t_ramp > 0:
        tr = np.minimum(t, t_ramp)
        v = v0 + dv * tr / t_ramp
        s = s0 + v0 * tr + dv * tr**2 / (2.0 * t_ramp) + v1 * (t - tr)
        a = np.where(t < t_ramp, dv / t_ramp, 0.0)
    else:
        v = np.full(t.shape, v1)
        s = s0 + v1 * t
        a = np.zeros(t.shape)
    dy = y1 - y0
    u = np.clip(t / t_lat, 0.0, 1.0)
    m = vy0 * t_lat
    y = y0 + dy * (3 * u**2 - 2 * u**3) + m * (u - 2 * u**2 + u**3)
    inside = t < t_lat
    vy = np.where(inside, (dy * (6 * u - 6 * u**2) + m * (1 - 4 * u + 3 * u**2)) / t_lat, 0.0)
    ay = np.where(inside, (dy * (6 - 12 * u) + m * (6 * u - 4)) / t_lat**2, 0.0)
    heading = np.arctan2(vy, np.maximum(v, 1e-3))
    return s, y, v, heading, a, ay, vy


def lateral_duration(dy: float, lane_width: float, config: PlannerConfig) -> float:
    """Time given to a lateral move: a full lane takes ``min(H, lateral_time)``, shorter moves proportionally less (at least 1 s)."""
    full = min(config.horizon, config.lateral_time)
    return min(full, max(1.0, full * abs(dy) / lane_width))


def _candidate(ego, geometry, target_lane, lane_delta, offset, target_speed, t_ramp, config, fallback=False):
    y_target = geometry.center(target_lane)
    times = np.arange(config.n_steps + 1) * config.dt_plan
    profile = (ego.s, ego.y, ego.v, ego.vy, y_target, target_speed,
               lateral_duration(y_target - ego.y, geometry.lane_width, config), t_ramp)
    s, y, v, heading, a, ay, _ = _evaluate_profile(*profile, times)
    return CandidateTrajectory(lane_delta, offset, target_lane, target_speed, times, s, y, v, heading,
                               a, ay, profile, fallback=fallback)


def generate_candidates(ego: EgoState, geometry: LaneGeometry, config: PlannerConfig,
                        lane: int | None = None):
    """One candidate per (lane delta, speed offset); lane deltas off the road are skipped.

    Deltas are taken relative to ``lane``, by default the lane nearest to the
    ego. Passing the target lane of a maneuver still in progress makes
    "delta 0" mean carrying on with it.
    """
    lo, hi = geometry.bounds
    if not lo <= ego.y <= hi:
        raise ValidationError(f"ego lateral position {ego.y} is off the road [{lo}, {hi}]")
    if lane is None:
        lane = geometry.nearest_lane(ego.y)
    elif not geometry.has_lane(lane):
        raise ValidationError(f"reference lane {lane} does not exist")
    out = []
    for delta in config.lane_change_set:
        target = lane + delta
        if not geometry.has_lane(target):
            continue
        for offset in config.speed_offsets:
            v1 = float(np.clip(ego.v + offset, 0.0, config.v_max))
            out.append(_candidate(ego, geometry, target, delta, offset, v1, config.speed_ramp_time, config))
    return out


def braking_candidate(ego: EgoState, geometry: LaneGeometry, config: PlannerConfig) -> CandidateTrajectory:
    """Maximal in-lane braking, used when no candidate is collision-free."""
    lane = geometry.nearest_lane(ego.y)
    t_stop = ego.v / config.max_brake
    return _candidate(ego, geometry, lane, 0, -ego.v, 0.0, t_stop, config, fallback=True)


def _ego_box(config: PlannerConfig, extra: float = 0.0):
    pad = 2.0 * (config.collision_margin + extra)
    return config.vehicle_length + pad, config.vehicle_width + pad


def collides(candidate: CandidateTrajectory, neighbors: Sequence[NeighborState], config: PlannerConfig,
             times=None) -> bool:
    """Overlap check of the inflated ego box against neighbors at the given times (no sweep padding)."""
    if times is None:
        times = candidate.times
    times = np.asarray(times, dtype=float)
    s, y, _, heading = candidate.state_at(times)
    length, width = _ego_box(config)
    for nb in neighbors:
        ns, ny = nb.predict(times)
        if np.any(rectangles_overlap(s, y, heading, length, width, ns, ny, 0.0, nb.length, nb.width)):
            return True
    return False


def flag_collisions(candidates: Sequence[CandidateTrajectory], neighbors: Sequence[NeighborState],
                    config: PlannerConfig, resolution: float = 0.25) -> list[CandidateTrajectory]:
    """Copies of ``candidates`` with ``feasible`` set.

    Boxes are checked on a time grid fine enough that the relative motion
    between samples is at most ``resolution`` meters, and the ego box is padded
    by half of that, so an overlap between samples is caught as well.
    """
    if not neighbors:
        return [replace(c, feasible=True) for c in candidates]
    H = config.horizon
    nb_v = np.array([nb.v for nb in neighbors])
    out = []
    for cand in candidates:
        _, y0, _, vy0, y1, _, t_lat, _ = cand.profile
        # bound on |dy/dt| of the Hermite blend
        vy_max = 1.5 * abs(y1 - y0) / t_lat + abs(vy0)
        v_rel = float(np.max(np.abs(cand.v[:, None] - nb_v[None, :]))) + vy_max + 0.5
        n_sub = max(int(math.ceil(H * v_rel / resolution)), config.n_steps)
        times = np.linspace(0.0, H, n_sub + 1)
        s, y, _, heading = cand.state_at(times)
        length, width = _ego_box(config, extra=0.5 * v_rel * H / n_sub)
        hit = False
        for nb in neighbors:
            ns, ny = nb.predict(times)
            if np.any(rectangles_overlap(s, y, heading, length, width, ns, ny, 0.0, nb.length, nb.width)):
                hit = True
                break
        out.append(replace(cand, feasible=not hit))
    return out


def collision_filter(candidates: Sequence[CandidateTrajectory], neighbors: Sequence[NeighborState],
                     config: PlannerConfig) -> list[CandidateTrajectory]:
    """The collision-free subset of ``candidates`` (possibly empty)."""
    return [c for c in flag_collisions(candidates, neighbors, config) if c.feasible]


def proximity_cost_baseline(candidate: CandidateTrajectory, neighbors: Sequence[NeighborState],
                            f_vehicle: float = 1.0) -> float:
    """Step-averaged ``sum_n F_vehicle * exp(-d_n)``, d the center distance in meters."""
    if not neighbors:
        return 0.0
    t = candidate.times[1:]
    total = np.zeros(len(t))
    for nb in neighbors:
        ns, ny = nb.predict(t)
        d = np.hypot(ns - candidate.s[1:], ny - candidate.y[1:])
        total += f_vehicle * np.exp(-d)
    return float(total.mean())


def piecewise_cost(d, weight, b_r, b_far, d_t: float, d_t2: float, mode=CostMode.MONOTONE):
    """Per-neighbor proximity cost as a function of distance ``d``.

    In ``PAPER_EXACT`` mode ``weight`` is the safety score and the attention
    values are used as given. In ``MONOTONE`` mode ``weight`` is the danger in
    [0, 1] and the attention values must already be shifted to [0, 4]; the
    inner branch is ``weight * (b_far * (d_t2 - d) / d_t2 + max(b_r - b_far, 0) * (d_t - d) / d_t)``.
    ``d <= 0`` returns ``inf``.
    """
    mode = CostMode.parse(mode)
    d, weight, b_r, b_far = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (d, weight, b_r, b_far)))
    middle = weight * b_far * (d_t2 - d) / d_t2
    if mode is CostMode.PAPER_EXACT:
        inner = weight * ((d_t - d) * (b_r - b_far) / d_t + b_far)
    elif mode is CostMode.MONOTONE:
        inner = weight * (b_far * (d_t2 - d) / d_t2 + np.maximum(b_r - b_far, 0.0) * (d_t - d) / d_t)
    else:
        raise UsageError("piecewise_cost is defined for PAPER_EXACT and MONOTONE only")
    out = np.where(d >= d_t2, 0.0, np.where(d > d_t, middle, inner))
    out = np.where(d <= 0, np.inf, out)
    return out if out.ndim else float(out)




def proximity_cost_tdbm(candidate: CandidateTrajectory, neighbors: Sequence[NeighborState],
                        assessments: Mapping[str, NeighborAssessment], config: PlannerConfig,
                        geometry: LaneGeometry) -> float:
    """Step-averaged sum of :func:`piecewise_cost` over neighbors.

    The attention term follows the neighbor's current relative position at
    every step (same lane ahead or behind, one lane over, anything else),
    translated to an attention value by ``config.attention_mapping``.
    """
    if not neighbors:
        return 0.0
    mode = config.cost_mode
    mapping = ATTENTION_MAPPINGS[config.attention_mapping]
    index = np.array([mapping[c] for c in range(5)])
    t = candidate.times[1:]
    es, ey = candidate.s[1:], candidate.y[1:]
    ego_lane = geometry.nearest_lane(ey)
    total = np.zeros(len(t))
    for nb in neighbors:
        try:
            a = assessments[nb.vehicle_id]
        except KeyError:
            raise LookupFailure(f"no assessment for neighbor {nb.vehicle_id!r}") from None
        ns, ny = nb.predict(t)
        d = np.hypot(ns - es, ny - ey)
        codes = classify_codes(ego_lane, geometry.nearest_lane(ny), ns - es)
        att = np.asarray(a.attentions, dtype=float)
        if mode is CostMode.MONOTONE:
            att = np.clip(att + ATTENTION_SHIFT, 0.0, ATTENTION_MAX)
            weight = float(danger(a.s_tdbm, config.s_max, config.s_min))
        else:
            weight = a.s_tdbm
        b_r = att[index[codes]]
        total += piecewise_cost(d, weight, b_r, att[3], config.d_t, config.d_t2, mode)
    return float(total.mean())


def evaluate_cost(candidate: CandidateTrajectory, ego: EgoState, neighbors: Sequence[NeighborState],
                  assessments: Mapping[str, NeighborAssessment], config: PlannerConfig,
                  geometry: LaneGeometry) -> CostBreakdown:
    path = float(np.mean(np.abs(candidate.v[1:] - ego.v_des)) / config.speed_scale)
    smooth = float(np.mean((candidate.accel[1:] / config.accel_scale) ** 2
                           + (candidate.lat_accel[1:] / config.accel_scale) ** 2))
    lane = float(abs(candidate.lane_delta))
    if config.cost_mode is CostMode.BASELINE_EXP:
        prox = proximity_cost_baseline(candidate, neighbors, config.f_vehicle)
    else:
        prox = proximity_cost_tdbm(candidate, neighbors, assessments, config, geometry)
    total = config.w_path * path + config.w_accel * smooth + config.w_lane * lane + config.w_prox * prox
    return CostBreakdown(path, smooth, lane, prox, total)


def _tie_key(candidate: CandidateTrajectory, total: float):
    return (round(total, 12), candidate.lane_delta != 0, abs(candidate.speed_offset), candidate.target_lane)


def select_trajectory(candidates: Sequence[CandidateTrajectory], costs: Sequence, config: PlannerConfig | None = None):
    """Cheapest candidate; ties prefer lane keeping, then the smaller speed offset, then the lower lane index.

    ``costs`` holds a :class:`CostBreakdown` or plain number per candidate.
    Returns ``None`` when there is nothing to choose from, which callers
    treat as the signal to brake in lane.
    """
    if not candidates:
        return None
    totals = [c.total if isinstance(c, CostBreakdown) else float(c) for c in costs]
    best = min(range(len(candidates)), key=lambda i: _tie_key(candidates[i], totals[i]))
    return candidates[best]


@dataclass(frozen=True, eq=False)
class PlanResult:
    selected: CandidateTrajectory
    candidates: tuple[CandidateTrajectory, ...]
    costs: tuple[CostBreakdown | None, ...]
    fallback: bool

    @property
    def selected_cost(self) -> CostBreakdown | None:
        for cand, cost in zip(self.candidates, self.costs):
            if cand is self.selected:
                return cost
        return None


def plan(ego: EgoState, geometry: LaneGeometry, neighbors: Sequence[NeighborState],
         assessments: Mapping[str, NeighborAssessment], config: PlannerConfig,
         lane: int | None = None) -> PlanResult:
    """One planning cycle: generate, filter, cost and select (``lane`` as in :func:`generate_candidates`)."""
    candidates = generate_candidates(ego, geometry, config, lane)
    flagged = flag_collisions(candidates, neighbors, config)
    costs = []
    for cand in flagged:
        costs.append(evaluate_cost(cand, ego, neighbors, assessments, config, geometry) if cand.feasible else None)
    finite = [(c, k) for c, k in zip(flagged, costs) if k is not None and math.isfinite(k.total)]
    chosen = select_trajectory([c for c, _ in finite], [k for _, k in finite], config)
    if chosen is None:
        brake = braking_candidate(ego, geometry, config)
        cost = evaluate_cost(brake, ego, neighbors, assessments, config, geometry)
        return PlanResult(brake, (*flagged, brake), (*costs, cost), True)
    return PlanResult(chosen, tuple(flagged), tuple(costs), False)
