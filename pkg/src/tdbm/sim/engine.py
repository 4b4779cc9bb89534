"""Fixed-step highway simulation with one planner-driven ego vehicle.

Background vehicles are stepped every ``dt`` with IDM and MOBIL. Every
planner period the ego extracts features of each nearby vehicle over a
trailing window, scores them, and runs one planning cycle; between cycles
it follows the selected candidate exactly. Everything is seeded and
single-threaded, so a scenario always reproduces the same trace.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Sequence

import numpy as np

from ..errors import DegenerateInputError, MissingFeatureError
from ..features import FeatureParams, FeatureVector, NormalizationParams, extract_all, normalize
from ..geometry import rectangles_overlap
from ..mapping.maps import PUBLISHED_MAPS, LinearMapSet, score
from ..planner import (
    CostMode,
    EgoState,
    NeighborAssessment,
    NeighborState,
    PlannerConfig,
    plan,
)
from ..trajectory import FRONT, LaneGeometry, Trajectory, TrajectoryLog, classify_codes
from .models import PRESETS, BehaviorPreset, idm_acceleration, mobil_gain
from .scenario import VEHICLE_LENGTH, VEHICLE_WIDTH, Scenario

MAX_DECEL = 9.0  # m/s^2, physical braking limit for background vehicles
LANE_CHANGE_COOLDOWN = 4.0  # s after a completed change before MOBIL is consulted again
LEADER_RANGE = 200.0  # m, reach of the final-leader lookup
EGO_PROXY = PRESETS["NORMAL"]  # how background drivers expect the ego to react


def packaged_normalization() -> NormalizationParams:
    """Normalization fitted on simulated preset traffic, shipped with the package."""
    with resources.files("tdbm.data").joinpath("normalization.json").open() as fh:
        return NormalizationParams.from_dict(json.load(fh))


@dataclass
class _Background:
    preset: BehaviorPreset
    lane: int
    phase: float
    target: int | None = None
    lc_start: float = 0.0
    lc_y0: float = 0.0
    cooldown_until: float = 0.0

    def base_y(self, geometry: LaneGeometry, t: float) -> float:
        if self.target is None:
            return geometry.center(self.lane)
        u = min(max((t - self.lc_start) / self.preset.lane_change_time, 0.0), 1.0)
        return self.lc_y0 + (geometry.center(self.target) - self.lc_y0) * (3 * u * u - 2 * u ** 3)

    def drift(self, t: float) -> float:
        p = self.preset
        if p.drift_amplitude == 0:
            return 0.0
        return p.drift_amplitude * math.sin(2 * math.pi * t / p.drift_period + self.phase)


@dataclass(eq=False)
class SimTrace:
    scenario: Scenario
    log: TrajectoryLog
    status: str  # "OK" or "COLLIDED"
    decisions: list = field(default_factory=list)
    scores: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    cost_rows: list = field(default_factory=list)

    @property
    def collided(self) -> bool:
        return self.status == "COLLIDED"

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "status": self.status,
            "summary": self.summary,
            "decisions": self.decisions,
            "scores": self.scores,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, allow_nan=False)


class _World:
    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.geometry = scenario.geometry
        vehicles = scenario.initial_vehicles()
        self.ids = [v.vehicle_id for v in vehicles]
        self.ego = next((i for i, v in enumerate(vehicles) if v.is_ego), None)
        self.bg = {}
        for i, v in enumerate(vehicles):
            if not v.is_ego:
                self.bg[i] = _Background(v.preset, v.lane, v.drift_phase)
        self.specs = vehicles
        n, steps = len(vehicles), scenario.n_steps
        self.t = np.arange(steps + 1) * scenario.dt
        self.S = np.full((steps + 1, n), np.nan)
        self.Y = np.full((steps + 1, n), np.nan)
        self.V = np.full((steps + 1, n), np.nan)
        self.H = np.zeros((steps + 1, n))
        for i, v in enumerate(vehicles):
            self.S[0, i], self.V[0, i] = v.s0, v.v0
            y = self.geometry.center(v.lane)
            if i in self.bg:
                y += self.bg[i].drift(0.0)
            self.Y[0, i] = y
        self.half_band = 0.5 * (self.geometry.lane_width + VEHICLE_WIDTH)

    # lane bookkeeping -------------------------------------------------

    def occupied(self, k: int, i: int) -> set[int]:
        """Lanes a vehicle blocks: those its footprint overlaps, plus any lane it is moving into."""
        y = self.Y[k, i]
        lanes = {l for l, c in enumerate(self.geometry.lane_centers) if abs(y - c) < self.half_band}
        lanes.add(self.geometry.nearest_lane(y))
        veh = self.bg.get(i)
        if veh is not None:
            lanes.add(veh.lane)
            if veh.target is not None:
                lanes.add(veh.target)
        return lanes

    def neighbors_in(self, k: int, i: int, lanes: set[int], occupancy, exclude=()):
        """Nearest vehicle ahead and behind ``i`` within ``lanes`` as ``(index, bumper gap)`` pairs."""
        s_i = self.S[k, i]
        ahead, behind = (None, math.inf), (None, math.inf)
        for j in range(len(self.ids)):
            if j == i or j in exclude or not (occupancy[j] & lanes):
                continue
            ds = self.S[k, j] - s_i
            gap = abs(ds) - VEHICLE_LENGTH
            if ds > 0 or (ds == 0 and j > i):
                if gap < ahead[1]:
                    ahead = (j, gap)
            elif gap < behind[1]:
                behind = (j, gap)
        return ahead, behind

    def preset_of(self, i: int) -> BehaviorPreset:
        return self.bg[i].preset if i in self.bg else EGO_PROXY

    def accel(self, k: int, i: int, leader) -> float:
        p = self.preset_of(i)
        j, gap = leader
        v = self.V[k, i]
        if j is None:
            a = idm_acceleration(p, v)
        else:
            a = idm_acceleration(p, v, gap, v - self.V[k, j])
        return float(np.clip(a, -MAX_DECEL, p.max_accel))

    # background stepping ----------------------------------------------

    def background_accels(self, k: int, occupancy) -> dict[int, float]:
        out = {}
        for i, veh in self.bg.items():
            lanes = {veh.lane} if veh.target is None else {veh.lane, veh.target}
            leader, _ = self.neighbors_in(k, i, lanes, occupancy)
            out[i] = self.accel(k, i, leader)
        return out

    def mobil(self, k: int, i: int, occupancy) -> int | None:
        veh = self.bg[i]
        p = veh.preset
        t = self.t[k]
        if not p.lane_changes or veh.target is not None or t < veh.cooldown_until:
            return None
        lead, follow = self.neighbors_in(k, i, {veh.lane}, occupancy)
        a_now = self.accel(k, i, lead)
        if follow[0] is not None:
            f = follow[0]
            old_f_now = self.accel(k, f, (i, follow[1]))
            if lead[0] is None:
                old_f_after = self.accel(k, f, (None, math.inf))
            else:
                old_f_after = self.accel(k, f, (lead[0], self.S[k, lead[0]] - self.S[k, f] - VEHICLE_LENGTH))
        else:
            old_f_now = old_f_after = 0.0
        best, best_gain = None, p.change_threshold
        for delta in (-1, 1):
            lane = veh.lane + delta
            if not self.geometry.has_lane(lane):
                continue
            new_lead, new_follow = self.neighbors_in(k, i, {lane}, occupancy)
            if new_lead[1] <= 0 or new_follow[1] <= 0:
                continue
            a_after = self.accel(k, i, new_lead)
            if a_after < -p.safe_decel:
                continue
            if new_follow[0] is not None:
                nf = new_follow[0]
                nf_now = self.accel(k, nf, self._leader_of(k, nf, occupancy))
                nf_after = self.accel(k, nf, (i, new_follow[1]))
                if nf_after < -p.safe_decel:
                    continue
            else:
                nf_now = nf_after = 0.0
            gain = mobil_gain(p, a_now, a_after, nf_now, nf_after, old_f_now, old_f_after)
            if gain > best_gain:
                best, best_gain = lane, gain
        return best

    def _leader_of(self, k, j, occupancy):
        if j in self.bg:
            veh = self.bg[j]
            lanes = {veh.lane} if veh.target is None else {veh.lane, veh.target}
        else:
            lanes = {self.geometry.nearest_lane(self.Y[k, j])}
        return self.neighbors_in(k, j, lanes, occupancy)[0]

    def step_background(self, k: int):
        """Advance every background vehicle from step ``k`` to ``k + 1``."""
        dt = self.sc.dt
        n = len(self.ids)
        occupancy = [self.occupied(k, j) for j in range(n)]
        accels = self.background_accels(k, occupancy)
        t0 = self.t[k]
        for i in sorted(self.bg):
            lane = self.mobil(k, i, occupancy)
            if lane is not None:
                veh = self.bg[i]
                veh.target, veh.lc_start, veh.lc_y0 = lane, t0, veh.base_y(self.geometry, t0)
                occupancy[i] = occupancy[i] | {lane}
        t1 = self.t[k + 1]
        for i, veh in self.bg.items():
            v, a = self.V[k, i], accels[i]
            v1 = v + a * dt
            if v1 < 0:
                # stops within the step
                self.S[k + 1, i] = self.S[k, i] - v * v / (2 * a)
                v1 = 0.0
            else:
                self.S[k + 1, i] = self.S[k, i] + v * dt + 0.5 * a * dt * dt
            self.V[k + 1, i] = v1
            self.Y[k + 1, i] = veh.base_y(self.geometry, t1) + veh.drift(t1)
            self.H[k + 1, i] = math.atan2((self.Y[k + 1, i] - self.Y[k, i]) / dt, max(v1, 1e-3))
            if veh.target is not None and t1 - veh.lc_start >= veh.preset.lane_change_time - 1e-9:
                veh.lane, veh.target = veh.target, None
                veh.cooldown_until = t1 + LANE_CHANGE_COOLDOWN

    # history views ----------------------------------------------------

    def history_log(self, k0: int, k1: int) -> TrajectoryLog:
        sl = slice(k0, k1 + 1)
        t = self.t[sl]
        trajs = {}
        for i, vid in enumerate(self.ids):
            y = self.Y[sl, i]
            trajs[vid] = Trajectory(vid, t, self.S[sl, i], y, self.V[sl, i],
                                    self.geometry.nearest_lane(y), self.sc.dt)
        return TrajectoryLog(self.geometry, trajs)


def _assess(world: _World, k: int, config: PlannerConfig, norm: NormalizationParams,
            maps: LinearMapSet, scores_out: list):
    sc = world.sc
    acfg = sc.assessment
    ego = world.ego
    t = world.t[k]
    k0 = max(0, k - int(round(acfg.window / sc.dt)))
    warm = t - world.t[0] >= acfg.warmup - 1e-9
    log_ = world.history_log(k0, k) if warm else None
    neighbors, assessments = [], {}
    for i, vid in enumerate(world.ids):
        if i == ego:
            continue
        dist = math.hypot(world.S[k, i] - world.S[k, ego], world.Y[k, i] - world.Y[k, ego])
        if dist > acfg.range:
            continue
        # lateral envelope of the recent past, so a weaving car is predicted as the band it sweeps
        ky = max(0, k - int(round(acfg.envelope / sc.dt)))
        y_lo, y_hi = float(world.Y[ky:k + 1, i].min()), float(world.Y[ky:k + 1, i].max())
        neighbors.append(NeighborState(vid, float(world.S[k, i]), 0.5 * (y_lo + y_hi), float(world.V[k, i]),
                                       VEHICLE_LENGTH, VEHICLE_WIDTH + (y_hi - y_lo)))
        record = {"t": float(t), "vehicle_id": vid, "window": [float(world.t[k0]), float(t)]}
        assessment = None
        if warm:
            try:
                raw = extract_all(log_, vid, FeatureParams())
                report = score(normalize(raw, norm), maps)
                assessment = NeighborAssessment.from_scores(vid, report)
                record["features"] = raw.to_dict()
            except (DegenerateInputError, MissingFeatureError):
                assessment = None
        if assessment is None:
            assessment = NeighborAssessment.neutral(vid, config)
        record.update(neutral="features" not in record, s_tdbm=assessment.s_tdbm,
                      attentions=list(assessment.attentions), danger=float(assessment.danger(config)))
        scores_out.append(record)
        assessments[vid] = assessment
    return neighbors, assessments


def _collisions(world: _World, k: int):
    """Index pairs whose true footprints overlap at step ``k``."""
    n = len(world.ids)
    pairs = []
    if n < 2:
        return pairs
    a, b = np.triu_indices(n, 1)
    S, Y, H = world.S[k], world.Y[k], world.H[k]
    hit = rectangles_overlap(S[a], Y[a], H[a], VEHICLE_LENGTH, VEHICLE_WIDTH,
                             S[b], Y[b], H[b], VEHICLE_LENGTH, VEHICLE_WIDTH)
    return [(int(i), int(j)) for i, j in zip(a[hit], b[hit])]


def run(scenario: Scenario, config: PlannerConfig | None = None, *,
        normalization: NormalizationParams | None = None, maps: LinearMapSet = PUBLISHED_MAPS,
        record_costs: bool = False) -> SimTrace:
    """Simulate ``scenario``; ``config`` overrides the scenario's planner block."""
    if config is not None:
        scenario = replace(scenario, planner=config)
    config = scenario.planner
    world = _World(scenario)
    norm = normalization
    if norm is None and world.ego is not None:
        norm = packaged_normalization()
    plan_every = int(round(config.dt_plan / scenario.dt))
    ego = world.ego
    decisions, scores, cost_rows = [], [], []
    status, collided_with, bg_collisions = "OK", None, []
    current, t_plan = None, 0.0
    last = scenario.n_steps
    for k in range(scenario.n_steps):
        if ego is not None and k % plan_every == 0:
            t = float(world.t[k])
            neighbors, assessments = _assess(world, k, config, norm, maps, scores)
            vy = float(current.lateral_velocity_at(t - t_plan)) if current is not None else 0.0
            state = EgoState(float(world.S[k, ego]), float(world.Y[k, ego]), float(world.V[k, ego]),
                             scenario.ego.v_des, vy)
            # a lane change in progress stays the reference until it is finished or aborted
            ref = current.target_lane if current is not None else None
            result = plan(state, scenario.geometry, neighbors, assessments, config, ref)
            current, t_plan = result.selected, t
            cost = result.selected_cost
            decisions.append({
                "t": t, "lane_delta": current.lane_delta, "speed_offset": current.speed_offset,
                "target_lane": current.target_lane, "target_speed": current.target_speed,
                "fallback": result.fallback,
                "n_feasible": sum(c.feasible for c in result.candidates if not c.fallback),
                "cost": cost.to_dict() if cost is not None else None,
            })
            if record_costs:
                for cand, c in zip(result.candidates, result.costs):
                    cost_rows.append({"t": t, "lane_delta": cand.lane_delta, "speed_offset": cand.speed_offset,
                                      "target_lane": cand.target_lane, "feasible": cand.feasible,
                                      "fallback": cand.fallback, "selected": cand is current,
                                      **({} if c is None else c.to_dict())})
        world.step_background(k)
        if ego is not None:
            s, y, v, h = current.state_at(world.t[k + 1] - t_plan)
            world.S[k + 1, ego], world.Y[k + 1, ego], world.V[k + 1, ego] = float(s), float(y), float(v)
            world.H[k + 1, ego] = float(h)
        hits = _collisions(world, k + 1)
        ego_hits = [p for p in hits if ego in p]
        bg_collisions.extend({"t": float(world.t[k + 1]), "pair": [world.ids[i], world.ids[j]]}
                             for i, j in hits if ego not in (i, j))
        if ego_hits:
            status = "COLLIDED"
            i, j = ego_hits[0]
            collided_with = world.ids[j if i == ego else i]
            last = k + 1
            break
    log_ = world.history_log(0, last)
    summary = _summary(world, last, status, collided_with, bg_collisions, decisions)
    return SimTrace(scenario, log_, status, decisions, scores, summary, cost_rows)


def _summary(world: _World, last: int, status, collided_with, bg_collisions, decisions) -> dict:
    sc = world.sc
    ego = world.ego
    out = {
        "status": status,
        "collided": status == "COLLIDED",
        "collided_with": collided_with,
        "background_collisions": bg_collisions,
        "duration_simulated": float(world.t[last]),
        "min_distance": None,
        "min_distance_by_vehicle": {},
        "min_distance_flagged": None,
        "time_within_dt_flagged": 0.0,
        "ego_lane_changes": 0,
        "lane_change_times": [],
        "final_lane": None,
        "final_leader": None,
        "mean_proximity_cost": None,
    }
    if ego is None:
        return out
    rows = slice(0, last + 1)
    ego_lane = sc.geometry.nearest_lane(world.Y[rows, ego])
    changes = np.flatnonzero(np.diff(ego_lane) != 0) + 1
    out["ego_lane_changes"] = int(len(changes))
    out["lane_change_times"] = [float(world.t[c]) for c in changes]
    out["final_lane"] = int(ego_lane[-1])
    others = [i for i in range(len(world.ids)) if i != ego]
    if decisions:
        prox = [d["cost"]["proximity"] for d in decisions if d["cost"] is not None]
        out["mean_proximity_cost"] = float(np.mean(prox)) if prox else None
    if not others:
        return out
    dist = np.hypot(world.S[rows, others] - world.S[rows, ego, None], world.Y[rows, others] - world.Y[rows, ego, None])
    per = {world.ids[i]: float(dist[:, n].min()) for n, i in enumerate(others)}
    out["min_distance_by_vehicle"] = per
    out["min_distance"] = float(min(per.values()))
    flagged = [n for n, i in enumerate(others) if world.ids[i] in sc.flagged]
    if flagged:
        out["min_distance_flagged"] = float(dist[:, flagged].min())
        near = (dist[:, flagged] <= sc.planner.d_t).any(axis=1)
        out["time_within_dt_flagged"] = float(near.sum() * sc.dt)
    # nearest vehicle ahead in the ego's lane at the end of the run
    ds = world.S[last, others] - world.S[last, ego]
    lanes = sc.geometry.nearest_lane(world.Y[last, others])
    codes = classify_codes(int(ego_lane[-1]), np.atleast_1d(lanes), ds)
    ahead = [(ds[n], world.ids[i]) for n, i in enumerate(others) if codes[n] == FRONT and ds[n] <= LEADER_RANGE]
    out["final_leader"] = min(ahead)[1] if ahead else None
    return out


def compare(scenario: Scenario, modes: Sequence = tuple(CostMode), **kw) -> list[dict]:
    """Run ``scenario`` once per cost mode with the same seed; one summary row per mode."""
    rows = []
    for mode in modes:
        mode = CostMode.parse(mode)
        trace = run(scenario.with_cost_mode(mode), **kw)
        s = trace.summary
        rows.append({
            "cost_mode": mode.value,
            "status": s["status"],
            "min_distance": s["min_distance"],
            "min_distance_flagged": s["min_distance_flagged"],
            "time_within_dt_flagged": s["time_within_dt_flagged"],
            "ego_lane_changes": s["ego_lane_changes"],
            "first_lane_change": s["lane_change_times"][0] if s["lane_change_times"] else None,
            "final_lane": s["final_lane"],
            "final_leader": s["final_leader"],
            "mean_proximity_cost": s["mean_proximity_cost"],
        })
    return rows


def feature_vector_of(record: dict) -> FeatureVector:
    """Raw features stored in a score-timeline record."""
    return FeatureVector.from_dict(record["features"])


def mean_scores(trace: SimTrace, vehicle_ids: Sequence[str] | None = None) -> dict[str, float]:
    """Mean safety score of each assessed vehicle over its warm (non-neutral) records."""
    acc: dict[str, list[float]] = {}
    for rec in trace.scores:
        if rec["neutral"] or (vehicle_ids is not None and rec["vehicle_id"] not in vehicle_ids):
            continue
        acc.setdefault(rec["vehicle_id"], []).append(rec["s_tdbm"])
    return {vid: float(np.mean(v)) for vid, v in sorted(acc.items())}


def lowest_attention_neighbor(trace: SimTrace, candidates: Sequence[str] | None = None) -> str | None:
    """The candidate whose mean safety score is highest, i.e. who needs the least attention.

    ``candidates`` defaults to the scenario's flagged vehicles. Ties go to the
    alphabetically first id.
    """
    candidates = tuple(candidates) if candidates is not None else trace.scenario.flagged
    means = mean_scores(trace, candidates)
    if not means:
        return None
    return max(sorted(means), key=lambda vid: means[vid])
