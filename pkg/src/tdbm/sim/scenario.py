"""Scenario description and its JSON schema.

A scenario file looks like::

    {
      "name": "drifting-leader",
      "geometry": {"lane_count": 3, "lane_width": 3.7},
      "duration": 30.0, "dt": 0.05, "seed": 7,
      "jitter": {"s": 0.0, "v": 0.0},
      "vehicles": [
        {"id": "ego", "lane": 1, "s0": 0.0, "v0": 28.0, "preset": "EGO", "v_des": 30.0},
        {"id": "d1", "lane": 1, "s0": 45.0, "v0": 24.0, "preset": "DRIFTER",
         "params": {"desired_speed": 24.0}}
      ],
      "planner": {"d_t": 15.0},
      "cost_mode": "monotone",
      "flagged": ["d1"]
    }

Positions are in meters, speeds in m/s and times in seconds. ``jitter``
perturbs the initial ``s0``/``v0`` of every background vehicle uniformly
within the given half-widths, drawn from ``seed``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import ParseError, ValidationError
from ..geometry import rectangles_overlap
from ..planner import CostMode, PlannerConfig
from ..trajectory import LaneGeometry
from .models import BehaviorPreset, preset

EGO = "EGO"
VEHICLE_LENGTH = 4.8
VEHICLE_WIDTH = 1.8


@dataclass(frozen=True)
class VehicleSpec:
    vehicle_id: str
    lane: int
    s0: float
    v0: float
    preset: BehaviorPreset | None  # None for the ego
    v_des: float | None = None  # ego only
    drift_phase: float = 0.0  # rad

    @property
    def is_ego(self) -> bool:
        return self.preset is None

    def to_dict(self) -> dict:
        d = {"id": self.vehicle_id, "lane": self.lane, "s0": self.s0, "v0": self.v0}
        if self.is_ego:
            d["preset"] = EGO
            d["v_des"] = self.v_des
        else:
            d["preset"] = self.preset.name
            d["params"] = self.preset.to_dict()
            d["drift_phase"] = self.drift_phase
        return d


@dataclass(frozen=True)
class AssessmentConfig:
    window: float = 10.0  # s of trailing history used for features
    warmup: float = 3.0  # s of history before scores replace the neutral stand-in
    range: float = 200.0  # m, neighbors farther away are ignored by the planner
    envelope: float = 4.0  # s of lateral history a neighbor's predicted footprint covers

    def to_dict(self):
        return {"window": self.window, "warmup": self.warmup, "range": self.range, "envelope": self.envelope}


@dataclass(frozen=True)
class Scenario:
    name: str
    geometry: LaneGeometry
    duration: float
    vehicles: tuple[VehicleSpec, ...]
    dt: float = 0.05
    seed: int = 0
    jitter: tuple[float, float] = (0.0, 0.0)  # half-widths for s0 (m) and v0 (m/s)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    assessment: AssessmentConfig = field(default_factory=AssessmentConfig)
    flagged: tuple[str, ...] = ()
    description: str = ""

    def __post_init__(self):
        if not (self.duration > 0 and self.dt > 0):
            raise ValidationError("duration and dt must be positive")
        if abs(self.duration / self.dt - round(self.duration / self.dt)) > 1e-6:
            raise ValidationError("duration must be a whole number of steps")
        ratio = self.planner.dt_plan / self.dt
        if abs(ratio - round(ratio)) > 1e-6 or round(ratio) < 1:
            raise ValidationError("planner period must be a whole number of simulation steps")
        ids = [v.vehicle_id for v in self.vehicles]
        if len(set(ids)) != len(ids):
            raise ValidationError("vehicle ids must be unique")
        if sum(v.is_ego for v in self.vehicles) > 1:
            raise ValidationError("at most one ego vehicle")
        for v in self.vehicles:
            if not self.geometry.has_lane(v.lane):
                raise ValidationError(f"vehicle {v.vehicle_id}: lane {v.lane} does not exist")
            if v.v0 < 0:
                raise ValidationError(f"vehicle {v.vehicle_id}: negative initial speed")
            if v.is_ego and (v.v_des is None or v.v_des < 0):
                raise ValidationError("the ego needs a non-negative v_des")
        missing = set(self.flagged) - set(ids)
        if missing:
            raise ValidationError(f"flagged vehicles not in the scenario: {sorted(missing)}")
        self._check_initial_overlap(self.initial_vehicles())

    def _check_initial_overlap(self, vehicles):
        for i, a in enumerate(vehicles):
            for b in vehicles[i + 1:]:
                ya, yb = self.geometry.center(a.lane), self.geometry.center(b.lane)
                if rectangles_overlap(a.s0, ya, 0.0, VEHICLE_LENGTH, VEHICLE_WIDTH,
                                      b.s0, yb, 0.0, VEHICLE_LENGTH, VEHICLE_WIDTH):
                    raise ValidationError(f"vehicles {a.vehicle_id} and {b.vehicle_id} overlap initially")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def ego(self) -> VehicleSpec | None:
        return next((v for v in self.vehicles if v.is_ego), None)

    def initial_vehicles(self) -> tuple[VehicleSpec, ...]:
        """Vehicle specs after the seeded jitter of initial positions and speeds."""
        js, jv = self.jitter
        if js == 0 and jv == 0:
            return self.vehicles
        rng = np.random.default_rng(self.seed)
        out = []
        for v in self.vehicles:
            ds, dv = rng.uniform(-1.0, 1.0, size=2) * (js, jv)
            if v.is_ego:
                out.append(v)
            else:
                out.append(replace(v, s0=float(v.s0 + ds), v0=float(max(0.0, v.v0 + dv))))
        return tuple(out)

    def with_cost_mode(self, mode) -> "Scenario":
        return replace(self, planner=replace(self.planner, cost_mode=CostMode.parse(mode)))

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        planner = self.planner.to_dict()
        return {
            "name": self.name,
            "description": self.description,
            "geometry": self.geometry.to_dict(),
            "duration": self.duration,
            "dt": self.dt,
            "seed": self.seed,
            "jitter": {"s": self.jitter[0], "v": self.jitter[1]},
            "vehicles": [v.to_dict() for v in self.vehicles],
            "cost_mode": planner.pop("cost_mode"),
            "planner": planner,
            "assessment": self.assessment.to_dict(),
            "flagged": list(self.flagged),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Scenario":
        try:
            vehicles = tuple(_vehicle_from_dict(v) for v in d["vehicles"])
            planner = dict(d.get("planner", {}))
            if "cost_mode" in d:
                planner["cost_mode"] = d["cost_mode"]
            jitter = d.get("jitter", {})
            return cls(
                name=str(d.get("name", "scenario")),
                geometry=LaneGeometry.from_dict(d["geometry"]),
                duration=float(d["duration"]),
                vehicles=vehicles,
                dt=float(d.get("dt", 0.05)),
                seed=int(d.get("seed", 0)),
                jitter=(float(jitter.get("s", 0.0)), float(jitter.get("v", 0.0))),
                planner=PlannerConfig.from_dict(planner),
                assessment=AssessmentConfig(**d.get("assessment", {})),
                flagged=tuple(d.get("flagged", ())),
                description=str(d.get("description", "")),
            )
        except KeyError as exc:
            raise ValidationError(f"scenario is missing required field {exc.args[0]!r}") from None
        except TypeError as exc:
            raise ValidationError(f"malformed scenario: {exc}") from None


def _vehicle_from_dict(d: Mapping) -> VehicleSpec:
    kind = str(d.get("preset", "NORMAL"))
    common = dict(vehicle_id=str(d["id"]), lane=int(d["lane"]), s0=float(d["s0"]), v0=float(d["v0"]))
    if kind.upper() == EGO:
        return VehicleSpec(**common, preset=None, v_des=float(d.get("v_des", d["v0"])))
    params = dict(d.get("params", {}))
    params.pop("name", None)
    return VehicleSpec(**common, preset=preset(kind, **params), drift_phase=float(d.get("drift_phase", 0.0)))


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ValidationError(f"scenario file not found: {path}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc.msg}", exc.lineno) from None
    return Scenario.from_dict(data)


SHIPPED_SCENARIOS = ("lone_ego", "drifting_leader", "tailgater", "slow_traffic")


def shipped_scenario(name: str) -> Scenario:
    """One of the scenarios packaged under ``tdbm/data/scenarios``."""
    if name not in SHIPPED_SCENARIOS:
        raise ValidationError(f"unknown shipped scenario {name!r}; known: {SHIPPED_SCENARIOS}")
    res = resources.files("tdbm.data").joinpath("scenarios", f"{name}.json")
    return Scenario.from_dict(json.loads(res.read_text()))


def shipped_scenario_path(name: str) -> Path:
    return Path(str(resources.files("tdbm.data").joinpath("scenarios", f"{name}.json")))
