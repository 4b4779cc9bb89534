"""Car-following and lane-change laws for background traffic.

Longitudinal motion uses the Intelligent Driver Model (Treiber, Hennecke and
Helbing, 2000); lane changes use MOBIL (Kesting, Treiber and Helbing, 2007)
with the usual safety criterion and politeness-weighted incentive.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, fields, replace

from ..errors import ValidationError

IDM_DELTA = 4.0


class PresetName(str, enum.Enum):
    AGGRESSIVE = "AGGRESSIVE"
    NORMAL = "NORMAL"
    CAREFUL = "CAREFUL"
    DRIFTER = "DRIFTER"


@dataclass(frozen=True)
class BehaviorPreset:
    name: str
    desired_speed: float  # m/s
    min_spacing: float  # m, jam distance
    time_headway: float  # s
    max_accel: float  # m/s^2
    comfortable_decel: float  # m/s^2
    politeness: float  # MOBIL p in [0, 1]
    change_threshold: float  # MOBIL acceleration gain threshold, m/s^2
    safe_decel: float = 4.0  # m/s^2 the new follower may be asked to brake at
    lane_change_time: float = 3.0  # s for the lateral move
    lane_changes: bool = True
    drift_amplitude: float = 0.0  # m
    drift_period: float = 0.0  # s

    def __post_init__(self):
        positive = ("desired_speed", "min_spacing", "time_headway", "max_accel",
                    "comfortable_decel", "safe_decel", "lane_change_time")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValidationError(f"preset {self.name}: {name} must be positive")
        if not 0.0 <= self.politeness <= 1.0:
            raise ValidationError(f"preset {self.name}: politeness must be in [0, 1]")
        if self.drift_amplitude < 0 or (self.drift_amplitude > 0 and not self.drift_period > 0):
            raise ValidationError(f"preset {self.name}: drift needs amplitude >= 0 and a positive period")

    def with_overrides(self, **kw) -> "BehaviorPreset":
        unknown = set(kw) - {f.name for f in fields(self)}
        if unknown:
            raise ValidationError(f"unknown preset parameters: {sorted(unknown)}")
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


# NORMAL uses the standard highway IDM/MOBIL parameters. AGGRESSIVE halves
# the headway, raises speed and accelerations and drops politeness; CAREFUL
# doubles the headway and does the opposite.
_NORMAL = BehaviorPreset("NORMAL", desired_speed=30.0, min_spacing=2.0, time_headway=1.5,
                         max_accel=1.0, comfortable_decel=1.5, politeness=0.3, change_threshold=0.2)

PRESETS = {
    "NORMAL": _NORMAL,
    "AGGRESSIVE": _NORMAL.with_overrides(
        name="AGGRESSIVE", desired_speed=36.0, time_headway=0.75, max_accel=2.0,
        comfortable_decel=3.0, politeness=0.0, change_threshold=0.05, lane_change_time=2.0),
    "CAREFUL": _NORMAL.with_overrides(
        name="CAREFUL", desired_speed=26.0, time_headway=3.0, max_accel=0.7,
        comfortable_decel=1.0, politeness=0.8, change_threshold=0.4, lane_change_time=4.5),
    "DRIFTER": _NORMAL.with_overrides(
        name="DRIFTER", drift_amplitude=0.6, drift_period=5.0),
}


def preset(name: str, **overrides) -> BehaviorPreset:
    try:
        base = PRESETS[str(name).upper()]
    except KeyError:
        raise ValidationError(f"unknown behavior preset {name!r}; known: {sorted(PRESETS)}") from None
    return base.with_overrides(**overrides) if overrides else base


def desired_gap(p: BehaviorPreset, v: float, dv: float) -> float:
    """IDM dynamic desired gap ``s*``; ``dv`` is own speed minus leader speed."""
    return p.min_spacing + max(0.0, v * p.time_headway + v * dv / (2.0 * math.sqrt(p.max_accel * p.comfortable_decel)))


def idm_acceleration(p: BehaviorPreset, v: float, gap: float | None = None, dv: float = 0.0) -> float:
    """IDM acceleration; ``gap`` is the bumper-to-bumper distance, ``None`` on a free road."""
    free = 1.0 - (v / p.desired_speed) ** IDM_DELTA
    if gap is None:
        return p.max_accel * free
    gap = max(gap, 1e-3)
    return p.max_accel * (free - (desired_gap(p, v, dv) / gap) ** 2)


def equilibrium_gap(p: BehaviorPreset, v: float) -> float:
    """Bumper gap at which IDM acceleration is zero behind a leader at the same speed ``v``."""
    ratio = 1.0 - (v / p.desired_speed) ** IDM_DELTA
    if ratio <= 0:
        return math.inf
    return (p.min_spacing + v * p.time_headway) / math.sqrt(ratio)


def mobil_gain(p: BehaviorPreset, own_now: float, own_after: float,
               new_follower_now: float, new_follower_after: float,
               old_follower_now: float, old_follower_after: float) -> float:
    """Politeness-weighted acceleration advantage of a lane change."""
    own = own_after - own_now
    others = (new_follower_after - new_follower_now) + (old_follower_after - old_follower_now)
    return own + p.politeness * others
