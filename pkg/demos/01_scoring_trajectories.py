"""Score two simulated drivers from their trajectories.

Runs a short background-only scene, extracts the ten trajectory features of
an aggressive and a careful car over the same window and pushes both through
the published linear maps.

    python demos/01_scoring_trajectories.py
"""

# %%
import numpy as np

from tdbm.features import FEATURE_NAMES, FeatureParams, extract_all, normalize
from tdbm.mapping import BEHAVIOR_LABELS, score
from tdbm.sim import Scenario, VehicleSpec, packaged_normalization, preset, run
from tdbm.trajectory import LaneGeometry

geometry = LaneGeometry.uniform(3)
slow = [VehicleSpec(f"slow{l}", l, 90.0 + 15 * l, 20.0, preset("NORMAL", desired_speed=20.0 + 2 * l,
                                                                 lane_changes=False)) for l in range(3)]
drivers = [VehicleSpec("hasty", 1, 0.0, 24.0, preset("AGGRESSIVE")),
           VehicleSpec("calm", 0, -20.0, 24.0, preset("CAREFUL"))]
trace = run(Scenario("two-drivers", geometry, 30.0, tuple(slow + drivers), seed=1))

# %% raw features over the last 20 s
params = FeatureParams(window=(10.0, 30.0))


def _fmt(x):
    return f"{'-':>10}" if x is None else f"{x:10.3f}"


raw = {vid: extract_all(trace.log, vid, params) for vid in ("hasty", "calm")}
print(f"{'feature':>10} {'hasty':>10} {'calm':>10}")
for name in FEATURE_NAMES:
    a, b = (getattr(raw[v], name) for v in ("hasty", "calm"))
    print(f"{name:>10} {_fmt(a)} {_fmt(b)}")

# %% normalized features -> behaviors, attentions and the safety score
norm = packaged_normalization()
for vid, fv in raw.items():
    report = score(normalize(fv, norm))
    top = int(np.argmax(report.behaviors))
    print(f"\n{vid}: safety {report.s_tdbm:+.2f}, strongest behavior {BEHAVIOR_LABELS[top]}")
    print("  behaviors ", np.round(report.behaviors, 2))
    print("  attentions", np.round(report.attentions, 2))
