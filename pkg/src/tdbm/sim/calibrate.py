"""Fit feature normalization on simulated preset traffic.

The published maps expect features scaled to roughly [0, 1]. Without the
original recordings, the scale is taken from background traffic built from
an even mix of presets: ``build_corpus`` runs seeded free-flowing scenarios
and extracts features of every vehicle over trailing windows.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import DegenerateInputError
from ..features import BEHAVIOR_FEATURES, FeatureParams, FeatureVector, NormalizationParams, extract_all, fit_normalization
from ..trajectory import LaneGeometry
from .engine import run
from .models import PRESETS, preset
from .scenario import Scenario, VehicleSpec

CORPUS_PRESETS = ("AGGRESSIVE", "NORMAL", "CAREFUL", "DRIFTER")


def traffic_scenario(seed: int, lanes: int = 3, per_lane: int = 4, duration: float = 40.0,
                     spacing: float = 45.0) -> Scenario:
    """Background-only traffic with randomly assigned presets and jittered placement."""
    rng = np.random.default_rng(seed)
    geometry = LaneGeometry.uniform(lanes)
    vehicles = []
    for lane in range(lanes):
        offset = rng.uniform(0.0, spacing)
        for n in range(per_lane):
            name = CORPUS_PRESETS[int(rng.integers(len(CORPUS_PRESETS)))]
            p = PRESETS[name]
            s0 = offset + n * spacing + rng.uniform(-8.0, 8.0)
            v0 = p.desired_speed * rng.uniform(0.8, 1.0)
            vehicles.append(VehicleSpec(f"L{lane}V{n}", lane, float(s0), float(v0), preset(name),
                                        drift_phase=float(rng.uniform(0.0, 2 * np.pi))))
    return Scenario(f"traffic-{seed}", geometry, duration, tuple(vehicles), seed=seed)


def build_corpus(seeds=range(12), window: float = 10.0, stride: float = 5.0) -> list[FeatureVector]:
    vectors = []
    for seed in seeds:
        sc = traffic_scenario(seed)
        trace = run(sc)
        t_end = trace.log.time_span[1]
        for t1 in np.arange(window, t_end + 1e-9, stride):
            params = FeatureParams(window=(float(t1 - window), float(t1)))
            for vid in trace.log.vehicle_ids:
                try:
                    vectors.append(extract_all(trace.log, vid, params))
                except DegenerateInputError:
                    continue
    return vectors


def calibrate(seeds=range(12)) -> NormalizationParams:
    return fit_normalization(build_corpus(seeds), BEHAVIOR_FEATURES)


def main(path=None):
    """Regenerate the packaged normalization asset."""
    path = Path(path) if path else Path(__file__).resolve().parent.parent / "data" / "normalization.json"
    params = calibrate()
    path.write_text(json.dumps(params.to_dict(), indent=1, sort_keys=True) + "\n")
    return params


if __name__ == "__main__":
    print(main().to_dict())
