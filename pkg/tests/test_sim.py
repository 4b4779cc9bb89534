import json
import math

import numpy as np
import pytest

from tdbm.errors import ParseError, ValidationError
from tdbm.features import FeatureParams, extract_all
from tdbm.sim import (
    PRESETS,
    SHIPPED_SCENARIOS,
    Scenario,
    VehicleSpec,
    equilibrium_gap,
    idm_acceleration,
    load_scenario,
    lowest_attention_neighbor,
    mean_scores,
    mobil_gain,
    preset,
    run,
    shipped_scenario,
)
from tdbm.sim.calibrate import traffic_scenario
from tdbm.trajectory import LaneGeometry, ingest_csv, write_csv

NORMAL = PRESETS["NORMAL"]
G1 = LaneGeometry.uniform(1)
G3 = LaneGeometry.uniform(3)


class TestModels:
    def test_free_road(self):
        assert idm_acceleration(NORMAL, NORMAL.desired_speed) == pytest.approx(0.0, abs=1e-12)
        assert idm_acceleration(NORMAL, 0.0) == NORMAL.max_accel
        assert idm_acceleration(NORMAL, 20.0) > 0

    def test_interaction_term(self):
        # s* = 2 + 20 * 1.5 = 32, free term 1 - (2/3)^4
        expected = 1.0 * (1 - (20 / 30) ** 4 - (32 / 50) ** 2)
        assert idm_acceleration(NORMAL, 20.0, 50.0, 0.0) == pytest.approx(expected, rel=1e-12)
        assert idm_acceleration(NORMAL, 20.0, 50.0, 5.0) < expected

    def test_equilibrium_gap(self):
        g = equilibrium_gap(NORMAL, 20.0)
        assert g == pytest.approx(32 / math.sqrt(1 - (2 / 3) ** 4), rel=1e-12)
        assert idm_acceleration(NORMAL, 20.0, g) == pytest.approx(0.0, abs=1e-12)
        assert equilibrium_gap(NORMAL, 30.0) == math.inf

    def test_mobil(self):
        assert mobil_gain(NORMAL, 0.0, 1.0, 0.0, -1.0, 0.0, 0.5) == pytest.approx(1.0 + 0.3 * -0.5)

    def test_preset_relations(self):
        a, c = PRESETS["AGGRESSIVE"], PRESETS["CAREFUL"]
        assert a.time_headway == 0.5 * NORMAL.time_headway and c.time_headway == 2 * NORMAL.time_headway
        assert a.politeness < NORMAL.politeness < c.politeness
        assert PRESETS["DRIFTER"].drift_amplitude > 0

    def test_preset_validation(self):
        with pytest.raises(ValidationError):
            preset("NORMAL", politeness=1.5)
        with pytest.raises(ValidationError):
            preset("NORMAL", time_headway=0.0)
        with pytest.raises(ValidationError):
            preset("NORMAL", bogus=1.0)
        with pytest.raises(ValidationError):
            preset("SPEEDY")


def follow_scenario(duration=90.0):
    lead = VehicleSpec("lead", 0, 60.0, 20.0, preset("NORMAL", desired_speed=20.0, lane_changes=False))
    foll = VehicleSpec("foll", 0, 0.0, 20.0, preset("NORMAL", lane_changes=False))
    return Scenario("follow", G1, duration, (lead, foll))


class TestBackground:
    def test_equilibrium_after_settling(self):
        tr = run(follow_scenario())
        lead, foll = tr.log.trajectories["lead"], tr.log.trajectories["foll"]
        settled = lead.t >= 60.0
        gap = lead.s[settled] - foll.s[settled] - 4.8
        target = (2.0 + 20.0 * 1.5) / math.sqrt(1 - (20 / 30) ** 4)
        assert np.all(np.abs(gap / target - 1) < 0.01)

    def test_free_vehicle_reaches_desired_speed(self):
        sc = Scenario("free", G1, 60.0, (VehicleSpec("a", 0, 0.0, 10.0, NORMAL),))
        v = run(sc).log.trajectories["a"].v
        assert np.all(np.diff(v) >= -1e-12) and v[-1] == pytest.approx(30.0, rel=0.02)

    def test_drift_amplitude(self):
        sc = Scenario("drift", G3, 20.0, (VehicleSpec("d", 1, 0.0, 30.0, PRESETS["DRIFTER"]),))
        y = run(sc).log.trajectories["d"].y - G3.center(1)
        assert np.max(np.abs(y)) == pytest.approx(0.6, rel=1e-3)

    def test_aggressive_vs_careful(self):
        def scenario(seed, name):
            rng = np.random.default_rng(seed)
            vs = [VehicleSpec(f"slow{l}", l, float(rng.uniform(60, 140)), 20.0,
                              preset("NORMAL", desired_speed=20.0 + 2 * l, lane_changes=False)) for l in range(3)]
            vs += [VehicleSpec(f"t{n}", int(rng.integers(3)), float(-15.0 * n + rng.uniform(0, 5)), 24.0, preset(name))
                   for n in range(3)]
            return Scenario(f"ac-{seed}", G3, 30.0, tuple(vs), seed=seed)

        stats = {}
        for name in ("AGGRESSIVE", "CAREFUL"):
            rows = []
            for seed in range(20):
                log_ = run(scenario(seed, name)).log
                fv = [extract_all(log_, f"t{n}", FeatureParams(window=(5.0, 30.0))) for n in range(3)]
                rows.append((np.mean([f.v_nei for f in fv]), np.mean([f.j_l for f in fv])))
            stats[name] = np.median(rows, axis=0)
        assert np.all(stats["AGGRESSIVE"] > stats["CAREFUL"])


@pytest.fixture(scope="module")
def shipped_traces():
    return {name: run(shipped_scenario(name)) for name in SHIPPED_SCENARIOS}


class TestRun:
    def test_lone_ego(self, shipped_traces):
        tr = shipped_traces["lone_ego"]
        ego = tr.log.trajectories["ego"]
        assert np.allclose(ego.v, 25.0) and np.allclose(ego.y, G3.center(1))
        assert all(d["cost"]["proximity"] == 0.0 for d in tr.decisions)
        assert tr.summary["min_distance"] is None

    def test_no_background_collisions(self, shipped_traces):
        for name, tr in shipped_traces.items():
            assert tr.summary["background_collisions"] == [], name
            assert not tr.collided, name

    def test_speed_bounds(self, shipped_traces):
        traces = list(shipped_traces.values()) + [run(traffic_scenario(s)) for s in (0, 1)]
        for tr in traces:
            for spec in tr.scenario.vehicles:
                if spec.is_ego:
                    continue
                v = tr.log.trajectories[spec.vehicle_id].v
                assert v.min() >= 0.0 and v.max() <= 1.2 * spec.preset.desired_speed

    def test_deterministic(self, shipped_traces):
        sc = shipped_scenario("tailgater")
        assert run(sc).to_json() == shipped_traces["tailgater"].to_json()

    def test_warmup_neutral(self, shipped_traces):
        for rec in shipped_traces["drifting_leader"].scores:
            assert rec["neutral"] == (rec["t"] < 3.0 - 1e-9)
            if rec["neutral"]:
                assert rec["danger"] == 0.5

    def test_csv_round_trip(self, shipped_traces, tmp_path):
        tr = shipped_traces["drifting_leader"]
        path = tmp_path / "trace.csv"
        write_csv(tr.log, path)
        log_ = ingest_csv(path, tr.scenario.geometry, tr.scenario.dt)
        warm = [r for r in tr.scores if not r["neutral"]]
        assert warm
        for rec in warm:
            fv = extract_all(log_, rec["vehicle_id"], FeatureParams(window=tuple(rec["window"]))).to_dict()
            for key, val in rec["features"].items():
                assert fv[key] == pytest.approx(val, rel=1e-9, abs=1e-12)

    def test_attention_helpers(self, shipped_traces):
        tr = shipped_traces["slow_traffic"]
        means = mean_scores(tr)
        flagged = tr.scenario.flagged
        assert lowest_attention_neighbor(tr) == max(flagged, key=lambda v: (means[v], v))
        assert lowest_attention_neighbor(shipped_traces["lone_ego"]) is None

    def test_collision_terminates(self):
        wall = [VehicleSpec(f"w{l}", l, 30.0, 0.0, preset("NORMAL", desired_speed=1e-3, lane_changes=False))
                for l in range(3)]
        ego = VehicleSpec("ego", 1, 0.0, 30.0, None, v_des=30.0)
        tr = run(Scenario("wall", G3, 10.0, (ego, *wall)))
        assert tr.collided and tr.summary["collided_with"] == "w1"
        assert tr.summary["duration_simulated"] < 10.0


class TestScenario:
    def test_round_trip(self):
        for name in SHIPPED_SCENARIOS:
            sc = shipped_scenario(name)
            assert Scenario.from_dict(json.loads(json.dumps(sc.to_dict()))) == sc

    def test_overlap_rejected(self):
        a = VehicleSpec("a", 0, 0.0, 20.0, NORMAL)
        b = VehicleSpec("b", 0, 3.0, 20.0, NORMAL)
        with pytest.raises(ValidationError):
            Scenario("x", G1, 10.0, (a, b))

    def test_validation(self):
        a = VehicleSpec("a", 0, 0.0, 20.0, NORMAL)
        with pytest.raises(ValidationError):
            Scenario("x", G1, 10.0, (a, VehicleSpec("a", 0, 50.0, 20.0, NORMAL)))
        with pytest.raises(ValidationError):
            Scenario("x", G1, 10.0, (VehicleSpec("a", 2, 0.0, 20.0, NORMAL),))
        with pytest.raises(ValidationError):
            Scenario("x", G1, 10.01, (a,))
        with pytest.raises(ValidationError):
            Scenario("x", G1, 10.0, (a,), flagged=("ghost",))
        with pytest.raises(ValidationError):
            Scenario.from_dict({"geometry": {"lane_count": 1}, "duration": 5.0})
        with pytest.raises(ValidationError):
            shipped_scenario("nope")

    def test_load_errors(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ParseError):
            load_scenario(bad)
        with pytest.raises(ValidationError):
            load_scenario(tmp_path / "missing.json")

    def test_jitter_is_seeded(self):
        sc = Scenario("j", G3, 5.0, (VehicleSpec("a", 0, 0.0, 20.0, NORMAL),), seed=4, jitter=(2.0, 1.0))
        assert sc.initial_vehicles() == sc.initial_vehicles()
        assert sc.initial_vehicles() != sc.with_seed(5).initial_vehicles()
