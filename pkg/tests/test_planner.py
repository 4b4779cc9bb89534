import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely import affinity
from shapely.geometry import box

from tdbm.errors import LookupFailure, UsageError, ValidationError
from tdbm.geometry import rectangle_corners, rectangles_overlap
from tdbm.planner import (
    S_MAX,
    S_MIN,
    CostMode,
    EgoState,
    NeighborAssessment,
    NeighborState,
    PlannerConfig,
    collision_filter,
    danger,
    evaluate_cost,
    flag_collisions,
    generate_candidates,
    piecewise_cost,
    plan,
    proximity_cost_baseline,
    proximity_cost_tdbm,
    select_trajectory,
)
from tdbm.trajectory import LaneGeometry

G3 = LaneGeometry.uniform(3)
MID = G3.center(1)


def ego(lane=1, v=25.0, **kw):
    return EgoState(0.0, G3.center(lane), v, kw.pop("v_des", v), **kw)


def keep(cands):
    return next(c for c in cands if c.lane_delta == 0 and c.speed_offset == 0.0)


def shapely_rect(x, y, heading, length, width):
    r = box(-length / 2, -width / 2, length / 2, width / 2)
    return affinity.translate(affinity.rotate(r, heading, origin=(0, 0), use_radians=True), x, y)


class TestGeometry:
    finite = st.floats(-20, 20, allow_nan=False)
    angle = st.floats(-math.pi, math.pi)
    size = st.floats(0.5, 6.0)

    @settings(max_examples=300, deadline=None)
    @given(finite, finite, angle, size, size, finite, finite, angle, size, size)
    def test_matches_shapely_and_is_symmetric(self, x1, y1, h1, l1, w1, x2, y2, h2, l2, w2):
        ours = bool(rectangles_overlap(x1, y1, h1, l1, w1, x2, y2, h2, l2, w2))
        assert ours == bool(rectangles_overlap(x2, y2, h2, l2, w2, x1, y1, h1, l1, w1))
        a, b = shapely_rect(x1, y1, h1, l1, w1), shapely_rect(x2, y2, h2, l2, w2)
        inter = a.intersection(b).area
        if inter > 1e-6:
            assert ours
        elif a.distance(b) > 1e-6:
            assert not ours

    def test_corners(self):
        c = rectangle_corners(0.0, 0.0, 0.0, 4.0, 2.0)
        assert sorted(map(tuple, np.round(np.asarray(c).reshape(-1, 2), 12))) == [(-2, -1), (-2, 1), (2, -1), (2, 1)]


class TestCandidates:
    cfg = PlannerConfig()

    def test_counts(self):
        assert len(generate_candidates(ego(1), G3, self.cfg)) == 15
        left = generate_candidates(ego(0), G3, self.cfg)
        assert len(left) == 10 and min(c.lane_delta for c in left) == 0

    def test_identity_maneuver(self):
        c = keep(generate_candidates(ego(1), G3, self.cfg))
        assert np.allclose(c.v, 25.0) and np.allclose(c.y, MID)
        assert np.allclose(np.diff(c.s), 25.0 * self.cfg.dt_plan)

    def test_states_continuous_and_start_at_ego(self):
        for c in generate_candidates(ego(1, vy=0.4), G3, self.cfg):
            assert np.all(np.hypot(np.diff(c.s), np.diff(c.y)) <= self.cfg.v_max * self.cfg.dt_plan)
            s, y, v, _ = c.state_at(0.0)
            assert (float(s), float(y), float(v)) == pytest.approx((0.0, MID, 25.0))
            assert float(c.lateral_velocity_at(0.0)) == pytest.approx(0.4)
            assert float(c.lateral_velocity_at(self.cfg.horizon)) == pytest.approx(0.0)

    def test_off_road(self):
        with pytest.raises(ValidationError):
            generate_candidates(EgoState(0.0, -5.0, 20.0, 20.0), G3, self.cfg)

    def test_reference_lane(self):
        cands = generate_candidates(EgoState(0.0, G3.center(1) + 1.0, 25.0, 25.0), G3, self.cfg, lane=2)
        assert {c.target_lane for c in cands} == {1, 2}


class TestCollisionFilter:
    cfg = PlannerConfig()

    def test_empty_road(self):
        cands = generate_candidates(ego(), G3, self.cfg)
        assert len(collision_filter(cands, [], self.cfg)) == len(cands)

    def test_stopped_car_ahead(self):
        stopped = NeighborState("x", 60.0, MID, 0.0)
        feas = collision_filter(generate_candidates(ego(), G3, self.cfg), [stopped], self.cfg)
        assert not [c for c in feas if c.lane_delta == 0 and c.speed_offset >= 0]
        assert any(c.lane_delta != 0 for c in feas)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.floats(-60, 90), st.integers(0, 2), st.floats(-0.8, 0.8), st.floats(0, 40)),
                    min_size=1, max_size=4),
           st.floats(5, 35), st.integers(0, 2), st.floats(-1.0, 1.0))
    def test_never_passes_dense_overlap(self, nbs, v, lane, vy):
        e = EgoState(0.0, G3.center(lane), v, v, vy)
        neighbors = [NeighborState(f"n{i}", s, G3.center(l) + dy, nv) for i, (s, l, dy, nv) in enumerate(nbs)]
        cands = generate_candidates(e, G3, self.cfg)
        length = self.cfg.vehicle_length + 2 * self.cfg.collision_margin
        width = self.cfg.vehicle_width + 2 * self.cfg.collision_margin
        dense = np.linspace(0.0, self.cfg.horizon, 10 * self.cfg.n_steps + 1)
        for c in collision_filter(cands, neighbors, self.cfg):
            s, y, _, h = c.state_at(dense)
            for nb in neighbors:
                ns, ny = nb.predict(dense)
                for k in range(len(dense)):
                    a = shapely_rect(float(s[k]), float(y[k]), float(h[k]), length, width)
                    b = shapely_rect(float(ns[k]), float(ny[k]), 0.0, nb.length, nb.width)
                    assert a.intersection(b).area <= 1e-9


def pace_neighbor(offset_s, lane=1, v=25.0, vid="n"):
    return NeighborState(vid, offset_s, G3.center(lane), v)


class TestBaselineCost:
    def test_values(self):
        c = keep(generate_candidates(ego(), G3, PlannerConfig()))
        assert proximity_cost_baseline(c, []) == 0.0
        assert proximity_cost_baseline(c, [NeighborState("n", 0.0, MID - 1e-300, 25.0)], 1.0) == pytest.approx(1.0)
        assert proximity_cost_baseline(c, [pace_neighbor(5.0)], 1.0) == pytest.approx(math.exp(-5), rel=1e-12)
        assert math.exp(-5) == pytest.approx(0.00674, abs=1e-5)


class TestPiecewiseCost:
    d_t, d_t2 = 15.0, 60.0

    def test_zero_beyond_outer(self):
        d = np.linspace(self.d_t2, 500, 1000)
        for mode in (CostMode.MONOTONE, CostMode.PAPER_EXACT):
            assert np.all(piecewise_cost(d, 0.9, 3.0, 1.0, self.d_t, self.d_t2, mode) == 0.0)

    def test_monotone_continuity(self):
        for w, br, bf in ((1.0, 4.0, 1.0), (0.3, 0.5, 2.0), (0.7, 2.0, 2.0)):
            for edge in (self.d_t, self.d_t2):
                lo = piecewise_cost(np.nextafter(edge, 0), w, br, bf, self.d_t, self.d_t2)
                at = piecewise_cost(edge, w, br, bf, self.d_t, self.d_t2)
                hi = piecewise_cost(np.nextafter(edge, np.inf), w, br, bf, self.d_t, self.d_t2)
                assert abs(lo - at) < 1e-12 and abs(hi - at) < 1e-12
            mid = w * bf * (self.d_t2 - self.d_t) / self.d_t2
            assert piecewise_cost(self.d_t, w, br, bf, self.d_t, self.d_t2) == pytest.approx(mid, abs=1e-12)

    def test_monotone_grids(self):
        d = np.linspace(0.01, 80, 1000)
        rng = np.random.default_rng(0)
        for _ in range(20):
            br, bf = rng.uniform(0, 4, 2)
            w = rng.uniform(0, 1)
            assert np.all(np.diff(piecewise_cost(d, w, br, bf, self.d_t, self.d_t2)) <= 1e-12)
            dd = rng.uniform(0.01, 80)
            wg = np.linspace(0, 1, 1000)
            cw = piecewise_cost(dd, wg, br, bf, self.d_t, self.d_t2)
            assert np.all(np.diff(cw) >= -1e-12)

    def test_contact_value(self):
        assert piecewise_cost(1e-12, 0.5, 3.0, 1.0, self.d_t, self.d_t2) == pytest.approx(1.5)
        assert piecewise_cost(0.0, 0.5, 3.0, 1.0, self.d_t, self.d_t2) == math.inf

    def test_paper_exact_probes(self):
        S, br, bf = 4.0, 1.5, -0.5
        # middle branch: S * B_far * (d_t2 - d) / d_t2
        assert piecewise_cost(30.0, S, br, bf, 15, 60, "paper-exact") == pytest.approx(4.0 * -0.5 * 30 / 60)
        # inner branch: S * ((d_t - d) * (B_r - B_far) / d_t + B_far)
        assert piecewise_cost(5.0, S, br, bf, 15, 60, "paper-exact") == pytest.approx(4.0 * (10 * 2.0 / 15 - 0.5))
        assert piecewise_cost(15.0, S, br, bf, 15, 60, "paper-exact") == pytest.approx(4.0 * -0.5)
        assert piecewise_cost(75.0, S, br, bf, 15, 60, "paper-exact") == 0.0
        # the literal form jumps at d_t
        below = piecewise_cost(np.nextafter(15.0, 0), S, br, bf, 15, 60, "paper-exact")
        above = piecewise_cost(np.nextafter(15.0, 99), S, br, bf, 15, 60, "paper-exact")
        assert abs(below - above) == pytest.approx(0.5)

    def test_baseline_mode_rejected(self):
        with pytest.raises(UsageError):
            piecewise_cost(1.0, 1, 1, 1, 15, 60, "baseline-exp")


def assessment(vid, s, att=(0.0, 0.0, 0.0, 0.0)):
    return NeighborAssessment(vid, s, att)


class TestTdbmCost:
    cfg = PlannerConfig()

    def test_safe_neighbors_cost_nothing(self):
        c = keep(generate_candidates(ego(), G3, self.cfg))
        nbs = [pace_neighbor(8.0, vid="a"), pace_neighbor(-8.0, vid="b"), pace_neighbor(3.0, 0, vid="c")]
        ass = {n.vehicle_id: assessment(n.vehicle_id, S_MAX + 1.0, (2, 2, 2, 2)) for n in nbs}
        assert proximity_cost_tdbm(c, nbs, ass, self.cfg, G3) == 0.0

    def test_danger_range(self):
        assert danger(S_MAX) == 0.0 and danger(S_MIN) == 1.0
        assert danger(0.5 * (S_MAX + S_MIN)) == pytest.approx(0.5)

    def test_missing_assessment(self):
        c = keep(generate_candidates(ego(), G3, self.cfg))
        with pytest.raises(LookupFailure):
            proximity_cost_tdbm(c, [pace_neighbor(8.0)], {}, self.cfg, G3)

    def test_attention_mapping(self):
        c = keep(generate_candidates(ego(), G3, self.cfg))
        ahead = pace_neighbor(10.0)
        ass = {"n": assessment("n", S_MIN, (2.0, -2.0, 0.0, -2.0))}
        survey = proximity_cost_tdbm(c, [ahead], ass, self.cfg, G3)
        literal = proximity_cost_tdbm(c, [ahead], ass, PlannerConfig(attention_mapping="literal"), G3)
        # ahead of the ego: survey reads the first response (4 after the shift), literal the second (0)
        assert survey == pytest.approx(4.0 * (5 / 15) + 0.0)
        assert literal == pytest.approx(0.0)

    def test_dangerous_leader_makes_ego_back_off(self):
        e = ego(1, v=25.0, v_des=25.0)
        lead = pace_neighbor(12.0, vid="bad")
        ass = {"bad": assessment("bad", S_MIN, (2.0, 2.0, 0.0, 0.0))}
        res = plan(e, G3, [lead], ass, self.cfg)
        assert res.selected.speed_offset < 0
        costs = {c.maneuver: k.total for c, k in zip(res.candidates, res.costs) if k is not None}
        assert costs[res.selected.maneuver] == min(costs.values())
        assert costs[res.selected.maneuver] < costs[(0, 0.0)]

    def test_safe_leader_keeps_lane(self):
        lead = pace_neighbor(12.0, vid="good")
        ass = {"good": assessment("good", S_MAX, (2.0, 2.0, 0.0, 0.0))}
        assert plan(ego(), G3, [lead], ass, self.cfg).selected.maneuver == (0, 0.0)

    def test_weighted_total(self):
        e = ego(v_des=28.0)
        c = generate_candidates(e, G3, self.cfg)[3]
        nb = [pace_neighbor(20.0, 2, vid="x")]
        k = evaluate_cost(c, e, nb, {"x": assessment("x", 0.0, (1, 1, 1, 1))}, self.cfg, G3)
        cfg = self.cfg
        assert k.total == pytest.approx(cfg.w_path * k.path_deviation + cfg.w_accel * k.smoothness
                                        + cfg.w_lane * k.lane_change + cfg.w_prox * k.proximity)


class TestSelection:
    cfg = PlannerConfig()

    def test_single(self):
        c = generate_candidates(ego(), G3, self.cfg)[:1]
        assert select_trajectory(c, [1.0]) is c[0]
        assert select_trajectory([], []) is None

    def test_tie_prefers_lane_keeping(self):
        cands = generate_candidates(ego(), G3, self.cfg)
        pick = select_trajectory(cands, [1.0] * len(cands))
        assert pick.maneuver == (0, 0.0)

    def test_deterministic(self):
        nbs = [pace_neighbor(15.0, vid="a"), pace_neighbor(-10.0, 2, 30.0, vid="b")]
        ass = {"a": assessment("a", -3.0, (1.0, 0.5, 0.0, -1.0)), "b": assessment("b", 2.0, (0.0, 1.0, 1.0, 0.0))}
        picks = {plan(ego(), G3, nbs, ass, self.cfg).selected.maneuver for _ in range(5)}
        assert len(picks) == 1

    def test_braking_fallback(self):
        wall = [NeighborState(f"w{l}", 12.0, G3.center(l), 0.0) for l in range(3)]
        res = plan(ego(), G3, wall, {w.vehicle_id: assessment(w.vehicle_id, 0.0) for w in wall}, self.cfg)
        assert res.fallback and res.selected.fallback
        assert np.all(np.diff(res.selected.v) <= 1e-12) and res.selected.v[-1] < res.selected.v[0]


def test_config_validation():
    with pytest.raises(ValidationError):
        PlannerConfig(d_t=70.0)
    with pytest.raises(ValidationError):
        PlannerConfig(attention_mapping="other")
    with pytest.raises(UsageError):
        PlannerConfig(cost_mode="nope")
    cfg = PlannerConfig(cost_mode="paper_exact")
    assert PlannerConfig.from_dict(cfg.to_dict()) == cfg
