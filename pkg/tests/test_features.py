import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdbm.errors import DataError, DegenerateInputError, DegenerateSpreadError
from tdbm.features import (
    FeatureParams,
    FeatureVector,
    LaneChangeEvents,
    NormalizationParams,
    detect_lane_changes,
    directional_relative_speeds,
    extract_all,
    fit_normalization,
    jerk_metrics,
    lane_drift,
    lane_following_metric,
    normalize,
    relative_speed_metric,
    simple_metrics,
)

from conftest import GEOM3, make_log, make_traj, rel_close
from oracles import as_dict, lane_following_oracle, random_scene, relative_speed_oracle

C0, C1 = GEOM3.lane_centers[:2]


def step_lane(t, t_change, t_back=None):
    y = np.where(t >= t_change, C1, C0)
    if t_back is not None:
        y = np.where(t >= t_back, C0, y)
    return y


class TestLaneChanges:
    t = np.arange(0, 15.0001, 0.1)

    def test_constant_y_no_events(self):
        tr = make_traj("a", self.t, 20 * self.t, C0)
        assert detect_lane_changes(tr, GEOM3).times == ()

    def test_clean_change(self):
        tr = make_traj("a", self.t, 20 * self.t, step_lane(self.t, 5.0))
        assert detect_lane_changes(tr, GEOM3, k=2.0).times == pytest.approx((5.0,))

    def test_short_excursion_is_not_a_change(self):
        tr = make_traj("a", self.t, 20 * self.t, step_lane(self.t, 5.0, 5.5))
        assert detect_lane_changes(tr, GEOM3, k=2.0).times == ()

    def test_mask_around_event(self):
        y = C0 + 0.3 + 0 * self.t
        tr = make_traj("a", self.t, 20 * self.t, y)
        d = lane_drift(tr, GEOM3, LaneChangeEvents((5.0,), 2.0))
        inside = (self.t >= 3.0 - 1e-9) & (self.t <= 7.0 + 1e-9)
        assert np.all(d[inside] == 0.0)
        assert np.allclose(d[~inside], 0.3)


class TestLaneFollowing:
    t = np.arange(0, 10.0001, 0.01)

    def test_centered_is_zero(self):
        tr = make_traj("a", self.t, 20 * self.t, C0)
        assert lane_following_metric(tr, GEOM3) == 0.0

    def test_constant_offset_closed_form(self):
        tr = make_traj("a", self.t, 20 * self.t, C0 + 0.5)
        assert lane_following_metric(tr, GEOM3, mu=0.1) == pytest.approx(0.5, rel=1e-12)

    def test_weave_beats_straight_offset(self):
        weave = make_traj("w", self.t, 20 * self.t, C0 + 0.5 * np.sin(self.t))
        mean_abs = float(np.mean(np.abs(0.5 * np.sin(self.t))))
        straight = make_traj("s", self.t, 20 * self.t, C0 + mean_abs)
        fw, fs = lane_following_metric(weave, GEOM3), lane_following_metric(straight, GEOM3)
        assert fw > fs
        assert rel_close(fw, lane_following_oracle(self.t, weave.y, GEOM3.lane_centers))

    def test_too_short(self):
        tr = make_traj("a", [0.0, 0.1, 0.2], [0, 1, 2], C0)
        with pytest.raises(DegenerateInputError):
            lane_following_metric(tr, GEOM3, tau=1.0)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_oracle_with_odd_tau(self, seed):
        log_ = random_scene(np.random.default_rng(seed), GEOM3, n_max=400, n_others=0)
        tr = log_["T"]
        tau = 0.37 + 0.1 * seed
        got = lane_following_metric(tr, GEOM3, k=1.5, tau=tau, mu=0.2)
        assert rel_close(got, lane_following_oracle(tr.t, tr.y, GEOM3.lane_centers, 1.5, tau, 0.2))


class TestRelativeSpeed:
    t = np.arange(0, 2.0001, 0.1)

    def test_no_neighbors(self):
        log_ = make_log(make_traj("a", self.t, 20 * self.t, C0, 20))
        assert relative_speed_metric(log_, "a") == 0.0

    def test_slower_target(self):
        a = make_traj("a", self.t, 20 * self.t, C0, 20)
        b = make_traj("b", self.t, 30 * self.t + 10, C0, 30)
        assert relative_speed_metric(make_log(a, b), "a") == 0.0

    def test_constant_closed_form(self):
        a = make_traj("a", self.t, 20 * self.t, C0, 25)
        b = make_traj("b", self.t, 20 * self.t + 10, C0, 20)
        assert relative_speed_metric(make_log(a, b), "a") == pytest.approx(1.0, rel=1e-12)

    def test_overlap_is_data_error(self):
        a = make_traj("a", self.t, 20 * self.t, C0, 25)
        b = make_traj("b", self.t, 20 * self.t, C0, 20)
        with pytest.raises(DataError):
            relative_speed_metric(make_log(a, b), "a")

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_oracle(self, seed):
        log_ = random_scene(np.random.default_rng(100 + seed), GEOM3, n_max=300)
        radius = 60.0
        others = [as_dict(log_[v]) for v in log_.vehicle_ids if v != "T"]
        want = relative_speed_oracle(as_dict(log_["T"]), others, radius)
        assert rel_close(relative_speed_metric(log_, "T", radius), want)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.0, 5.0))
    def test_monotone_in_target_speed(self, seed, boost):
        log_ = random_scene(np.random.default_rng(seed), GEOM3, n_max=120)
        base = relative_speed_metric(log_, "T")
        tr = log_["T"]
        faster = make_traj("T", tr.t, tr.s, tr.y, tr.v + boost * (1 + np.sin(tr.t)))
        others = [log_[v] for v in log_.vehicle_ids if v != "T"]
        assert relative_speed_metric(make_log(faster, *others), "T") >= base - 1e-12


class TestJerk:
    def test_constant_velocity(self):
        t = np.arange(0, 5, 0.1)
        assert jerk_metrics(make_traj("a", t, 20 * t, C0)) == pytest.approx((0.0, 0.0), abs=1e-9)

    def test_cubic_progress(self):
        t = np.arange(0, 3.0001, 0.01)
        j_l, j_p = jerk_metrics(make_traj("a", t, t**3, C0))
        assert j_l == 0.0
        assert j_p == pytest.approx(6.0, abs=1e-6)

    def test_pure_swerve(self):
        t = np.arange(0, 6, 0.05)
        j_l, j_p = jerk_metrics(make_traj("a", t, 20 * t, C0 + 0.5 * np.sin(2 * t)))
        assert j_p == pytest.approx(0.0, abs=1e-6) and j_l > 0

    def test_too_few_samples(self):
        with pytest.raises(DegenerateInputError):
            jerk_metrics(make_traj("a", [0, 0.1, 0.2], [0, 1, 2], C0))


class TestDirectionalAndSimple:
    t = np.arange(0, 4.0001, 0.1)

    def test_lone_vehicle(self):
        log_ = make_log(make_traj("a", self.t, 20 * self.t, C0, 20))
        assert directional_relative_speeds(log_, "a") == (None, None, None, None)

    def test_front_car_slower(self):
        a = make_traj("a", self.t, 20 * self.t, C0, 20)
        f = make_traj("f", self.t, 17 * self.t + 30, C0, 17)
        assert directional_relative_speeds(make_log(a, f), "a")[0] == pytest.approx(3.0)

    def test_front_car_half_the_time(self):
        a = make_traj("a", self.t, 20 * self.t, C0, 20)
        half = self.t <= 2.0
        f = make_traj("f", self.t[half], 18 * self.t[half] + 30, C0, 18)
        f0 = directional_relative_speeds(make_log(a, f), "a")[0]
        assert f0 == pytest.approx(2.0)

    def test_simple_metrics(self):
        a = make_traj("a", self.t, 20 * self.t, C0, 20)
        assert simple_metrics(make_log(a), "a", d_max=100.0) == pytest.approx((20.0, 100.0))
        t = self.t[:-1]
        a = make_traj("a", t, 20 * t, C0, 20)
        gap = np.where(np.arange(len(t)) % 2 == 0, 10.0, 20.0)
        f = make_traj("f", t, 20 * t + gap, C0, 20)
        assert simple_metrics(make_log(a, f), "a")[1] == pytest.approx(15.0)

    def test_extract_all_window_and_keys(self):
        a = make_traj("a", self.t, 20 * self.t, C0 + 0.2, 20)
        b = make_traj("b", self.t, 19 * self.t + 25, C1, 19)
        vec = extract_all(make_log(a, b), "a", FeatureParams(window=(1.0, 3.0)))
        assert vec.v_left is None and vec.v_right == pytest.approx(1.0)
        assert vec.v_avg == pytest.approx(20.0)
        assert FeatureVector.from_dict(vec.to_dict()) == vec


class TestNormalization:
    def test_mapping(self):
        p = NormalizationParams({"v_avg": 10.0}, {"v_avg": 30.0})
        vals = [normalize(FeatureVector(v_avg=x), p).v_avg for x in (10.0, 30.0, 20.0)]
        assert vals == [0.0, 1.0, 0.5]

    @staticmethod
    def _vectors(rows):
        names = ("s_center", "v_nei", "s_front", "v_avg", "j_l")
        return [FeatureVector(**{n: float(x) for n, x in zip(names, row)}) for row in rows]

    def test_uniform_percentiles(self):
        # stratified uniform sample: one draw per 1/100 bin
        rng = np.random.default_rng(3)
        rows = (np.arange(100)[:, None] + rng.uniform(0, 1, size=(100, 5))) / 100
        p = fit_normalization(self._vectors(rng.permuted(rows, axis=0)))
        for name in p.features:
            assert p.p5[name] == pytest.approx(0.05, abs=0.02)
            assert p.p95[name] == pytest.approx(0.95, abs=0.02)

    def test_percentiles_match_order_statistics(self):
        rows = np.random.default_rng(4).uniform(0, 1, size=(100, 5))
        p = fit_normalization(self._vectors(rows))
        for j, name in enumerate(p.features):
            x = sorted(rows[:, j])
            for q, got in ((0.05, p.p5[name]), (0.95, p.p95[name])):
                pos = q * (len(x) - 1)
                lo = int(pos)
                assert got == pytest.approx(x[lo] + (pos - lo) * (x[lo + 1] - x[lo]), abs=1e-12)

    def test_zero_spread(self):
        vecs = [FeatureVector(s_center=1.0, v_nei=float(i), s_front=float(i), v_avg=float(i), j_l=float(i))
                for i in range(30)]
        with pytest.raises(DegenerateSpreadError, match="s_center"):
            fit_normalization(vecs)

    def test_round_trip(self):
        p = NormalizationParams({"a": 1.0}, {"a": 2.0})
        assert NormalizationParams.from_dict(p.to_dict()) == p


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 14.0), st.floats(0.5, 3.0))
def test_masking_changes_only_the_window(t_event, k):
    t = np.arange(0, 15.0001, 0.05)
    tr = make_traj("a", t, 20 * t, C0 + 0.4 * np.sin(t))
    base = lane_drift(tr, GEOM3, LaneChangeEvents((), k))
    masked = lane_drift(tr, GEOM3, LaneChangeEvents((t_event,), k))
    inside = np.abs(t - t_event) <= k * (1 + 1e-12) + 1e-12
    assert np.all(masked[inside] == 0.0)
    assert np.array_equal(masked[~inside], base[~inside])
