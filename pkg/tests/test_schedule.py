import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyndepth.dynamic import LayerCache
from dyndepth.grid import bilinear_resize
from dyndepth.schedule import (
    BudgetMode,
    ReferenceMetric,
    ScheduleFamily,
    SchedulerConfig,
    base_decision_map,
    depth_map,
    depth_scores,
    percentile_ranks,
    reference_response,
    rotated_schedule,
    schedule_area,
    schedule_value,
    solve_budget_param,
)

from oracles import percentile_ref, quad_area, solve_ref

FAMILIES = [
    ScheduleFamily("sigmoid", 12.0),
    ScheduleFamily("sigmoid", 3.0),
    ScheduleFamily("sigmoid", 256.0),
    ScheduleFamily("linear_a"),
    ScheduleFamily("linear_b"),
]


class TestReferenceResponse:
    def test_zero_delta_mae(self):
        out = reference_response(np.zeros((3, 3, 4)), ReferenceMetric.MAE)
        np.testing.assert_array_equal(out, 0.0)

    def test_mae_mse_channel_means(self):
        delta = np.zeros((1, 1, 2))
        delta[0, 0] = (3.0, -3.0)
        assert reference_response(delta, ReferenceMetric.MAE)[0, 0] == 3.0
        assert reference_response(delta, ReferenceMetric.MSE)[0, 0] == 9.0

    def test_sub_is_zero_mean(self):
        delta = np.random.default_rng(0).standard_normal((2, 2, 3))
        out = reference_response(delta, ReferenceMetric.SUB)
        assert out.sum() == pytest.approx(0.0, abs=1e-12)

    def test_mae_mse_nonnegative(self):
        delta = np.random.default_rng(1).standard_normal((4, 5, 2))
        assert np.all(reference_response(delta, ReferenceMetric.MAE) >= 0)
        assert np.all(reference_response(delta, ReferenceMetric.MSE) >= 0)


def _cache_from_deltas(deltas):
    # build states whose consecutive differences are exactly the given deltas
    states = [np.zeros_like(deltas[0])]
    for d in deltas:
        states.append(states[-1] + d)
    return LayerCache(states, 0)


class TestBaseDecisionMap:
    def test_zero_cache(self):
        cache = _cache_from_deltas([np.zeros((2, 2, 3))] * 2)
        cfg = SchedulerConfig(layer_range=(0, 0))
        np.testing.assert_array_equal(base_decision_map(cache, cfg, 4, 4), 0.0)

    def test_constant_layers_sum(self):
        deltas = [np.full((2, 2, 1), 1.0), np.full((2, 2, 1), 2.0)]
        cache = _cache_from_deltas(deltas)
        cfg = SchedulerConfig(layer_range=(0, 1))
        np.testing.assert_allclose(base_decision_map(cache, cfg, 3, 3), 3.0)

    def test_matches_composition(self):
        rng = np.random.default_rng(2)
        deltas = [rng.standard_normal((2, 2, 3)) for _ in range(2)]
        cache = _cache_from_deltas(deltas)
        cfg = SchedulerConfig(layer_range=(0, 1))
        expected = bilinear_resize(
            reference_response(deltas[0], cfg.metric) + reference_response(deltas[1], cfg.metric), 4, 4
        )
        np.testing.assert_allclose(base_decision_map(cache, cfg, 4, 4), expected, atol=1e-12)

    def test_missing_layer_rejected(self):
        cache = _cache_from_deltas([np.zeros((2, 2, 1))])
        cfg = SchedulerConfig(layer_range=(0, 3))
        with pytest.raises(KeyError):
            base_decision_map(cache, cfg, 2, 2)


class TestPercentileRanks:
    def test_constant_map_all_zero(self):
        np.testing.assert_array_equal(percentile_ranks(np.full((4, 4), 7.0)), 0.0)

    def test_small_examples(self):
        np.testing.assert_allclose(percentile_ranks(np.array([[5.0, 1.0, 3.0]])), [[0.0, 2 / 3, 1 / 3]])
        np.testing.assert_allclose(percentile_ranks(np.array([[4.0, 4.0], [1.0, 1.0]])), [[0.0, 0.0], [0.5, 0.5]])

    def test_matches_counting_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            h, w = rng.integers(1, 17, size=2)
            if rng.random() < 0.5:
                m = rng.integers(0, 4, size=(h, w)).astype(float)  # heavy ties
            else:
                m = rng.standard_normal((h, w))
            np.testing.assert_array_equal(percentile_ranks(m), percentile_ref(m))

    def test_range_and_minimum(self):
        m = np.random.default_rng(4).standard_normal((6, 6))
        r = percentile_ranks(m)
        assert r.min() == 0.0
        assert r.max() <= 1.0 - 1.0 / m.size


class TestScheduleValue:
    def test_sigmoid_midpoint(self):
        assert schedule_value(ScheduleFamily("sigmoid", 12.0), 0.5, 0.5) == pytest.approx(0.5)

    def test_linear_a_endpoints(self):
        fam = ScheduleFamily("linear_a")
        assert schedule_value(fam, 1.0, 1.0) == 0.0
        assert schedule_value(fam, 1.0, 0.0) == 1.0

    def test_linear_b_endpoints(self):
        fam = ScheduleFamily("linear_b")
        assert schedule_value(fam, -1.0, 0.0) == 1.0
        assert schedule_value(fam, -1.0, 1.0) == 0.0

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f"{f.kind}-k{f.k}")
    def test_monotone_non_increasing(self, family):
        for c in (-0.5, 0.0, 0.3, 0.7, 1.0, 2.0) if family.kind != "linear_b" else (-2.0, -1.0, -0.3, 0.0):
            xs = np.linspace(0.0, 1.0, 1000)
            vals = schedule_value(family, c, xs)
            assert np.all(np.diff(vals) <= 1e-12)
            assert np.all((vals >= 0.0) & (vals <= 1.0))

    def test_area_matches_quadrature(self):
        for family in FAMILIES:
            for c in (-0.8, 0.2, 0.5, 1.3) if family.kind != "linear_b" else (-3.0, -0.7, -0.2):
                assert schedule_area(family, c) == pytest.approx(quad_area(family, c), abs=1e-9)


class TestBudgetSolver:
    def test_sigmoid_symmetric(self):
        sol = solve_budget_param(ScheduleFamily("sigmoid", 12.0), 0.8, 0.4)
        assert sol.c == pytest.approx(0.5, abs=1e-6)

    def test_linear_a_closed_form(self):
        sol = solve_budget_param(ScheduleFamily("linear_a"), 0.8, 0.4)
        assert sol.c == pytest.approx(1.0, abs=1e-6)

    def test_sigmoid_k3_vs_quadrature_oracle(self):
        fam = ScheduleFamily("sigmoid", 3.0)
        sol = solve_budget_param(fam, 0.8, 0.24)  # required area 0.3
        assert quad_area(fam, sol.c) == pytest.approx(0.3, abs=1e-8)
        assert sol.c == pytest.approx(solve_ref(fam, 0.8, 0.24), abs=1e-6)

    def test_nonpositive_target_rejected(self):
        with pytest.raises(ValueError):
            solve_budget_param(ScheduleFamily("sigmoid", 12.0), 0.8, 0.0)

    def test_saturation_reports_realized_area(self):
        sol = solve_budget_param(ScheduleFamily("sigmoid", 12.0), 0.8, 1.0)
        assert sol.saturated
        assert sol.area == pytest.approx(1.0, abs=1e-9)
        assert schedule_value(ScheduleFamily("sigmoid", 12.0), sol.c, 1.0) == 1.0

    def test_full_integral_mode(self):
        fam = ScheduleFamily("sigmoid", 12.0)
        sol = solve_budget_param(fam, 0.8, 0.35, BudgetMode.FULL_INTEGRAL)
        assert quad_area(fam, sol.c) == pytest.approx(0.35, abs=1e-8)

    def test_resolve_reproduces_target(self):
        rng = np.random.default_rng(5)
        for family in FAMILIES:
            for _ in range(5):
                eta = rng.uniform(0.3, 0.9)
                target = rng.uniform(0.05, 0.9) * eta
                sol = solve_budget_param(family, eta, target)
                if not sol.saturated:
                    assert eta * schedule_area(family, sol.c) == pytest.approx(target, abs=1e-8)


class TestRotatedSchedule:
    FAM = ScheduleFamily("sigmoid", 12.0)

    def test_endpoints(self):
        g0 = schedule_value(self.FAM, 0.5, 0.0)
        assert rotated_schedule(self.FAM, 0.5, 0.8, 0.0) == pytest.approx(g0)
        assert rotated_schedule(self.FAM, 0.5, 0.8, 1.0) == pytest.approx(g0)

    def test_continuity_at_pivot(self):
        g1 = schedule_value(self.FAM, 0.5, 1.0)
        eta = 0.8
        assert rotated_schedule(self.FAM, 0.5, eta, eta) == pytest.approx(g1, abs=1e-9)
        assert rotated_schedule(self.FAM, 0.5, eta, eta + 1e-12) == pytest.approx(g1, abs=1e-9)

    def test_midpoint_example(self):
        assert rotated_schedule(self.FAM, 0.5, 0.8, 0.4) == pytest.approx(0.5)

    def test_minimum_at_pivot(self):
        eta = 0.8
        grid = np.linspace(0.0, 1.0, 10_001)
        vals = np.asarray(rotated_schedule(self.FAM, 0.5, eta, grid))
        at_eta = rotated_schedule(self.FAM, 0.5, eta, eta)
        assert vals.min() >= at_eta - 1e-9
        assert grid[np.argmin(vals)] == pytest.approx(eta, abs=1e-3)


class TestDepthScores:
    def test_zero_percentiles_constant(self):
        cfg = SchedulerConfig()
        out = depth_scores(np.zeros((3, 3)), cfg, 0.5)
        np.testing.assert_allclose(out, schedule_value(cfg.family, 0.5, 0.0))

    def test_rotation_disabled_is_plain_schedule(self):
        cfg = SchedulerConfig(rotation_enabled=False)
        p = np.random.default_rng(6).uniform(0, 1, size=(4, 4))
        np.testing.assert_allclose(depth_scores(p, cfg, 0.5), schedule_value(cfg.family, 0.5, p))

    def test_elementwise_matches_scalar(self):
        cfg = SchedulerConfig()
        p = np.random.default_rng(7).uniform(0, 1, size=(4, 4))
        out = depth_scores(p, cfg, 0.37)
        for i in range(4):
            for j in range(4):
                assert out[i, j] == pytest.approx(rotated_schedule(cfg.family, 0.37, cfg.eta, p[i, j]))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_scores_in_unit_interval(self, seed):
        rng = np.random.default_rng(seed)
        cfg = SchedulerConfig(family=ScheduleFamily("sigmoid", rng.uniform(1, 50)), eta=rng.uniform(0.1, 0.9))
        out = depth_scores(rng.uniform(0, 1, (5, 5)), cfg, rng.uniform(-1, 2))
        assert np.all((out >= 0.0) & (out <= 1.0))


class TestDepthMap:
    def test_extremes(self):
        assert depth_map(np.full((1, 1), 1.0), 32)[0, 0] == 32
        assert depth_map(np.full((1, 1), 0.0), 32)[0, 0] == 0
        assert depth_map(np.full((1, 1), 0.99), 32)[0, 0] == 31

    def test_bounds(self):
        s = np.random.default_rng(8).uniform(0, 1, (6, 6))
        d = depth_map(s, 16)
        assert d.min() >= 0 and d.max() <= 16


class TestBudgetLaw:
    def test_monte_carlo_budget_realization(self):
        # distinct-value percentiles: a random permutation of {j / hw}
        rng = np.random.default_rng(9)
        hw, num_layers = 4096, 32
        cfg = SchedulerConfig()
        target = 0.3
        sol = solve_budget_param(cfg.family, cfg.eta, target, cfg.budget_mode)
        ranks = rng.permutation(hw).astype(float) / hw
        scores = np.asarray(rotated_schedule(cfg.family, sol.c, cfg.eta, ranks.reshape(64, 64)))
        depths = depth_map(scores, num_layers)
        realized = depths[ranks.reshape(64, 64) <= cfg.eta].sum() / (num_layers * hw)
        assert realized == pytest.approx(target, abs=1.0 / num_layers + 0.02)
