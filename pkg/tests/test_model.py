import math

import numpy as np
import pytest

from qkd_dispersion.config import load_config
from qkd_dispersion.exceptions import DomainError, NoKeyError
from qkd_dispersion.model import (
    DEFAULT_CLIPPING_FACTOR,
    DistanceSweepConfig,
    ModelParameters,
    SweepResult,
    SweepRow,
    accidental_rate,
    compare_local,
    dcm_settings,
    dcm_sweep,
    delta_t,
    distance_evaluator,
    distance_row,
    distance_sweep,
    evaluate,
    link_point,
    local_compensation_comparison,
    max_distance,
    model_cc_tot,
    model_key_rate,
    model_qber,
    optimize_brightness,
    peak_to_trough_ratio,
    raw_model_key_rate,
)
from qkd_dispersion.tags import Party


def _row(x, r_s):
    return SweepRow(x, 0.0, 0.0, 0.0, 0.0, 0.0, r_s, r_s, 0.0)


def _curve(points):
    return SweepResult("distance_km", [_row(x, r_s) for x, r_s in points], label="test")


def test_clipping_factor():
    assert DEFAULT_CLIPPING_FACTOR == pytest.approx(0.760968, abs=1e-6)


class TestOperatingPoint:

    def test_signal_and_accidentals(self, lab_params):
        assert model_cc_tot(lab_params) == pytest.approx(638.31, abs=0.05)
        assert accidental_rate(lab_params, 66.0) == pytest.approx(67.29, abs=0.05)

    def test_qber(self, lab_params):
        assert model_qber(lab_params, 66.0) == pytest.approx(0.0567, abs=1e-4)

    def test_key_rate_with_and_without_accidentals_in_the_rate(self, lab_params):
        assert model_key_rate(lab_params) == pytest.approx(239.86, abs=0.1)
        exclusive = lab_params.replace(include_accidentals=False)
        assert 216.0 < model_key_rate(exclusive) < 218.0

    def test_delta_t_is_the_quadrature_sum(self, lab_params):
        assert delta_t(lab_params) == pytest.approx(66.0)
        assert delta_t(lab_params, 41.62) == pytest.approx(78.03, abs=0.01)
        assert delta_t(lab_params, -41.62) == delta_t(lab_params, 41.62)

    def test_evaluate_row(self, lab_params):
        row = evaluate(lab_params)
        assert row.t_cc == row.delta_t == pytest.approx(66.0)
        assert row.cc_tot == pytest.approx(638.31 + 67.29, abs=0.1)
        assert row.r_s == row.raw_r_s > 0
        assert row.brightness == 5.75e8


class TestInvariants:

    @pytest.mark.parametrize("sigma_d", [0.0, 30.0, 100.0, 300.0])
    def test_qber_lies_between_optical_error_and_one_half(self, lab_params, sigma_d):
        value = model_qber(lab_params, delta_t(lab_params, sigma_d))
        assert lab_params.optical_error <= value <= 0.5

    def test_darkness_gives_a_coin_toss(self):
        params = ModelParameters(0.0, 0.1, 0.1, dc_a=100.0, dc_b=100.0)
        assert model_qber(params, 100.0) == 0.5
        assert model_qber(params.replace(dc_a=0.0, dc_b=0.0), 100.0) == 0.5
        assert model_key_rate(params) == 0.0

    def test_key_rate_falls_with_dispersion(self, lab_params):
        rates = [model_key_rate(lab_params, sigma_d) for sigma_d in np.linspace(0, 200, 41)]
        assert all(x >= y for x, y in zip(rates, rates[1:]))
        assert rates[-1] == 0.0
        assert raw_model_key_rate(lab_params, 200.0) < 0

    def test_key_rate_is_never_negative(self, lab_params):
        assert model_key_rate(lab_params.replace(optical_error=0.2)) == 0.0

    @pytest.mark.parametrize("changes", [
        {"eta_a": 0.0},
        {"eta_b": 1.5},
        {"brightness": -1.0},
        {"dc_a": -1.0},
        {"optical_error": 0.6},
        {"clipping_factor": 0.0},
        {"f": 0.5},
    ])
    def test_invalid_parameters(self, lab_params, changes):
        with pytest.raises(DomainError):
            lab_params.replace(**changes)

    def test_zero_brightness_is_allowed(self, lab_params):
        assert lab_params.replace(brightness=0.0).brightness == 0.0


class TestCompensatorSweep:

    def test_settings(self):
        assert len(dcm_settings()) == 35
        assert dcm_settings((-10.0, 10.0), 10.0) == [-10.0, 0.0, 10.0]
        assert dcm_settings((5.0, 5.0)) == [5.0]
        with pytest.raises(DomainError):
            dcm_settings(step=0.0)
        with pytest.raises(DomainError):
            dcm_settings((10.0, -10.0))

    def test_peak_sits_at_the_opposite_of_the_fiber_dispersion(self, lab_params):
        sweep = dcm_sweep(lab_params, 107.882, 0.67)
        assert len(sweep) == 35
        assert sweep.rows[0].x == -170.0 and sweep.rows[-1].x == 170.0
        assert sweep.peak().x == -110.0
        assert sweep.rows[-1].delta_t == pytest.approx(197.53, abs=0.01)
        assert sweep.rows[0].delta_t == pytest.approx(78.03, abs=0.01)

    def test_calibration_offset_moves_the_peak(self, lab_params):
        sweep = dcm_sweep(lab_params, 107.882, 0.67, calibration_offset=-20.0)
        assert sweep.peak().x == -90.0

    def test_sweep_is_symmetric_without_fiber(self, lab_params):
        rates = dcm_sweep(lab_params, 0.0, 0.67).column("r_s")
        assert rates == pytest.approx(rates[::-1])

    def test_peak_to_trough_ratio(self, lab_params):
        sweep = dcm_sweep(lab_params, 107.882, 0.67)
        assert peak_to_trough_ratio(sweep) >= 20
        assert sweep.trough().r_s == 0.0
        assert math.isinf(peak_to_trough_ratio(sweep))

    def test_ratio_needs_key_somewhere(self, lab_params):
        sweep = dcm_sweep(lab_params.replace(optical_error=0.5), 107.882, 0.67)
        with pytest.raises(NoKeyError):
            peak_to_trough_ratio(sweep)

    def test_rows_must_be_ordered(self):
        with pytest.raises(DomainError):
            SweepResult("x", [_row(1.0, 0.0), _row(0.0, 0.0)])


class TestLocalCompensation:

    def test_second_module_loss(self, lab_params):
        assert local_compensation_comparison(lab_params) == pytest.approx(36.78, abs=0.05)

    def test_lossless_second_module_changes_nothing(self, lab_params):
        result = compare_local(lab_params, 0.0)
        assert result.ratio == pytest.approx(1.0)
        assert result.local_rs == pytest.approx(result.nonlocal_rs)

    def test_lossy_second_module_kills_the_key(self, lab_params):
        assert local_compensation_comparison(lab_params, 30.0) == 0.0
        assert compare_local(lab_params, 60.0).ratio == pytest.approx(0.0, abs=1e-9)

    def test_arm_choice(self, lab_params):
        symmetric = lab_params.replace(eta_b=lab_params.eta_a, dc_b=lab_params.dc_a)
        assert local_compensation_comparison(symmetric, 4.56, Party.A) == pytest.approx(
            local_compensation_comparison(symmetric, 4.56, Party.B)
        )

    def test_negative_loss(self, lab_params):
        with pytest.raises(DomainError):
            local_compensation_comparison(lab_params, -1.0)


class TestBrightness:

    @pytest.mark.parametrize("total_km", [50.0, 200.0, 300.0])
    @pytest.mark.parametrize("compensated", [True, False])
    @pytest.mark.parametrize("width", [2.0, 10.0, 100.0])
    def test_optimum_matches_a_dense_grid(self, width, compensated, total_km):
        scenario_file = load_config("appendix-c")
        config = scenario_file.distance_config()
        widths, states = scenario_file.distance_grid()
        assert width in widths and compensated in states
        template, sigma_d = link_point(width, total_km, compensated, config)
        optimum = optimize_brightness(template, sigma_d, config)
        grid = [
            model_key_rate(template.replace(brightness=10.0 ** log_b), sigma_d)
            for log_b in np.linspace(*config.log10_brightness_range, 2000)
        ]
        assert not optimum.no_key
        assert optimum.key_rate == pytest.approx(max(grid), rel=5e-3)

    def test_no_key_landscape(self):
        config = DistanceSweepConfig()
        template, sigma_d = link_point(100.0, 100.0, False, config)
        optimum = optimize_brightness(template.replace(optical_error=0.3), sigma_d, config)
        assert optimum.no_key
        assert optimum.key_rate == 0.0
        assert optimum.brightness == pytest.approx(1e8)

    def test_compensated_link_has_no_dispersion_spread(self):
        _, sigma_d = link_point(100.0, 300.0, True, DistanceSweepConfig())
        assert sigma_d == 0.0
        _, sigma_d = link_point(100.0, 300.0, False, DistanceSweepConfig())
        assert sigma_d == pytest.approx(0.8014 * 18.0 * 300.0, rel=1e-3)

    @pytest.mark.parametrize("width,compensated,expected", [
        (100.0, True, 1120.0),
        (100.0, False, 5.19),
        (10.0, True, 473.0),
        (10.0, False, 52.6),
    ])
    def test_key_rate_at_300_km(self, width, compensated, expected):
        row = distance_row(width, 300.0, compensated, DistanceSweepConfig())
        assert row.r_s == pytest.approx(expected, rel=0.02)
        assert row.x == 300.0


class TestDistance:

    def test_max_distance_interpolates(self):
        curve = _curve([(0.0, 10.0), (5.0, 1.0), (10.0, 0.0)])
        assert max_distance(curve, 0.5) == pytest.approx(7.5)

    def test_max_distance_bisects_with_an_evaluator(self):
        curve = _curve([(0.0, 100.0), (5.0, 50.0), (10.0, 0.0)])
        assert max_distance(curve, 1e-6, lambda km: 100.0 - 10.0 * km) == pytest.approx(
            10.0, abs=1e-3
        )

    def test_max_distance_without_key(self):
        with pytest.raises(NoKeyError):
            max_distance(_curve([(0.0, 0.0), (5.0, 0.0)]))

    def test_curve_ending_above_the_floor(self):
        assert max_distance(_curve([(0.0, 10.0), (5.0, 5.0)])) == 5.0

    def test_sweep_stops_after_the_first_row_below_the_floor(self):
        config = DistanceSweepConfig(step_km=50.0, max_km=1000.0, epsilon=100.0)
        curves = distance_sweep([100.0], compensated=False, config=config, threads=1)
        rows = curves[100.0].rows
        assert rows[-1].r_s < 100.0
        assert all(row.r_s >= 100.0 for row in rows[:-1])
        assert [row.x for row in rows] == [50.0 * k for k in range(len(rows))]

    def test_sweep_does_not_depend_on_threads(self):
        config = DistanceSweepConfig(step_km=100.0, max_km=300.0)
        one = distance_sweep([10.0, 100.0], True, config, threads=1)
        two = distance_sweep([10.0, 100.0], True, config, threads=2)
        assert one == two
        assert list(one) == [10.0, 100.0]
        assert len(one[100.0]) == 4

    def test_huge_floor_means_no_key(self):
        config = DistanceSweepConfig(epsilon=1e12)
        curve = distance_sweep([100.0], True, config, threads=1)[100.0]
        assert len(curve) == 1
        with pytest.raises(NoKeyError):
            max_distance(curve, config.epsilon)

    @pytest.mark.parametrize("changes", [
        {"step_km": 0.0},
        {"epsilon": 0.0},
        {"log10_brightness_range": (9.0, 5.0)},
        {"coarse_points": 2},
    ])
    def test_invalid_sweep_config(self, changes):
        with pytest.raises(DomainError):
            DistanceSweepConfig(**changes)

    @pytest.mark.slow
    def test_reach_gained_by_compensation(self):
        config = DistanceSweepConfig()
        reach = {}
        for compensated in (True, False):
            for width, curve in distance_sweep([10.0, 100.0], compensated, config).items():
                evaluator = distance_evaluator(width, compensated, config)
                reach[width, compensated] = max_distance(curve, config.epsilon, evaluator)
        assert reach[100.0, False] == pytest.approx(453.0, abs=3.0)
        assert reach[100.0, True] - reach[100.0, False] == pytest.approx(246.0, abs=3.0)
        assert reach[10.0, True] - reach[10.0, False] == pytest.approx(119.0, abs=3.0)
