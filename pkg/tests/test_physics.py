import math

import pytest

from qkd_dispersion.exceptions import DomainError
from qkd_dispersion.physics import (
    ArmConfig,
    CompensationModule,
    DetectorSpec,
    FiberSegment,
    OpticalSpectrum,
    WidthUnit,
    arm_loss_db,
    bandwidth_to_wavelength_width,
    coherence_fwhm_from_bandwidth,
    combine_jitter,
    combined_spread,
    dispersion_spread,
    energy_conservation_check,
    fwhm_to_sigma,
    klyshko_efficiency,
    nonlocal_dispersion,
    sigma_to_fwhm,
    timing_budget,
    total_link_dispersion,
    wavelength_to_bandwidth_width,
)


def test_dispersion_spread_of_spool():
    assert dispersion_spread(1.0, 16.7, 6.46) == pytest.approx(107.882)


def test_dispersion_spread_over_100_km():
    assert dispersion_spread(0.8, 18.0, 100.0) == pytest.approx(1440.0)


def test_dispersion_spread_is_bilinear():
    base = dispersion_spread(0.5, 17.0, 10.0)
    assert dispersion_spread(1.0, 17.0, 10.0) == pytest.approx(2 * base)
    assert dispersion_spread(0.5, 17.0, 30.0) == pytest.approx(3 * base)


def test_bandwidth_to_wavelength_width_at_100_ghz():
    assert bandwidth_to_wavelength_width(100.0, 1550.0) == pytest.approx(0.801, abs=5e-4)


@pytest.mark.parametrize("bandwidth", [2.0, 10.0, 100.0, 200.0, 12345.6])
def test_width_conversion_is_involutive(bandwidth):
    width_nm = bandwidth_to_wavelength_width(bandwidth, 1550.0)
    assert wavelength_to_bandwidth_width(width_nm, 1550.0) == pytest.approx(bandwidth, rel=1e-9)


def test_spectrum_widths_in_both_units():
    spectrum = OpticalSpectrum(1550.0, 0.8, WidthUnit.NM)
    assert spectrum.width_nm == 0.8
    assert spectrum.width_ghz == pytest.approx(99.83, abs=0.01)


@pytest.mark.parametrize("width", [0.0, -1.0])
def test_spectrum_rejects_non_positive_width(width):
    with pytest.raises(DomainError):
        OpticalSpectrum(1550.0, width)


def test_coherence_time_is_a_few_ps_at_100_ghz():
    assert coherence_fwhm_from_bandwidth(100.0) == pytest.approx(4.413, abs=1e-3)
    assert coherence_fwhm_from_bandwidth(100.0) < 5.0
    assert coherence_fwhm_from_bandwidth(math.inf) == 0.0


def test_coherence_time_needs_positive_bandwidth():
    with pytest.raises(DomainError):
        coherence_fwhm_from_bandwidth(0.0)


def test_fwhm_sigma_conversion():
    assert fwhm_to_sigma(sigma_to_fwhm(3.0)) == pytest.approx(3.0)
    assert sigma_to_fwhm(1.0) == pytest.approx(2.35482, abs=1e-5)


def test_combined_spread_is_a_quadrature_sum():
    assert combined_spread(0.0, 66.0, 0.0).delta_t == 66.0
    assert combined_spread(3.0, 4.0, 12.0).delta_t == pytest.approx(13.0)


def test_combined_spread_rejects_negative_widths():
    with pytest.raises(DomainError):
        combined_spread(0.0, -1.0, 0.0)


def test_combine_jitter_of_two_detectors():
    assert combine_jitter(46.7, 46.7) == pytest.approx(66.04, abs=0.01)
    assert combine_jitter() == 0.0


def _spool_arm():
    return ArmConfig(segments=(FiberSegment(6.46, 16.7, 0.2, "spool"),))


def test_compensator_in_the_other_arm_cancels_the_spool():
    arm_a = ArmConfig(compensator=CompensationModule(total_dispersion=-107.882))
    assert total_link_dispersion(arm_a, _spool_arm()) == pytest.approx(0.0, abs=1e-9)
    assert nonlocal_dispersion(arm_a, _spool_arm(), 0.67) == pytest.approx(0.0, abs=1e-9)


def test_nonlocal_dispersion_is_symmetric():
    arm_a = ArmConfig(compensator=CompensationModule(total_dispersion=-50.0))
    arm_b = _spool_arm()
    assert nonlocal_dispersion(arm_a, arm_b, 0.8) == nonlocal_dispersion(arm_b, arm_a, 0.8)
    assert nonlocal_dispersion(arm_a, arm_b, 0.8) == pytest.approx(0.8 * 57.882)


def test_calibration_offset_shifts_the_effective_dispersion():
    module = CompensationModule(total_dispersion=-90.0, calibration_offset=-17.882)
    assert module.effective_dispersion == pytest.approx(-107.882)
    arm_a = ArmConfig(compensator=module)
    assert total_link_dispersion(arm_a, _spool_arm()) == pytest.approx(0.0, abs=1e-9)


def test_compensator_reading_must_lie_in_range():
    with pytest.raises(DomainError):
        CompensationModule(total_dispersion=200.0)
    with pytest.raises(DomainError):
        CompensationModule().with_setting(-180.0)


def test_compensator_settings_grid():
    settings = CompensationModule().settings()
    assert len(settings) == 35
    assert settings[0] == -170.0
    assert settings[-1] == 170.0


def test_fiber_segment_rejects_negative_length():
    with pytest.raises(DomainError):
        FiberSegment(-1.0)


def test_arm_loss_adds_fiber_module_and_attenuator():
    arm = ArmConfig(
        segments=(FiberSegment(10.0, 16.7, 0.2),),
        compensator=CompensationModule(insertion_loss=4.56),
        extra_attenuation=1.0,
    )
    assert arm_loss_db(arm) == pytest.approx(7.56)


def test_detector_spec_rejects_negative_dark_counts():
    with pytest.raises(DomainError):
        DetectorSpec(dark_count_rate=-5.0)


def test_timing_budget_of_the_laboratory_link(lab_scenario):
    budget = timing_budget(lab_scenario)
    assert budget.sigma_d == pytest.approx(0.0, abs=1e-6)
    assert budget.sigma_c == 0.0
    assert budget.delta_t == pytest.approx(66.04, abs=0.01)


def test_laboratory_link_arm_losses(lab_scenario):
    assert arm_loss_db(lab_scenario.arm_a) == pytest.approx(29.05)
    assert arm_loss_db(lab_scenario.arm_b) == pytest.approx(29.31)


def test_energy_conservation_of_degenerate_pair():
    check = energy_conservation_check(1550.0, 1550.0, 775.0)
    assert check.within_tolerance
    assert check.deviation == pytest.approx(0.0, abs=1e-12)
    assert not energy_conservation_check(1550.0, 1560.0, 775.0).within_tolerance


def test_klyshko_efficiency():
    assert klyshko_efficiency(100.0, 1100.0, 100.0) == pytest.approx(0.1)
    with pytest.raises(DomainError):
        klyshko_efficiency(100.0, 50.0, 100.0)
