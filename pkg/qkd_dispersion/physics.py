"""
qkd_dispersion.physics
~~~~~~~~~~~~~~~~~~~~~~

Link description types, unit conversions and the timing budget of a
two-arm entangled-photon link with chromatic dispersion.

Every timing width handled here (coherence, jitter, dispersion spread and
their quadrature sum) is the FWHM of a Gaussian distribution.
"""

import enum
import math
import typing
from dataclasses import dataclass, field, replace

from .exceptions import DomainError

#: speed of light in vacuum, m/s
SPEED_OF_LIGHT = 299_792_458.0

#: FWHM of a Gaussian in units of its standard deviation, 2*sqrt(2 ln 2)
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

#: transform-limited time-bandwidth product of a Gaussian pulse (FWHM x FWHM)
TIME_BANDWIDTH_PRODUCT = 2.0 * math.log(2.0) / math.pi


class WidthUnit(str, enum.Enum):
    GHZ = "GHz"
    NM = "nm"


class SpectrumShape(str, enum.Enum):
    GAUSSIAN = "gaussian"
    TOPHAT = "tophat"


def _require_non_negative(name, value):
    if value < 0 or math.isnan(value):
        raise DomainError(f"{name} must be >= 0, got {value!r}")


def fwhm_to_sigma(fwhm):
    return fwhm / FWHM_PER_SIGMA


def sigma_to_fwhm(sigma):
    return sigma * FWHM_PER_SIGMA


def bandwidth_to_wavelength_width(bandwidth_ghz, center_wavelength_nm):
    """Spectral width in nm of a `bandwidth_ghz` wide line at `center_wavelength_nm`.

    With wavelengths in nm, frequencies in GHz and c in m/s the unit
    prefactors cancel exactly: dl = l0^2 * dnu / c.
    """
    _require_non_negative("bandwidth", bandwidth_ghz)
    if center_wavelength_nm <= 0:
        raise DomainError(f"center wavelength must be > 0, got {center_wavelength_nm!r}")
    return center_wavelength_nm ** 2 * bandwidth_ghz / SPEED_OF_LIGHT


def wavelength_to_bandwidth_width(width_nm, center_wavelength_nm):
    _require_non_negative("width", width_nm)
    if center_wavelength_nm <= 0:
        raise DomainError(f"center wavelength must be > 0, got {center_wavelength_nm!r}")
    return SPEED_OF_LIGHT * width_nm / center_wavelength_nm ** 2


def coherence_fwhm_from_bandwidth(bandwidth_ghz):
    """Transform-limited coherence time (ps FWHM) of a Gaussian spectrum."""
    if not bandwidth_ghz > 0:
        raise DomainError(f"bandwidth must be > 0, got {bandwidth_ghz!r}")
    if math.isinf(bandwidth_ghz):
        return 0.0
    # 1/GHz = 1000 ps
    return TIME_BANDWIDTH_PRODUCT * 1000.0 / bandwidth_ghz


def dispersion_spread(width_nm, coefficient_ps_per_nm_km, length_km):
    """Signed temporal spread (ps) of a `width_nm` wide spectrum over a fiber."""
    _require_non_negative("spectral width", width_nm)
    _require_non_negative("fiber length", length_km)
    return width_nm * coefficient_ps_per_nm_km * length_km


class EnergyCheck(typing.NamedTuple):
    deviation: float
    within_tolerance: bool


def energy_conservation_check(signal_nm, idler_nm, pump_nm, tol=1e-4):
    """Relative mismatch |1/l_p - 1/l_s - 1/l_i| * l_p of a down-converted pair."""
    for name, value in (("signal", signal_nm), ("idler", idler_nm), ("pump", pump_nm)):
        if not value > 0:
            raise DomainError(f"{name} wavelength must be > 0, got {value!r}")
    deviation = abs(1.0 - pump_nm / signal_nm - pump_nm / idler_nm)
    return EnergyCheck(deviation, deviation <= tol)


@dataclass(frozen=True)
class OpticalSpectrum:
    center_wavelength_nm: float = 1550.0
    width_value: float = 200.0
    width_unit: WidthUnit = WidthUnit.GHZ
    shape: SpectrumShape = SpectrumShape.TOPHAT

    def __post_init__(self):
        if not self.center_wavelength_nm > 0:
            raise DomainError(f"center wavelength must be > 0, got {self.center_wavelength_nm!r}")
        if not self.width_value > 0:
            raise DomainError(f"spectral width must be > 0, got {self.width_value!r}")
        object.__setattr__(self, "width_unit", WidthUnit(self.width_unit))
        object.__setattr__(self, "shape", SpectrumShape(self.shape))

    @property
    def width_nm(self):
        if self.width_unit is WidthUnit.NM:
            return self.width_value
        return bandwidth_to_wavelength_width(self.width_value, self.center_wavelength_nm)

    @property
    def width_ghz(self):
        if self.width_unit is WidthUnit.GHZ:
            return self.width_value
        return wavelength_to_bandwidth_width(self.width_value, self.center_wavelength_nm)

    @property
    def coherence_fwhm_ps(self):
        return coherence_fwhm_from_bandwidth(self.width_ghz)


@dataclass(frozen=True)
class FiberSegment:
    length_km: float
    dispersion_coefficient: float = 16.7
    attenuation_per_km: float = 0.2
    label: str = ""

    def __post_init__(self):
        _require_non_negative("fiber length", self.length_km)
        _require_non_negative("attenuation", self.attenuation_per_km)

    @property
    def dispersion_ps_per_nm(self):
        return self.dispersion_coefficient * self.length_km

    @property
    def loss_db(self):
        return self.attenuation_per_km * self.length_km


@dataclass(frozen=True)
class CompensationModule:
    """Dispersion compensation module set to a display reading.

    `calibration_offset` is added to the reading to give the dispersion the
    module actually introduces; the range check applies to the reading.
    """

    total_dispersion: float = 0.0
    insertion_loss: float = 0.0
    range_min: float = -170.0
    range_max: float = 170.0
    step: float = 10.0
    calibration_offset: float = 0.0

    def __post_init__(self):
        _require_non_negative("insertion loss", self.insertion_loss)
        if self.range_min > self.range_max:
            raise DomainError(f"empty DCM range [{self.range_min}, {self.range_max}]")
        if not self.range_min <= self.total_dispersion <= self.range_max:
            raise DomainError(
                f"DCM setting {self.total_dispersion} ps/nm outside "
                f"[{self.range_min}, {self.range_max}]"
            )
        if not self.step > 0:
            raise DomainError(f"DCM step must be > 0, got {self.step!r}")

    @property
    def effective_dispersion(self):
        return self.total_dispersion + self.calibration_offset

    def with_setting(self, reading):
        return replace(self, total_dispersion=reading)

    def settings(self):
        """All display readings the module offers, ascending."""
        count = int(math.floor((self.range_max - self.range_min) / self.step + 1e-9))
        return [self.range_min + k * self.step for k in range(count + 1)]


@dataclass(frozen=True)
class DetectorSpec:
    jitter_fwhm: float = 0.0
    dark_count_rate: float = 0.0

    def __post_init__(self):
        _require_non_negative("detector jitter", self.jitter_fwhm)
        _require_non_negative("dark count rate", self.dark_count_rate)


@dataclass(frozen=True)
class ArmConfig:
    segments: typing.Tuple[FiberSegment, ...] = ()
    compensator: typing.Optional[CompensationModule] = None
    extra_attenuation: float = 0.0
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    propagation_delay: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        _require_non_negative("extra attenuation", self.extra_attenuation)
        _require_non_negative("propagation delay", self.propagation_delay)


@dataclass(frozen=True)
class LinkScenario:
    brightness: float
    optical_error: float
    spectrum: OpticalSpectrum
    arm_a: ArmConfig
    arm_b: ArmConfig
    error_correction_efficiency: float = 1.1
    effective_spectral_width: typing.Optional[float] = None
    coherence_fwhm: typing.Optional[float] = None

    def __post_init__(self):
        if not self.brightness >= 0:
            raise DomainError(f"brightness must be >= 0, got {self.brightness!r}")
        if not 0.0 <= self.optical_error <= 0.5:
            raise DomainError(f"optical error must lie in [0, 0.5], got {self.optical_error!r}")
        if not self.error_correction_efficiency >= 1.0:
            raise DomainError(
                f"error correction efficiency must be >= 1, got {self.error_correction_efficiency!r}"
            )
        if self.effective_spectral_width is None:
            object.__setattr__(self, "effective_spectral_width", self.spectrum.width_nm)
        elif not self.effective_spectral_width > 0:
            raise DomainError(
                f"effective spectral width must be > 0, got {self.effective_spectral_width!r}"
            )
        if self.coherence_fwhm is None:
            object.__setattr__(self, "coherence_fwhm", self.spectrum.coherence_fwhm_ps)
        _require_non_negative("coherence time", self.coherence_fwhm)

    def with_arms(self, arm_a=None, arm_b=None):
        return replace(self, arm_a=arm_a or self.arm_a, arm_b=arm_b or self.arm_b)


@dataclass(frozen=True)
class TimingBudget:
    sigma_c: float
    sigma_j: float
    sigma_d: float
    delta_t: float


def fiber_dispersion_total(arm):
    """Accumulated fiber dispersion of an arm in ps/nm, compensator excluded."""
    return math.fsum(segment.dispersion_ps_per_nm for segment in arm.segments)


def arm_dispersion_total(arm):
    total = fiber_dispersion_total(arm)
    if arm.compensator is not None:
        total += arm.compensator.effective_dispersion
    return total


def total_link_dispersion(arm_a, arm_b):
    """Signed D_A L_A + D_B L_B of an anticorrelated pair, ps/nm."""
    return arm_dispersion_total(arm_a) + arm_dispersion_total(arm_b)


def nonlocal_dispersion(arm_a, arm_b, sigma_lambda):
    """Relative arrival-time spread (ps FWHM) caused by both arms together."""
    _require_non_negative("spectral width", sigma_lambda)
    return sigma_lambda * abs(total_link_dispersion(arm_a, arm_b))


def combined_spread(sigma_c, sigma_j, sigma_d):
    for name, value in (("sigma_c", sigma_c), ("sigma_j", sigma_j), ("sigma_d", sigma_d)):
        _require_non_negative(name, value)
    return TimingBudget(
        sigma_c=sigma_c,
        sigma_j=sigma_j,
        sigma_d=sigma_d,
        delta_t=math.hypot(sigma_c, sigma_j, sigma_d),
    )


def combine_jitter(*fwhms):
    """Quadrature sum of independent detector jitters."""
    for value in fwhms:
        _require_non_negative("jitter", value)
    return math.hypot(*fwhms) if fwhms else 0.0


def timing_budget(scenario):
    return combined_spread(
        scenario.coherence_fwhm,
        combine_jitter(scenario.arm_a.detector.jitter_fwhm, scenario.arm_b.detector.jitter_fwhm),
        nonlocal_dispersion(scenario.arm_a, scenario.arm_b, scenario.effective_spectral_width),
    )


def arm_loss_db(arm):
    loss = math.fsum(segment.loss_db for segment in arm.segments)
    if arm.compensator is not None:
        loss += arm.compensator.insertion_loss
    return loss + arm.extra_attenuation


def db_to_transmission(loss_db):
    return 10.0 ** (-loss_db / 10.0)


def transmission_to_db(eta):
    if not 0 < eta <= 1:
        raise DomainError(f"transmission must lie in (0, 1], got {eta!r}")
    return -10.0 * math.log10(eta)


def arm_transmission(arm):
    return db_to_transmission(arm_loss_db(arm))


def klyshko_efficiency(coincidence_rate, partner_singles_rate, partner_noise_rate):
    """Heralding efficiency CC / (S - DC) of the arm opposite to the partner."""
    denominator = partner_singles_rate - partner_noise_rate
    if not denominator > 0:
        raise DomainError(
            f"partner singles ({partner_singles_rate}) must exceed its noise ({partner_noise_rate})"
        )
    return coincidence_rate / denominator

