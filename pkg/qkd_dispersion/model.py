"""
qkd_dispersion.model
~~~~~~~~~~~~~~~~~~~~

Closed-form key-rate model of a two-arm entangled-photon link.

The coincidence window is tied to the timing budget, ``t_cc = dT`` with
``dT = sqrt(sigma_c^2 + sigma_j^2 + sigma_d^2)``; the clipping factor
``s = erf(sqrt(ln 2))`` is the fraction of a Gaussian peak inside a window
of one FWHM.
"""

import logging
import math
import typing
from dataclasses import asdict, dataclass, replace

from scipy.special import erf

from .analysis import binary_entropy
from .exceptions import DomainError, NoKeyError
from .physics import (
    ArmConfig,
    FiberSegment,
    arm_transmission,
    bandwidth_to_wavelength_width,
    coherence_fwhm_from_bandwidth,
    combine_jitter,
    combined_spread,
    db_to_transmission,
    nonlocal_dispersion,
)
from .tags import Party
from .workers import WorkerPool

logger = logging.getLogger(__name__)

#: fraction of a Gaussian peak inside a window of one FWHM
DEFAULT_CLIPPING_FACTOR = float(erf(math.sqrt(math.log(2.0))))

#: brightness range reported for the optimized long-distance curves, cps
PUBLISHED_BRIGHTNESS_RANGE = (6.6e6, 2.5e9)


@dataclass(frozen=True)
class ModelParameters:
    brightness: float
    eta_a: float
    eta_b: float
    dc_a: float = 0.0
    dc_b: float = 0.0
    optical_error: float = 0.0
    sigma_j: float = 0.0
    sigma_c: float = 0.0
    f: float = 1.1
    clipping_factor: float = DEFAULT_CLIPPING_FACTOR
    include_accidentals: bool = True

    def __post_init__(self):
        if not self.brightness >= 0:
            raise DomainError(f"brightness must be >= 0, got {self.brightness!r}")
        for name in ("eta_a", "eta_b"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise DomainError(f"{name} must lie in (0, 1], got {value!r}")
        for name in ("dc_a", "dc_b", "sigma_j", "sigma_c"):
            if not getattr(self, name) >= 0:
                raise DomainError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        if not 0 <= self.optical_error <= 0.5:
            raise DomainError(f"optical error must lie in [0, 0.5], got {self.optical_error!r}")
        if not 0 < self.clipping_factor <= 1:
            raise DomainError(f"clipping factor must lie in (0, 1], got {self.clipping_factor!r}")
        if not self.f >= 1:
            raise DomainError(f"error correction efficiency must be >= 1, got {self.f!r}")

    @classmethod
    def from_db(cls, brightness, loss_a_db, loss_b_db, **kwargs):
        return cls(
            brightness=brightness,
            eta_a=db_to_transmission(loss_a_db),
            eta_b=db_to_transmission(loss_b_db),
            **kwargs,
        )

    @classmethod
    def from_scenario(cls, scenario, **kwargs):
        """Model of a simulated link.

        A party's detector noise rate is split over its two detectors, so
        the accidental term's ``2 * dc`` reproduces the simulated noise.
        """
        values = dict(
            brightness=scenario.brightness,
            eta_a=arm_transmission(scenario.arm_a),
            eta_b=arm_transmission(scenario.arm_b),
            dc_a=scenario.arm_a.detector.dark_count_rate / 2.0,
            dc_b=scenario.arm_b.detector.dark_count_rate / 2.0,
            optical_error=scenario.optical_error,
            sigma_j=combine_jitter(
                scenario.arm_a.detector.jitter_fwhm, scenario.arm_b.detector.jitter_fwhm
            ),
            sigma_c=scenario.coherence_fwhm,
            f=scenario.error_correction_efficiency,
        )
        values.update(kwargs)
        return cls(**values)

    def replace(self, **changes):
        return replace(self, **changes)


def delta_t(params, sigma_d=0.0):
    return combined_spread(params.sigma_c, params.sigma_j, abs(sigma_d)).delta_t


def accidental_rate(params, delta_t_ps):
    """Chance coincidences per second inside a window of `delta_t_ps`."""
    if not delta_t_ps >= 0:
        raise DomainError(f"timing spread must be >= 0, got {delta_t_ps!r}")
    singles_a = params.brightness * params.eta_a + 2.0 * params.dc_a
    singles_b = params.brightness * params.eta_b + 2.0 * params.dc_b
    return singles_a * singles_b * delta_t_ps * 1e-12


def model_cc_tot(params):
    return params.clipping_factor * params.brightness * params.eta_a * params.eta_b


def model_qber(params, delta_t_ps):
    signal = model_cc_tot(params)
    xi = accidental_rate(params, delta_t_ps)
    if signal + xi == 0:
        return 0.5
    return (signal * params.optical_error + xi / 2.0) / (signal + xi)


def _total_rate(params, delta_t_ps):
    total = model_cc_tot(params)
    if params.include_accidentals:
        total += accidental_rate(params, delta_t_ps)
    return total


def raw_model_key_rate(params, sigma_d=0.0):
    spread = delta_t(params, sigma_d)
    return _total_rate(params, spread) * (
        1.0 - (1.0 + params.f) * binary_entropy(model_qber(params, spread))
    )


def model_key_rate(params, sigma_d=0.0):
    """Secure key rate in bits/s at a nonlocal dispersion spread `sigma_d` (ps)."""
    return max(0.0, raw_model_key_rate(params, sigma_d))


@dataclass(frozen=True)
class SweepRow:
    x: float
    sigma_d: float
    delta_t: float
    t_cc: float
    cc_tot: float
    qber: float
    r_s: float
    raw_r_s: float
    brightness: float

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SweepResult:
    variable: str
    rows: typing.Tuple[SweepRow, ...]
    label: str = ""

    def __post_init__(self):
        rows = tuple(self.rows)
        if any(b.x < a.x for a, b in zip(rows, rows[1:])):
            raise DomainError("sweep rows must be ordered by the independent variable")
        object.__setattr__(self, "rows", rows)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def column(self, name):
        return [getattr(row, name) for row in self.rows]

    def peak(self):
        """Row with the highest key rate; the first one on ties."""
        return max(self.rows, key=lambda row: row.r_s)

    def trough(self):
        return min(self.rows, key=lambda row: row.r_s)


def evaluate(params, sigma_d=0.0, x=None):
    """Full model row at one nonlocal dispersion spread."""
    spread = delta_t(params, sigma_d)
    raw = raw_model_key_rate(params, sigma_d)
    return SweepRow(
        x=sigma_d if x is None else x,
        sigma_d=abs(sigma_d),
        delta_t=spread,
        t_cc=spread,
        cc_tot=_total_rate(params, spread),
        qber=model_qber(params, spread),
        r_s=max(0.0, raw),
        raw_r_s=raw,
        brightness=params.brightness,
    )


def dcm_settings(dcm_range=(-170.0, 170.0), step=10.0):
    if not step > 0:
        raise DomainError(f"DCM step must be > 0, got {step!r}")
    low, high = dcm_range
    if low > high:
        raise DomainError(f"empty DCM range [{low}, {high}]")
    count = int(math.floor((high - low) / step + 1e-9))
    return [low + k * step for k in range(count + 1)]


def dcm_sweep(params, fiber_dispersion, sigma_lambda, dcm_range=(-170.0, 170.0), step=10.0,
              calibration_offset=0.0):
    """Model row for every compensator reading in `dcm_range`.

    :param fiber_dispersion: accumulated fiber dispersion of both arms, ps/nm.
    :param sigma_lambda: effective spectral width, nm.
    :param calibration_offset: added to each reading, ps/nm.
    """
    if not sigma_lambda >= 0:
        raise DomainError(f"spectral width must be >= 0, got {sigma_lambda!r}")
    rows = [
        evaluate(params, sigma_lambda * abs(fiber_dispersion + setting + calibration_offset), setting)
        for setting in dcm_settings(dcm_range, step)
    ]
    return SweepResult("dcm_ps_per_nm", rows)


def peak_to_trough_ratio(sweep):
    peak, trough = sweep.peak().r_s, sweep.trough().r_s
    if peak <= 0:
        raise NoKeyError("sweep never yields a positive key rate")
    return math.inf if trough <= 0 else peak / trough


def local_compensation_comparison(params, second_dcm_loss_db=4.56, uncompensated_arm=Party.B):
    """Key rate if each arm carried its own compensator at `second_dcm_loss_db`."""
    if not second_dcm_loss_db >= 0:
        raise DomainError(f"module loss must be >= 0, got {second_dcm_loss_db!r}")
    factor = db_to_transmission(second_dcm_loss_db)
    if Party(uncompensated_arm) is Party.A:
        local = params.replace(eta_a=params.eta_a * factor)
    else:
        local = params.replace(eta_b=params.eta_b * factor)
    return model_key_rate(local, 0.0)


class LocalComparison(typing.NamedTuple):
    nonlocal_rs: float
    local_rs: float
    ratio: float


def compare_local(params, second_dcm_loss_db=4.56, uncompensated_arm=Party.B):
    nonlocal_rs = model_key_rate(params, 0.0)
    local_rs = local_compensation_comparison(params, second_dcm_loss_db, uncompensated_arm)
    ratio = local_rs / nonlocal_rs if nonlocal_rs > 0 else math.nan
    return LocalComparison(nonlocal_rs, local_rs, ratio)


@dataclass(frozen=True)
class DistanceSweepConfig:
    attenuation_per_km: float = 0.2
    dispersion_coefficient: float = 18.0
    dark_count_rate: float = 100.0
    optical_error: float = 0.01
    sigma_j: float = 20.0
    center_wavelength_nm: float = 1550.0
    f: float = 1.1
    clipping_factor: float = DEFAULT_CLIPPING_FACTOR
    include_accidentals: bool = True
    step_km: float = 5.0
    max_km: float = 1000.0
    epsilon: float = 1e-6
    log10_brightness_range: typing.Tuple[float, float] = (5.0, 11.0)
    coarse_points: int = 61
    tolerance_decades: float = 1e-4

    def __post_init__(self):
        if not self.step_km > 0:
            raise DomainError(f"distance step must be > 0, got {self.step_km!r}")
        if not self.epsilon > 0:
            raise DomainError(f"key floor must be > 0, got {self.epsilon!r}")
        low, high = self.log10_brightness_range
        if not low < high:
            raise DomainError(f"empty brightness bracket [{low}, {high}]")
        if self.coarse_points < 3:
            raise DomainError("brightness scan needs at least 3 points")
        object.__setattr__(self, "log10_brightness_range", (float(low), float(high)))


def symmetric_arm(total_km, config):
    """One arm of a link with the source midway."""
    segment = FiberSegment(
        total_km / 2.0, config.dispersion_coefficient, config.attenuation_per_km, "half-link"
    )
    return ArmConfig(segments=(segment,))


def link_point(width_ghz, total_km, compensated, config):
    """Model parameters (brightness still free) and sigma_d at one distance."""
    arm = symmetric_arm(total_km, config)
    sigma_lambda = bandwidth_to_wavelength_width(width_ghz, config.center_wavelength_nm)
    sigma_d = 0.0 if compensated else nonlocal_dispersion(arm, arm, sigma_lambda)
    eta = arm_transmission(arm)
    template = ModelParameters(
        brightness=0.0,
        eta_a=eta,
        eta_b=eta,
        dc_a=config.dark_count_rate,
        dc_b=config.dark_count_rate,
        optical_error=config.optical_error,
        sigma_j=config.sigma_j,
        sigma_c=coherence_fwhm_from_bandwidth(width_ghz),
        f=config.f,
        clipping_factor=config.clipping_factor,
        include_accidentals=config.include_accidentals,
    )
    return template, sigma_d


class BrightnessOptimum(typing.NamedTuple):
    brightness: float
    key_rate: float
    raw_key_rate: float
    no_key: bool


def optimize_brightness(template, sigma_d=0.0, config=None):
    """Brightness maximizing the key rate of `template` at spread `sigma_d`.

    A coarse log-spaced scan brackets the best point, then ternary search on
    the unclamped rate narrows the bracket below the configured tolerance.
    A landscape without key yields the bracket midpoint flagged ``no_key``.
    """
    config = config or DistanceSweepConfig()
    low, high = config.log10_brightness_range

    def rate(log_b):
        return raw_model_key_rate(template.replace(brightness=10.0 ** log_b), sigma_d)

    step = (high - low) / (config.coarse_points - 1)
    grid = [low + k * step for k in range(config.coarse_points)]
    values = [rate(point) for point in grid]
    best = max(range(len(grid)), key=values.__getitem__)
    a = grid[max(best - 1, 0)]
    b = grid[min(best + 1, len(grid) - 1)]

    while b - a >= config.tolerance_decades:
        third = (b - a) / 3.0
        left, right = a + third, b - third
        if rate(left) < rate(right):
            a = left
        else:
            b = right

    log_b = (a + b) / 2.0
    raw = rate(log_b)
    if values[best] > raw:
        log_b, raw = grid[best], values[best]
    if raw <= 0:
        midpoint = 10.0 ** ((low + high) / 2.0)
        return BrightnessOptimum(midpoint, 0.0, raw, True)
    return BrightnessOptimum(10.0 ** log_b, raw, raw, False)


def distance_row(width_ghz, total_km, compensated, config):
    template, sigma_d = link_point(width_ghz, total_km, compensated, config)
    optimum = optimize_brightness(template, sigma_d, config)
    return evaluate(template.replace(brightness=optimum.brightness), sigma_d, total_km)


def distance_evaluator(width_ghz, compensated, config=None):
    """Optimized key rate as a function of total distance in km."""
    config = config or DistanceSweepConfig()

    def key_rate(total_km):
        template, sigma_d = link_point(width_ghz, total_km, compensated, config)
        return optimize_brightness(template, sigma_d, config).key_rate

    return key_rate


def _distance_curve(width_ghz, compensated, config):
    rows = []
    total_km = 0.0
    while total_km <= config.max_km + 1e-9:
        row = distance_row(width_ghz, total_km, compensated, config)
        rows.append(row)
        if row.r_s < config.epsilon:
            break
        total_km = len(rows) * config.step_km
    else:
        logger.warning(
            f"{width_ghz} GHz curve still above {config.epsilon} bits/s at {config.max_km} km"
        )
    state = "compensated" if compensated else "uncompensated"
    return SweepResult("distance_km", rows, label=f"{width_ghz:g}GHz-{state}")


def distance_sweep(widths_ghz, compensated, config=None, threads=None):
    """Brightness-optimized key rate vs total distance, one curve per width.

    Each curve ends with its first row below ``config.epsilon``.

    :rtype: dict mapping width in GHz to :class:`SweepResult`
    """
    config = config or DistanceSweepConfig()
    widths = list(widths_ghz)
    with WorkerPool(threads) as pool:
        curves = pool.map(lambda width: _distance_curve(width, compensated, config), widths)
    return dict(zip(widths, curves))


def max_distance(curve, epsilon=1e-6, evaluator=None, tolerance_km=1e-3):
    """Largest distance with a key rate above `epsilon`.

    The crossing between the last row above and the first row below is
    refined by bisection on `evaluator` when given, else interpolated
    linearly.
    """
    rows = curve.rows
    above = [index for index, row in enumerate(rows) if row.r_s > epsilon]
    if not above:
        raise NoKeyError(f"key rate never exceeds {epsilon} bits/s")
    last = above[-1]
    if last == len(rows) - 1:
        logger.warning(f"curve {curve.label!r} ends above {epsilon} bits/s")
        return rows[last].x

    lo, hi = rows[last], rows[last + 1]
    if evaluator is None:
        return lo.x + (lo.r_s - epsilon) / (lo.r_s - hi.r_s) * (hi.x - lo.x)

    a, b = lo.x, hi.x
    while b - a > tolerance_km:
        middle = (a + b) / 2.0
        if evaluator(middle) > epsilon:
            a = middle
        else:
            b = middle
    return a
