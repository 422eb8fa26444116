"""
qkd_dispersion.api
~~~~~~~~~~~~~~~~~~

This module implements the qkd_dispersion API.
"""

import logging
import typing

from . import montecarlo, sessions
from .analysis import (
    DEFAULT_ERROR_CORRECTION,
    DEFAULT_SEARCH_RANGE,
    KeyRateReport,
    SettingFits,
    cross_correlate,
    find_delay,
    fit_gaussian,
    optimize_window,
    setting_fits,
)
from .compat import error_payload
from .config import load_config
from .exceptions import FitError, NoKeyError
from .model import (
    PUBLISHED_BRIGHTNESS_RANGE,
    compare_local as _compare_local,
    distance_evaluator,
    distance_sweep,
    max_distance,
)

logger = logging.getLogger(__name__)


class SimulationResult(typing.NamedTuple):
    tags_a: typing.Any
    tags_b: typing.Any
    scenario_file: typing.Any
    run: typing.Any


class AnalysisResult(typing.NamedTuple):
    histogram: typing.Any
    fit: typing.Any
    fit_error: typing.Optional[dict]
    report: KeyRateReport
    settings: typing.Optional[SettingFits] = None


class DistanceResult(typing.NamedTuple):
    curves: typing.Dict[typing.Tuple[float, bool], typing.Any]
    summary: dict


def simulate(config=None, seed=None, threads=None, **overrides):
    """Generates the time-tag streams of both parties for a scenario.

    :param config: (optional) path of a JSON scenario file or name of a shipped preset.
    :param seed: (optional) overrides ``run.seed`` of the configuration.
    :param threads: (optional) worker count. Never changes the result.
    :param overrides: (optional) ``"section.key"`` values applied on top of the file.
    :return: :class:`SimulationResult` holding both :class:`TagStream` objects
    :rtype: SimulationResult

    Usage::

      >>> import qkd_dispersion
      >>> result = qkd_dispersion.simulate('paper-setup', seed=7)
      >>> len(result.tags_a) > 0
      True
    """
    scenario_file = load_config(config, **overrides)
    run = scenario_file.run(seed)
    tags_a, tags_b = montecarlo.simulate(scenario_file.scenario(), run, threads=threads)
    return SimulationResult(tags_a, tags_b, scenario_file, run)


def analyze(tags_a, tags_b, delay=None, f=DEFAULT_ERROR_CORRECTION, bin_width=1.0,
            search_range=DEFAULT_SEARCH_RANGE, threads=None):
    """Histogram, Gaussian fit and window-optimized key rate of two streams.

    A failed fit does not raise: it is reported in ``fit_error`` together
    with a zero key rate. ``settings`` holds the fits of the HH, VV, DD and
    AA histograms, whose mean FWHM is the measured timing spread.

    :param delay: (optional) peak delay ``t_A - t_B`` in ps; located from the data when omitted.
    :param f: (optional) error correction efficiency.
    :rtype: AnalysisResult
    """
    center = 0.0 if delay is None else delay
    try:
        if delay is None:
            center = find_delay(tags_a, tags_b)
        hist = cross_correlate(tags_a, tags_b, bin_width, search_range, center, threads=threads)
        fit = fit_gaussian(hist)
    except FitError as exc:
        logger.warning(f"no coincidence peak: {exc}")
        hist = cross_correlate(tags_a, tags_b, bin_width, search_range, center, threads=threads)
        report = KeyRateReport(
            t_cc=None,
            delay_used=center,
            cc_total_rate=0.0,
            qber=0.5,
            secure_key_rate=0.0,
            raw_key_rate=0.0,
        )
        return AnalysisResult(hist, None, error_payload(exc), report)

    delay_used = float(round(fit.center)) if delay is None else delay
    report = optimize_window(tags_a, tags_b, delay=delay_used, fwhm=fit.fwhm, f=f)
    settings = setting_fits(
        tags_a, tags_b, delay_used, bin_width, search_range, threads=threads
    )
    return AnalysisResult(hist, fit, None, report, settings)


def sweep_dcm(config=None, mode="model", threads=None, seed=None):
    """Key rate for every compensator reading of the configured grid.

    :param mode: ``model``, ``mc`` or ``both``.
    :rtype: list of :class:`DCMRow`
    """
    scenario_file = load_config(config)
    with sessions.Session(threads=threads, seed=seed) as session:
        return session.sweep_dcm(scenario_file, mode=mode)


def _curve_summary(curve, width, compensated, config):
    entry = {
        "width_ghz": width,
        "compensated": compensated,
        "max_distance_km": None,
        "no_key": False,
        "brightness_cps": [
            {"distance_km": row.x, "brightness_cps": row.brightness} for row in curve
        ],
        "warnings": [],
    }
    try:
        entry["max_distance_km"] = max_distance(
            curve, config.epsilon, distance_evaluator(width, compensated, config)
        )
    except NoKeyError as exc:
        entry["no_key"] = True
        entry["warnings"].append(str(exc))
    low, high = PUBLISHED_BRIGHTNESS_RANGE
    for row in curve:
        if row.r_s > config.epsilon and not low <= row.brightness <= high:
            message = (
                f"optimized brightness {row.brightness:.3g} cps at {row.x:g} km "
                f"lies outside [{low:.2g}, {high:.2g}]"
            )
            entry["warnings"].append(message)
    if entry["warnings"]:
        logger.warning(f"{curve.label}: {len(entry['warnings'])} soft warning(s)")
    return entry


def sweep_distance(config=None, threads=None):
    """Brightness-optimized key rate vs distance for every configured width,
    with and without compensation, plus maximum distances and their gains.

    :rtype: DistanceResult
    """
    scenario_file = load_config(config)
    sweep_config = scenario_file.distance_config()
    widths, states = scenario_file.distance_grid()

    curves = {}
    for compensated in states:
        for width, curve in distance_sweep(widths, compensated, sweep_config, threads).items():
            curves[(width, compensated)] = curve

    entries = [
        _curve_summary(curve, width, compensated, sweep_config)
        for (width, compensated), curve in curves.items()
    ]
    gains = []
    for width in widths:
        reach = {
            entry["compensated"]: entry["max_distance_km"]
            for entry in entries
            if entry["width_ghz"] == width
        }
        if reach.get(True) is not None and reach.get(False) is not None:
            gains.append({"width_ghz": width, "gain_km": reach[True] - reach[False]})
    summary = {
        "epsilon_bits_per_s": sweep_config.epsilon,
        "curves": entries,
        "gains": gains,
        "resolved_config": scenario_file.resolved,
    }
    return DistanceResult(curves, summary)


def compare_local(config=None):
    """Key rate with the nonlocal compensator vs one module per arm.

    :rtype: dict
    """
    scenario_file = load_config(config)
    loss_db, arm = scenario_file.local_options()
    result = _compare_local(scenario_file.model_parameters(), loss_db, arm)
    return {
        "nonlocal_rs": result.nonlocal_rs,
        "local_rs": result.local_rs,
        "ratio": result.ratio,
        "second_dcm_loss_db": loss_db,
        "uncompensated_arm": arm.value,
    }
