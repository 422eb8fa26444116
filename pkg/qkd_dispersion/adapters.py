import logging
import math
import typing
from dataclasses import replace

from .analysis import cross_correlate, fit_gaussian, optimize_window, setting_fits
from .exceptions import FitError
from .model import dcm_settings, dcm_sweep
from .montecarlo import simulate
from .physics import CompensationModule
from .tags import Party

logger = logging.getLogger(__name__)

DCM_COLUMNS = (
    "dcm_ps_per_nm",
    "delta_t_ps",
    "t_cc_ps",
    "cc_tot_cps",
    "qber",
    "r_s_bits_per_s",
    "source",
)


class DCMRow(typing.NamedTuple):
    dcm_ps_per_nm: float
    delta_t_ps: float
    t_cc_ps: float
    cc_tot_cps: float
    qber: float
    r_s_bits_per_s: float
    source: str


class BaseAdapter:
    """The Base Sweep Adapter"""

    source = None

    def __init__(self):
        super().__init__()

    def sweep_dcm(self, scenario_file):
        """Evaluates every compensator reading of the configured DCM grid.

        :param scenario_file: The resolved :class:`ScenarioFile`.
        :rtype: list of :class:`DCMRow`
        """
        raise NotImplementedError

    def close(self):
        """Cleans up adapter specific items."""
        pass


class ModelAdapter(BaseAdapter):

    source = "model"

    def sweep_dcm(self, scenario_file):
        options = scenario_file.dcm_options()
        sweep = dcm_sweep(
            scenario_file.model_parameters(),
            options.fiber_dispersion,
            options.sigma_lambda,
            options.dcm_range,
            options.step,
            options.calibration_offset,
        )
        return [
            DCMRow(row.x, row.delta_t, row.t_cc, row.cc_tot, row.qber, row.r_s, self.source)
            for row in sweep
        ]


def _with_compensator(scenario, party, setting):
    arm = scenario.arm_a if party is Party.A else scenario.arm_b
    if arm.compensator is None:
        module = CompensationModule(total_dispersion=setting)
    else:
        module = arm.compensator.with_setting(setting)
    arm = replace(arm, compensator=module)
    if party is Party.A:
        return scenario.with_arms(arm_a=arm)
    return scenario.with_arms(arm_b=arm)


class MonteCarloAdapter(BaseAdapter):
    """Simulates and analyzes one run per compensator reading.

    Reading ``k`` of the grid draws from stream ``k`` of the configured
    seed, so every point is independent and reproducible on its own.
    """

    source = "mc"

    def __init__(self, threads=None, seed=None):
        super().__init__()
        self.threads = threads
        self.seed = seed

    def _point(self, scenario_file, scenario, setting, stream):
        options = scenario_file.analysis_options()
        run = replace(scenario_file.run(self.seed), stream=stream)
        tags_a, tags_b = simulate(scenario, run, threads=self.threads)
        delay = options.delay
        if delay is None:
            delay = scenario.arm_a.propagation_delay - scenario.arm_b.propagation_delay
        hist = cross_correlate(
            tags_a, tags_b, options.bin_width, options.search_range, delay, threads=self.threads
        )
        try:
            fit = fit_gaussian(hist)
        except FitError as exc:
            logger.warning(f"DCM {setting} ps/nm: no usable peak ({exc})")
            return DCMRow(setting, math.nan, math.nan, 0.0, math.nan, 0.0, self.source)
        report = optimize_window(
            tags_a, tags_b, delay=delay, fwhm=fit.fwhm, f=scenario.error_correction_efficiency
        )
        settings = setting_fits(
            tags_a, tags_b, delay, options.bin_width, options.search_range, threads=self.threads
        )
        delta_t = settings.average_fwhm
        if delta_t is None:
            delta_t = fit.fwhm
        return DCMRow(
            setting,
            delta_t,
            report.t_cc,
            report.cc_total_rate,
            report.qber,
            report.secure_key_rate,
            self.source,
        )

    def sweep_dcm(self, scenario_file):
        options = scenario_file.dcm_options()
        scenario = scenario_file.scenario()
        rows = []
        for stream, setting in enumerate(dcm_settings(options.dcm_range, options.step)):
            point = _with_compensator(scenario, options.compensated_arm, setting)
            rows.append(self._point(scenario_file, point, setting, stream))
            logger.info(f"DCM {setting} ps/nm: R_s={rows[-1].r_s_bits_per_s:.4g} bits/s")
        return rows
