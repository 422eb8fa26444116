"""
qkd_dispersion.config
~~~~~~~~~~~~~~~~~~~~~

Scenario documents: JSON with nested sections and unit-suffixed keys,
merged over a complete defaults tree. Unknown or ill-typed keys are
rejected with their dotted path and line number.
"""

import copy
import json
import logging
import re
import typing
from dataclasses import dataclass
from pathlib import Path

from .exceptions import ConfigError, DomainError
from .model import DistanceSweepConfig, ModelParameters
from .montecarlo import BasisMode, SettingBlock, SimulationRun
from .physics import (
    ArmConfig,
    CompensationModule,
    DetectorSpec,
    FiberSegment,
    LinkScenario,
    OpticalSpectrum,
    WidthUnit,
    db_to_transmission,
    fiber_dispersion_total,
)
from .tags import Basis, Party

logger = logging.getLogger(__name__)

PRESETS_DIR = Path(__file__).parent / "presets"

FIBER_DEFAULTS = {
    "length_km": 0.0,
    "dispersion_ps_per_nm_km": 16.7,
    "attenuation_db_per_km": 0.2,
    "label": "",
}

COMPENSATOR_DEFAULTS = {
    "setting_ps_per_nm": 0.0,
    "insertion_loss_db": 0.0,
    "range_min_ps_per_nm": -170.0,
    "range_max_ps_per_nm": 170.0,
    "step_ps_per_nm": 10.0,
    "calibration_offset_ps_per_nm": 0.0,
}

SETTING_DEFAULTS = {
    "basis_a": "HV",
    "basis_b": "HV",
    "duration_s": 0.0,
}

ARM_DEFAULTS = {
    "fibers": [],
    "compensator": None,
    "extra_attenuation_db": 0.0,
    "propagation_delay_ps": 0.0,
    "jitter_fwhm_ps": 0.0,
    "dark_count_cps": 0.0,
}

DEFAULTS = {
    "source": {
        "brightness_cps": 5.75e8,
        "optical_error": 0.01,
        "center_wavelength_nm": 1550.0,
        "spectral_width_ghz": 200.0,
        "spectral_width_nm": None,
        "spectrum_shape": "gaussian",
        "effective_spectral_width_nm": None,
        "coherence_fwhm_ps": None,
        "error_correction_efficiency": 1.1,
    },
    "arm_a": copy.deepcopy(ARM_DEFAULTS),
    "arm_b": copy.deepcopy(ARM_DEFAULTS),
    "run": {
        "seed": 0,
        "duration_s": 1.0,
        "basis_mode": "fixed",
        "settings": None,
        "chunk_duration_s": 0.01,
        "max_events": 50_000_000,
        "stream": 0,
    },
    "analysis": {
        "bin_width_ps": 1.0,
        "search_range_ps": 2000.0,
        "delay_ps": None,
    },
    "model": {
        "brightness_cps": None,
        "loss_a_db": None,
        "loss_b_db": None,
        "dc_a_cps": None,
        "dc_b_cps": None,
        "optical_error": None,
        "sigma_j_ps": None,
        "sigma_c_ps": None,
        "error_correction_efficiency": None,
        "clipping_factor": None,
        "include_accidentals": True,
    },
    "dcm_sweep": {
        "fiber_dispersion_ps_per_nm": None,
        "sigma_lambda_nm": None,
        "range_min_ps_per_nm": -170.0,
        "range_max_ps_per_nm": 170.0,
        "step_ps_per_nm": 10.0,
        "calibration_offset_ps_per_nm": None,
        "compensated_arm": "A",
    },
    "distance_sweep": {
        "widths_ghz": [2.0, 10.0, 100.0],
        "compensated": [True, False],
        "attenuation_db_per_km": 0.2,
        "dispersion_ps_per_nm_km": 18.0,
        "dark_count_cps": 100.0,
        "optical_error": 0.01,
        "sigma_j_ps": 20.0,
        "center_wavelength_nm": 1550.0,
        "error_correction_efficiency": 1.1,
        "step_km": 5.0,
        "max_km": 1000.0,
        "epsilon_bits_per_s": 1e-6,
        "log10_brightness_min": 5.0,
        "log10_brightness_max": 11.0,
    },
    "local_comparison": {
        "second_dcm_loss_db": 4.56,
        "uncompensated_arm": "B",
    },
}

#: list-valued keys whose items follow their own defaults
ITEM_DEFAULTS = {
    "fibers": FIBER_DEFAULTS,
    "settings": SETTING_DEFAULTS,
}

#: object-valued keys that default to null
OBJECT_DEFAULTS = {
    "compensator": COMPENSATOR_DEFAULTS,
}

#: scalar lists
SCALAR_LISTS = {
    "widths_ghz": (int, float),
    "compensated": (bool,),
}


def _line_of(text, key):
    if text is None:
        return None
    match = re.search(r'"%s"\s*:' % re.escape(key), text)
    if match is None:
        return None
    return text.count("\n", 0, match.start()) + 1


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


class _Merger:

    def __init__(self, text=None):
        self.text = text

    def error(self, message, path):
        leaf = re.sub(r"\[\d+\]$", "", path.rsplit(".", 1)[-1])
        raise ConfigError(f"{path}: {message}", key=path, line=_line_of(self.text, leaf))

    def check_scalar(self, default, value, path):
        if value is None:
            if default is None:
                return None
            self.error("must not be null", path)
        if isinstance(default, int) and not isinstance(default, bool):
            if not isinstance(value, int) or isinstance(value, bool):
                self.error(f"expected an integer, got {value!r}", path)
            return value
        if default is None or _is_number(default):
            if not _is_number(value):
                self.error(f"expected a number, got {value!r}", path)
            return value
        if not isinstance(value, type(default)):
            self.error(f"expected {type(default).__name__}, got {value!r}", path)
        return value

    def merge(self, defaults, document, path=""):
        if not isinstance(document, dict):
            self.error("expected an object", path or "<root>")
        merged = copy.deepcopy(defaults)
        for key, value in document.items():
            dotted = f"{path}.{key}" if path else key
            if key not in defaults:
                self.error("unknown key", dotted)
            default = defaults[key]
            if key in ITEM_DEFAULTS:
                merged[key] = self.merge_items(ITEM_DEFAULTS[key], value, dotted)
            elif key in OBJECT_DEFAULTS:
                merged[key] = (
                    None if value is None else self.merge(OBJECT_DEFAULTS[key], value, dotted)
                )
            elif key in SCALAR_LISTS:
                merged[key] = self.merge_scalar_list(SCALAR_LISTS[key], value, dotted)
            elif isinstance(default, dict):
                merged[key] = self.merge(default, value, dotted)
            else:
                merged[key] = self.check_scalar(default, value, dotted)
        return merged

    def merge_items(self, item_defaults, value, path):
        if value is None:
            return None
        if not isinstance(value, list):
            self.error("expected a list", path)
        return [self.merge(item_defaults, item, f"{path}[{i}]") for i, item in enumerate(value)]

    def merge_scalar_list(self, types, value, path):
        if not isinstance(value, list):
            self.error("expected a list", path)
        for i, item in enumerate(value):
            valid = isinstance(item, types)
            if bool not in types and isinstance(item, bool):
                valid = False
            if not valid:
                self.error(f"invalid item {item!r}", f"{path}[{i}]")
        return list(value)


def _nest(overrides):
    """`{"a.b": 1}` as `{"a": {"b": 1}}`."""
    nested = {}
    for dotted, value in overrides.items():
        *parents, leaf = dotted.split(".")
        node = nested
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    return nested


def _update(target, updates):
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(target.get(key), dict):
            _update(target[key], value)
        else:
            target[key] = copy.deepcopy(value)


def resolve_config_path(name_or_path):
    """A filesystem path, or the name of a shipped preset."""
    path = Path(name_or_path)
    if path.is_file():
        return path
    preset = PRESETS_DIR / f"{name_or_path}.json"
    if preset.is_file():
        return preset
    raise ConfigError(f"no such config file or preset: {name_or_path!s}")


def list_presets():
    return sorted(path.stem for path in PRESETS_DIR.glob("*.json"))


class ScenarioFileFactory:

    def __init__(self, source=None, overrides=None):
        self.source = source
        self.overrides = dict(overrides or {})

    def _read_document(self):
        if self.source is None:
            return {}, None, "<defaults>"
        path = resolve_config_path(self.source)
        text = path.read_text(encoding="utf-8")
        try:
            document = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path.name}: {exc.msg}", line=exc.lineno) from exc
        return document, text, str(path)

    def get_scenario_file(self):
        document, text, origin = self._read_document()
        logger.debug(f"load scenario => source={origin!s} overrides={self.overrides!r}")
        resolved = _Merger(text).merge(DEFAULTS, document)
        if self.overrides:
            updates = _nest(self.overrides)
            _Merger().merge(DEFAULTS, updates)
            _update(resolved, updates)
        scenario_file = ScenarioFile(resolved, origin)
        # building every section surfaces domain errors at load time
        try:
            scenario_file.scenario()
            scenario_file.run()
            scenario_file.model_parameters()
            scenario_file.distance_config()
            scenario_file.dcm_options()
            scenario_file.local_options()
        except (ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        return scenario_file


def load_config(source=None, **overrides):
    """Resolved :class:`ScenarioFile` from a path or preset name.

    :param source: (optional) JSON file path or preset name; defaults only when omitted.
    :param overrides: (optional) ``"section.key"`` values applied after merging.
    """
    return ScenarioFileFactory(source=source, overrides=overrides).get_scenario_file()


def _arm(section):
    segments = tuple(
        FiberSegment(
            length_km=fiber["length_km"],
            dispersion_coefficient=fiber["dispersion_ps_per_nm_km"],
            attenuation_per_km=fiber["attenuation_db_per_km"],
            label=fiber["label"],
        )
        for fiber in section["fibers"] or ()
    )
    compensator = None
    if section["compensator"] is not None:
        module = section["compensator"]
        compensator = CompensationModule(
            total_dispersion=module["setting_ps_per_nm"],
            insertion_loss=module["insertion_loss_db"],
            range_min=module["range_min_ps_per_nm"],
            range_max=module["range_max_ps_per_nm"],
            step=module["step_ps_per_nm"],
            calibration_offset=module["calibration_offset_ps_per_nm"],
        )
    return ArmConfig(
        segments=segments,
        compensator=compensator,
        extra_attenuation=section["extra_attenuation_db"],
        detector=DetectorSpec(
            jitter_fwhm=section["jitter_fwhm_ps"],
            dark_count_rate=section["dark_count_cps"],
        ),
        propagation_delay=section["propagation_delay_ps"],
    )


class DCMSweepOptions(typing.NamedTuple):
    fiber_dispersion: float
    sigma_lambda: float
    dcm_range: typing.Tuple[float, float]
    step: float
    calibration_offset: float
    compensated_arm: Party


class AnalysisOptions(typing.NamedTuple):
    bin_width: float
    search_range: float
    delay: typing.Optional[float]


@dataclass(frozen=True)
class ScenarioFile:
    resolved: typing.Dict[str, typing.Any]
    origin: str = "<defaults>"

    def scenario(self):
        source = self.resolved["source"]
        if source["spectral_width_nm"] is not None:
            spectrum = OpticalSpectrum(
                source["center_wavelength_nm"], source["spectral_width_nm"], WidthUnit.NM,
                source["spectrum_shape"],
            )
        else:
            spectrum = OpticalSpectrum(
                source["center_wavelength_nm"], source["spectral_width_ghz"], WidthUnit.GHZ,
                source["spectrum_shape"],
            )
        return LinkScenario(
            brightness=source["brightness_cps"],
            optical_error=source["optical_error"],
            spectrum=spectrum,
            arm_a=_arm(self.resolved["arm_a"]),
            arm_b=_arm(self.resolved["arm_b"]),
            error_correction_efficiency=source["error_correction_efficiency"],
            effective_spectral_width=source["effective_spectral_width_nm"],
            coherence_fwhm=source["coherence_fwhm_ps"],
        )

    def run(self, seed=None):
        section = self.resolved["run"]
        settings = ()
        if section["settings"]:
            settings = tuple(
                SettingBlock(Basis[item["basis_a"]], Basis[item["basis_b"]], item["duration_s"])
                for item in section["settings"]
            )
        try:
            mode = BasisMode(section["basis_mode"])
        except ValueError:
            raise DomainError(f"unknown basis mode {section['basis_mode']!r}") from None
        return SimulationRun(
            seed=section["seed"] if seed is None else seed,
            duration_s=section["duration_s"],
            basis_mode=mode,
            settings=settings,
            chunk_duration_s=section["chunk_duration_s"],
            max_events=section["max_events"],
            stream=section["stream"],
        )

    def analysis_options(self):
        section = self.resolved["analysis"]
        return AnalysisOptions(
            section["bin_width_ps"], section["search_range_ps"], section["delay_ps"]
        )

    def model_parameters(self):
        """Model of the configured link; non-null ``model`` keys override it."""
        section = self.resolved["model"]
        params = ModelParameters.from_scenario(
            self.scenario(), include_accidentals=section["include_accidentals"]
        )
        changes = {}
        for key, field_name in (
            ("brightness_cps", "brightness"),
            ("dc_a_cps", "dc_a"),
            ("dc_b_cps", "dc_b"),
            ("optical_error", "optical_error"),
            ("sigma_j_ps", "sigma_j"),
            ("sigma_c_ps", "sigma_c"),
            ("error_correction_efficiency", "f"),
            ("clipping_factor", "clipping_factor"),
        ):
            if section[key] is not None:
                changes[field_name] = section[key]
        if section["loss_a_db"] is not None:
            changes["eta_a"] = db_to_transmission(section["loss_a_db"])
        if section["loss_b_db"] is not None:
            changes["eta_b"] = db_to_transmission(section["loss_b_db"])
        return params.replace(**changes)

    def dcm_options(self):
        section = self.resolved["dcm_sweep"]
        scenario = self.scenario()
        fiber = section["fiber_dispersion_ps_per_nm"]
        if fiber is None:
            fiber = fiber_dispersion_total(scenario.arm_a) + fiber_dispersion_total(scenario.arm_b)
        sigma_lambda = section["sigma_lambda_nm"]
        if sigma_lambda is None:
            sigma_lambda = scenario.effective_spectral_width
        arm = Party(section["compensated_arm"])
        offset = section["calibration_offset_ps_per_nm"]
        if offset is None:
            compensator = (scenario.arm_a if arm is Party.A else scenario.arm_b).compensator
            offset = compensator.calibration_offset if compensator is not None else 0.0
        return DCMSweepOptions(
            fiber_dispersion=fiber,
            sigma_lambda=sigma_lambda,
            dcm_range=(section["range_min_ps_per_nm"], section["range_max_ps_per_nm"]),
            step=section["step_ps_per_nm"],
            calibration_offset=offset,
            compensated_arm=arm,
        )

    def distance_config(self):
        section = self.resolved["distance_sweep"]
        return DistanceSweepConfig(
            attenuation_per_km=section["attenuation_db_per_km"],
            dispersion_coefficient=section["dispersion_ps_per_nm_km"],
            dark_count_rate=section["dark_count_cps"],
            optical_error=section["optical_error"],
            sigma_j=section["sigma_j_ps"],
            center_wavelength_nm=section["center_wavelength_nm"],
            f=section["error_correction_efficiency"],
            step_km=section["step_km"],
            max_km=section["max_km"],
            epsilon=section["epsilon_bits_per_s"],
            log10_brightness_range=(
                section["log10_brightness_min"], section["log10_brightness_max"]
            ),
        )

    def distance_grid(self):
        section = self.resolved["distance_sweep"]
        return list(section["widths_ghz"]), list(section["compensated"])

    def local_options(self):
        section = self.resolved["local_comparison"]
        return section["second_dcm_loss_db"], Party(section["uncompensated_arm"])
