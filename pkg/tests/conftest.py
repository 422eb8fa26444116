import numpy as np
import pytest

from qkd_dispersion.config import load_config
from qkd_dispersion.model import ModelParameters
from qkd_dispersion.physics import (
    ArmConfig,
    DetectorSpec,
    FiberSegment,
    LinkScenario,
    OpticalSpectrum,
    SpectrumShape,
)
from qkd_dispersion.tags import TagStream


@pytest.fixture
def lab_params():
    """Fitted model parameters of the 6.46 km laboratory link."""
    return ModelParameters.from_db(
        5.75e8, 29.05, 29.31,
        dc_a=1.4e5, dc_b=1.75e5, optical_error=0.01, sigma_j=66.0, sigma_c=0.0, f=1.1,
    )


@pytest.fixture
def lab_scenario():
    return load_config("paper-setup").scenario()


def make_scenario(brightness=1e7, loss_a=5.0, loss_b=5.0, dark_a=0.0, dark_b=0.0,
                  jitter=46.7, fiber_b_km=0.0, width_nm=0.2, optical_error=0.0,
                  delay_a=0.0, delay_b=0.0, coherence=0.0, compensator=None):
    """Small, fast link; losses are lumped into `extra_attenuation`."""
    segments_b = (FiberSegment(fiber_b_km, 16.7, 0.0),) if fiber_b_km else ()
    return LinkScenario(
        brightness=brightness,
        optical_error=optical_error,
        spectrum=OpticalSpectrum(1550.0, 200.0, "GHz", SpectrumShape.GAUSSIAN),
        arm_a=ArmConfig(
            compensator=compensator,
            extra_attenuation=loss_a,
            detector=DetectorSpec(jitter, dark_a),
            propagation_delay=delay_a,
        ),
        arm_b=ArmConfig(
            segments=segments_b,
            extra_attenuation=loss_b,
            detector=DetectorSpec(jitter, dark_b),
            propagation_delay=delay_b,
        ),
        effective_spectral_width=width_nm,
        coherence_fwhm=coherence,
    )


@pytest.fixture
def scenario_factory():
    return make_scenario


def stream(party, timestamps, bases=None, outcomes=None, duration=None):
    n = len(timestamps)
    return TagStream(
        party,
        timestamps,
        [0] * n if bases is None else bases,
        [0] * n if outcomes is None else outcomes,
        duration=duration,
    )


@pytest.fixture
def make_stream():
    return stream


def random_streams(seed, n_a, n_b, span):
    rng = np.random.default_rng(seed)
    a = stream(
        "A",
        np.sort(rng.integers(0, span, n_a)),
        rng.integers(0, 2, n_a),
        rng.integers(0, 2, n_a),
        duration=span * 1e-12,
    )
    b = stream(
        "B",
        np.sort(rng.integers(0, span, n_b)),
        rng.integers(0, 2, n_b),
        rng.integers(0, 2, n_b),
        duration=span * 1e-12,
    )
    return a, b


@pytest.fixture
def make_random_streams():
    return random_streams
