"""
qkd_dispersion.montecarlo
~~~~~~~~~~~~~~~~~~~~~~~~~

Seeded event-level generation of the two parties' time-tag streams.

Pairs are thinned early: per time chunk the number of pairs detected by
both parties, only by A, only by B or by nobody is drawn from one
multinomial, and timing/polarization samples are produced for detected
photons only. Every chunk draws from its own Philox substreams keyed by
``(seed, run.stream, chunk index, category)``, so the merged output does
not depend on how many threads generated it.
"""

import enum
import logging
import math
import typing
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, SimulationCapacityError
from .physics import (
    SpectrumShape,
    arm_dispersion_total,
    arm_transmission,
    fwhm_to_sigma,
)
from .slicer import TimeSlicer, seconds_to_ps
from .tags import Basis, Party, TagStream
from .workers import WorkerPool

logger = logging.getLogger(__name__)


class BasisMode(str, enum.Enum):
    FIXED = "fixed"
    RANDOM = "random"


class Category(enum.IntEnum):
    PAIRS = 0
    DARK_A = 1
    DARK_B = 2


@dataclass(frozen=True)
class SettingBlock:
    basis_a: Basis
    basis_b: Basis
    duration_s: float

    def __post_init__(self):
        object.__setattr__(self, "basis_a", Basis(self.basis_a))
        object.__setattr__(self, "basis_b", Basis(self.basis_b))
        if not self.duration_s >= 0:
            raise DomainError(f"setting block duration must be >= 0, got {self.duration_s!r}")


def default_settings(duration_s):
    """Equal HV/HV and DA/DA acquisition halves."""
    half = duration_s / 2.0
    return (
        SettingBlock(Basis.HV, Basis.HV, half),
        SettingBlock(Basis.DA, Basis.DA, half),
    )


@dataclass(frozen=True)
class SimulationRun:
    seed: int
    duration_s: float = 1.0
    basis_mode: BasisMode = BasisMode.FIXED
    settings: typing.Tuple[SettingBlock, ...] = ()
    chunk_duration_s: float = 0.01
    max_events: int = 50_000_000
    stream: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if not self.duration_s >= 0:
            raise DomainError(f"duration must be >= 0, got {self.duration_s!r}")
        if not self.chunk_duration_s > 0:
            raise DomainError(f"chunk duration must be > 0, got {self.chunk_duration_s!r}")
        if self.max_events < 0:
            raise DomainError(f"max_events must be >= 0, got {self.max_events!r}")
        if self.stream < 0:
            raise DomainError(f"stream id must be >= 0, got {self.stream!r}")
        object.__setattr__(self, "basis_mode", BasisMode(self.basis_mode))
        settings = tuple(self.settings) or default_settings(self.duration_s)
        total = math.fsum(block.duration_s for block in settings)
        if not math.isclose(total, self.duration_s, rel_tol=1e-9, abs_tol=1e-12):
            raise DomainError(
                f"setting blocks last {total} s but the run lasts {self.duration_s} s"
            )
        object.__setattr__(self, "settings", settings)

    @property
    def duration_ps(self):
        return seconds_to_ps(self.duration_s)


class _SettingSchedule:
    """Analyzer basis of each party as a function of time (fixed mode)."""

    def __init__(self, settings):
        stops = np.cumsum([block.duration_s for block in settings])
        self.stops = np.array([seconds_to_ps(stop) for stop in stops], dtype=np.int64)
        self.bases_a = np.array([int(block.basis_a) for block in settings], dtype=np.uint8)
        self.bases_b = np.array([int(block.basis_b) for block in settings], dtype=np.uint8)

    def lookup(self, times, party):
        index = np.searchsorted(self.stops, times, side="right")
        index = np.minimum(index, len(self.stops) - 1)
        bases = self.bases_a if party is Party.A else self.bases_b
        return bases[index]


class _ArmPlan(typing.NamedTuple):
    eta: float
    dispersion: float
    delay: float
    jitter_sigma: float
    dark_rate: float


def _arm_plan(arm):
    return _ArmPlan(
        eta=arm_transmission(arm),
        dispersion=arm_dispersion_total(arm),
        delay=arm.propagation_delay,
        jitter_sigma=fwhm_to_sigma(arm.detector.jitter_fwhm),
        dark_rate=arm.detector.dark_count_rate,
    )


def expected_singles_rate(scenario, party):
    """Closed-form detected singles rate B*eta + DC of one party."""
    arm = scenario.arm_a if Party(party) is Party.A else scenario.arm_b
    return scenario.brightness * arm_transmission(arm) + arm.detector.dark_count_rate


def expected_event_count(scenario, run):
    return run.duration_s * (
        expected_singles_rate(scenario, Party.A) + expected_singles_rate(scenario, Party.B)
    )


def _generator(run, chunk_index, category):
    sequence = np.random.SeedSequence(
        run.seed, spawn_key=(run.stream, chunk_index, int(category))
    )
    return np.random.Generator(np.random.Philox(sequence))


class _ChunkGenerator:

    def __init__(self, scenario, run):
        self.scenario = scenario
        self.run = run
        self.arm_a = _arm_plan(scenario.arm_a)
        self.arm_b = _arm_plan(scenario.arm_b)
        self.schedule = _SettingSchedule(run.settings) if run.settings else None
        self.random_bases = run.basis_mode is BasisMode.RANDOM

    def _bases(self, rng, times, party):
        if self.random_bases:
            return rng.integers(0, 2, size=len(times), dtype=np.uint8)
        return self.schedule.lookup(times, party)

    def _detuning(self, rng, size):
        width = self.scenario.effective_spectral_width
        if self.scenario.spectrum.shape is SpectrumShape.GAUSSIAN:
            return rng.normal(0.0, fwhm_to_sigma(width), size=size)
        return rng.uniform(-width / 2.0, width / 2.0, size=size)

    def _pairs(self, chunk):
        rng = _generator(self.run, chunk.index, Category.PAIRS)
        eta_a, eta_b = self.arm_a.eta, self.arm_b.eta
        p_both = eta_a * eta_b
        p_a = eta_a * (1.0 - eta_b)
        p_b = (1.0 - eta_a) * eta_b
        p_none = max(0.0, 1.0 - p_both - p_a - p_b)

        n_pairs = rng.poisson(self.scenario.brightness * chunk.length * 1e-12)
        n_both, n_a, n_b, _ = rng.multinomial(n_pairs, [p_both, p_a, p_b, p_none])
        n = n_both + n_a + n_b

        emitted = chunk.start + rng.uniform(0.0, chunk.length, size=n)
        detuning = self._detuning(rng, n)
        coherence_sigma = fwhm_to_sigma(self.scenario.coherence_fwhm)
        smear = rng.normal(0.0, coherence_sigma, size=n) if coherence_sigma > 0 else np.zeros(n)
        jitter_a = rng.normal(0.0, self.arm_a.jitter_sigma, size=n)
        jitter_b = rng.normal(0.0, self.arm_b.jitter_sigma, size=n)
        outcome_a = rng.integers(0, 2, size=n, dtype=np.uint8)
        flip = (rng.random(size=n) < self.scenario.optical_error).astype(np.uint8)
        outcome_free = rng.integers(0, 2, size=n, dtype=np.uint8)
        bases_a = self._bases(rng, emitted, Party.A)
        bases_b = self._bases(rng, emitted, Party.B)

        # anticorrelated detuning: +dl on A, -dl on B
        times_a = (
            emitted + self.arm_a.delay + detuning * self.arm_a.dispersion + smear / 2.0 + jitter_a
        )
        times_b = (
            emitted + self.arm_b.delay - detuning * self.arm_b.dispersion - smear / 2.0 + jitter_b
        )
        outcome_b = np.where(bases_a == bases_b, outcome_a ^ flip, outcome_free)
        # pairs seen only by B carry no partner correlation
        outcome_b[n_both + n_a:] = outcome_free[n_both + n_a:]

        seen_a = slice(0, n_both + n_a)
        seen_b = np.r_[0:n_both, n_both + n_a:n]
        return (
            (times_a[seen_a], bases_a[seen_a], outcome_a[seen_a]),
            (times_b[seen_b], bases_b[seen_b], outcome_b[seen_b]),
        )

    def _dark(self, chunk, party):
        category = Category.DARK_A if party is Party.A else Category.DARK_B
        plan = self.arm_a if party is Party.A else self.arm_b
        rng = _generator(self.run, chunk.index, category)
        k = rng.poisson(plan.dark_rate * chunk.length * 1e-12)
        times = chunk.start + rng.uniform(0.0, chunk.length, size=k)
        outcomes = rng.integers(0, 2, size=k, dtype=np.uint8)
        bases = self._bases(rng, times, party)
        return times, bases, outcomes

    def __call__(self, chunk):
        photons_a, photons_b = self._pairs(chunk)
        return (
            _concat(photons_a, self._dark(chunk, Party.A)),
            _concat(photons_b, self._dark(chunk, Party.B)),
        )


def _concat(*parts):
    times = np.concatenate([part[0] for part in parts])
    bases = np.concatenate([part[1] for part in parts]).astype(np.uint8)
    outcomes = np.concatenate([part[2] for part in parts]).astype(np.uint8)
    return times, bases, outcomes


def _merge(party, parts, duration_ps, duration_s):
    if parts:
        times, bases, outcomes = _concat(*parts)
    else:
        times = np.zeros(0)
        bases = outcomes = np.zeros(0, dtype=np.uint8)
    # 1 ps resolution
    stamps = np.floor(times).astype(np.int64)
    keep = (stamps >= 0) & (stamps < duration_ps)
    stamps, bases, outcomes = stamps[keep], bases[keep], outcomes[keep]
    order = np.argsort(stamps, kind="stable")
    return TagStream(
        party, stamps[order], bases[order], outcomes[order],
        duration=duration_s, validate=False,
    )


def simulate(scenario, run, threads=None):
    """Generate the sorted tag streams of both parties.

    :param scenario: :class:`LinkScenario` describing source, arms and detectors.
    :param run: :class:`SimulationRun` with seed, duration and basis schedule.
    :param threads: (optional) worker count; never changes the output.
    :rtype: tuple(TagStream, TagStream)
    """
    expected = expected_event_count(scenario, run)
    if expected > run.max_events:
        raise SimulationCapacityError(
            f"run would produce ~{expected:.3g} tags, capacity is {run.max_events}"
        )

    duration_ps = run.duration_ps
    chunks = TimeSlicer(seconds_to_ps(run.chunk_duration_s)).slice(duration_ps)
    logger.debug(
        f"simulate seed={run.seed} stream={run.stream} duration={run.duration_s}s "
        f"chunks={len(chunks)} expected_tags={expected:.3g}"
    )

    generate = _ChunkGenerator(scenario, run)
    with WorkerPool(threads) as pool:
        results = pool.map(generate, chunks)

    tags_a = _merge(Party.A, [result[0] for result in results], duration_ps, run.duration_s)
    tags_b = _merge(Party.B, [result[1] for result in results], duration_ps, run.duration_s)
    logger.info(f"simulated {len(tags_a)} tags at A, {len(tags_b)} tags at B")
    return tags_a, tags_b
