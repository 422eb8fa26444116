"""
qkd_dispersion.analysis
~~~~~~~~~~~~~~~~~~~~~~~

From two tag streams to the link observables: cross-correlation
histograms, Gaussian peak fits, coincidence tallies, QBER and the
window-optimized secure key rate.

Delays are always ``t_A - t_B`` in picoseconds.
"""

import enum
import logging
import math
import typing
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import curve_fit
from scipy.special import entr

from .compat import map_numerical_exceptions
from .exceptions import DomainError, FitError, UndefinedQBERError
from .physics import klyshko_efficiency, transmission_to_db
from .tags import Basis, SETTING_LABELS
from .workers import WorkerPool

logger = logging.getLogger(__name__)

DEFAULT_SEARCH_RANGE = 2000.0
DEFAULT_ERROR_CORRECTION = 1.1
FOUR_LN2 = 4.0 * math.log(2.0)


class Normalization(str, enum.Enum):
    RAW = "raw"
    PER_SECOND = "per-second"


@dataclass(frozen=True, eq=False)
class CorrelationHistogram:
    bin_width: float
    start_delay: float
    counts: np.ndarray
    duration: float
    normalization: Normalization = Normalization.RAW

    def __post_init__(self):
        counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or len(counts) == 0:
            raise DomainError("a histogram needs at least one bin")
        if np.any(counts < 0):
            raise DomainError("histogram counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "normalization", Normalization(self.normalization))

    @property
    def delays(self):
        """Bin centers in ps."""
        return self.start_delay + self.bin_width * np.arange(len(self.counts))

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def rates(self):
        if self.duration <= 0:
            return np.zeros(len(self.counts))
        return self.counts / self.duration

    @property
    def values(self):
        if self.normalization is Normalization.PER_SECOND:
            return self.rates
        return self.counts.astype(float)

    def normalized(self, normalization):
        return CorrelationHistogram(
            self.bin_width, self.start_delay, self.counts, self.duration, normalization
        )


@dataclass(frozen=True)
class GaussianFit:
    amplitude: float
    center: float
    fwhm: float
    floor: float
    rms_residual: float

    def evaluate(self, delays):
        return gaussian_peak(delays, self.amplitude, self.center, self.fwhm, self.floor)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class CoincidenceTally:
    correct_hv: int = 0
    erroneous_hv: int = 0
    correct_da: int = 0
    erroneous_da: int = 0
    mixed: int = 0
    duration: float = 0.0

    def __post_init__(self):
        for name in ("correct_hv", "erroneous_hv", "correct_da", "erroneous_da", "mixed"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")

    @property
    def cc_correct(self):
        return self.correct_hv + self.correct_da

    @property
    def cc_erroneous(self):
        return self.erroneous_hv + self.erroneous_da

    @property
    def total(self):
        """Same-basis coincidences."""
        return self.cc_correct + self.cc_erroneous

    @property
    def matched(self):
        """All matched pairs, mixed-basis ones included."""
        return self.total + self.mixed

    @property
    def rate(self):
        return self.total / self.duration if self.duration > 0 else 0.0

    def per_basis(self):
        return {
            Basis.HV: (self.correct_hv, self.erroneous_hv),
            Basis.DA: (self.correct_da, self.erroneous_da),
        }


@dataclass(frozen=True)
class KeyRateReport:
    t_cc: float
    delay_used: float
    cc_total_rate: float
    qber: float
    secure_key_rate: float
    raw_key_rate: float
    fwhm: typing.Optional[float] = None
    qber_per_basis: typing.Dict[str, typing.Optional[float]] = field(default_factory=dict)
    cc_correct: int = 0
    cc_erroneous: int = 0

    def to_dict(self):
        return asdict(self)


def gaussian_peak(x, amplitude, center, fwhm, floor):
    return amplitude * np.exp(-FOUR_LN2 * (x - center) ** 2 / fwhm ** 2) + floor


def _histogram_span(bin_width, search_range, center):
    if not bin_width > 0:
        raise DomainError(f"bin width must be > 0, got {bin_width!r}")
    if not search_range >= 0:
        raise DomainError(f"search range must be >= 0, got {search_range!r}")
    n_bins = int(math.floor(2.0 * search_range / bin_width + 1e-9)) + 1
    return center - search_range, n_bins


def _partners(times_a, times_b, low, high):
    """Index range into `times_b` of partners with delay in [low, high]."""
    first = np.searchsorted(times_b, times_a - high, side="left")
    last = np.searchsorted(times_b, times_a - low, side="right")
    return first, last


def _bin_shard(times_a, times_b, start, stop, bin_width, n_bins):
    first, last = _partners(times_a, times_b, start, stop)
    per_a = last - first
    pairs = int(per_a.sum())
    if pairs == 0:
        return np.zeros(n_bins, dtype=np.int64)
    offsets = np.cumsum(per_a) - per_a
    b_index = np.arange(pairs) - np.repeat(offsets, per_a) + np.repeat(first, per_a)
    delays = np.repeat(times_a, per_a) - times_b[b_index]
    bins = np.floor((delays - start) / bin_width + 0.5).astype(np.int64)
    # the outer half bins are folded into the edge bins
    bins = np.clip(bins, 0, n_bins - 1)
    return np.bincount(bins, minlength=n_bins).astype(np.int64)


def cross_correlate(tags_a, tags_b, bin_width=1.0, search_range=DEFAULT_SEARCH_RANGE,
                    center=0.0, threads=None, shards=None):
    """Histogram of all pair delays ``t_A - t_B`` within ``center +- search_range``.

    Bins are centered on ``center - search_range + k * bin_width``. Exactly
    the pairs with delay inside the closed search range are counted, so the
    total does not depend on the bin width. The A stream may be sharded
    across workers; shard counts are summed exactly.

    :rtype: CorrelationHistogram
    """
    start, n_bins = _histogram_span(bin_width, search_range, center)
    stop = center + search_range
    times_a = tags_a.timestamps
    times_b = tags_b.timestamps
    duration = max(tags_a.duration, tags_b.duration)

    if len(times_a) == 0 or len(times_b) == 0:
        return CorrelationHistogram(bin_width, start, np.zeros(n_bins, dtype=np.int64), duration)

    with WorkerPool(threads) as pool:
        n_shards = shards or pool.threads
        pieces = np.array_split(times_a, max(1, min(n_shards, len(times_a))))
        counts = pool.map(
            lambda piece: _bin_shard(piece, times_b, start, stop, bin_width, n_bins), pieces
        )
    total = np.sum(counts, axis=0, dtype=np.int64)
    logger.debug(f"cross-correlated {len(times_a)}x{len(times_b)} tags, {int(total.sum())} pairs")
    return CorrelationHistogram(bin_width, start, total, duration)


def fit_gaussian(hist):
    """Least-squares fit of a Gaussian peak on a constant floor.

    :raises FitError: when no peak stands out of the floor or the
        optimizer fails; ``diagnostics`` holds the initial guesses.
    """
    x = hist.delays.astype(float)
    y = hist.counts.astype(float)

    floor0 = float(np.median(y))
    peak_index = int(np.argmax(y))
    amplitude0 = float(y[peak_index] - floor0)
    center0 = float(x[peak_index])
    fwhm0 = max(float(np.count_nonzero(y >= floor0 + amplitude0 / 2.0)) * hist.bin_width,
                hist.bin_width)
    diagnostics = {
        "initial_amplitude": amplitude0,
        "initial_center": center0,
        "initial_fwhm": fwhm0,
        "initial_floor": floor0,
        "bins": len(y),
    }
    logger.debug(f"gaussian fit initial guesses: {diagnostics}")

    threshold = 5.0 * math.sqrt(max(floor0, 1.0))
    if amplitude0 <= threshold:
        diagnostics["cause"] = "no peak above the floor"
        raise FitError(
            f"peak height {amplitude0:.3g} does not exceed the floor noise threshold {threshold:.3g}",
            diagnostics=diagnostics,
        )
    if len(y) < 4:
        diagnostics["cause"] = "fewer bins than fit parameters"
        raise FitError("histogram has fewer bins than fit parameters", diagnostics=diagnostics)

    with map_numerical_exceptions(diagnostics):
        popt, _ = curve_fit(
            gaussian_peak,
            x,
            y,
            p0=[amplitude0, center0, fwhm0, floor0],
            bounds=([0.0, x[0], 1e-9, 0.0], [np.inf, x[-1], np.inf, np.inf]),
            method="trf",
            xtol=1e-8,
            max_nfev=200,
        )
    amplitude, center, fwhm, floor = (float(value) for value in popt)
    residual = y - gaussian_peak(x, amplitude, center, fwhm, floor)
    return GaussianFit(
        amplitude=amplitude,
        center=center,
        fwhm=fwhm,
        floor=floor,
        rms_residual=float(np.sqrt(np.mean(residual ** 2))),
    )


class _Candidates:
    """Tags that have at least one partner within ``delay +- reach``.

    Dropping tags without any partner never changes a greedy decision, so
    matching can run on this reduced set for every window up to 2*reach.
    """

    def __init__(self, tags_a, tags_b, delay, reach):
        ta, tb = tags_a.timestamps, tags_b.timestamps
        lo_a = np.searchsorted(tb, ta - delay - reach, side="left")
        hi_a = np.searchsorted(tb, ta - delay + reach, side="right")
        keep_a = hi_a > lo_a
        lo_b = np.searchsorted(ta, tb + delay - reach, side="left")
        hi_b = np.searchsorted(ta, tb + delay + reach, side="right")
        keep_b = hi_b > lo_b

        self.delay = delay
        self.duration = max(tags_a.duration, tags_b.duration)
        self.a = (
            ta[keep_a].tolist(), tags_a.bases[keep_a].tolist(), tags_a.outcomes[keep_a].tolist()
        )
        self.b = (
            tb[keep_b].tolist(), tags_b.bases[keep_b].tolist(), tags_b.outcomes[keep_b].tolist()
        )

    def match(self, t_cc):
        half = t_cc / 2.0
        times_a, bases_a, outcomes_a = self.a
        times_b, bases_b, outcomes_b = self.b
        i = j = 0
        pairs = []
        while i < len(times_a) and j < len(times_b):
            offset = times_a[i] - times_b[j] - self.delay
            if offset < -half:
                i += 1
            elif offset > half:
                j += 1
            else:
                pairs.append((i, j))
                i += 1
                j += 1
        return _tally(pairs, self.a, self.b, self.duration)


def _tally(pairs, a, b, duration):
    _, bases_a, outcomes_a = a
    _, bases_b, outcomes_b = b
    counts = {"correct_hv": 0, "erroneous_hv": 0, "correct_da": 0, "erroneous_da": 0, "mixed": 0}
    for i, j in pairs:
        if bases_a[i] != bases_b[j]:
            counts["mixed"] += 1
            continue
        suffix = "hv" if bases_a[i] == Basis.HV else "da"
        verdict = "correct" if outcomes_a[i] == outcomes_b[j] else "erroneous"
        counts[f"{verdict}_{suffix}"] += 1
    return CoincidenceTally(duration=duration, **counts)


def _check_window(t_cc):
    if not t_cc > 0:
        raise DomainError(f"coincidence window must be > 0, got {t_cc!r}")


def count_coincidences(tags_a, tags_b, delay, t_cc):
    """Greedy one-to-one matching of pairs with ``|t_A - t_B - delay| <= t_cc/2``.

    :rtype: CoincidenceTally
    """
    _check_window(t_cc)
    return _Candidates(tags_a, tags_b, delay, t_cc / 2.0).match(t_cc)


def count_coincidences_reference(tags_a, tags_b, delay, t_cc):
    """All-pairs O(N*M) matcher: each A tag, in time order, takes the
    earliest unused B tag inside the window."""
    _check_window(t_cc)
    half = t_cc / 2.0
    a = (tags_a.timestamps.tolist(), tags_a.bases.tolist(), tags_a.outcomes.tolist())
    b = (tags_b.timestamps.tolist(), tags_b.bases.tolist(), tags_b.outcomes.tolist())
    used = [False] * len(b[0])
    pairs = []
    for i, time_a in enumerate(a[0]):
        for j, time_b in enumerate(b[0]):
            if not used[j] and abs(time_a - time_b - delay) <= half:
                used[j] = True
                pairs.append((i, j))
                break
    return _tally(pairs, a, b, max(tags_a.duration, tags_b.duration))


def qber(tally):
    total = tally.total
    if total == 0:
        raise UndefinedQBERError("no same-basis coincidences to estimate the QBER from")
    return tally.cc_erroneous / total


def basis_qbers(tally):
    result = {}
    for basis, (correct, erroneous) in tally.per_basis().items():
        total = correct + erroneous
        result[basis.name] = erroneous / total if total else None
    return result


def binary_entropy(x):
    """H2(x) in bits; H2(0) = H2(1) = 0."""
    values = np.asarray(x, dtype=float)
    if np.any(np.isnan(values)) or np.any((values < 0) | (values > 1)):
        raise DomainError(f"binary entropy needs x in [0, 1], got {x!r}")
    h2 = (entr(values) + entr(1.0 - values)) / math.log(2.0)
    return float(h2) if h2.ndim == 0 else h2


def raw_key_rate(cc_total_rate, qber_value, f=DEFAULT_ERROR_CORRECTION):
    """Asymptotic key rate formula before clamping; negative means no key."""
    if not cc_total_rate >= 0:
        raise DomainError(f"coincidence rate must be >= 0, got {cc_total_rate!r}")
    if not f >= 1:
        raise DomainError(f"error correction efficiency must be >= 1, got {f!r}")
    return cc_total_rate * (1.0 - (1.0 + f) * binary_entropy(qber_value))


def secure_key_rate(cc_total_rate, qber_value, f=DEFAULT_ERROR_CORRECTION):
    return max(0.0, raw_key_rate(cc_total_rate, qber_value, f))


def window_grid(fwhm):
    """Even windows 2, 4, ... up to 8*fwhm, plus the fwhm itself."""
    if not fwhm > 0:
        raise DomainError(f"peak FWHM must be > 0, got {fwhm!r}")
    top = max(2, int(math.floor(8.0 * fwhm / 2.0)) * 2)
    grid = set(float(t) for t in range(2, top + 1, 2))
    grid.add(float(fwhm))
    return sorted(grid)


def _report(tally, t_cc, delay, fwhm, f):
    per_basis = basis_qbers(tally)
    defined = [value for value in per_basis.values() if value is not None]
    averaged = float(np.mean(defined)) if defined else 0.5
    rate = tally.rate
    raw = raw_key_rate(rate, averaged, f) if rate > 0 else 0.0
    return KeyRateReport(
        t_cc=t_cc,
        delay_used=delay,
        cc_total_rate=rate,
        qber=averaged,
        secure_key_rate=max(0.0, raw),
        raw_key_rate=raw,
        fwhm=fwhm,
        qber_per_basis=per_basis,
        cc_correct=tally.cc_correct,
        cc_erroneous=tally.cc_erroneous,
    )


def optimize_window(tags_a, tags_b, delay=None, fwhm=None, f=DEFAULT_ERROR_CORRECTION,
                    search_range=DEFAULT_SEARCH_RANGE):
    """Grid-search the coincidence window for the highest secure key rate.

    QBER is the mean of the per-basis QBERs and the coincidence rate pools
    both bases. When no window yields key, the window with the most
    coincidences is reported with a zero key rate.

    :param delay: (optional) peak delay in ps; located from the data when omitted.
    :param fwhm: (optional) peak FWHM in ps; fitted when omitted.
    :rtype: KeyRateReport
    """
    if delay is None or fwhm is None:
        center = 0.0 if delay is None else delay
        if delay is None:
            center = find_delay(tags_a, tags_b)
        fit = fit_gaussian(cross_correlate(tags_a, tags_b, 1.0, search_range, center))
        if delay is None:
            delay = float(round(fit.center))
        if fwhm is None:
            fwhm = fit.fwhm

    grid = window_grid(fwhm)
    candidates = _Candidates(tags_a, tags_b, delay, grid[-1] / 2.0)
    best = fallback = None
    for t_cc in grid:
        report = _report(candidates.match(t_cc), t_cc, delay, fwhm, f)
        if best is None or report.secure_key_rate > best.secure_key_rate:
            best = report
        if fallback is None or report.cc_total_rate > fallback.cc_total_rate:
            fallback = report
    chosen = best if best.secure_key_rate > 0 else fallback
    logger.debug(
        f"window scan over {len(grid)} windows: t_cc={chosen.t_cc} R_s={chosen.secure_key_rate:.4g}"
    )
    return chosen


def find_delay(tags_a, tags_b, search_range=20000.0, bin_width=10.0):
    """Delay (ps) of the strongest correlation peak within ``+-search_range``."""
    hist = cross_correlate(tags_a, tags_b, bin_width, search_range)
    if hist.total == 0:
        raise FitError("no tag pairs within the delay search range", diagnostics={
            "search_range": search_range, "bin_width": bin_width,
        })
    return float(hist.delays[int(np.argmax(hist.counts))])


@dataclass(frozen=True)
class SettingFits:
    fits: typing.Dict[str, GaussianFit]
    failures: typing.Dict[str, str]

    @property
    def average_fwhm(self):
        if not self.fits:
            return None
        return float(np.mean([fit.fwhm for fit in self.fits.values()]))

    def to_dict(self):
        return {
            "fits": {label: fit.to_dict() for label, fit in self.fits.items()},
            "failures": dict(self.failures),
            "average_fwhm": self.average_fwhm,
        }


def setting_fits(tags_a, tags_b, delay=0.0, bin_width=1.0, search_range=DEFAULT_SEARCH_RANGE,
                 threads=None):
    """Fit the correct-correlation histogram of each equal setting (HH, VV, DD, AA).

    The mean FWHM of the successful fits is the link's measured timing
    spread; settings without a usable peak are listed in ``failures``.
    """
    fits, failures = {}, {}
    for (basis, outcome), label in SETTING_LABELS.items():
        hist = cross_correlate(
            tags_a.select(basis, outcome),
            tags_b.select(basis, outcome),
            bin_width,
            search_range,
            delay,
            threads=threads,
        )
        try:
            fits[label * 2] = fit_gaussian(hist)
        except FitError as exc:
            logger.warning(f"fit of setting {label * 2} failed: {exc}")
            failures[label * 2] = str(exc)
    return SettingFits(fits, failures)


@dataclass(frozen=True)
class TransmissionEstimate:
    eta_a: float
    eta_b: float
    coincidence_rate: float
    accidental_rate: float

    def losses_db(self):
        """Arm losses (dB) implied by the two heralding efficiencies."""
        return transmission_to_db(self.eta_a), transmission_to_db(self.eta_b)


def estimate_transmissions(tags_a, tags_b, delay, t_cc, noise_a=0.0, noise_b=0.0):
    """Heralding efficiencies of both arms from measured streams.

    Coincidences of every basis combination count; the expected accidental
    rate ``S_A * S_B * t_cc`` is subtracted first.
    """
    tally = count_coincidences(tags_a, tags_b, delay, t_cc)
    duration = tally.duration
    if not duration > 0:
        raise DomainError("streams without a duration carry no rates")
    singles_a, singles_b = tags_a.singles_rate, tags_b.singles_rate
    accidental = singles_a * singles_b * t_cc * 1e-12
    coincidence = tally.matched / duration - accidental
    return TransmissionEstimate(
        eta_a=klyshko_efficiency(coincidence, singles_b, noise_b),
        eta_b=klyshko_efficiency(coincidence, singles_a, noise_a),
        coincidence_rate=coincidence,
        accidental_rate=accidental,
    )
