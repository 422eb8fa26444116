"""
qkd_dispersion.tags
~~~~~~~~~~~~~~~~~~~

Detection events and the time-tag file format.

A file holds the stream of one party::

    timestamp_ps,party,basis,outcome
    1043,A,HV,0
    2871,A,DA,1

Records are sorted by timestamp; a ``.gz`` suffix selects gzip compression.
"""

import enum
import logging
import typing
from dataclasses import dataclass

import numpy as np

from .compression import get_codec
from .exceptions import TagParseError, UnsortedStreamError

logger = logging.getLogger(__name__)

HEADER = "timestamp_ps,party,basis,outcome"


class Party(str, enum.Enum):
    A = "A"
    B = "B"


class Basis(enum.IntEnum):
    HV = 0
    DA = 1


#: polarization label of (basis, outcome)
SETTING_LABELS = {
    (Basis.HV, 0): "H",
    (Basis.HV, 1): "V",
    (Basis.DA, 0): "D",
    (Basis.DA, 1): "A",
}


@dataclass(frozen=True)
class TimeTag:
    timestamp: int
    party: Party
    basis: Basis
    outcome: int


def _frozen(array, dtype):
    array = np.ascontiguousarray(array, dtype=dtype)
    array.setflags(write=False)
    return array


class TagStream:
    """Time-sorted detections of one party, held column-wise.

    Columns are read-only numpy arrays; a stream is never modified after
    construction.
    """

    def __init__(self, party, timestamps, bases, outcomes, duration=None, validate=True):
        self.party = Party(party)
        self.timestamps = _frozen(timestamps, np.int64)
        self.bases = _frozen(bases, np.uint8)
        self.outcomes = _frozen(outcomes, np.uint8)
        if not (len(self.timestamps) == len(self.bases) == len(self.outcomes)):
            raise ValueError("timestamp, basis and outcome columns differ in length")
        if validate and len(self.timestamps) > 1 and np.any(np.diff(self.timestamps) < 0):
            raise UnsortedStreamError(f"stream of party {self.party.value} is not sorted")
        if duration is None:
            duration = (int(self.timestamps[-1]) + 1) * 1e-12 if len(self.timestamps) else 0.0
        self.duration = float(duration)

    @classmethod
    def empty(cls, party, duration=0.0):
        return cls(party, [], [], [], duration=duration)

    def __len__(self):
        return len(self.timestamps)

    def __iter__(self):
        for timestamp, basis, outcome in zip(
            self.timestamps.tolist(), self.bases.tolist(), self.outcomes.tolist()
        ):
            yield TimeTag(timestamp, self.party, Basis(basis), outcome)

    def __eq__(self, other):
        if not isinstance(other, TagStream):
            return NotImplemented
        return (
            self.party is other.party
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.bases, other.bases)
            and np.array_equal(self.outcomes, other.outcomes)
        )

    def __repr__(self):
        return f"<TagStream party={self.party.value} tags={len(self)} duration={self.duration}s>"

    @property
    def singles_rate(self):
        return len(self) / self.duration if self.duration > 0 else 0.0

    def select(self, basis=None, outcome=None):
        """Sub-stream restricted to one basis and/or one outcome."""
        mask = np.ones(len(self), dtype=bool)
        if basis is not None:
            mask &= self.bases == int(basis)
        if outcome is not None:
            mask &= self.outcomes == int(outcome)
        return TagStream(
            self.party,
            self.timestamps[mask],
            self.bases[mask],
            self.outcomes[mask],
            duration=self.duration,
            validate=False,
        )

    @classmethod
    def from_tags(cls, tags: typing.Iterable[TimeTag], party=None, duration=None):
        tags = list(tags)
        if party is None:
            party = tags[0].party if tags else Party.A
        return cls(
            party,
            [tag.timestamp for tag in tags],
            [int(tag.basis) for tag in tags],
            [tag.outcome for tag in tags],
            duration=duration,
        )


def write_tags(stream, destination):
    """Serialize `stream` to `destination`; returns the number of records written."""
    codec = get_codec(destination)
    party = stream.party.value
    names = [basis.name for basis in Basis]
    logger.debug(f"write {len(stream)} tags of party {party} => {destination!s}")
    with codec.open_write(destination) as fh:
        fh.write(HEADER + "\n")
        lines = [
            f"{timestamp},{party},{names[basis]},{outcome}\n"
            for timestamp, basis, outcome in zip(
                stream.timestamps.tolist(), stream.bases.tolist(), stream.outcomes.tolist()
            )
        ]
        fh.writelines(lines)
    return len(stream)


def _parse_record(line, lineno):
    fields = line.rstrip("\r\n").split(",")
    if len(fields) != 4:
        raise TagParseError(f"expected 4 fields, got {len(fields)}", line=lineno)
    raw_timestamp, raw_party, raw_basis, raw_outcome = fields
    try:
        timestamp = int(raw_timestamp)
    except ValueError:
        raise TagParseError(f"invalid timestamp {raw_timestamp!r}", line=lineno) from None
    if timestamp < 0:
        raise TagParseError(f"negative timestamp {timestamp}", line=lineno)
    if raw_party not in ("A", "B"):
        raise TagParseError(f"invalid party {raw_party!r}", line=lineno)
    try:
        basis = Basis[raw_basis]
    except KeyError:
        raise TagParseError(f"invalid basis {raw_basis!r}", line=lineno) from None
    if raw_outcome not in ("0", "1"):
        raise TagParseError(f"invalid outcome {raw_outcome!r}", line=lineno)
    return timestamp, raw_party, int(basis), int(raw_outcome)


def read_tags(source, duration=None, party=None):
    """Parse a time-tag file written by :func:`write_tags`.

    :param source: path of a plain or ``.gz`` tag file.
    :param duration: (optional) acquisition time in seconds; inferred from the
        last timestamp when omitted.
    :param party: (optional) expected party; also names the party of an
        empty file.
    :rtype: TagStream
    """
    codec = get_codec(source)
    timestamps, bases, outcomes = [], [], []
    expected = None if party is None else Party(party).value
    party = None
    with codec.open_read(source) as fh:
        header = fh.readline().rstrip("\r\n")
        if header != HEADER:
            raise TagParseError(f"expected header {HEADER!r}, got {header!r}", line=1)
        previous = None
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            timestamp, line_party, basis, outcome = _parse_record(line, lineno)
            if party is None:
                party = line_party
            if line_party != (expected or party):
                raise TagParseError(
                    f"party {line_party} in a stream of party {expected or party}", line=lineno
                )
            if previous is not None and timestamp < previous:
                raise UnsortedStreamError(
                    f"line {lineno}: timestamp {timestamp} precedes {previous}"
                )
            previous = timestamp
            timestamps.append(timestamp)
            bases.append(basis)
            outcomes.append(outcome)
    logger.debug(f"read {len(timestamps)} tags <= {source!s}")
    return TagStream(
        party or expected or Party.A, timestamps, bases, outcomes,
        duration=duration, validate=False,
    )
