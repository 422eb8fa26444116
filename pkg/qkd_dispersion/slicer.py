import math
import typing


class TimeChunk(typing.NamedTuple):
    index: int
    start: int
    stop: int

    @property
    def length(self):
        return self.stop - self.start


class TimeSlicer:
    """Cut the half-open interval [0, total) ps into consecutive chunks.

    The chunk plan depends only on `total` and `chunk_size`, never on how
    many workers later consume it.
    """

    def __init__(self, chunk_size=None):
        if chunk_size is not None and chunk_size <= 0:
            raise ValueError(f"chunk size must be > 0, got {chunk_size!r}")
        self._chunk_size = chunk_size

    def slice(self, total):
        total = int(total)
        if total <= 0:
            return []
        if self._chunk_size is None:
            # get all
            return [TimeChunk(0, 0, total)]

        size = int(self._chunk_size)
        count = math.ceil(total / size)
        # the last chunk keeps the remainder
        return [
            TimeChunk(index, index * size, min((index + 1) * size, total))
            for index in range(count)
        ]


def seconds_to_ps(seconds):
    return int(round(seconds * 1e12))
