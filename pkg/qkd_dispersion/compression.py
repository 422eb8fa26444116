import gzip
import io
import typing
from pathlib import Path


class StreamCodec:

    def open_read(self, path: Path) -> typing.TextIO:
        raise NotImplementedError()  # pragma: no cover

    def open_write(self, path: Path) -> typing.TextIO:
        raise NotImplementedError()  # pragma: no cover


class IdentityCodec(StreamCodec):
    """
    Handle uncompressed text files.
    """

    def open_read(self, path):
        return open(path, "r", encoding="utf-8", newline="")

    def open_write(self, path):
        return open(path, "w", encoding="utf-8", newline="")


class GzipCodec(StreamCodec):
    """
    Handle '.gz' files.

    The gzip header is written with an empty file name and a zero mtime so
    that identical content always produces identical bytes.
    """

    def open_read(self, path):
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")

    def open_write(self, path):
        raw = open(path, "wb")
        compressed = gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0)
        return _OwningTextWriter(compressed, raw)


class _OwningTextWriter(io.TextIOWrapper):

    def __init__(self, compressed, raw):
        super().__init__(compressed, encoding="utf-8", newline="")
        self._raw = raw

    def close(self):
        try:
            super().close()
        finally:
            self._raw.close()


SUPPORTED_CODECS = {
    "": IdentityCodec,
    ".gz": GzipCodec,
}


def get_codec(path) -> StreamCodec:
    suffix = Path(path).suffix.lower()
    try:
        return SUPPORTED_CODECS[suffix]()
    except KeyError:
        return IdentityCodec()
