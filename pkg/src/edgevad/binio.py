"""Little-endian binary reader/writer shared by the wire and file formats.

Every serialized structure in this package (payload frames, codebooks,
memory banks, feature files) is built from the same small vocabulary of
fixed-width little-endian fields, so the cursor logic and the error
taxonomy live here once.
"""

from __future__ import annotations

import struct


class FormatError(Exception):
    """Base class for malformed serialized data."""


class BadMagicError(FormatError):
    """Leading magic bytes do not identify the expected format."""


class UnsupportedVersionError(FormatError):
    """Format version is not understood by this reader."""


class TruncatedError(FormatError):
    """Byte stream ended before the declared content."""


class SizeMismatchError(FormatError):
    """Declared sizes disagree with the actual byte length."""


class Reader:
    """Checked cursor over a bytes object."""

    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise TruncatedError(
                f"need {n} bytes at offset {self.pos}, only {self.remaining()} left"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def expect_magic(self, magic: bytes) -> None:
        if self.remaining() < len(magic):
            raise TruncatedError(f"stream shorter than magic {magic!r}")
        got = self.take(len(magic))
        if got != magic:
            raise BadMagicError(f"expected magic {magic!r}, found {got!r}")

    def expect_version(self, supported: int) -> int:
        version = self.u8()
        if version != supported:
            raise UnsupportedVersionError(
                f"version {version} not supported (expected {supported})"
            )
        return version

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f32(self) -> float:
        return struct.unpack("<f", self.take(4))[0]

    def utf8_u16(self) -> str:
        return self.take(self.u16()).decode("utf-8")

    def expect_end(self) -> None:
        if self.pos != len(self.data):
            raise SizeMismatchError(f"{self.remaining()} unexpected trailing bytes")


class Writer:
    """Accumulates little-endian fields into a bytearray."""

    def __init__(self):
        self.buf = bytearray()

    def raw(self, data: bytes) -> None:
        self.buf += data

    def u8(self, value: int) -> None:
        self.buf += struct.pack("<B", value)

    def u16(self, value: int) -> None:
        self.buf += struct.pack("<H", value)

    def u32(self, value: int) -> None:
        self.buf += struct.pack("<I", value)

    def u64(self, value: int) -> None:
        self.buf += struct.pack("<Q", value)

    def f32(self, value: float) -> None:
        self.buf += struct.pack("<f", value)

    def utf8_u16(self, text: str) -> None:
        data = text.encode("utf-8")
        if len(data) > 0xFFFF:
            raise ValueError("string too long for u16 length prefix")
        self.u16(len(data))
        self.raw(data)

    def getvalue(self) -> bytes:
        return bytes(self.buf)
