from __future__ import annotations

import pytest

from edgevad.binio import (
    BadMagicError,
    Reader,
    SizeMismatchError,
    TruncatedError,
    UnsupportedVersionError,
    Writer,
)


def test_scalar_fields_round_trip():
    w = Writer()
    w.u8(200)
    w.u16(0xBEEF)
    w.u32(0xDEADBEEF)
    w.u64(2**63 + 17)
    w.f32(1.5)
    w.utf8_u16("grüße/слон")
    r = Reader(w.getvalue())
    assert r.u8() == 200
    assert r.u16() == 0xBEEF
    assert r.u32() == 0xDEADBEEF
    assert r.u64() == 2**63 + 17
    assert r.f32() == 1.5
    assert r.utf8_u16() == "grüße/слон"
    r.expect_end()


def test_fields_are_little_endian():
    w = Writer()
    w.u16(0x0102)
    w.u32(0x01020304)
    assert w.getvalue() == bytes([0x02, 0x01, 0x04, 0x03, 0x02, 0x01])


def test_take_past_end_raises_truncated():
    r = Reader(b"abc")
    r.take(2)
    with pytest.raises(TruncatedError):
        r.take(2)


def test_expect_magic_mismatch():
    r = Reader(b"XXXX rest")
    with pytest.raises(BadMagicError):
        r.expect_magic(b"VPLD")


def test_expect_magic_on_short_stream_is_truncation():
    with pytest.raises(TruncatedError):
        Reader(b"VP").expect_magic(b"VPLD")


def test_expect_version_mismatch():
    w = Writer()
    w.u8(2)
    with pytest.raises(UnsupportedVersionError):
        Reader(w.getvalue()).expect_version(1)


def test_trailing_bytes_raise_size_mismatch():
    r = Reader(b"ab")
    r.take(1)
    with pytest.raises(SizeMismatchError):
        r.expect_end()


def test_utf8_u16_length_limit():
    w = Writer()
    with pytest.raises(ValueError):
        w.utf8_u16("x" * 70000)
