"""Length-prefixed binary encoding used by every serialized blob.

Layout rules, frozen by golden tests: version byte 0x01 leads every blob;
integers are little-endian; byte strings and UTF-8 strings are prefixed
with a u32 length.
"""

from __future__ import annotations

import struct

VERSION = 0x01


class WireError(ValueError):
    pass


class Writer:
    def __init__(self, versioned: bool = True):
        self._parts: list[bytes] = []
        if versioned:
            self.u8(VERSION)

    def u8(self, v: int) -> "Writer":
        self._parts.append(struct.pack("<B", v))
        return self

    def u32(self, v: int) -> "Writer":
        self._parts.append(struct.pack("<I", v))
        return self

    def u64(self, v: int) -> "Writer":
        self._parts.append(struct.pack("<Q", v))
        return self

    def i64(self, v: int) -> "Writer":
        self._parts.append(struct.pack("<q", v))
        return self

    def raw(self, b: bytes) -> "Writer":
        self._parts.append(b)
        return self

    def bytes(self, b: bytes) -> "Writer":
        self.u32(len(b))
        self._parts.append(b)
        return self

    def str(self, s: str) -> "Writer":
        return self.bytes(s.encode("utf-8"))

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes, versioned: bool = True):
        self._data = data
        self._pos = 0
        if versioned:
            v = self.u8()
            if v != VERSION:
                raise WireError(f"unsupported blob version {v}")

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise WireError("truncated blob")
        out = self._data[self._pos:self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return struct.unpack("<B", self._take(1))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def i64(self) -> int:
        return struct.unpack("<q", self._take(8))[0]

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def bytes(self) -> bytes:
        return self._take(self.u32())

    def str(self) -> str:
        return self.bytes().decode("utf-8")

    def done(self) -> bool:
        return self._pos == len(self._data)

    def expect_done(self) -> None:
        if not self.done():
            raise WireError("trailing bytes in blob")
