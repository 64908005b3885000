"""Little-endian primitives for the package's binary artifact formats."""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError
from .numeric import StandardScaler


class Writer:
    def __init__(self):
        self._parts: list[bytes] = []

    def raw(self, data: bytes):
        self._parts.append(data)

    def u8(self, x: int):
        self._parts.append(struct.pack("<B", x))

    def u16(self, x: int):
        self._parts.append(struct.pack("<H", x))

    def u32(self, x: int):
        self._parts.append(struct.pack("<I", x))

    def u64(self, x: int):
        self._parts.append(struct.pack("<Q", x))

    def f64(self, x: float):
        self._parts.append(struct.pack("<d", x))

    def text(self, s: str):
        data = s.encode("utf-8")
        if len(data) > 0xFFFF:
            raise FormatError("string longer than 65535 bytes")
        self.u16(len(data))
        self._parts.append(data)

    def array_f64(self, arr: np.ndarray):
        self._parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    def matrix_f64(self, arr: np.ndarray):
        arr = np.asarray(arr, dtype=np.float64)
        self.u64(arr.shape[0])
        self.u64(arr.shape[1])
        self.array_f64(arr)

    def scaler(self, scaler: StandardScaler):
        self.u64(scaler.dim)
        self.array_f64(scaler.means)
        self.array_f64(scaler.scales)

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def raw(self, n: int) -> bytes:
        if n < 0 or self._pos + n > len(self._data):
            raise FormatError("unexpected end of file")
        out = self._data[self._pos:self._pos + n]
        self._pos += n
        return out

    def _unpack(self, fmt: str):
        return struct.unpack(fmt, self.raw(struct.calcsize(fmt)))[0]

    def u8(self) -> int:
        return self._unpack("<B")

    def u16(self) -> int:
        return self._unpack("<H")

    def u32(self) -> int:
        return self._unpack("<I")

    def u64(self) -> int:
        return self._unpack("<Q")

    def f64(self) -> float:
        return self._unpack("<d")

    def text(self) -> str:
        n = self.u16()
        try:
            return self.raw(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"invalid UTF-8 string: {exc}") from None

    def array(self, count: int, dtype: str) -> np.ndarray:
        dt = np.dtype(dtype)
        buf = self.raw(count * dt.itemsize)
        return np.frombuffer(buf, dtype=dt, count=count).astype(dt.newbyteorder("="))

    def matrix_f64(self) -> np.ndarray:
        rows, cols = self.u64(), self.u64()
        return self.array(rows * cols, "<f8").reshape(rows, cols)

    def scaler(self) -> StandardScaler:
        dim = self.u64()
        means = self.array(dim, "<f8")
        scales = self.array(dim, "<f8")
        try:
            return StandardScaler(means, scales)
        except ValueError as exc:
            raise FormatError(f"invalid scaler block: {exc}") from None

    def expect_magic(self, magic: bytes, version: int):
        if self.raw(len(magic)) != magic:
            raise FormatError(f"bad magic, expected {magic!r}")
        found = self.u32()
        if found != version:
            raise FormatError(f"unsupported version {found}, expected {version}")

    def at_end(self) -> bool:
        return self._pos == len(self._data)
