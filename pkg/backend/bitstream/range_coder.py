"""
32-bit range coder with carry propagation (low / cache / cache_size), 16-bit
frequency totals.

The first byte a carry-propagating coder emits is always zero and is not
stored. On ``finish`` the encoder picks the value of the final interval with
the most trailing zero bits; its low ``IMPLICIT_TAIL`` bytes are always zero
and are not stored either. The decoder supplies both, so a valid payload is
consumed exactly. An encoder that saw no symbol produces ``b""``.
"""
from typing import Optional, Sequence

import numpy as np

from backend.bitstream.tables import PRECISION, CdfTable
from backend.utils.exception import DecodeError, EncodeError

TOP = 1 << 24
MASK32 = 0xFFFFFFFF
BYPASS_HALF = 1 << (PRECISION - 1)
IMPLICIT_TAIL = 3


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = MASK32
        self.cache = 0
        self.cache_size = 1
        self.count = 0
        # bypass bits spent on escaped values
        self.escape_bits = 0
        self._out = bytearray()

    def _shift_low(self) -> None:
        if self.low < 0xFF000000 or self.low > MASK32:
            carry = self.low >> 32
            temp = self.cache
            while True:
                self._out.append((temp + carry) & 0xFF)
                temp = 0xFF
                self.cache_size -= 1
                if self.cache_size == 0:
                    break
            self.cache = (self.low >> 24) & 0xFF
        self.cache_size += 1
        self.low = (self.low & 0x00FFFFFF) << 8

    def encode_frequency(self, cum: int, freq: int) -> None:
        if freq <= 0:
            raise EncodeError(f"zero-frequency symbol (cum={cum})")
        r = self.range >> PRECISION
        self.low += r * cum
        self.range = r * freq
        self.count += 1
        while self.range < TOP:
            self.range = (self.range << 8) & MASK32
            self._shift_low()

    def encode_bit(self, bit: int) -> None:
        self.encode_frequency(BYPASS_HALF if bit else 0, BYPASS_HALF)

    def encode_uint(self, value: int) -> None:
        """Exp-Golomb (order 0) with bypass bits; used for escaped values."""
        value += 1
        k = value.bit_length() - 1
        self.escape_bits += 2 * k + 1
        for _ in range(k):
            self.encode_bit(1)
        self.encode_bit(0)
        for i in range(k - 1, -1, -1):
            self.encode_bit((value >> i) & 1)

    def encode_symbol(self, value: int, table: CdfTable) -> None:
        index = value - table.offset
        if 0 <= index < table.support:
            self.encode_frequency(int(table.cdf[index]), int(table.cdf[index + 1] - table.cdf[index]))
            return
        escape = table.escape
        self.encode_frequency(int(table.cdf[escape]), int(table.cdf[escape + 1] - table.cdf[escape]))
        # Signed value folded to unsigned (zigzag)
        self.encode_uint(2 * value if value >= 0 else -2 * value - 1)

    def finish(self) -> bytes:
        if self.count == 0:
            return b""
        # range >= TOP, so rounding low up to a multiple of TOP stays inside the interval
        self.low = -(-self.low // TOP) * TOP
        for _ in range(5):
            self._shift_low()
        out = bytes(self._out)
        if out[0] != 0 or any(out[-IMPLICIT_TAIL:]):
            raise EncodeError(f"range coder flush produced unexpected bytes {out[:1].hex()}...{out[-IMPLICIT_TAIL:].hex()}")
        return out[1:-IMPLICIT_TAIL]


class RangeDecoder:
    def __init__(self, payload: bytes):
        self.payload = bytes(payload)
        self.pos = 0
        self.range = MASK32
        self.code = 0
        self._started = False

    def _next_byte(self) -> int:
        if self.pos >= len(self.payload) + IMPLICIT_TAIL:
            raise DecodeError(
                f"truncated payload: needed byte {self.pos + 1 - IMPLICIT_TAIL}, have {len(self.payload)}"
            )
        b = self.payload[self.pos] if self.pos < len(self.payload) else 0
        self.pos += 1
        return b

    def _start(self) -> None:
        for _ in range(4):
            self.code = (self.code << 8) | self._next_byte()
        self._started = True

    def _target(self) -> tuple[int, int]:
        if not self._started:
            self._start()
        r = self.range >> PRECISION
        value = self.code // r
        if value >= (1 << PRECISION):
            raise DecodeError("corrupt payload: code value beyond the frequency total")
        return r, value

    def _consume(self, r: int, cum: int, freq: int) -> None:
        self.code -= r * cum
        self.range = r * freq
        while self.range < TOP:
            self.range = (self.range << 8) & MASK32
            self.code = ((self.code << 8) | self._next_byte()) & MASK32

    def decode_index(self, cdf: np.ndarray) -> int:
        r, value = self._target()
        index = int(np.searchsorted(cdf, value, side="right")) - 1
        cum = int(cdf[index])
        self._consume(r, cum, int(cdf[index + 1]) - cum)
        return index

    def decode_bit(self) -> int:
        r, value = self._target()
        bit = 1 if value >= BYPASS_HALF else 0
        self._consume(r, BYPASS_HALF if bit else 0, BYPASS_HALF)
        return bit

    def decode_uint(self) -> int:
        k = 0
        while self.decode_bit():
            k += 1
            if k > 62:
                raise DecodeError("corrupt escape code")
        value = 1
        for _ in range(k):
            value = (value << 1) | self.decode_bit()
        return value - 1

    def decode_symbol(self, table: CdfTable) -> int:
        index = self.decode_index(table.cdf)
        if index < table.support:
            return index + table.offset
        folded = self.decode_uint()
        return folded // 2 if folded % 2 == 0 else -(folded + 1) // 2

    def finish(self) -> None:
        """Every byte of the payload must have been consumed."""
        if not self._started and not self.payload:
            return
        if self.pos < len(self.payload) + IMPLICIT_TAIL:
            raise DecodeError(
                f"payload has {len(self.payload) + IMPLICIT_TAIL - self.pos} unread trailing bytes"
            )


def _per_symbol(tables: CdfTable | Sequence[CdfTable], indexes: Optional[Sequence[int]], n: int):
    if isinstance(tables, CdfTable):
        return [tables] * n
    if indexes is None:
        if len(tables) != n:
            raise EncodeError(f"{len(tables)} tables for {n} symbols and no index map")
        return list(tables)
    return [tables[int(i)] for i in indexes]


def range_encode(symbols, tables: CdfTable | Sequence[CdfTable],
                 indexes: Optional[Sequence[int]] = None) -> bytes:
    """Encode integer symbols; ``indexes`` selects a table per symbol."""
    values = [int(s) for s in np.asarray(symbols).reshape(-1)]
    per = _per_symbol(tables, indexes, len(values))
    encoder = RangeEncoder()
    for value, table in zip(values, per):
        encoder.encode_symbol(value, table)
    return encoder.finish()


def range_decode(payload: bytes, tables: CdfTable | Sequence[CdfTable], count: int,
                 indexes: Optional[Sequence[int]] = None) -> np.ndarray:
    per = _per_symbol(tables, indexes, count)
    decoder = RangeDecoder(payload)
    out = np.fromiter((decoder.decode_symbol(t) for t in per), dtype=np.int64, count=count)
    decoder.finish()
    return out
