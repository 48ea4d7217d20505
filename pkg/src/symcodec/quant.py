"""Symmetric per-tensor b-bit quantization and code packing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InvariantError

MIN_BITS = 2
MAX_BITS = 16


def qmax(bits: int) -> int:
    return (1 << (bits - 1)) - 1


def _check_bits(bits: int) -> None:
    if not MIN_BITS <= bits <= MAX_BITS:
        raise InvariantError(f"bit-width must be in [{MIN_BITS}, {MAX_BITS}], got {bits}")


@dataclass(frozen=True, eq=False)
class QuantizedVector:
    bits: int
    scale: float
    values: np.ndarray

    def __post_init__(self):
        _check_bits(self.bits)
        scale = float(np.float32(self.scale))
        if not (np.isfinite(scale) and scale > 0):
            raise InvariantError(f"scale must be positive and finite, got {self.scale}")
        vals = np.array(self.values, dtype=np.int64).ravel()
        lim = qmax(self.bits)
        if vals.size and (vals.min() < -lim or vals.max() > lim):
            raise InvariantError(f"codes outside [-{lim}, {lim}]")
        vals.flags.writeable = False
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, QuantizedVector):
            return NotImplemented
        return (
            self.bits == other.bits
            and self.scale == other.scale
            and np.array_equal(self.values, other.values)
        )

    @property
    def payload_bits(self) -> int:
        return self.bits * self.values.size


def quantize(x, bits: int) -> QuantizedVector:
    """Round-half-to-even onto the symmetric grid ``scale * [-qmax, qmax]``.

    The scale is rounded to binary32 before use since that is what travels
    on the wire; the receiver must see the same grid.
    """
    _check_bits(bits)
    x = np.asarray(x, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise InvariantError("cannot quantize NaN or Inf")
    lim = qmax(bits)
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    scale = float(np.float32(peak / lim)) if peak > 0 else 1.0
    if scale == 0.0:
        # peak below the binary32 subnormal range
        scale = float(np.finfo(np.float32).smallest_subnormal)
    codes = np.clip(np.rint(x / scale), -lim, lim).astype(np.int64)
    return QuantizedVector(bits, scale, codes)


def dequantize(q: QuantizedVector) -> np.ndarray:
    return q.values.astype(np.float64) * q.scale


def packed_size(count: int, bits: int) -> int:
    """Bytes taken by ``count`` packed codes."""
    if bits == 8:
        return count
    if bits == 16:
        return 2 * count
    return (count * bits + 7) // 8


def pack_codes(q: QuantizedVector) -> bytes:
    """8 bits: int8; 16 bits: int16 LE; otherwise MSB-first bit-packing."""
    vals = q.values
    if q.bits == 8:
        return vals.astype(np.int8).tobytes()
    if q.bits == 16:
        return vals.astype("<i2").tobytes()
    # two's complement in `bits` bits, most significant bit first
    unsigned = (vals & ((1 << q.bits) - 1)).astype(np.uint32)
    shifts = np.arange(q.bits - 1, -1, -1, dtype=np.uint32)
    bitplane = ((unsigned[:, None] >> shifts) & 1).astype(np.uint8).ravel()
    return np.packbits(bitplane).tobytes()


def unpack_codes(data: bytes, bits: int, count: int) -> np.ndarray:
    """Inverse of :func:`pack_codes`; returns int64 codes (not range-checked)."""
    _check_bits(bits)
    need = packed_size(count, bits)
    if len(data) < need:
        raise FormatError(f"need {need} bytes for {count} {bits}-bit codes, got {len(data)}")
    buf = bytes(data[:need])
    if bits == 8:
        return np.frombuffer(buf, dtype=np.int8).astype(np.int64)
    if bits == 16:
        return np.frombuffer(buf, dtype="<i2").astype(np.int64)
    bitplane = np.unpackbits(np.frombuffer(buf, dtype=np.uint8))[: count * bits]
    weights = (1 << np.arange(bits - 1, -1, -1)).astype(np.int64)
    unsigned = bitplane.reshape(count, bits).astype(np.int64) @ weights
    return np.where(unsigned >= (1 << (bits - 1)), unsigned - (1 << bits), unsigned)
