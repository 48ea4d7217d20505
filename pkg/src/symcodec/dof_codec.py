"""Degrees-of-freedom codec: one quantized representative per orbit.

Layer stream layout (little-endian)::

    symmetry_id u8 | bits u8 | c_out u32 | c_in u32 | k u16 | scale f32 | packed codes

Codes are ordered (c_out, c_in, orbit_id).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InvariantError
from .quant import QuantizedVector, dequantize, pack_codes, packed_size, quantize, unpack_codes
from .symmetry import OrbitMap, SymmetryKind, orbit_map, project
from .tensor_core import WeightTensor

HEADER = struct.Struct("<BBIIHf")
METADATA_BYTES = HEADER.size


@dataclass(frozen=True, eq=False)
class DofPayload:
    symmetry: SymmetryKind
    bits: int
    k: int
    c_out: int
    c_in: int
    scale: float
    codes: np.ndarray

    def __post_init__(self):
        codes = np.array(self.codes, dtype=np.int64).ravel()
        if codes.size != self.num_codes:
            raise FormatError(
                f"expected {self.num_codes} codes for {self.symmetry} "
                f"({self.c_out}, {self.c_in}, {self.k}), got {codes.size}"
            )
        codes.flags.writeable = False
        object.__setattr__(self, "codes", codes)

    @property
    def orbits(self) -> OrbitMap:
        return orbit_map(self.symmetry, self.k)

    @property
    def num_codes(self) -> int:
        return self.c_out * self.c_in * orbit_map(self.symmetry, self.k).m

    @property
    def payload_bits(self) -> int:
        """Code bits only, b * c_out * c_in * M."""
        return self.bits * self.num_codes

    @property
    def quantized(self) -> QuantizedVector:
        return QuantizedVector(self.bits, self.scale, self.codes)

    def representatives(self) -> np.ndarray:
        """Dequantized DoF as a (c_out * c_in, M) float64 array."""
        return dequantize(self.quantized).reshape(self.c_out * self.c_in, -1)

    def to_bytes(self) -> bytes:
        head = HEADER.pack(
            self.symmetry.id, self.bits, self.c_out, self.c_in, self.k, self.scale
        )
        return head + pack_codes(self.quantized)

    @classmethod
    def from_bytes(cls, data: bytes) -> "DofPayload":
        if len(data) < METADATA_BYTES:
            raise FormatError("truncated layer metadata")
        sym_id, bits, c_out, c_in, k, scale = HEADER.unpack_from(data, 0)
        try:
            kind = SymmetryKind.from_id(sym_id)
            omap = orbit_map(kind, k)
            count = c_out * c_in * omap.m
            codes = unpack_codes(data[METADATA_BYTES:], bits, count)
            return cls(kind, bits, k, c_out, c_in, QuantizedVector(bits, scale, codes).scale, codes)
        except InvariantError as exc:
            raise FormatError(f"invalid layer stream: {exc}") from exc

    def __eq__(self, other):
        if not isinstance(other, DofPayload):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()


def stream_size(kind: SymmetryKind, bits: int, c_out: int, c_in: int, k: int) -> int:
    """Total bytes of a layer stream, metadata included."""
    return METADATA_BYTES + packed_size(c_out * c_in * orbit_map(kind, k).m, bits)


def encode_dof(w: WeightTensor, kind: SymmetryKind, bits: int) -> DofPayload:
    """Orbit means (signed pair half-differences for central-skew), jointly quantized."""
    omap = orbit_map(kind, w.k)
    reps = omap.extract(w.slices())
    q = quantize(reps.ravel(), bits)
    return DofPayload(kind, bits, w.k, w.c_out, w.c_in, q.scale, q.values)


def encode_full(w: WeightTensor, bits: int) -> DofPayload:
    return encode_dof(w, SymmetryKind.NONE, bits)


def synth(payload: DofPayload) -> WeightTensor:
    omap = payload.orbits
    full = omap.populate(payload.representatives())
    shape = (payload.c_out, payload.c_in, payload.k, payload.k)
    return WeightTensor(full.reshape(shape).astype(np.float32))


def decode_dof(payload: DofPayload, apply_projection: bool = True) -> WeightTensor:
    w = synth(payload)
    return project(w, payload.orbits) if apply_projection else w


def decode_stream(
    data: bytes,
    kind: SymmetryKind,
    bits: int,
    shape: tuple[int, int, int],
) -> DofPayload:
    """Parse a received layer stream, checking it against the session's expectations.

    The receiver knows the architecture and codec settings; a stream whose
    metadata disagrees (e.g. a zero-filled first packet) is rejected.
    """
    payload = DofPayload.from_bytes(data)
    got = (payload.c_out, payload.c_in, payload.k)
    if payload.symmetry is not kind or payload.bits != bits or got != tuple(shape):
        raise FormatError(
            f"metadata mismatch: got {payload.symmetry}/{payload.bits}/{got}, "
            f"expected {kind}/{bits}/{tuple(shape)}"
        )
    return payload


def central_skew_embed(s, k: int) -> np.ndarray:
    """Signed-pair map: R^M -> k x k antisymmetric stencil with zero centre."""
    omap = orbit_map(SymmetryKind.CENTRAL_SKEW, k)
    s = np.asarray(s, dtype=np.float64)
    if s.shape[-1] != omap.m:
        raise InvariantError(f"expected {omap.m} pair values for k={k}, got {s.shape[-1]}")
    return omap.populate(s).reshape(*s.shape[:-1], k, k)
