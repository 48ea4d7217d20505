"""Magnitude-pruning baseline serialized as COO (index, code) pairs.

Stream layout (little-endian)::

    bits u8 | total_len u32 | k_budget u32 | scale f32 | k_budget x (index u32, code)

Each code takes ``ceil(bits / 8)`` bytes, packed as in :mod:`symcodec.quant`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InvariantError
from .quant import QuantizedVector, qmax, quantize
from .symmetry import SymmetryKind, dof_count

HEADER = struct.Struct("<BIIf")
METADATA_BYTES = HEADER.size
INDEX_BITS = 32


def code_bytes(bits: int) -> int:
    return (bits + 7) // 8


@dataclass(frozen=True, eq=False)
class CooPayload:
    """Sparse payload. May hold corrupted entries after a noisy channel."""

    bits: int
    total_len: int
    scale: float
    indices: np.ndarray
    codes: np.ndarray

    def __post_init__(self):
        idx = np.array(self.indices, dtype=np.int64).ravel()
        codes = np.array(self.codes, dtype=np.int64).ravel()
        if idx.size != codes.size:
            raise InvariantError("indices and codes differ in length")
        idx.flags.writeable = False
        codes.flags.writeable = False
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "codes", codes)

    @property
    def k_budget(self) -> int:
        return self.indices.size

    @property
    def payload_bits(self) -> int:
        return self.k_budget * (INDEX_BITS + self.bits)

    def validate(self) -> None:
        if self.k_budget > self.total_len:
            raise InvariantError("more entries than vector length")
        if self.k_budget:
            if np.any(np.diff(self.indices) <= 0):
                raise InvariantError("indices not strictly increasing")
            if self.indices[0] < 0 or self.indices[-1] >= self.total_len:
                raise InvariantError("index out of range")
        QuantizedVector(self.bits, self.scale, self.codes)

    def to_bytes(self) -> bytes:
        head = HEADER.pack(self.bits, self.total_len, self.k_budget, self.scale)
        width = code_bytes(self.bits)
        rec = np.zeros((self.k_budget, 4 + width), dtype=np.uint8)
        rec[:, :4] = self.indices.astype("<u4").view(np.uint8).reshape(-1, 4)
        rec[:, 4:] = _codes_to_columns(self.codes, self.bits)
        return head + rec.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "CooPayload":
        if len(data) < METADATA_BYTES:
            raise FormatError("truncated COO metadata")
        bits, total_len, k_budget, scale = HEADER.unpack_from(data, 0)
        if not 2 <= bits <= 16:
            raise FormatError(f"invalid bit-width {bits}")
        if not (np.isfinite(scale) and scale > 0):
            raise FormatError(f"invalid scale {scale}")
        width = code_bytes(bits)
        need = METADATA_BYTES + k_budget * (4 + width)
        if len(data) < need:
            raise FormatError(f"truncated COO body: need {need} bytes, got {len(data)}")
        rec = np.frombuffer(data, dtype=np.uint8, count=need - METADATA_BYTES, offset=METADATA_BYTES)
        rec = rec.reshape(k_budget, 4 + width)
        idx = rec[:, :4].copy().view("<u4").ravel().astype(np.int64)
        codes = _columns_to_codes(rec[:, 4:], bits)
        return cls(bits, total_len, scale, idx, codes)


def _codes_to_columns(codes: np.ndarray, bits: int) -> np.ndarray:
    """Per-entry code bytes, identical to packing each code on its own."""
    if bits == 16:
        return codes.astype("<i2").view(np.uint8).reshape(-1, 2)
    width = code_bytes(bits)
    pad = 8 * width - bits
    unsigned = (codes & ((1 << bits) - 1)) << pad
    shifts = 8 * np.arange(width - 1, -1, -1)
    return ((unsigned[:, None] >> shifts) & 0xFF).astype(np.uint8)


def _columns_to_codes(cols: np.ndarray, bits: int) -> np.ndarray:
    if bits == 16:
        return np.ascontiguousarray(cols).view("<i2").ravel().astype(np.int64)
    width = code_bytes(bits)
    pad = 8 * width - bits
    shifts = 8 * np.arange(width - 1, -1, -1)
    unsigned = (cols.astype(np.int64) << shifts).sum(axis=1) >> pad
    return np.where(unsigned >= (1 << (bits - 1)), unsigned - (1 << bits), unsigned)


def prune_topk(w, k_budget: int, bits: int = 8) -> CooPayload:
    """Keep the ``k_budget`` largest |w_i| (ties to the lower index) and quantize them."""
    w = np.asarray(w, dtype=np.float64).ravel()
    if not 0 <= k_budget <= w.size:
        raise InvariantError(f"budget {k_budget} outside [0, {w.size}]")
    order = np.argsort(-np.abs(w), kind="stable")
    keep = np.sort(order[:k_budget])
    q = quantize(w[keep], bits)
    return CooPayload(bits, w.size, q.scale, keep, q.values)


def reconstruct_coo_counted(payload: CooPayload) -> tuple[np.ndarray, int]:
    """Dense reconstruction plus the number of discarded (corrupt) entries.

    An entry is discarded when its index is out of range, does not exceed the
    previous accepted index, or its code falls outside the symmetric range.
    """
    dense = np.zeros(payload.total_len, dtype=np.float64)
    idx, codes = payload.indices, payload.codes
    cand = (idx >= 0) & (idx < payload.total_len) & (np.abs(codes) <= qmax(payload.bits))
    # an entry must exceed every earlier candidate index; a rejected candidate
    # never raises that running maximum, so this matches a sequential scan
    running = np.maximum.accumulate(np.where(cand, idx, -1)) if idx.size else idx
    before = np.concatenate(([-1], running[:-1])) if idx.size else idx
    ok = cand & (idx > before)
    dense[idx[ok]] = codes[ok] * payload.scale
    return dense, int(idx.size - ok.sum())


def reconstruct_coo(payload: CooPayload) -> np.ndarray:
    return reconstruct_coo_counted(payload)[0]


def pruned_equivalent_budget(kind: SymmetryKind, shape: tuple[int, int, int]) -> int:
    """U_sym = c_out * c_in * M for a (c_out, c_in, k) layer."""
    c_out, c_in, k = shape
    return c_out * c_in * dof_count(kind, k)


def stream_size(k_budget: int, bits: int) -> int:
    return METADATA_BYTES + k_budget * (4 + code_bytes(bits))
