"""Weight containers and the SYMW on-disk bundle format.

SYMW layout (little-endian)::

    magic "SYMW" | version u16 | layer_count u32
    per layer: layer_id u16 | c_out u32 | c_in u32 | k u16 | float32 data

Data is row-major in (c_out, c_in, i, j) order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import FormatError, InvariantError, IoError, ShapeError

MAGIC = b"SYMW"
VERSION = 1

_FILE_HEADER = struct.Struct("<4sHI")
_LAYER_HEADER = struct.Struct("<HIIH")


@dataclass(frozen=True, eq=False)
class WeightTensor:
    """Immutable (c_out, c_in, k, k) float32 convolution kernel."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float32, copy=True)
        if arr.ndim != 4 or arr.shape[2] != arr.shape[3]:
            raise ShapeError(f"expected (c_out, c_in, k, k), got {arr.shape}")
        k = arr.shape[2]
        if k < 1 or k % 2 == 0:
            raise InvariantError(f"kernel side must be odd and >= 1, got {k}")
        if not np.all(np.isfinite(arr)):
            raise InvariantError("weights contain NaN or Inf")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_flat(cls, c_out: int, c_in: int, k: int, values) -> "WeightTensor":
        flat = np.asarray(values, dtype=np.float32).ravel()
        if flat.size != c_out * c_in * k * k:
            raise ShapeError(
                f"{flat.size} values do not fill shape ({c_out}, {c_in}, {k}, {k})"
            )
        return cls(flat.reshape(c_out, c_in, k, k))

    @classmethod
    def zeros(cls, c_out: int, c_in: int, k: int) -> "WeightTensor":
        return cls(np.zeros((c_out, c_in, k, k), dtype=np.float32))

    @property
    def c_out(self) -> int:
        return self.data.shape[0]

    @property
    def c_in(self) -> int:
        return self.data.shape[1]

    @property
    def k(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def slices(self) -> np.ndarray:
        """View as (c_out * c_in, k * k)."""
        return self.data.reshape(-1, self.k * self.k)

    def __eq__(self, other):
        if not isinstance(other, WeightTensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    def __hash__(self):
        return hash((self.shape, (self.data + np.float32(0)).tobytes()))


@dataclass(frozen=True)
class ModelBundle:
    """Ordered collection of (layer_id, WeightTensor) pairs."""

    layers: tuple[tuple[int, WeightTensor], ...] = field(default_factory=tuple)

    def __post_init__(self):
        layers = tuple((int(lid), w) for lid, w in self.layers)
        prev = -1
        for lid, w in layers:
            if not 0 <= lid <= 0xFFFF:
                raise InvariantError(f"layer_id {lid} does not fit in u16")
            if lid <= prev:
                raise InvariantError("layer ids must be unique and strictly increasing")
            if not isinstance(w, WeightTensor):
                raise InvariantError(f"layer {lid} is not a WeightTensor")
            prev = lid
        object.__setattr__(self, "layers", layers)

    def __iter__(self) -> Iterator[tuple[int, WeightTensor]]:
        return iter(self.layers)

    def __len__(self) -> int:
        return len(self.layers)

    @property
    def num_params(self) -> int:
        return sum(w.size for _, w in self.layers)


def frobenius_distance(a: WeightTensor, b: WeightTensor) -> float:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    return float(np.sqrt(np.sum(diff * diff)))


def bundle_to_bytes(bundle: ModelBundle) -> bytes:
    parts = [_FILE_HEADER.pack(MAGIC, VERSION, len(bundle))]
    for lid, w in bundle:
        if w.k % 2 == 0:
            raise InvariantError(f"layer {lid}: even kernel side {w.k}")
        parts.append(_LAYER_HEADER.pack(lid, w.c_out, w.c_in, w.k))
        parts.append(w.data.astype("<f4").tobytes(order="C"))
    return b"".join(parts)


def bundle_from_bytes(buf: bytes) -> ModelBundle:
    if len(buf) < _FILE_HEADER.size:
        raise FormatError("truncated SYMW header")
    magic, version, count = _FILE_HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported SYMW version {version}")
    off = _FILE_HEADER.size
    layers = []
    for _ in range(count):
        if off + _LAYER_HEADER.size > len(buf):
            raise FormatError("truncated layer header")
        lid, c_out, c_in, k = _LAYER_HEADER.unpack_from(buf, off)
        off += _LAYER_HEADER.size
        if k % 2 == 0:
            raise InvariantError(f"layer {lid}: even kernel side {k}")
        n = c_out * c_in * k * k
        if off + 4 * n > len(buf):
            raise FormatError(f"layer {lid}: truncated data")
        data = np.frombuffer(buf, dtype="<f4", count=n, offset=off)
        off += 4 * n
        layers.append((lid, WeightTensor(data.reshape(c_out, c_in, k, k))))
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} trailing bytes after last layer")
    return ModelBundle(tuple(layers))


def save_bundle(bundle: ModelBundle, path) -> None:
    buf = bundle_to_bytes(bundle)
    try:
        Path(path).write_bytes(buf)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_bundle(path) -> ModelBundle:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return bundle_from_bytes(buf)


def synthetic_bundle(shapes, seed: int = 0, scale: float = 0.1) -> ModelBundle:
    """Gaussian random bundle; `shapes` is a list of (c_out, c_in, k)."""
    rng = np.random.default_rng(seed)
    layers = []
    for lid, (c_out, c_in, k) in enumerate(shapes):
        data = rng.normal(0.0, scale, size=(c_out, c_in, k, k)).astype(np.float32)
        layers.append((lid, WeightTensor(data)))
    return ModelBundle(tuple(layers))


# Three-layer reference CNN (32, 64, 128 channels, 3x3, single input channel).
REFERENCE_SHAPES = ((32, 1, 3), (64, 32, 3), (128, 64, 3))
