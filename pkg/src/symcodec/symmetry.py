"""Kernel symmetry families, orbit partitions and the orbit-average projector."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvariantError, ShapeError
from .tensor_core import WeightTensor


class SymmetryKind(enum.Enum):
    """The ten supported families; value is (wire id, label)."""

    NONE = (0, "none")
    CENTRAL_EVEN = (1, "central-even")
    CENTRAL_SKEW = (2, "central-skew")
    HORIZONTAL = (3, "horizontal")
    VERTICAL = (4, "vertical")
    MAIN_DIAGONAL = (5, "main-diagonal")
    ANTI_DIAGONAL = (6, "anti-diagonal")
    ROT90 = (7, "rot90")
    RADIAL = (8, "radial")
    TOEPLITZ = (9, "toeplitz")

    @property
    def id(self) -> int:
        return self.value[0]

    @property
    def label(self) -> str:
        return self.value[1]

    @property
    def is_skew(self) -> bool:
        return self is SymmetryKind.CENTRAL_SKEW

    def __str__(self) -> str:
        return self.label

    @classmethod
    def from_label(cls, name: str) -> "SymmetryKind":
        key = name.strip().lower().replace("_", "-")
        for kind in cls:
            if kind.label == key:
                return kind
        raise InvariantError(
            f"unknown symmetry {name!r}; expected one of: {', '.join(LABELS)}"
        )

    @classmethod
    def from_id(cls, ident: int) -> "SymmetryKind":
        for kind in cls:
            if kind.id == ident:
                return kind
        raise InvariantError(f"unknown symmetry id {ident}")


LABELS = tuple(kind.label for kind in SymmetryKind)


def _check_k(k: int) -> None:
    if k < 1 or k % 2 == 0:
        raise InvariantError(f"kernel side must be odd and >= 1, got {k}")


def _generators(kind: SymmetryKind, k: int):
    """Cell maps generating the symmetry group acting on the k x k grid."""
    last = k - 1
    return {
        SymmetryKind.NONE: [],
        SymmetryKind.CENTRAL_EVEN: [lambda i, j: (last - i, last - j)],
        # horizontal mirrors rows, vertical mirrors columns
        SymmetryKind.HORIZONTAL: [lambda i, j: (last - i, j)],
        SymmetryKind.VERTICAL: [lambda i, j: (i, last - j)],
        SymmetryKind.MAIN_DIAGONAL: [lambda i, j: (j, i)],
        SymmetryKind.ANTI_DIAGONAL: [lambda i, j: (last - j, last - i)],
        SymmetryKind.ROT90: [lambda i, j: (j, last - i)],
    }[kind]


def _group_labels(kind: SymmetryKind, k: int) -> list[int]:
    parent = list(range(k * k))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for gen in _generators(kind, k):
        for i in range(k):
            for j in range(k):
                u, v = gen(i, j)
                a, b = find(i * k + j), find(u * k + v)
                if a != b:
                    parent[max(a, b)] = min(a, b)
    return [find(x) for x in range(k * k)]


def _cell_keys(kind: SymmetryKind, k: int) -> list:
    c = k // 2
    if kind is SymmetryKind.RADIAL:
        return [(i - c) ** 2 + (j - c) ** 2 for i in range(k) for j in range(k)]
    if kind is SymmetryKind.TOEPLITZ:
        return [j - i for i in range(k) for j in range(k)]
    if kind is SymmetryKind.CENTRAL_SKEW:
        return _group_labels(SymmetryKind.CENTRAL_EVEN, k)
    return _group_labels(kind, k)


@dataclass(frozen=True, eq=False)
class OrbitMap:
    """Partition of the k x k grid into orbits for one symmetry kind.

    ``orbit_id`` is -1 and ``sign`` is 0 for the central-skew centre, which
    belongs to no orbit. Elsewhere ``sign`` is +1, except for the second
    member of each central-skew pair (-1).
    """

    kind: SymmetryKind
    k: int
    orbit_id: np.ndarray
    sign: np.ndarray
    orbit_sizes: tuple[int, ...]

    @property
    def m(self) -> int:
        return len(self.orbit_sizes)

    @property
    def extract_matrix(self) -> np.ndarray:
        """(k*k, M) matrix mapping a flattened slice to orbit representatives."""
        return _matrices(self.kind, self.k)[0]

    @property
    def synth_matrix(self) -> np.ndarray:
        """(M, k*k) matrix populating each orbit with its (signed) representative."""
        return _matrices(self.kind, self.k)[1]

    def extract(self, slices: np.ndarray) -> np.ndarray:
        """Orbit representatives of (..., k*k) slices, in float64."""
        extract, synth = _matrices(self.kind, self.k)
        sums = np.asarray(slices, dtype=np.float64) @ synth.T
        return sums / np.asarray(self.orbit_sizes, dtype=np.float64)

    def populate(self, reps: np.ndarray) -> np.ndarray:
        """Inverse of ``extract`` on the invariant subspace: (..., M) -> (..., k*k)."""
        return np.asarray(reps, dtype=np.float64) @ self.synth_matrix

    def project_array(self, x: np.ndarray) -> np.ndarray:
        """Project any (..., k, k) array; float64 result."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-2:] != (self.k, self.k):
            raise ShapeError(f"trailing dims {x.shape[-2:]} do not match k={self.k}")
        flat = x.reshape(*x.shape[:-2], self.k * self.k)
        return self.populate(self.extract(flat)).reshape(x.shape)

    def projector(self) -> np.ndarray:
        """Dense (k*k, k*k) projection matrix acting on flattened slices."""
        return self.extract_matrix @ self.synth_matrix


@lru_cache(maxsize=None)
def _build(kind: SymmetryKind, k: int) -> OrbitMap:
    keys = _cell_keys(kind, k)
    c = k // 2
    ids = np.full(k * k, -1, dtype=np.int64)
    sign = np.ones(k * k, dtype=np.int8)
    first: dict = {}
    for cell, key in enumerate(keys):
        if kind.is_skew and cell == c * k + c:
            sign[cell] = 0
            continue
        if key not in first:
            first[key] = len(first)
        elif kind.is_skew:
            sign[cell] = -1
        ids[cell] = first[key]
    sizes = np.bincount(ids[ids >= 0], minlength=len(first))
    ids = ids.reshape(k, k)
    sign = sign.reshape(k, k)
    ids.flags.writeable = False
    sign.flags.writeable = False
    return OrbitMap(kind, k, ids, sign, tuple(int(n) for n in sizes))


@lru_cache(maxsize=None)
def _matrices(kind: SymmetryKind, k: int):
    omap = _build(kind, k)
    ids = omap.orbit_id.ravel()
    sign = omap.sign.ravel().astype(np.float64)
    sizes = np.asarray(omap.orbit_sizes, dtype=np.float64)
    synth = np.zeros((omap.m, k * k))
    cells = np.flatnonzero(ids >= 0)
    synth[ids[cells], cells] = sign[cells]
    extract = synth.T / sizes
    synth.flags.writeable = False
    extract.flags.writeable = False
    return extract, synth


def orbit_map(kind: SymmetryKind, k: int) -> OrbitMap:
    _check_k(k)
    return _build(kind, k)


def dof_count(kind: SymmetryKind, k: int) -> int:
    return orbit_map(kind, k).m


def project(w: WeightTensor, omap: OrbitMap) -> WeightTensor:
    """Orthogonal projection of every (c_out, c_in) slice onto the invariant subspace."""
    if w.k != omap.k:
        raise ShapeError(f"tensor k={w.k} does not match orbit map k={omap.k}")
    return WeightTensor(omap.project_array(w.data).astype(np.float32))


def is_symmetric(w: WeightTensor, omap: OrbitMap) -> bool:
    return bool(np.array_equal(project(w, omap).data, w.data))
