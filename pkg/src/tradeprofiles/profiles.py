"""Binary trading-profile vectors and the pairwise Jaccard dissimilarity matrix.

Each profile has 3*T bits: [0, T) flags buy days, [T, 2T) sell days and
[2T, 3T) buy/sell days. Vectors are packed into uint64 words so the pair
kernel reduces to AND/OR plus population counts.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .encoder import DailyStateSeries

MAGIC = b"TPDISS01"
SQRT2 = math.sqrt(2.0)


class ProfileError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ProfileVector:
    investor_id: str
    n_bits: int
    words: np.ndarray  # uint64, little-endian bit order within each word

    @property
    def popcount(self) -> int:
        return int(np.bitwise_count(self.words).sum())

    def bits(self) -> np.ndarray:
        """Unpacked 0/1 array of length n_bits."""
        raw = np.unpackbits(self.words.view(np.uint8), bitorder="little")
        return raw[: self.n_bits]

    def __eq__(self, other):
        if not isinstance(other, ProfileVector):
            return NotImplemented
        return (
            self.investor_id == other.investor_id
            and self.n_bits == other.n_bits
            and np.array_equal(self.words, other.words)
        )


def _n_words(n_bits: int) -> int:
    return (n_bits + 63) // 64


def pack_bits(investor_id: str, bits) -> ProfileVector:
    bits = np.asarray(bits, dtype=np.uint8)
    n_bits = bits.size
    padded = np.zeros(_n_words(n_bits) * 64, dtype=np.uint8)
    padded[:n_bits] = bits != 0
    words = np.packbits(padded, bitorder="little").view(np.uint64).copy()
    words.flags.writeable = False
    return ProfileVector(investor_id, n_bits, words)


def build_profile_vector(series: DailyStateSeries, t_days: int) -> ProfileVector:
    bits = np.zeros(3 * t_days, dtype=np.uint8)
    for day, state in series.states.items():
        if not 0 <= day < t_days:
            raise ProfileError(f"day {day} of {series.investor_id} outside [0, {t_days})")
        bits[int(state) * t_days + day] = 1
    return pack_bits(series.investor_id, bits)


def jaccard(a: ProfileVector, b: ProfileVector) -> float:
    if a.n_bits != b.n_bits:
        raise ProfileError(f"length mismatch: {a.n_bits} vs {b.n_bits}")
    inter = int(np.bitwise_count(a.words & b.words).sum())
    union = int(np.bitwise_count(a.words | b.words).sum())
    if union == 0:
        raise ProfileError(f"Jaccard undefined for two empty vectors ({a.investor_id}, {b.investor_id})")
    return inter / union


def dissimilarity(j: float) -> float:
    if not 0.0 <= j <= 1.0:
        raise ProfileError(f"Jaccard coefficient {j} outside [0, 1]")
    return math.sqrt(2.0 * (1.0 - j))


@dataclass(eq=False)
class DissimilarityMatrix:
    """Symmetric matrix stored as its strict lower triangle, row-major.

    Entry (i, j) with i > j lives at ``i*(i-1)//2 + j``.
    """

    ids: list[str]
    tri: np.ndarray

    def __post_init__(self):
        n = len(self.ids)
        if self.tri.shape != (n * (n - 1) // 2,):
            raise ProfileError(f"triangle has {self.tri.size} entries, expected {n * (n - 1) // 2}")

    @property
    def n(self) -> int:
        return len(self.ids)

    def __getitem__(self, ij) -> float:
        i, j = ij
        if i == j:
            return 0.0
        if i < j:
            i, j = j, i
        return float(self.tri[i * (i - 1) // 2 + j])

    def square(self) -> np.ndarray:
        n = self.n
        out = np.zeros((n, n))
        rows, cols = np.tril_indices(n, -1)
        out[rows, cols] = self.tri
        out[cols, rows] = self.tri
        return out

    @classmethod
    def from_square(cls, ids: Sequence[str], values) -> "DissimilarityMatrix":
        values = np.asarray(values, dtype=float)
        n = len(ids)
        if values.shape != (n, n):
            raise ProfileError(f"expected {n}x{n} matrix, got {values.shape}")
        if not np.array_equal(values, values.T):
            raise ProfileError("matrix is not symmetric")
        if np.any(np.diag(values) != 0):
            raise ProfileError("matrix diagonal is not zero")
        if np.any(values < 0):
            raise ProfileError("matrix has negative entries")
        rows, cols = np.tril_indices(n, -1)
        return cls(list(ids), values[rows, cols].copy())


@numba.njit(inline="always")
def _popcount64(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)


@numba.njit(nogil=True, cache=True)
def _fill_rows(packed, row_lo, row_hi, out):
    n_words = packed.shape[1]
    for i in range(row_lo, row_hi):
        base = i * (i - 1) // 2
        for j in range(i):
            inter = np.uint64(0)
            union = np.uint64(0)
            for w in range(n_words):
                a = packed[i, w]
                b = packed[j, w]
                inter += _popcount64(a & b)
                union += _popcount64(a | b)
            jac = np.float64(inter) / np.float64(union)
            out[base + j] = np.sqrt(2.0 * (1.0 - jac))


def _row_blocks(n: int, n_blocks: int) -> list[tuple[int, int]]:
    # equal pair counts per block; row i holds i pairs
    total = n * (n - 1) // 2
    bounds = [0]
    for b in range(1, n_blocks):
        target = total * b / n_blocks
        row = int(math.ceil((1 + math.sqrt(1 + 8 * target)) / 2))
        bounds.append(min(max(row, bounds[-1]), n))
    bounds.append(n)
    return [(lo, hi) for lo, hi in zip(bounds, bounds[1:]) if hi > lo]


def pack_matrix(vectors: Sequence[ProfileVector]) -> np.ndarray:
    n_bits = vectors[0].n_bits
    for v in vectors:
        if v.n_bits != n_bits:
            raise ProfileError(f"length mismatch: {v.investor_id} has {v.n_bits} bits, expected {n_bits}")
    return np.ascontiguousarray(np.stack([v.words for v in vectors]))


def dissimilarity_matrix(
    vectors: Sequence[ProfileVector],
    workers: int = 1,
    path: str | Path | None = None,
) -> DissimilarityMatrix:
    """All-pairs d = sqrt(2 (1 - J)) over the given profiles.

    With ``path`` the triangle is written straight into a binary matrix file
    (see :func:`write_binary`) via a memory map instead of held in RAM.
    Output is identical for any ``workers`` value.
    """
    if len(vectors) < 2:
        raise ProfileError("need at least two profiles")
    packed = pack_matrix(vectors)
    counts = np.bitwise_count(packed).sum(axis=1)
    empty = [vectors[i].investor_id for i in np.flatnonzero(counts == 0)]
    # a single empty vector still has J = 0 against the rest; two give 0/0
    if len(empty) > 1:
        raise ProfileError(f"Jaccard undefined between empty profiles {empty[:2]}")
    n = len(vectors)
    ids = [v.investor_id for v in vectors]
    size = n * (n - 1) // 2
    if path is None:
        tri = np.empty(size, dtype=np.float64)
    else:
        offset = _write_header(path, ids)
        tri = np.memmap(path, dtype="<f8", mode="r+", offset=offset, shape=(size,))
    blocks = _row_blocks(n, max(1, workers) * 4)
    if workers <= 1:
        for lo, hi in blocks:
            _fill_rows(packed, lo, hi, tri)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda b: _fill_rows(packed, b[0], b[1], tri), blocks))
    if isinstance(tri, np.memmap):
        tri.flush()
    return DissimilarityMatrix(ids, tri)


def _encode_header(ids: Sequence[str]) -> bytes:
    parts = [MAGIC, struct.pack("<Q", len(ids))]
    for name in ids:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    return b"".join(parts)


def _write_header(path, ids) -> int:
    header = _encode_header(ids)
    n = len(ids)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.truncate(len(header) + 8 * (n * (n - 1) // 2))
    return len(header)


def write_binary(matrix: DissimilarityMatrix, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_encode_header(matrix.ids))
        fh.write(np.ascontiguousarray(matrix.tri, dtype="<f8").tobytes())


def read_binary(path: str | Path, mmap: bool = False) -> DissimilarityMatrix:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ProfileError(f"{path}: not a dissimilarity matrix file")
        (n,) = struct.unpack("<Q", fh.read(8))
        ids = []
        for _ in range(n):
            (length,) = struct.unpack("<I", fh.read(4))
            ids.append(fh.read(length).decode("utf-8"))
        offset = fh.tell()
        size = n * (n - 1) // 2
        if mmap:
            tri = np.memmap(path, dtype="<f8", mode="r", offset=offset, shape=(size,))
        else:
            tri = np.frombuffer(fh.read(8 * size), dtype="<f8").copy()
    if tri.size != size:
        raise ProfileError(f"{path}: truncated payload")
    return DissimilarityMatrix(ids, tri)


def write_csv(matrix: DissimilarityMatrix, path: str | Path) -> None:
    """Square matrix with an id header row and id first column (debug format)."""
    sq = matrix.square()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("," + ",".join(matrix.ids) + "\n")
        for name, row in zip(matrix.ids, sq):
            fh.write(name + "," + ",".join(repr(float(x)) for x in row) + "\n")
