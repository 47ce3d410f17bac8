"""The fixed data-mixing lattice.

A mixture of ``m`` training datasets drawn into batches of size ``b``,
held constant over training, is an integer composition of ``b`` into
``m`` non-negative parts. The set of all such compositions is the
mixing lattice; its size is the stars-and-bars count C(m+b-1, m-1).

Compositions are ordered lexicographically by their count vectors.
That order is canonical here: it defines ranking/unranking and lets
exhaustive sweeps shard the lattice by index range.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import DomainError
from .validation import check_counts, check_positive_int, check_proportions


@dataclass(frozen=True)
class LatticePoint:
    """One batch-level mixture: ``counts[i]`` samples of dataset i per batch of ``b``."""

    counts: tuple[int, ...]
    b: int

    def __post_init__(self):
        check_counts(self.counts, self.b)

    @property
    def m(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class DatasetCatalog:
    """Named training datasets with their sample counts."""

    names: tuple[str, ...]
    sizes: tuple[int, ...]

    def __post_init__(self):
        if len(self.names) != len(self.sizes) or len(self.names) < 1:
            raise DomainError("catalog needs equal, non-empty names and sizes")
        if any(n < 1 for n in self.sizes):
            raise DomainError("every dataset size must be >= 1")

    @property
    def m(self) -> int:
        return len(self.names)

    @property
    def total(self) -> int:
        return sum(self.sizes)


def load_catalog(path: str | Path) -> DatasetCatalog:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        return DatasetCatalog(tuple(obj["names"]), tuple(int(s) for s in obj["sizes"]))
    except KeyError as exc:
        raise DomainError(f"catalog file missing field {exc}") from exc


def lattice_size(m: int, b: int) -> int:
    """Number of compositions of ``b`` into ``m`` parts: C(m+b-1, m-1), exact."""
    m = check_positive_int(m, "m")
    b = check_positive_int(b, "b")
    return math.comb(m + b - 1, m - 1)


def _iter_counts(m: int, b: int) -> Iterator[tuple[int, ...]]:
    """Yield count tuples in lexicographic order."""
    if m == 1:
        yield (b,)
        return
    for first in range(b + 1):
        for rest in _iter_counts(m - 1, b - first):
            yield (first, *rest)


def enumerate_lattice(m: int, b: int) -> Iterator[LatticePoint]:
    """Yield every lattice point exactly once, in lexicographic count order."""
    m = check_positive_int(m, "m")
    b = check_positive_int(b, "b")
    for counts in _iter_counts(m, b):
        yield LatticePoint(counts, b)


def lattice_rank(point: LatticePoint) -> int:
    """Position of ``point`` in the lexicographic enumeration."""
    rank = 0
    remaining = point.b
    m = point.m
    for i in range(m - 1):
        parts = m - i - 1
        for v in range(point.counts[i]):
            rank += math.comb(remaining - v + parts - 1, parts - 1)
        remaining -= point.counts[i]
    return rank


def unrank_lattice(index: int, m: int, b: int) -> LatticePoint:
    """Inverse of :func:`lattice_rank`: the index-th point of the enumeration."""
    size = lattice_size(m, b)
    if not 0 <= index < size:
        raise DomainError(f"index {index} outside [0, {size}) for lattice ({m}, {b})")
    counts = _unrank_counts(index, m, b)
    return LatticePoint(tuple(counts), b)


def _unrank_counts(index: int, m: int, b: int) -> list[int]:
    counts = [0] * m
    remaining = b
    for i in range(m - 1):
        parts = m - i - 1
        v = 0
        while True:
            block = math.comb(remaining - v + parts - 1, parts - 1)
            if index < block:
                break
            index -= block
            v += 1
        counts[i] = v
        remaining -= v
    counts[m - 1] = remaining
    return counts


def composition_block(m: int, b: int, start: int, count: int) -> np.ndarray:
    """Rows ``start .. start+count`` of the enumeration, as an int64 array.

    Unranks the first row, then advances with the lexicographic
    successor; used by exhaustive sweeps to materialize fixed chunks
    without enumerating the whole lattice.
    """
    size = lattice_size(m, b)
    if count < 1 or start < 0 or start + count > size:
        raise DomainError(f"block [{start}, {start + count}) outside lattice of size {size}")
    c = _unrank_counts(start, m, b)
    out = np.empty((count, m), dtype=np.int64)
    out[0] = c
    for r in range(1, count):
        if c[m - 1] > 0:
            c[m - 2] += 1
            c[m - 1] -= 1
        else:
            j = m - 2
            while c[j] == 0:
                j -= 1
            moved = c[j] - 1
            c[j - 1] += 1
            c[j] = 0
            c[m - 1] = moved
        out[r] = c
    return out


def sample_lattice(m: int, b: int, n: int, seed: int) -> list[LatticePoint]:
    """Draw ``n`` distinct lattice points uniformly, reproducibly per seed.

    Uniform random indices are unranked; duplicate indices are rejected,
    so the draw is exactly uniform without replacement even for lattices
    far larger than 2**64.
    """
    n = check_positive_int(n, "n")
    size = lattice_size(m, b)
    if n > size:
        raise DomainError(f"cannot sample {n} distinct points from a lattice of size {size}")
    rng = random.Random(seed)
    seen: set[int] = set()
    points: list[LatticePoint] = []
    while len(points) < n:
        idx = rng.randrange(size)
        if idx in seen:
            continue
        seen.add(idx)
        points.append(unrank_lattice(idx, m, b))
    return points


def to_proportions(point: LatticePoint) -> np.ndarray:
    """Fraction of each dataset in the batch: counts / b."""
    return np.asarray(point.counts, dtype=np.float64) / point.b


def uniform_mixture(m: int) -> np.ndarray:
    """Equal weight on every dataset."""
    m = check_positive_int(m, "m")
    return np.full(m, 1.0 / m)


def natural_mixture(catalog: DatasetCatalog) -> np.ndarray:
    """Weights proportional to dataset sizes."""
    sizes = np.asarray(catalog.sizes, dtype=np.float64)
    return check_proportions(sizes / sizes.sum(), catalog.m)
