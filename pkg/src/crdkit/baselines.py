"""Exact distance baselines: nearest neighbor, k-NN average, greedy coreset.

These are the scan-based scores the precomputed scorer replaces. They stay
deliberately exact (no index structures, no approximation) so they can serve
as accuracy oracles and as the slow side of the benchmark. Squared L2 is the
canonical distance everywhere; it is monotone-equivalent to L2 for ranking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import FeatureBank
from .errors import ParameterError

__all__ = [
    "NnResult",
    "CoresetSelection",
    "nn_distance",
    "knn_avg_distance",
    "greedy_coreset",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class NnResult:
    """Squared distance to the nearest bank column and that column's index."""

    score: float
    index: int


@dataclass(frozen=True)
class CoresetSelection:
    """Bank column indices in selection order, for a target sampling ratio."""

    indices: list[int]
    fraction: float


def _query_vector(bank: FeatureBank, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.size != bank.d:
        raise ParameterError(f"query has {y.size} entries, bank dimension is {bank.d}")
    return y


def _sq_dists(bank: FeatureBank, y: np.ndarray, work: np.ndarray | None = None) -> np.ndarray:
    # Differences squared and summed directly: exact by definition, no
    # norm-expansion cancellation. A caller scanning many queries can pass a
    # preallocated (d, n) work buffer; the result is bitwise identical.
    if work is None:
        work = np.empty_like(bank.columns)
    np.subtract(bank.columns, y[:, None], out=work)
    np.multiply(work, work, out=work)
    return work.sum(axis=0)


def nn_distance(bank: FeatureBank, y: np.ndarray) -> NnResult:
    """Minimum squared distance from y to any bank column.

    Ties break to the lowest column index. Equivalent to reconstructing y
    from exactly one bank column with unit coefficient and taking the best
    column.
    """
    if bank.n < 1:
        raise ParameterError("bank is empty")
    y = _query_vector(bank, y)
    d2 = _sq_dists(bank, y)
    idx = int(np.argmin(d2))
    return NnResult(score=float(d2[idx]), index=idx)


def knn_avg_distance(bank: FeatureBank, y: np.ndarray, k: int) -> float:
    """Mean of the k smallest squared distances from y to the bank columns.

    k = 1 reduces to ``nn_distance(...).score``.
    """
    if not 1 <= k <= bank.n:
        raise ParameterError(f"k must be in [1, {bank.n}], got {k}")
    y = _query_vector(bank, y)
    d2 = _sq_dists(bank, y)
    smallest = np.partition(d2, k - 1)[:k]
    return float(smallest.mean())


def _splitmix64_next(state: int) -> tuple[int, int]:
    """One step of the SplitMix64 sequence: returns (output, new state)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return z, state


def _uniform_index(seed: int, n: int) -> int:
    """Uniform draw from range(n) by rejection sampling over SplitMix64."""
    state = seed & _MASK64
    bound = (1 << 64) - ((1 << 64) % n)
    while True:
        value, state = _splitmix64_next(state)
        if value < bound:
            return value % n


def greedy_coreset(bank: FeatureBank, fraction: float, seed: int) -> CoresetSelection:
    """Farthest-point (greedy k-center) subsample of the bank columns.

    The first index is drawn uniformly from a SplitMix64 stream seeded with
    ``seed``; every later pick maximizes the squared distance to the already
    selected set, ties breaking to the lowest index. The selection size is
    max(1, round(fraction * n)) with half-up rounding. Bit-for-bit
    reproducible given (bank, fraction, seed).
    """
    if not 0.0 < fraction <= 1.0:
        raise ParameterError(f"fraction must be in (0, 1], got {fraction}")
    n = bank.n
    count = max(1, int(math.floor(fraction * n + 0.5)))
    cols = bank.columns
    first = _uniform_index(seed, n)
    selected = [first]
    diff = cols - cols[:, [first]]
    min_d2 = (diff * diff).sum(axis=0)
    while len(selected) < count:
        nxt = int(np.argmax(min_d2))
        selected.append(nxt)
        diff = cols - cols[:, [nxt]]
        np.minimum(min_d2, (diff * diff).sum(axis=0), out=min_d2)
    return CoresetSelection(indices=selected, fraction=float(fraction))
