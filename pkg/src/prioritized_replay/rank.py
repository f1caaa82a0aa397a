"""Rank-based prioritization: a binary max-heap on |td| plus precomputed rank partitions.

Sampling follows the power law P(rank) proportional to rank**-alpha. The heap
array is used directly as an approximately sorted array (position = rank),
with an occasional full sort to keep the approximation tight. Rank draws come
from a piecewise-linear inverse of the power law's cumulative mass whose knots
sit at precomputed partition boundaries; when every segment is a single rank
the inversion is exact, and coarser partitions flatten the distribution inside
each segment while keeping segment masses equal up to discreteness.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import PrioritizedMemory, SampledBatch, SamplerConfig

__all__ = ["RankStore", "Partition", "build_partition", "RankSampler"]

# A cached partition is reused while the live count stays within this
# fraction of the count it was built for.
PARTITION_REUSE_TOLERANCE = 0.10


class RankStore:
    """Array-backed binary max-heap of (|td| key, slot id) pairs.

    Heap positions double as approximate ranks: position 0 is rank 1. Every
    key update sifts the entry and bumps ``steps_since_sort``; once that
    counter reaches ``resort_interval`` the array is fully sorted (which also
    restores exact ranks) and the counter resets. The inverse index
    ``slot -> position`` is maintained through every swap.
    """

    def __init__(self, capacity: int, resort_interval: int = 1_000_000):
        if resort_interval < 1:
            raise ValueError("resort_interval must be a positive integer")
        self._keys: list[float] = []
        self._slots: list[int] = []
        self._pos: list[int] = [-1] * capacity
        self.resort_interval = resort_interval
        self.steps_since_sort = 0

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, slot: int) -> bool:
        return 0 <= slot < len(self._pos) and self._pos[slot] >= 0

    def key_of(self, slot: int) -> float:
        return self._keys[self._pos[slot]]

    def slot_at(self, position: int) -> int:
        return self._slots[position]

    def rank_of(self, slot: int) -> int:
        """1-based rank approximated by the slot's current heap position."""
        return self._pos[slot] + 1

    def keys(self) -> list[float]:
        return list(self._keys)

    def slots(self) -> list[int]:
        return list(self._slots)

    def slots_array(self) -> np.ndarray:
        return np.asarray(self._slots, dtype=np.int64)

    def insert(self, slot: int, key: float) -> None:
        if slot in self:
            raise ValueError(f"slot {slot} already present")
        self._keys.append(key)
        self._slots.append(slot)
        self._pos[slot] = len(self._keys) - 1
        self._sift_up(len(self._keys) - 1)

    def update(self, slot: int, key: float) -> None:
        i = self._pos[slot]
        if i < 0:
            raise KeyError(f"slot {slot} not present")
        self._keys[i] = key
        i = self._sift_up(i)
        self._sift_down(i)
        self.steps_since_sort += 1
        if self.steps_since_sort >= self.resort_interval:
            self.sort()

    def sort(self) -> None:
        """Fully sort by key descending (ties: older slot first); resets the counter."""
        order = sorted(range(len(self._keys)), key=lambda i: (-self._keys[i], self._slots[i]))
        self._keys = [self._keys[i] for i in order]
        self._slots = [self._slots[i] for i in order]
        for position, slot in enumerate(self._slots):
            self._pos[slot] = position
        self.steps_since_sort = 0

    def heap_ordered(self) -> bool:
        keys = self._keys
        return all(keys[(i - 1) >> 1] >= keys[i] for i in range(1, len(keys)))

    def _sift_up(self, i: int) -> int:
        keys = self._keys
        while i > 0:
            parent = (i - 1) >> 1
            if keys[i] > keys[parent]:
                self._swap(i, parent)
                i = parent
            else:
                break
        return i

    def _sift_down(self, i: int) -> int:
        keys = self._keys
        n = len(keys)
        while True:
            left = 2 * i + 1
            if left >= n:
                return i
            largest = left if keys[left] > keys[i] else i
            right = left + 1
            if right < n and keys[right] > keys[largest]:
                largest = right
            if largest == i:
                return i
            self._swap(i, largest)
            i = largest

    def _swap(self, i: int, j: int) -> None:
        keys, slots, pos = self._keys, self._slots, self._pos
        keys[i], keys[j] = keys[j], keys[i]
        slots[i], slots[j] = slots[j], slots[i]
        pos[slots[i]] = i
        pos[slots[j]] = j


@dataclass(frozen=True)
class Partition:
    """Rank segments of (approximately) equal mass under P(rank) ~ rank**-alpha.

    ``boundaries`` holds k+1 ascending rank offsets with boundaries[0] == 0 and
    boundaries[-1] == size; segment j covers ranks boundaries[j]+1 ..
    boundaries[j+1]. ``cumulative`` holds the exact cumulative mass at each
    boundary, which is what sampling inverts.
    """

    boundaries: tuple[int, ...]
    cumulative: tuple[float, ...]
    size: int
    alpha: float
    segments: int

    def segment_counts(self) -> np.ndarray:
        return np.diff(np.asarray(self.boundaries, dtype=np.int64))

    def segment_masses(self) -> np.ndarray:
        return np.diff(np.asarray(self.cumulative, dtype=np.float64))


@lru_cache(maxsize=256)
def build_partition(n: int, alpha: float, k: int) -> Partition:
    """Split ranks 1..n into k segments of near-equal mass under rank**-alpha.

    Boundary j sits at the smallest rank whose cumulative mass reaches j/k,
    nudged forward where necessary so every segment keeps at least one rank
    (so k == n forces singleton segments). The deviation of a segment's mass
    from 1/k is bounded by the mass of a single boundary rank.
    """
    if k < 1:
        raise ValueError("segment count must be positive")
    if n < k:
        raise ValueError(f"cannot split {n} ranks into {k} segments")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    ranks = np.arange(1, n + 1, dtype=np.float64)
    mass = ranks**-alpha
    cum = np.cumsum(mass)
    cum /= cum[-1]
    cum[-1] = 1.0
    boundaries = [0]
    for j in range(1, k):
        r = int(np.searchsorted(cum, j / k, side="left")) + 1
        r = max(r, boundaries[-1] + 1)
        r = min(r, n - (k - j))
        boundaries.append(r)
    boundaries.append(n)
    cumulative = (0.0, *(float(cum[b - 1]) for b in boundaries[1:]))
    return Partition(
        boundaries=tuple(boundaries),
        cumulative=cumulative,
        size=n,
        alpha=alpha,
        segments=k,
    )


class RankSampler(PrioritizedMemory):
    """Replay memory sampling by |td| rank: P(rank) ~ rank**-alpha.

    The priority key is |td| itself (no floor needed: even the worst rank has
    positive mass). Draws are stratified: [0, 1) splits into k equal
    probability ranges, one uniform value is taken from each, and each value
    maps to a rank through the partition's piecewise-linear cumulative mass.
    The reported probability of a draw is its segment's exact mass spread
    uniformly over the segment's ranks, i.e. precisely the distribution the
    draw was taken from.

    The partition is cached and reused while the live count stays within 10%
    of the count it was built for; ranks beyond the partition's size are not
    reachable until it is rebuilt, mirroring the cheap-reuse tradeoff this
    sampler is designed around.
    """

    def __init__(self, config: SamplerConfig, rng: np.random.Generator | None = None):
        super().__init__(config, rng)
        self.heap = RankStore(config.capacity, config.resort_interval)
        self._alpha = config.alpha
        self._partition: Partition | None = None

    @property
    def alpha(self) -> float:
        return self._alpha

    def set_alpha(self, alpha: float) -> None:
        """Change the prioritization exponent; the partition rebuilds lazily."""
        if alpha < 0:
            raise ValueError("alpha must be nonnegative")
        self._alpha = alpha
        self._partition = None

    def _priority_from_magnitude(self, magnitude: float) -> float:
        return magnitude

    def _assign_priority(self, slot: int, priority: float) -> None:
        if slot in self.heap:
            self.heap.update(slot, priority)
        else:
            self.heap.insert(slot, priority)

    def priority(self, slot: int) -> float:
        self._check_occupied(slot)
        return self.heap.key_of(slot)

    def full_sort(self) -> None:
        """Restore exact rank order (delegates to the heap's full sort)."""
        self.heap.sort()

    def partition_for(self, k: int | None = None) -> Partition:
        """Current partition, rebuilt only when (size, alpha, segments) drifts."""
        n = self._size
        if n == 0:
            raise ValueError("cannot partition an empty memory")
        k = self.config.minibatch if k is None else k
        segments = min(k, n)
        p = self._partition
        if (
            p is None
            or p.alpha != self._alpha
            or p.segments != segments
            or abs(n - p.size) > PARTITION_REUSE_TOLERANCE * p.size
        ):
            p = build_partition(n, self._alpha, segments)
            self._partition = p
        return p

    def sample(self, k: int | None = None, rng: np.random.Generator | None = None) -> SampledBatch:
        k = self.config.minibatch if k is None else k
        if k < 1:
            raise ValueError("minibatch size must be positive")
        if self._size == 0:
            raise ValueError("cannot sample from an empty memory")
        rng = self._rng if rng is None else rng
        ranks, probs = self._draw_ranks(k, rng, strata=k)
        slots = [self.heap.slot_at(int(r)) for r in ranks]
        return SampledBatch(
            indices=slots,
            probabilities=probs,
            transitions=[self._transitions[s] for s in slots],
        )

    def sample_many(
        self, k: int, batches: int, rng: np.random.Generator | None = None
    ) -> np.ndarray:
        """Draw ``batches`` stratified minibatches at once; returns a (batches, k) slot array."""
        if self._size == 0:
            raise ValueError("cannot sample from an empty memory")
        rng = self._rng if rng is None else rng
        ranks, _ = self._draw_ranks(batches * k, rng, strata=k)
        return self.heap.slots_array()[ranks].reshape(batches, k)

    def _draw_ranks(
        self, count: int, rng: np.random.Generator, strata: int
    ) -> tuple[np.ndarray, np.ndarray]:
        """0-based rank positions and their probabilities for ``count`` draws."""
        part = self.partition_for(strata)
        boundaries = np.asarray(part.boundaries, dtype=np.int64)
        knots = np.asarray(part.cumulative, dtype=np.float64)
        offsets = np.tile(np.arange(strata, dtype=np.float64), count // strata)
        u = (offsets + rng.random(count)) / strata
        piece = np.searchsorted(knots, u, side="right") - 1
        np.clip(piece, 0, part.segments - 1, out=piece)
        lo, hi = boundaries[piece], boundaries[piece + 1]
        counts = hi - lo
        span = knots[piece + 1] - knots[piece]
        fraction = (u - knots[piece]) / span
        ranks = lo + np.minimum((fraction * counts).astype(np.int64), counts - 1)
        np.clip(ranks, 0, self._size - 1, out=ranks)
        probs = (knots[piece + 1] - knots[piece]) / counts
        return ranks, probs
