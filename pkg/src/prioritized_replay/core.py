"""Shared replay types, the sampler contract, and the sampling-probability math."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DEFAULT_EPSILON",
    "INITIAL_PRIORITY",
    "Transition",
    "SamplerConfig",
    "SampledBatch",
    "sampling_probabilities",
    "td_magnitude",
    "PrioritizedMemory",
]

DEFAULT_EPSILON = 1e-6

# Priority given to the very first entry of an empty memory; every later
# insertion uses the running maximum of all priorities assigned so far.
INITIAL_PRIORITY = 1.0


@dataclass(frozen=True)
class Transition:
    """Atomic unit of experience: (previous state, action, reward, discount, next state).

    ``discount`` is the per-step discount attached to the bootstrap term, so it
    must be exactly zero on terminal transitions.
    """

    prev_state: int
    action: int
    reward: float
    discount: float
    next_state: int
    is_terminal: bool = False

    def __post_init__(self) -> None:
        if not math.isfinite(self.reward):
            raise ValueError(f"reward must be finite, got {self.reward!r}")
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError(f"discount must lie in [0, 1], got {self.discount!r}")
        if self.is_terminal and self.discount != 0.0:
            raise ValueError("terminal transitions must carry a zero discount")


@dataclass(frozen=True)
class SamplerConfig:
    """Settings shared by both prioritized samplers.

    ``epsilon`` only matters for the proportional variant (it keeps zero-error
    transitions samplable) and ``resort_interval`` only for the rank variant.
    """

    capacity: int
    alpha: float = 0.6
    epsilon: float = DEFAULT_EPSILON
    minibatch: int = 16
    resort_interval: int = 1_000_000
    clip_td: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError("capacity must be a positive integer")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.minibatch < 1:
            raise ValueError("minibatch must be a positive integer")
        if self.resort_interval < 1:
            raise ValueError("resort_interval must be a positive integer")


@dataclass
class SampledBatch:
    """One stratified minibatch: slot ids, their sampling probabilities, and payloads.

    ``weights`` stays ``None`` until importance-sampling weights are attached.
    """

    indices: list[int]
    probabilities: np.ndarray
    transitions: list[Transition]
    weights: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        if not (len(self.indices) == self.probabilities.size == len(self.transitions)):
            raise ValueError("indices, probabilities, and transitions must have equal length")
        if self.probabilities.size and not np.all(
            (self.probabilities > 0.0) & (self.probabilities <= 1.0)
        ):
            raise ValueError("sampling probabilities must lie in (0, 1]")

    def __len__(self) -> int:
        return len(self.indices)


def sampling_probabilities(priorities, alpha: float) -> np.ndarray:
    """Normalized sampling distribution p_i**alpha / sum_k p_k**alpha.

    ``alpha`` controls the strength of prioritization: 0 gives the uniform
    distribution regardless of the priorities, 1 samples proportionally.
    """
    p = np.asarray(priorities, dtype=np.float64)
    if p.size == 0:
        raise ValueError("priorities must be non-empty")
    if not np.all(np.isfinite(p)) or np.any(p <= 0.0):
        raise ValueError("priorities must be positive and finite")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    scaled = p**alpha
    probs = scaled / scaled.sum()
    # second normalization pass absorbs the rounding of the first
    return probs / probs.sum()


def td_magnitude(td_error: float, clip: bool = False) -> float:
    """|td_error|, clipping the signed error to [-1, 1] first when requested."""
    if clip:
        td_error = -1.0 if td_error < -1.0 else (1.0 if td_error > 1.0 else td_error)
    return abs(td_error)


class PrioritizedMemory:
    """Sliding-window transition store with max-priority insertion.

    New transitions receive the running maximum of every priority assigned so
    far (bootstrapped to 1 for an empty memory), which guarantees they are at
    least as likely to be replayed as any current occupant. Once full, each
    store overwrites the oldest slot, replacing its entry in the sampler's
    index structure in the same call.

    Subclasses provide the index structure and the priority map. All methods
    assume a single writer: callers serialize store/update_priority/sample.
    """

    def __init__(self, config: SamplerConfig, rng: np.random.Generator | None = None):
        self.config = config
        self._rng = rng if rng is not None else np.random.default_rng(config.seed)
        self._transitions: list[Transition | None] = [None] * config.capacity
        self._cursor = 0
        self._size = 0
        self._max_priority = INITIAL_PRIORITY

    def __len__(self) -> int:
        return self._size

    @property
    def capacity(self) -> int:
        return self.config.capacity

    @property
    def max_priority(self) -> float:
        """Running maximum priority; what the next stored transition receives."""
        return self._max_priority

    def is_occupied(self, slot: int) -> bool:
        return 0 <= slot < self.config.capacity and self._transitions[slot] is not None

    def transition(self, slot: int) -> Transition:
        self._check_occupied(slot)
        return self._transitions[slot]  # type: ignore[return-value]

    def store(self, transition: Transition) -> int:
        """Insert ``transition`` at the next window slot and return its slot id."""
        slot = self._cursor
        self._transitions[slot] = transition
        self._assign_priority(slot, self._max_priority)
        self._cursor = (self._cursor + 1) % self.config.capacity
        self._size = min(self._size + 1, self.config.capacity)
        return slot

    def update_priority(self, slot: int, td_error: float) -> None:
        """Refresh ``slot``'s priority from a freshly computed TD error."""
        self._check_occupied(slot)
        magnitude = td_magnitude(td_error, self.config.clip_td)
        priority = self._priority_from_magnitude(magnitude)
        if priority > self._max_priority:
            self._max_priority = priority
        self._assign_priority(slot, priority)

    def set_priority(self, slot: int, priority: float) -> None:
        """Directly assign a priority, e.g. after an external transform."""
        self._check_occupied(slot)
        if not priority > 0.0:
            raise ValueError("priorities must be positive")
        if priority > self._max_priority:
            self._max_priority = priority
        self._assign_priority(slot, priority)

    def _check_occupied(self, slot: int) -> None:
        if not self.is_occupied(slot):
            raise KeyError(f"slot {slot} is not occupied")

    # -- subclass surface ---------------------------------------------------

    def _priority_from_magnitude(self, magnitude: float) -> float:
        raise NotImplementedError

    def _assign_priority(self, slot: int, priority: float) -> None:
        raise NotImplementedError

    def priority(self, slot: int) -> float:
        raise NotImplementedError

    def sample(self, k: int | None = None, rng: np.random.Generator | None = None) -> SampledBatch:
        raise NotImplementedError
