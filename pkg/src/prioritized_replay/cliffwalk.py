"""The blind cliff-walk chain: environment, exhaustive memory fill, and ground truth.

An n-state chain with one 'right' and one 'wrong' action per state. The wrong
action ends the episode with zero reward; the right action advances one state,
and completing the chain pays the single reward of 1. Which action id is
'right' alternates with state parity, so nothing can be generalized across
states: every state-action value has to be learned from its own transitions.
A uniformly random policy finds the reward with probability 2**-n.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import Transition

__all__ = [
    "MAX_STATES",
    "Cliffwalk",
    "FeatureMap",
    "fill_memory",
    "memory_size",
    "value_iteration_q",
    "ground_truth_q",
    "mse_to_truth",
]

# Exhaustive fills enumerate 2**n action sequences; 16 states tops out at
# 131070 stored transitions, which is the largest size the benchmark uses.
MAX_STATES = 16


@dataclass(frozen=True)
class Cliffwalk:
    """Chain of ``n_states`` states with discount 1 - 1/n."""

    n_states: int

    def __post_init__(self) -> None:
        if self.n_states < 2:
            raise ValueError("the chain needs at least 2 states")

    @property
    def gamma(self) -> float:
        """Discount 1 - 1/n, keeping values on the same scale for every n."""
        return 1.0 - 1.0 / self.n_states

    def right_action(self, state: int) -> int:
        """The advancing action for ``state``; alternates with state parity."""
        return state % 2

    def step(self, state: int, action: int) -> Transition:
        """Take ``action`` in ``state`` and return the resulting transition."""
        if not 0 <= state < self.n_states:
            raise ValueError(f"state {state} out of range [0, {self.n_states})")
        if action not in (0, 1):
            raise ValueError(f"action must be 0 or 1, got {action}")
        if action != self.right_action(state):
            # falling off: episode over, nothing earned
            return Transition(state, action, 0.0, 0.0, 0, is_terminal=True)
        if state == self.n_states - 1:
            return Transition(state, action, 1.0, 0.0, 0, is_terminal=True)
        return Transition(state, action, 0.0, self.gamma, state + 1, is_terminal=False)


@dataclass(frozen=True)
class FeatureMap:
    """State-action features: a one-hot indicator, optionally plus a constant bias of 1.

    Without the bias this is an exact tabular parameterization; with it, every
    feature vector has exactly two unit entries and updates couple through the
    shared bias weight.
    """

    n_states: int
    bias: bool = False

    @property
    def n_cells(self) -> int:
        return 2 * self.n_states

    @property
    def dimension(self) -> int:
        return self.n_cells + (1 if self.bias else 0)

    def cell(self, state: int, action: int) -> int:
        return 2 * state + action

    def vector(self, state: int, action: int) -> np.ndarray:
        phi = np.zeros(self.dimension, dtype=np.float64)
        phi[self.cell(state, action)] = 1.0
        if self.bias:
            phi[-1] = 1.0
        return phi


def memory_size(n_states: int) -> int:
    """Number of transitions an exhaustive fill produces: 2**(n+1) - 2."""
    return 2 ** (n_states + 1) - 2


def fill_memory(spec: Cliffwalk, rng: np.random.Generator | None = None) -> list[Transition]:
    """Execute all 2**n action sequences (in shuffled order) and collect every transition.

    Exactly one sequence survives to the final reward; the rest terminate
    early with zero reward. The result reflects the transition frequencies a
    random behavior policy would produce.
    """
    n = spec.n_states
    if n > MAX_STATES:
        raise ValueError(f"exhaustive fill supports at most {MAX_STATES} states, got {n}")
    rng = rng if rng is not None else np.random.default_rng(0)
    sequences = rng.permutation(1 << n)
    memory: list[Transition] = []
    for sequence in sequences:
        state = 0
        for step_index in range(n):
            action = (int(sequence) >> step_index) & 1
            transition = spec.step(state, action)
            memory.append(transition)
            if transition.is_terminal:
                break
            state = transition.next_state
    return memory


def value_iteration_q(spec: Cliffwalk, tol: float = 1e-12) -> np.ndarray:
    """Independent fixed-point solve of the optimal action values, shape (n, 2)."""
    n = spec.n_states
    rewards = np.zeros((n, 2))
    discounts = np.zeros((n, 2))
    next_states = np.zeros((n, 2), dtype=np.int64)
    for s in range(n):
        for a in (0, 1):
            t = spec.step(s, a)
            rewards[s, a] = t.reward
            discounts[s, a] = t.discount
            next_states[s, a] = t.next_state
    q = np.zeros((n, 2))
    while True:
        backup = rewards + discounts * q[next_states].max(axis=2)
        if np.abs(backup - q).max() < tol:
            return backup
        q = backup


@lru_cache(maxsize=32)
def _verified_truth(n_states: int) -> np.ndarray:
    spec = Cliffwalk(n_states)
    closed = np.zeros((n_states, 2))
    states = np.arange(n_states)
    closed[states, states % 2] = spec.gamma ** (n_states - 1 - states)
    solved = value_iteration_q(spec)
    if np.abs(closed - solved).max() > 1e-9:
        raise AssertionError("closed-form action values disagree with value iteration")
    closed.setflags(write=False)
    return closed


def ground_truth_q(spec: Cliffwalk) -> np.ndarray:
    """Optimal action values, shape (n, 2): gamma**(n-1-s) for the right action, 0 otherwise.

    The closed form is checked against :func:`value_iteration_q` before use
    (once per chain size) so a bad formula can never leak into a benchmark.
    """
    return _verified_truth(spec.n_states)


def mse_to_truth(q_estimate, spec: Cliffwalk) -> float:
    """Mean squared error of a (n, 2) value table against the ground truth."""
    estimate = np.asarray(q_estimate, dtype=np.float64)
    truth = ground_truth_q(spec)
    if estimate.shape != truth.shape:
        raise ValueError(f"expected shape {truth.shape}, got {estimate.shape}")
    return float(np.mean((estimate - truth) ** 2))
