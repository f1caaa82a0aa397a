"""Q-learning on the cliff walk with five replay-selection strategies.

A run pre-fills the replay memory exhaustively, then repeatedly selects a
stored transition (per strategy), computes its TD error, refreshes its
priority where applicable, and takes one gradient step, checking the MSE
against the ground-truth values after every update. The loop is generic over
the value representation (tabular or linear with a shared bias feature) and
over the sampler; stochastic strategies draw stratified minibatches and fold
in importance-sampling weights, while uniform/greedy/oracle update with
weight 1.

The inner loops run on plain Python floats with incrementally maintained
squared error, so convergence can be checked after every update without a
sweep; the arithmetic is cross-checked against :class:`LinearQ` in the tests.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .cliffwalk import Cliffwalk, FeatureMap, fill_memory, ground_truth_q, memory_size
from .core import DEFAULT_EPSILON, SamplerConfig, Transition, td_magnitude
from .rank import RankSampler
from .sumtree import ProportionalSampler
from .weighting import AnnealSchedule, is_weights

__all__ = [
    "STRATEGIES",
    "REPRESENTATIONS",
    "RunConfig",
    "RunResult",
    "LinearQ",
    "greedy_select",
    "oracle_select",
    "run_training",
]

STRATEGIES = ("uniform", "oracle", "greedy_td", "rank_stochastic", "proportional_stochastic")
REPRESENTATIONS = ("tabular", "linear")

DEFAULT_ALPHA = {"rank_stochastic": 0.7, "proportional_stochastic": 0.6}
DEFAULT_BETA0 = {"rank_stochastic": 0.5, "proportional_stochastic": 0.4}

# Incremental squared-error tracking is resynced from scratch this often.
_RESYNC_MASK = (1 << 20) - 1


@dataclass(frozen=True)
class RunConfig:
    """One benchmark trial: chain size, strategy, representation, seed, and knobs."""

    n_states: int
    strategy: str
    representation: str = "tabular"
    seed: int = 1
    budget: int = 10_000_000
    mse_threshold: float = 1e-3
    minibatch: int = 16
    step_size: float = 0.25
    init_scale: float = 0.1
    alpha: float | None = None
    beta0: float | None = None
    epsilon: float = DEFAULT_EPSILON
    clip_td: bool = False
    use_is_weights: bool = True
    resort_interval: int = 1_000_000
    tree_rebuild_interval: int = 1_000_000
    target_copy_period: int = 1

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.representation not in REPRESENTATIONS:
            raise ValueError(
                f"unknown representation {self.representation!r}; expected one of {REPRESENTATIONS}"
            )
        if self.budget < 1:
            raise ValueError("budget must be a positive integer")
        if self.target_copy_period < 1:
            raise ValueError("target_copy_period must be a positive integer")


@dataclass(frozen=True)
class RunResult:
    """Outcome of one trial. ``converged`` False means the budget was exhausted
    (a censored run), in which case ``updates`` equals the budget."""

    n_states: int
    transitions: int
    strategy: str
    representation: str
    seed: int
    updates: int
    converged: bool
    final_mse: float
    wall_ms: float


class LinearQ:
    """Action values Q(s, a) = theta . phi(s, a) with per-transition gradient steps.

    With a bias-free feature map this is exactly a lookup table; with the
    shared bias feature every update also moves all other values through the
    bias weight.
    """

    def __init__(
        self,
        features: FeatureMap,
        rng: np.random.Generator | None = None,
        step_size: float = 0.25,
        init_scale: float = 0.1,
        theta: np.ndarray | None = None,
    ):
        self.features = features
        self.step_size = step_size
        if theta is not None:
            theta = np.asarray(theta, dtype=np.float64).copy()
            if theta.shape != (features.dimension,):
                raise ValueError(f"theta must have shape ({features.dimension},)")
            self.theta = theta
        else:
            rng = rng if rng is not None else np.random.default_rng(0)
            self.theta = rng.normal(0.0, init_scale, features.dimension)

    def value(self, state: int, action: int) -> float:
        v = self.theta[self.features.cell(state, action)]
        if self.features.bias:
            v += self.theta[-1]
        return float(v)

    def q_table(self) -> np.ndarray:
        """Current values as an (n_states, 2) table."""
        table = self.theta[: self.features.n_cells].reshape(-1, 2).copy()
        if self.features.bias:
            table += self.theta[-1]
        return table

    def td_error(self, transition: Transition, bootstrap: "LinearQ | None" = None) -> float:
        """r + discount * Q'(s', argmax_a Q(s', a)) - Q(s, a).

        The argmax always runs under these (online) parameters; the value at
        that action comes from ``bootstrap`` when given (a lagged target copy)
        and from the online parameters otherwise. Terminal transitions carry
        discount 0, so no bootstrap term survives.
        """
        if transition.discount == 0.0:
            boot = 0.0
        else:
            ns = transition.next_state
            a_star = 0 if self.value(ns, 0) >= self.value(ns, 1) else 1
            source = bootstrap if bootstrap is not None else self
            boot = source.value(ns, a_star)
        return transition.reward + transition.discount * boot - self.value(
            transition.prev_state, transition.action
        )

    def apply(self, transition: Transition, weight: float = 1.0, td_error: float | None = None) -> float:
        """One gradient step theta += step_size * weight * td * phi; returns the td used."""
        if td_error is None:
            td_error = self.td_error(transition)
        step = self.step_size * weight * td_error
        self.theta[self.features.cell(transition.prev_state, transition.action)] += step
        if self.features.bias:
            self.theta[-1] += step
        return td_error

    def copy(self) -> "LinearQ":
        return LinearQ(
            self.features, step_size=self.step_size, theta=self.theta
        )


def greedy_select(magnitudes) -> int:
    """Slot holding the largest stored |td|; ties resolve to the lowest slot id."""
    m = np.asarray(magnitudes, dtype=np.float64)
    if m.size == 0:
        raise ValueError("cannot select from an empty memory")
    return int(np.argmax(m))


def oracle_select(transitions: list[Transition], q: LinearQ, truth: np.ndarray) -> int:
    """Hindsight pick: tentatively apply every stored transition's update and
    return the slot whose updated parameters leave the smallest MSE against
    ``truth``. Parameters are restored between candidates; ties resolve to the
    lowest slot id. Cost is O(len(transitions)) value sweeps, so this is only
    usable at small scales.
    """
    if not transitions:
        raise ValueError("cannot select from an empty memory")
    snapshot = q.theta.copy()
    best_slot = 0
    best_mse = np.inf
    for slot, transition in enumerate(transitions):
        q.apply(transition, 1.0)
        mse = float(np.mean((q.q_table() - truth) ** 2))
        q.theta[:] = snapshot
        if mse < best_mse:
            best_mse = mse
            best_slot = slot
    return best_slot


def run_training(config: RunConfig, instrument=None, initial_theta=None) -> RunResult:
    """Execute one trial and return its outcome.

    ``instrument`` is an optional callable ``(event, **data)`` receiving
    ``store`` events while the sampler fills, one ``replay`` event per applied
    update, and a final ``done`` event; it exists for tests and diagnostics.
    ``initial_theta`` overrides the random parameter initialization.
    """
    start = time.perf_counter()
    spec = Cliffwalk(config.n_states)
    strategy_id = STRATEGIES.index(config.strategy)
    repr_id = REPRESENTATIONS.index(config.representation)
    root = np.random.SeedSequence([config.seed, config.n_states, strategy_id, repr_id])
    fill_seed, init_seed, loop_seed = root.spawn(3)

    memory = fill_memory(spec, np.random.default_rng(fill_seed))
    features = FeatureMap(config.n_states, bias=config.representation == "linear")
    truth = ground_truth_q(spec)

    if initial_theta is not None:
        theta = np.asarray(initial_theta, dtype=np.float64).copy()
        if theta.shape != (features.dimension,):
            raise ValueError(f"initial_theta must have shape ({features.dimension},)")
    else:
        theta = np.random.default_rng(init_seed).normal(0.0, config.init_scale, features.dimension)

    loop_rng = np.random.default_rng(loop_seed)
    if config.strategy == "oracle":
        updates, converged, final_mse = _loop_oracle(
            config, spec, memory, features, truth, theta, instrument
        )
    elif config.strategy in ("uniform", "greedy_td"):
        updates, converged, final_mse = _loop_pointwise(
            config, memory, features, truth, theta, loop_rng, instrument
        )
    else:
        updates, converged, final_mse = _loop_stochastic(
            config, memory, features, truth, theta, loop_rng, instrument
        )

    wall_ms = (time.perf_counter() - start) * 1e3
    if instrument is not None:
        beta0 = config.beta0 if config.beta0 is not None else DEFAULT_BETA0.get(config.strategy)
        final_beta = (
            AnnealSchedule(beta0, 1.0, config.budget).value(updates) if beta0 is not None else None
        )
        instrument("done", updates=updates, converged=converged, beta=final_beta)
    return RunResult(
        n_states=config.n_states,
        transitions=memory_size(config.n_states),
        strategy=config.strategy,
        representation=config.representation,
        seed=config.seed,
        updates=updates,
        converged=converged,
        final_mse=final_mse,
        wall_ms=wall_ms,
    )


def _memory_arrays(memory: list[Transition], features: FeatureMap):
    """Per-slot lookup lists used by the fast loops."""
    cells = [features.cell(t.prev_state, t.action) for t in memory]
    rewards = [t.reward for t in memory]
    discounts = [t.discount for t in memory]
    next2 = [2 * t.next_state for t in memory]
    return cells, rewards, discounts, next2


def _initial_errors(theta: np.ndarray, features: FeatureMap, truth: np.ndarray):
    """Cell weights, bias weight, truth list, and the error sums they imply."""
    cq = [float(v) for v in theta[: features.n_cells]]
    bq = float(theta[-1]) if features.bias else 0.0
    truth_flat = [float(v) for v in truth.reshape(-1)]
    errors = [cq[i] + bq - truth_flat[i] for i in range(features.n_cells)]
    sse = sum(e * e for e in errors)
    s1 = sum(errors)
    return cq, bq, truth_flat, sse, s1


def _exact_sums(cq, bq, truth_flat):
    sse = 0.0
    s1 = 0.0
    for i in range(len(truth_flat)):
        e = cq[i] + bq - truth_flat[i]
        sse += e * e
        s1 += e
    return sse, s1


def _loop_pointwise(config, memory, features, truth, theta, rng, instrument):
    """Uniform and greedy-TD strategies: one slot, one weight-1 update per step."""
    cells, rewards, discounts, next2 = _memory_arrays(memory, features)
    cq, bq, truth_flat, sse, s1 = _initial_errors(theta, features, truth)
    n_cells = features.n_cells
    n_cells_f = float(n_cells)
    has_bias = features.bias
    eta = config.step_size
    budget = config.budget
    sse_threshold = config.mse_threshold * n_cells
    size = len(memory)
    clip = config.clip_td
    use_target = config.target_copy_period > 1
    period = config.target_copy_period
    tc = list(cq) if use_target else cq
    tb = bq

    greedy = config.strategy == "greedy_td"
    if greedy:
        # every transition enters at the running max "priority"; replaying it
        # overwrites the stored magnitude with the fresh |td|
        magnitudes = np.full(size, 1.0)
    else:
        chunk = rng.integers(0, size, size=8192)
        chunk_pos = 0

    updates = 0
    converged = False
    while updates < budget:
        if greedy:
            slot = int(np.argmax(magnitudes))
        else:
            if chunk_pos == 8192:
                chunk = rng.integers(0, size, size=8192)
                chunk_pos = 0
            slot = int(chunk[chunk_pos])
            chunk_pos += 1

        c = cells[slot]
        g = discounts[slot]
        q_sa = cq[c] + bq
        if g != 0.0:
            ns2 = next2[slot]
            if use_target:
                boot = tc[ns2] + tb if cq[ns2] >= cq[ns2 + 1] else tc[ns2 + 1] + tb
            else:
                boot = cq[ns2] + bq if cq[ns2] >= cq[ns2 + 1] else cq[ns2 + 1] + bq
            delta = rewards[slot] + g * boot - q_sa
        else:
            delta = rewards[slot] - q_sa

        if greedy:
            magnitudes[slot] = td_magnitude(delta, clip)

        d = eta * delta
        if has_bias:
            sse += 2.0 * d * s1 + n_cells_f * d * d
            s1 += n_cells_f * d
            bq += d
        e_c = cq[c] + bq - truth_flat[c]
        sse += d * (2.0 * e_c + d)
        s1 += d
        cq[c] += d
        updates += 1

        if instrument is not None:
            instrument("replay", slot=slot, td_error=delta, weight=1.0, step=updates)
        if use_target and updates % period == 0:
            tc[:] = cq
            tb = bq
        if sse < sse_threshold or (updates & _RESYNC_MASK) == 0:
            sse, s1 = _exact_sums(cq, bq, truth_flat)
            if sse < sse_threshold:
                converged = True
                break

    sse, _ = _exact_sums(cq, bq, truth_flat)
    theta[:n_cells] = cq
    if has_bias:
        theta[-1] = bq
    return updates, converged, sse / n_cells


def _loop_stochastic(config, memory, features, truth, theta, rng, instrument):
    """Rank or proportional prioritization with stratified minibatches and IS weights."""
    strategy = config.strategy
    alpha = config.alpha if config.alpha is not None else DEFAULT_ALPHA[strategy]
    beta0 = config.beta0 if config.beta0 is not None else DEFAULT_BETA0[strategy]
    sampler_config = SamplerConfig(
        capacity=len(memory),
        alpha=alpha,
        epsilon=config.epsilon,
        minibatch=config.minibatch,
        resort_interval=config.resort_interval,
        clip_td=config.clip_td,
    )
    if strategy == "rank_stochastic":
        sampler = RankSampler(sampler_config, rng=rng)
    else:
        sampler = ProportionalSampler(sampler_config, rng=rng)
    for transition in memory:
        slot = sampler.store(transition)
        if instrument is not None:
            instrument("store", slot=slot, priority=sampler.priority(slot))

    cells, rewards, discounts, next2 = _memory_arrays(memory, features)
    cq, bq, truth_flat, sse, s1 = _initial_errors(theta, features, truth)
    n_cells = features.n_cells
    n_cells_f = float(n_cells)
    has_bias = features.bias
    eta = config.step_size
    budget = config.budget
    sse_threshold = config.mse_threshold * n_cells
    use_target = config.target_copy_period > 1
    period = config.target_copy_period
    tc = list(cq) if use_target else cq
    tb = bq
    schedule = AnnealSchedule(beta0, 1.0, budget)
    proportional = strategy == "proportional_stochastic"
    rebuild_every = config.tree_rebuild_interval if proportional else 0
    memory_len = len(sampler)

    updates = 0
    priority_updates = 0
    converged = False
    while updates < budget and not converged:
        beta = schedule.value(updates)
        batch = sampler.sample()
        weights = (
            is_weights(batch.probabilities, memory_len, beta)
            if config.use_is_weights
            else None
        )
        for j, slot in enumerate(batch.indices):
            c = cells[slot]
            g = discounts[slot]
            q_sa = cq[c] + bq
            if g != 0.0:
                ns2 = next2[slot]
                if use_target:
                    boot = tc[ns2] + tb if cq[ns2] >= cq[ns2 + 1] else tc[ns2 + 1] + tb
                else:
                    boot = cq[ns2] + bq if cq[ns2] >= cq[ns2 + 1] else cq[ns2 + 1] + bq
                delta = rewards[slot] + g * boot - q_sa
            else:
                delta = rewards[slot] - q_sa

            sampler.update_priority(slot, delta)
            priority_updates += 1
            if rebuild_every and priority_updates % rebuild_every == 0:
                sampler.rebuild()

            w = float(weights[j]) if weights is not None else 1.0
            d = eta * w * delta
            if has_bias:
                sse += 2.0 * d * s1 + n_cells_f * d * d
                s1 += n_cells_f * d
                bq += d
            e_c = cq[c] + bq - truth_flat[c]
            sse += d * (2.0 * e_c + d)
            s1 += d
            cq[c] += d
            updates += 1

            if instrument is not None:
                instrument(
                    "replay",
                    slot=slot,
                    td_error=delta,
                    weight=w,
                    beta=beta,
                    probability=float(batch.probabilities[j]),
                    priority=sampler.priority(slot),
                    step=updates,
                )
            if use_target and updates % period == 0:
                tc[:] = cq
                tb = bq
            if sse < sse_threshold or (updates & _RESYNC_MASK) == 0:
                sse, s1 = _exact_sums(cq, bq, truth_flat)
                if sse < sse_threshold:
                    converged = True
                    break
            if updates >= budget:
                break

    sse, _ = _exact_sums(cq, bq, truth_flat)
    theta[:n_cells] = cq
    if has_bias:
        theta[-1] = bq
    return updates, converged, sse / n_cells


def _loop_oracle(config, spec, memory, features, truth, theta, instrument):
    """Hindsight selection, vectorized over the distinct state-action cells.

    Every stored copy of a given (s, a) is identical here, so candidate
    updates collapse onto the 2n cells; the post-update error for each cell
    follows in closed form from the rank-one structure of the step, and the
    winning cell maps back to its lowest slot id. The result matches
    :func:`oracle_select`'s snapshot/restore semantics exactly.
    """
    n = config.n_states
    n_cells = features.n_cells
    has_bias = features.bias
    eta = config.step_size
    budget = config.budget
    threshold = config.mse_threshold

    cell_of_slot = np.array([features.cell(t.prev_state, t.action) for t in memory])
    cell_reward = np.zeros(n_cells)
    cell_discount = np.zeros(n_cells)
    cell_next = np.zeros(n_cells, dtype=np.int64)
    for s in range(n):
        for a in (0, 1):
            t = spec.step(s, a)
            c = features.cell(s, a)
            cell_reward[c] = t.reward
            cell_discount[c] = t.discount
            cell_next[c] = t.next_state

    q_cells = theta[:n_cells].copy()
    bias = float(theta[-1]) if has_bias else 0.0
    truth_flat = truth.reshape(-1)

    # greedy selection is deterministic, so once the loss stops improving the
    # run is in a limit cycle and can never converge; stop it early (censored)
    stall_window = max(2000, 4 * len(memory))
    best_sse = np.inf
    last_improvement = 0

    updates = 0
    converged = False
    while updates < budget:
        q = q_cells + bias
        errors = q - truth_flat
        sse = float(errors @ errors)
        if sse / n_cells < threshold:
            converged = True
            break
        if sse < best_sse:
            best_sse = sse
            last_improvement = updates
        elif updates - last_improvement >= stall_window:
            break
        s1 = float(errors.sum())
        boot = q.reshape(-1, 2).max(axis=1)[cell_next]
        delta = cell_reward + cell_discount * boot - q
        d = eta * delta
        if has_bias:
            sse_after = sse + 2.0 * d * s1 + n_cells * d * d + (2.0 * errors + 3.0 * d) * d
        else:
            sse_after = sse + d * (2.0 * errors + d)
        slot = int(np.argmin(sse_after[cell_of_slot]))
        c = int(cell_of_slot[slot])
        step = float(d[c])
        q_cells[c] += step
        if has_bias:
            bias += step
        updates += 1
        if instrument is not None:
            instrument("replay", slot=slot, td_error=float(delta[c]), weight=1.0, step=updates)

    final = q_cells + bias - truth_flat
    final_mse = float(final @ final) / n_cells
    converged = converged or final_mse < threshold
    theta[:n_cells] = q_cells
    if has_bias:
        theta[-1] = bias
    return updates, converged, final_mse
