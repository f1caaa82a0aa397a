"""Benchmark sweeps over (size, strategy, representation, seed) and sampler validation.

A sweep expands a grid of trial configurations, runs them (optionally across
a process pool; every trial is independently seeded so scheduling cannot
change results), and writes two comma-separated files: the raw per-trial
records and a per-cell summary with median/min/max update counts. All columns
except ``wall_ms`` are deterministic for a fixed configuration.

The validation suite re-measures the samplers' distributional guarantees
(empirical vs. target sampling distributions, tree-sum conservation,
partition mass balance, importance-weight unbiasedness) and reports each
check's measured value against its threshold.
"""

from __future__ import annotations

import csv
import os
import statistics
from dataclasses import dataclass, fields
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from .agent import REPRESENTATIONS, STRATEGIES, RunConfig, RunResult, run_training
from .cliffwalk import MAX_STATES, memory_size
from .core import SamplerConfig, Transition, sampling_probabilities
from .rank import RankSampler, build_partition
from .sumtree import ProportionalSampler, SumTree

__all__ = [
    "RAW_COLUMNS",
    "SUMMARY_COLUMNS",
    "SweepConfig",
    "SweepConfigError",
    "load_sweep_config",
    "expand_runs",
    "run_sweep",
    "write_results",
    "CheckResult",
    "validate_samplers",
]

RAW_COLUMNS = ("n", "transitions", "strategy", "representation", "seed", "updates", "censored", "wall_ms")
SUMMARY_COLUMNS = (
    "n",
    "transitions",
    "strategy",
    "representation",
    "median",
    "min",
    "max",
    "n_censored",
)

RAW_FILENAME = "runs.csv"
SUMMARY_FILENAME = "summary.csv"
OUT_DIR_ENV = "REPLAY_BENCH_OUT_DIR"

# hindsight selection costs O(memory) per update, so large chains are skipped
DEFAULT_ORACLE_MAX_N = 12


class SweepConfigError(ValueError):
    """Raised for malformed sweep configuration files or values."""


@dataclass(frozen=True)
class SweepConfig:
    """Grid definition plus the knobs shared by every trial in the sweep."""

    sizes: tuple[int, ...] = (2, 4, 6, 8, 10, 12, 14, 16)
    strategies: tuple[str, ...] = STRATEGIES
    representations: tuple[str, ...] = REPRESENTATIONS
    seeds: tuple[int, ...] = tuple(range(1, 11))
    budget: int = 10_000_000
    alpha: float | None = None
    beta0: float | None = None
    eta: float = 0.25
    clip_td: bool = False
    use_is_weights: bool = True
    minibatch: int = 16
    epsilon: float = 1e-6
    resort_interval: int = 1_000_000
    mse_threshold: float = 1e-3
    oracle_max_n: int = DEFAULT_ORACLE_MAX_N
    jobs: int | None = None
    out_dir: str | None = None

    def __post_init__(self) -> None:
        if not self.sizes:
            raise SweepConfigError("sizes must be non-empty")
        for n in self.sizes:
            if not 2 <= n <= MAX_STATES:
                raise SweepConfigError(f"sizes must lie in [2, {MAX_STATES}], got {n}")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise SweepConfigError(f"unknown strategy {s!r}; expected one of {STRATEGIES}")
        for r in self.representations:
            if r not in REPRESENTATIONS:
                raise SweepConfigError(
                    f"unknown representation {r!r}; expected one of {REPRESENTATIONS}"
                )
        if not self.seeds:
            raise SweepConfigError("seeds must be non-empty")
        if self.budget < 1:
            raise SweepConfigError("budget must be a positive integer")


_INT_TUPLE_KEYS = {"sizes", "seeds"}
_STR_TUPLE_KEYS = {"strategies", "representations"}
_BOOL_KEYS = {"clip_td", "use_is_weights"}
_INT_KEYS = {"budget", "minibatch", "resort_interval", "oracle_max_n", "jobs"}
_FLOAT_KEYS = {"alpha", "beta0", "eta", "epsilon", "mse_threshold"}
_STR_KEYS = {"out_dir"}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _INT_TUPLE_KEYS:
            return tuple(int(part) for part in raw.split(",") if part.strip())
        if key in _STR_TUPLE_KEYS:
            return tuple(part.strip() for part in raw.split(",") if part.strip())
        if key in _BOOL_KEYS:
            lowered = raw.lower()
            if lowered in ("on", "true", "1", "yes"):
                return True
            if lowered in ("off", "false", "0", "no"):
                return False
            raise ValueError(f"expected on/off, got {raw!r}")
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _STR_KEYS:
            return raw
    except ValueError as exc:
        raise SweepConfigError(str(exc)) from None
    raise SweepConfigError(f"unknown configuration key {key!r}")


def load_sweep_config(path: str | Path, overrides: dict | None = None) -> SweepConfig:
    """Parse a KEY = VALUE configuration file, then apply ``overrides`` on top.

    Lines starting with ``#`` and blank lines are ignored. Errors carry the
    offending line number.
    """
    values: dict = {}
    known = {f.name for f in fields(SweepConfig)}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise SweepConfigError(f"{path}:{lineno}: expected KEY = VALUE, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in known:
            raise SweepConfigError(f"{path}:{lineno}: unknown configuration key {key!r}")
        try:
            values[key] = _parse_value(key, raw)
        except SweepConfigError as exc:
            raise SweepConfigError(f"{path}:{lineno}: {exc}") from None
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return SweepConfig(**values)
    except SweepConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise SweepConfigError(str(exc)) from None


@dataclass(frozen=True)
class SweepCell:
    """One grid cell; ``skipped`` cells are recorded but never executed."""

    n: int
    strategy: str
    representation: str
    seed: int
    skipped: bool = False


def expand_runs(config: SweepConfig) -> list[SweepCell]:
    cells = []
    for n in config.sizes:
        for strategy in config.strategies:
            for representation in config.representations:
                skipped = strategy == "oracle" and n > config.oracle_max_n
                for seed in config.seeds:
                    cells.append(SweepCell(n, strategy, representation, seed, skipped))
    return cells


def _run_config(config: SweepConfig, cell: SweepCell) -> RunConfig:
    return RunConfig(
        n_states=cell.n,
        strategy=cell.strategy,
        representation=cell.representation,
        seed=cell.seed,
        budget=config.budget,
        mse_threshold=config.mse_threshold,
        minibatch=config.minibatch,
        step_size=config.eta,
        alpha=config.alpha,
        beta0=config.beta0,
        epsilon=config.epsilon,
        clip_td=config.clip_td,
        use_is_weights=config.use_is_weights,
        resort_interval=config.resort_interval,
    )


def run_sweep(config: SweepConfig) -> tuple[list[dict], list[dict]]:
    """Execute the grid and return (raw rows, summary rows) as column dicts."""
    cells = expand_runs(config)
    runnable = [c for c in cells if not c.skipped]
    configs = [_run_config(config, c) for c in runnable]
    jobs = config.jobs if config.jobs is not None else (os.cpu_count() or 1)
    jobs = max(1, min(jobs, len(configs) or 1))
    if jobs > 1 and len(configs) > 1:
        with Pool(processes=jobs) as pool:
            results = pool.map(run_training, configs)
    else:
        results = [run_training(rc) for rc in configs]

    raw_rows = []
    by_key = {(r.n_states, r.strategy, r.representation, r.seed): r for r in results}
    for cell in cells:
        if cell.skipped:
            raw_rows.append(
                {
                    "n": cell.n,
                    "transitions": memory_size(cell.n),
                    "strategy": cell.strategy,
                    "representation": cell.representation,
                    "seed": cell.seed,
                    "updates": "",
                    "censored": "skipped",
                    "wall_ms": 0,
                }
            )
        else:
            raw_rows.append(_raw_row(by_key[(cell.n, cell.strategy, cell.representation, cell.seed)]))
    raw_rows.sort(key=lambda row: (row["n"], row["strategy"], row["representation"], row["seed"]))
    return raw_rows, summarize(raw_rows)


def _raw_row(result: RunResult) -> dict:
    return {
        "n": result.n_states,
        "transitions": result.transitions,
        "strategy": result.strategy,
        "representation": result.representation,
        "seed": result.seed,
        "updates": result.updates,
        "censored": "false" if result.converged else "true",
        "wall_ms": int(round(result.wall_ms)),
    }


def summarize(raw_rows: list[dict]) -> list[dict]:
    """Per-(n, strategy, representation) medians with min/max and censor counts.

    Censored trials enter the order statistics at their budget value (a lower
    bound on the true updates-to-convergence); skipped cells produce a row
    with empty statistics.
    """
    groups: dict[tuple, list[dict]] = {}
    for row in raw_rows:
        groups.setdefault((row["n"], row["strategy"], row["representation"]), []).append(row)
    summary = []
    for (n, strategy, representation), rows in sorted(groups.items()):
        executed = [r for r in rows if r["censored"] != "skipped"]
        if executed:
            updates = [int(r["updates"]) for r in executed]
            stats = {
                "median": _format_stat(statistics.median(updates)),
                "min": min(updates),
                "max": max(updates),
                "n_censored": sum(1 for r in executed if r["censored"] == "true"),
            }
        else:
            stats = {"median": "", "min": "", "max": "", "n_censored": ""}
        summary.append(
            {
                "n": n,
                "transitions": memory_size(n),
                "strategy": strategy,
                "representation": representation,
                **stats,
            }
        )
    return summary


def _format_stat(value) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def write_results(raw_rows: list[dict], summary_rows: list[dict], out_dir: str | Path) -> tuple[Path, Path]:
    """Write the raw and summary files; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    raw_path = out / RAW_FILENAME
    summary_path = out / SUMMARY_FILENAME
    _write_csv(raw_path, RAW_COLUMNS, raw_rows)
    _write_csv(summary_path, SUMMARY_COLUMNS, summary_rows)
    return raw_path, summary_path


def _write_csv(path: Path, columns: tuple[str, ...], rows: list[dict]) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)


# -- sampler validation -------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    measured: float
    threshold: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        note = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: measured {self.measured:.6g} vs threshold {self.threshold:.6g}{note}"


def _dummy_transitions(count: int) -> list[Transition]:
    return [Transition(0, 0, 0.0, 0.0, 0, is_terminal=True) for _ in range(count)]


def _total_variation(counts: np.ndarray, target: np.ndarray) -> float:
    freq = counts / counts.sum()
    return float(0.5 * np.abs(freq - target).sum())


def check_sumtree_distribution(
    alpha: float, draws: int = 1_000_000, size: int = 16, seed: int = 7, threshold: float = 0.005
) -> CheckResult:
    """Empirical stratified-sampling frequencies vs. the exact distribution."""
    rng = np.random.default_rng(seed)
    priorities = rng.uniform(0.1, 5.0, size)
    sampler = ProportionalSampler(SamplerConfig(capacity=size, alpha=alpha, minibatch=size))
    for i, t in enumerate(_dummy_transitions(size)):
        sampler.store(t)
        sampler.update_priority(i, priorities[i] - sampler.config.epsilon)
    target = sampling_probabilities(priorities, alpha)
    batches = draws // size
    slots = sampler.sample_many(size, batches, rng=rng)
    counts = np.bincount(slots.ravel(), minlength=size).astype(float)
    tv = _total_variation(counts, target)
    return CheckResult(
        name=f"sum-tree stratified sampling, alpha={alpha}",
        measured=tv,
        threshold=threshold,
        passed=tv < threshold,
        detail=f"{batches * size} draws, total-variation distance",
    )


def check_rank_distribution(
    alpha: float, draws: int = 1_000_000, size: int = 16, seed: int = 11, threshold: float = 0.01
) -> CheckResult:
    """Empirical rank-sampler frequencies vs. the exact power law (exact ranks)."""
    rng = np.random.default_rng(seed)
    magnitudes = rng.uniform(0.1, 5.0, size)
    sampler = RankSampler(
        SamplerConfig(capacity=size, alpha=alpha, minibatch=size, resort_interval=1)
    )
    for i, t in enumerate(_dummy_transitions(size)):
        sampler.store(t)
        sampler.update_priority(i, magnitudes[i])
    sampler.full_sort()
    order = sorted(range(size), key=lambda i: (-magnitudes[i], i))
    ranks = np.empty(size, dtype=np.int64)
    for rank_index, slot in enumerate(order):
        ranks[slot] = rank_index + 1
    target = sampling_probabilities(1.0 / ranks, alpha)
    batches = draws // size
    slots = sampler.sample_many(size, batches, rng=rng)
    counts = np.bincount(slots.ravel(), minlength=size).astype(float)
    tv = _total_variation(counts, target)
    return CheckResult(
        name=f"rank stratified sampling, alpha={alpha}",
        measured=tv,
        threshold=threshold,
        passed=tv < threshold,
        detail=f"{batches * size} draws, total-variation distance",
    )


def check_tree_conservation(
    tree: SumTree | None = None, updates: int = 100_000, size: int = 1024, seed: int = 3,
    threshold: float = 1e-6,
) -> CheckResult:
    """Structural sum conservation after a long stream of random updates.

    Verifies the root against the leaf total and every internal node against
    its two children (relative errors), so a single corrupted node anywhere
    fails the check.
    """
    rng = np.random.default_rng(seed)
    if tree is None:
        tree = SumTree(size)
        leaves = rng.integers(0, tree.capacity, size=updates)
        values = rng.uniform(0.0, 10.0, size=updates)
        for leaf, value in zip(leaves, values):
            tree.set_leaf(int(leaf), float(value))
    reference = float(tree.nodes[tree.capacity - 1 :].sum())
    rel_error = abs(tree.total - reference) / max(reference, 1e-300)
    node_error = 0.0
    if tree.capacity > 1:
        internal = tree.nodes[: tree.capacity - 1]
        child_sums = tree.nodes[1 : 2 * tree.capacity - 1].reshape(-1, 2).sum(axis=1)
        node_error = float(np.max(np.abs(internal - child_sums) / (1.0 + np.abs(internal))))
    measured = max(rel_error, node_error)
    return CheckResult(
        name="sum-tree conservation",
        measured=measured,
        threshold=threshold,
        passed=measured < threshold,
        detail="max of relative |root - sum(leaves)| and per-node child-sum error",
    )


def check_partition_masses(
    n: int = 4096, alpha: float = 0.7, k: int = 16, threshold: float | None = None
) -> CheckResult:
    """Every partition segment's mass within 1/(2k) of the ideal 1/k."""
    if threshold is None:
        threshold = 1.0 / (2 * k)
    partition = build_partition(n, alpha, k)
    deviation = float(np.abs(partition.segment_masses() - 1.0 / k).max())
    return CheckResult(
        name=f"partition mass balance, n={n}, alpha={alpha}, k={k}",
        measured=deviation,
        threshold=threshold,
        passed=deviation <= threshold,
        detail="max |segment mass - 1/k|",
    )


def check_is_unbiasedness(
    draws: int = 1_000_000, size: int = 8, seed: int = 19, sigmas: float = 3.0
) -> CheckResult:
    """Monte Carlo mean of g_i / (n P(i)) matches the plain average of g within 3 SE."""
    rng = np.random.default_rng(seed)
    priorities = rng.uniform(0.2, 4.0, size)
    probs = sampling_probabilities(priorities, 0.7)
    gradients = rng.normal(0.0, 1.0, size)
    samples = rng.choice(size, size=draws, p=probs)
    terms = gradients[samples] / (size * probs[samples])
    estimate = float(terms.mean())
    spread = float(terms.std(ddof=1) / np.sqrt(draws))
    target = float(gradients.mean())
    deviation = abs(estimate - target)
    return CheckResult(
        name="importance-weight unbiasedness at beta=1",
        measured=deviation,
        threshold=sigmas * spread,
        passed=deviation < sigmas * spread,
        detail=f"|MC mean - plain mean| vs {sigmas} standard errors",
    )


def validate_samplers(draws: int = 1_000_000, seed: int = 0) -> list[CheckResult]:
    """Run the full sampler validation suite; every check must pass for release."""
    results = []
    for alpha in (0.0, 0.6, 0.7, 1.0):
        results.append(check_sumtree_distribution(alpha, draws=draws, seed=seed + 7))
        results.append(check_rank_distribution(alpha, draws=draws, seed=seed + 11))
    results.append(check_tree_conservation(seed=seed + 3))
    results.append(check_partition_masses())
    results.append(check_partition_masses(n=1000, alpha=0.0, k=10))
    results.append(check_is_unbiasedness(draws=draws, seed=seed + 19))
    return results
