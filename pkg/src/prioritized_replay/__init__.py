"""Prioritized experience replay: sum-tree and rank-based samplers with
importance-sampling correction, plus a cliff-walk benchmark harness."""

from .agent import (
    REPRESENTATIONS,
    STRATEGIES,
    LinearQ,
    RunConfig,
    RunResult,
    greedy_select,
    oracle_select,
    run_training,
)
from .cliffwalk import (
    Cliffwalk,
    FeatureMap,
    fill_memory,
    ground_truth_q,
    memory_size,
    mse_to_truth,
    value_iteration_q,
)
from .core import (
    DEFAULT_EPSILON,
    PrioritizedMemory,
    SampledBatch,
    SamplerConfig,
    Transition,
    sampling_probabilities,
    td_magnitude,
)
from .rank import Partition, RankSampler, RankStore, build_partition
from .sumtree import ProportionalSampler, SumTree
from .weighting import (
    AnnealSchedule,
    TransformContext,
    TransformOptions,
    TransformedPriority,
    anneal,
    apply_priority_transforms,
    is_weights,
)

__version__ = "0.1.0"

__all__ = [
    "AnnealSchedule",
    "Cliffwalk",
    "DEFAULT_EPSILON",
    "FeatureMap",
    "LinearQ",
    "Partition",
    "PrioritizedMemory",
    "ProportionalSampler",
    "RankSampler",
    "RankStore",
    "REPRESENTATIONS",
    "RunConfig",
    "RunResult",
    "SampledBatch",
    "SamplerConfig",
    "STRATEGIES",
    "SumTree",
    "TransformContext",
    "TransformOptions",
    "TransformedPriority",
    "Transition",
    "anneal",
    "apply_priority_transforms",
    "build_partition",
    "fill_memory",
    "greedy_select",
    "ground_truth_q",
    "is_weights",
    "memory_size",
    "mse_to_truth",
    "oracle_select",
    "run_training",
    "sampling_probabilities",
    "td_magnitude",
    "value_iteration_q",
]
