"""Hardware-aware, training-free token pruning for vision transformers.

The pipeline has three stages:

* profile a model's latency ``L(n)`` and proxy accuracy ``A(n)`` over a grid of
  kept-token counts (:mod:`tokenprune.profiler`),
* pick the number of tokens to keep by maximising a convex combination of the
  two normalised utilities (:mod:`tokenprune.scheduler`),
* prune once, early in the network, ranking tokens by attention received plus
  a value-magnitude term and folding the pruned tokens into a single
  inattentive token (:mod:`tokenprune.pruning`).

Everything runs on a small numpy transformer engine (:mod:`tokenprune.model`).
"""

from tokenprune.tensor import ShapeError
from tokenprune.model import (
    AttentionCapture,
    ModelFormatError,
    ViTConfig,
    ViTModel,
    embed_tokens,
    forward,
    generate_random_model,
    load_model,
    mean_pool_model,
    save_model,
)
from tokenprune.pruning import (
    ImportanceScores,
    TokenPruner,
    attention_scores,
    prune_tokens,
    token_importance,
    value_scores,
)
from tokenprune.profiler import (
    LatencySample,
    WorkloadProfile,
    detect_nonlinearities,
    measure_accuracy_proxy,
    measure_latency,
    profile_grid,
)
from tokenprune.scheduler import (
    PruningSchedule,
    default_prune_layer,
    schedule_report,
    select_schedule,
    utility_accuracy,
    utility_latency,
)

__version__ = "0.1.0"

__all__ = [
    "AttentionCapture",
    "ImportanceScores",
    "LatencySample",
    "ModelFormatError",
    "PruningSchedule",
    "ShapeError",
    "TokenPruner",
    "ViTConfig",
    "ViTModel",
    "WorkloadProfile",
    "attention_scores",
    "default_prune_layer",
    "detect_nonlinearities",
    "embed_tokens",
    "forward",
    "generate_random_model",
    "load_model",
    "measure_accuracy_proxy",
    "measure_latency",
    "mean_pool_model",
    "profile_grid",
    "prune_tokens",
    "save_model",
    "schedule_report",
    "select_schedule",
    "token_importance",
    "utility_accuracy",
    "utility_latency",
    "value_scores",
]
