"""Choose how many tokens to keep from a measured profile.

Accuracy and latency are each turned into a utility in [0, 1] and blended
with a weight alpha; the kept-token count is the best grid point.
"""

# The rule-based pooling model reads the label off the averaged tokens, so its
# accuracy genuinely depends on how many tokens it keeps.
import numpy as np

from tokenprune.data import synthetic_dataset
from tokenprune.model import ViTConfig, embed_tokens, forward, mean_pool_model
from tokenprune.profiler import compare_latency, profile_grid
from tokenprune.pruning import TokenPruner
from tokenprune.scheduler import schedule_report, select_schedule

config = ViTConfig(depth=8, embed_dim=128, num_heads=4, num_tokens=65, num_classes=4)
model = mean_pool_model(config)
data = synthetic_dataset(config, samples=64, classes=4, seed=0, signal=1.0)
profile = profile_grid(model, data, n_min=2, n_max=65, stride=7, reps=15, warmup=3, trials=4)

schedule = select_schedule(profile, alpha=0.5, depth=config.depth)
print(f"keep {schedule.n_keep} of {schedule.num_tokens} tokens "
      f"(prune R={schedule.r} at layer {schedule.prune_layer})")
for row in schedule_report(schedule, profile)["rows"]:
    mark = "  <- chosen" if row["optimum"] else ""
    print(f"n={row['n']:>3}  U_A={row['utility_accuracy']:.3f}  U_L={row['utility_latency']:.3f}"
          f"  U={row['utility']:.3f}{mark}")

# Apply the schedule and compare against the unpruned model, runs interleaved.
x = embed_tokens(None, config, seed=9)
hook = TokenPruner(schedule.r, schedule.prune_layer, config.num_special_tokens)
(pruned, _), (base, _) = compare_latency(lambda: forward(model, x, hook),
                                         lambda: forward(model, x), repetitions=30, warmup=3)
print(f"baseline {base:.0f} us, pruned {pruned:.0f} us ({1 - pruned / base:.0%} faster)")
print("same prediction:", np.argmax(forward(model, x, hook)) == np.argmax(forward(model, x)))
