"""How the accuracy weight alpha moves the chosen operating point.

One profile is measured once; the choice is then swept over alpha.  Small
alpha favours speed (few tokens), alpha = 1 keeps everything.
"""

# The rule-based pooling model reads the label off the averaged tokens, so its
# accuracy genuinely depends on how many tokens it keeps.
from tokenprune.data import synthetic_dataset
from tokenprune.model import ViTConfig, mean_pool_model
from tokenprune.profiler import profile_grid
from tokenprune.scheduler import select_schedule

config = ViTConfig(depth=6, embed_dim=96, num_heads=3, num_tokens=65, num_classes=4)
model = mean_pool_model(config)
data = synthetic_dataset(config, samples=64, classes=4, seed=0, signal=1.0)
profile = profile_grid(model, data, n_min=2, n_max=65, stride=3, reps=10, warmup=2, trials=4)
by_n = {p.n: p for p in profile.grid}

print(f"{'alpha':>6} {'N_keep':>7} {'R':>4} {'latency us':>11} {'accuracy':>9}")
for alpha in (0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0):
    s = select_schedule(profile, alpha, depth=config.depth)
    p = by_n[s.n_keep]
    print(f"{alpha:>6.2f} {s.n_keep:>7} {s.r:>4} {p.latency.median_us:>11.0f} {p.accuracy:>9.3f}")
