"""Where to prune: early layers save more time, later ones lose less.

With a fixed number of removed tokens, move the pruning layer through the
network and record latency and accuracy.  The default places it about a
quarter of the way in.  Timings on a shared CPU are noisy at this size;
raise ``repetitions`` for smoother numbers.
"""

import numpy as np

from tokenprune.data import synthetic_dataset
from tokenprune.model import ViTConfig, embed_tokens, forward, mean_pool_model
from tokenprune.profiler import median_iqr, predict, time_call
from tokenprune.pruning import TokenPruner
from tokenprune.scheduler import default_prune_layer

# The rule-based pooling model reads the label off the averaged tokens, so
# accuracy depends on which tokens remain.
config = ViTConfig(depth=8, embed_dim=128, num_heads=4, num_tokens=65, num_classes=8)
model = mean_pool_model(config)
data = synthetic_dataset(config, samples=128, classes=8, seed=1, signal=1.0)
x = embed_tokens(None, config, seed=2)
r = 40

full = np.mean(predict(model, data.tokens) == data.labels)
print(f"unpruned accuracy {full:.3f}; default layer for depth {config.depth}: "
      f"{default_prune_layer(config.depth)}")
print(f"{'layer':>5} {'median us':>10} {'accuracy':>9}")
for layer in range(config.depth):
    hook = TokenPruner(r, layer)
    median, _ = median_iqr(time_call(lambda: forward(model, x, hook), repetitions=30, warmup=3))
    acc = np.mean(predict(model, data.tokens, hook) == data.labels)
    print(f"{layer:>5} {median:>10.0f} {acc:>9.3f}")
