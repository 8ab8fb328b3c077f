"""Measure how latency responds to the number of kept tokens.

On a CPU the curve is close to linear; on accelerators it often has steps
where a token count crosses a tile or wave boundary.  The detector reports
jumps between neighbouring grid points larger than a relative threshold.
"""

import numpy as np

from tokenprune.data import synthetic_dataset
from tokenprune.model import ViTConfig, generate_random_model
from tokenprune.profiler import detect_nonlinearities, profile_grid

config = ViTConfig(depth=6, embed_dim=96, num_heads=3, num_tokens=65, num_classes=4)
model = generate_random_model(config, seed=0)
data = synthetic_dataset(config, samples=32, classes=4, seed=0)

profile = profile_grid(model, data, n_min=2, n_max=65, stride=9, reps=40, warmup=5,
                       device_label="demo-cpu")
# A random model predicts at chance level; its accuracy column is shown only for shape.
print(f"{'n':>4} {'median us':>10} {'IQR us':>8} {'accuracy':>9}")
for point in profile.grid:
    print(f"{point.n:>4} {point.latency.median_us:>10.0f} {point.latency.iqr_us:>8.0f} "
          f"{point.accuracy:>9.3f}")
print("profile hash:", profile.content_hash())
print("\nmeasured curve, steps over 10%:", detect_nonlinearities(profile, 0.10))

# A curve shaped like an accelerator's: flat plateaus with a jump at 128.
ns = np.arange(64, 257)
stepped = np.where(ns > 128, 1.4, 1.0) * (200 + 0.1 * ns)
for step in detect_nonlinearities(ns, 0.10, latency=stepped):
    print(f"step between n={step.n_before} and n={step.n_after}: {step.change:+.0%}")
