"""Which tokens survive pruning, and why.

Each prunable token is scored by how much attention it receives and by the
magnitude of its value vectors.  The lowest scorers are dropped and replaced
by a single averaged token; the class token is always kept.
"""

import numpy as np

from tokenprune.model import ViTConfig, embed_tokens, forward, generate_random_model
from tokenprune.pruning import TokenPruner, keep_indices, prune_tokens, token_importance

config = ViTConfig(depth=4, embed_dim=32, num_heads=4, num_tokens=9, num_classes=5)
model = generate_random_model(config, seed=3)
x = embed_tokens(None, config, seed=4)

captured = {}


def grab(capture, activations):
    captured["capture"], captured["x"] = capture, activations
    return activations


forward(model, x, grab, hook_layer=1)
scores = token_importance(captured["capture"], special_count=1)

np.set_printoptions(precision=3, suppress=True)
print("attention score A_S:", scores.a_s[0])
print("value score     V_S:", scores.v_s[0])
print("combined           :", scores.total[0])

# Drop R = 4 of the 8 patch tokens: keep the 4 best, plus one averaged token.
r = 4
print("kept positions:", keep_indices(scores.total[0], 1, config.num_tokens - r))
pruned = prune_tokens(captured["x"], scores, r)
print("tokens before / after:", captured["x"].shape[1], "/", pruned.shape[1])

# The same thing as a forward-pass hook: prune 4 tokens after layer 1's attention.
full = forward(model, x)
cut = forward(model, x, TokenPruner(r=4, layer=1))
print("logits, full  :", full[0])
print("logits, pruned:", cut[0])
print("same prediction:", np.argmax(full) == np.argmax(cut))

# R = 0 leaves the model untouched.
print("R=0 is exact:", np.array_equal(forward(model, x, TokenPruner(r=0, layer=1)), full))
