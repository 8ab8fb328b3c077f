"""A small vision transformer, end to end, in plain numpy.

Build a seeded random model, embed a batch of tokens, run the forward pass,
and look at what one encoder layer's attention looks like.
"""

import numpy as np

from tokenprune import tensor as T
from tokenprune.model import ViTConfig, embed_tokens, forward, generate_random_model, model_hash

# A toy configuration: 4 layers, 64 features, 4 heads, 1 class token + 16 patches.
config = ViTConfig(depth=4, embed_dim=64, num_heads=4, num_tokens=17, num_classes=10)
model = generate_random_model(config, seed=0)
print("model hash:", model_hash(model))
print("parameters:", sum(w.size for w in model.weights.values()))

# Tokens are pre-embedded: (batch, tokens, features), float32.
x = embed_tokens(None, config, batch=2, seed=1)
logits = forward(model, x)
print("logits shape:", logits.shape, "dtype:", logits.dtype)
print("predicted classes:", np.argmax(logits, axis=-1))

# The same seed always gives the same weights, hence the same logits.
again = forward(generate_random_model(config, seed=0), x)
print("bit-identical rerun:", np.array_equal(logits, again))

# A hook sees each layer's attention map; here we only inspect it.
seen = {}


def inspect(capture, activations):
    seen["attn"] = capture.attn
    return activations


forward(model, x, inspect, hook_layer=1)
attn = seen["attn"]
print("attention map (batch, heads, tokens, tokens):", attn.shape)
print("rows sum to one:", np.allclose(attn.sum(-1), 1.0, atol=1e-5))

# The building blocks are usable on their own.
row = T.softmax(np.array([[1.0, 2.0, 3.0]], dtype=np.float32))
print("softmax of [1, 2, 3]:", np.round(row, 4))
