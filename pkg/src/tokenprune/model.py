"""A small pre-norm vision transformer encoder with a pruning hook.

Inputs arrive already tokenised as ``(batch, tokens, embed_dim)`` arrays; patch
extraction and positional embeddings are not modelled.  The classifier reads
special token 0 after the final layer norm.

Weights use ``x @ W + b`` convention, so every projection matrix is stored as
``(in_features, out_features)``.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from tokenprune import tensor as T
from tokenprune.serialization import ModelFormatError, read_tensors, write_tensors

__all__ = [
    "AttentionCapture",
    "ModelFormatError",
    "PruneHook",
    "ViTConfig",
    "ViTModel",
    "embed_tokens",
    "forward",
    "generate_random_model",
    "load_config",
    "load_model",
    "mean_pool_model",
    "model_hash",
    "save_config",
    "save_model",
]

HOOK_POINTS = ("attention", "output")


@dataclass(frozen=True)
class ViTConfig:
    depth: int
    embed_dim: int
    num_heads: int
    mlp_ratio: float = 4.0
    num_tokens: int = 197
    num_special_tokens: int = 1
    num_classes: int = 1000

    def __post_init__(self):
        for name in ("depth", "embed_dim", "num_heads", "num_tokens", "num_classes"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.embed_dim % self.num_heads:
            raise ValueError(
                f"embed_dim {self.embed_dim} is not divisible by num_heads {self.num_heads}"
            )
        if not 0 <= self.num_special_tokens < self.num_tokens:
            raise ValueError(
                f"num_special_tokens must be in [0, num_tokens), got {self.num_special_tokens}"
            )
        if self.num_special_tokens < 1:
            # the classifier reads special token 0
            raise ValueError("at least one special (class) token is required")
        if not self.mlp_ratio > 0 or self.hidden_dim < 1:
            raise ValueError(f"mlp_ratio must give a positive hidden size, got {self.mlp_ratio}")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads

    @property
    def hidden_dim(self) -> int:
        return int(round(self.embed_dim * self.mlp_ratio))

    @classmethod
    def from_dict(cls, data: Mapping) -> "ViTConfig":
        required = ("depth", "embed_dim", "num_heads", "mlp_ratio", "num_tokens",
                    "num_special_tokens", "num_classes")
        missing = [k for k in required if k not in data]
        if missing:
            raise ValueError(f"config is missing keys: {', '.join(missing)}")
        unknown = sorted(set(data) - set(required))
        if unknown:
            raise ValueError(f"config has unknown keys: {', '.join(unknown)}")
        return cls(**{k: data[k] for k in required})

    def to_dict(self) -> dict:
        return asdict(self)


def expected_shapes(config: ViTConfig) -> dict[str, tuple[int, ...]]:
    """Canonical tensor names and shapes, in file order."""
    d, h, c = config.embed_dim, config.hidden_dim, config.num_classes
    shapes: dict[str, tuple[int, ...]] = {}
    for i in range(config.depth):
        p = f"blocks.{i}."
        shapes[p + "norm1.weight"] = (d,)
        shapes[p + "norm1.bias"] = (d,)
        shapes[p + "attn.qkv.weight"] = (d, 3 * d)
        shapes[p + "attn.qkv.bias"] = (3 * d,)
        shapes[p + "attn.proj.weight"] = (d, d)
        shapes[p + "attn.proj.bias"] = (d,)
        shapes[p + "norm2.weight"] = (d,)
        shapes[p + "norm2.bias"] = (d,)
        shapes[p + "mlp.fc1.weight"] = (d, h)
        shapes[p + "mlp.fc1.bias"] = (h,)
        shapes[p + "mlp.fc2.weight"] = (h, d)
        shapes[p + "mlp.fc2.bias"] = (d,)
    shapes["norm.weight"] = (d,)
    shapes["norm.bias"] = (d,)
    shapes["head.weight"] = (d, c)
    shapes["head.bias"] = (c,)
    return shapes


@dataclass(frozen=True)
class ViTModel:
    """Config plus validated float32 weights.  Treat as immutable."""

    config: ViTConfig
    weights: dict[str, np.ndarray] = field(repr=False)

    def __post_init__(self):
        shapes = expected_shapes(self.config)
        extra = sorted(set(self.weights) - set(shapes))
        if extra:
            raise ModelFormatError(f"unexpected tensors: {', '.join(extra)}")
        checked = {}
        for name, shape in shapes.items():
            if name not in self.weights:
                raise ModelFormatError(f"missing tensor {name!r}")
            arr = np.ascontiguousarray(self.weights[name], dtype=np.float32)
            if arr.shape != shape:
                raise ModelFormatError(
                    f"tensor {name!r} has shape {arr.shape}, expected {shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise ModelFormatError(f"tensor {name!r} contains NaN or Inf")
            arr.setflags(write=False)
            checked[name] = arr
        object.__setattr__(self, "weights", checked)
        blocks = []
        for i in range(self.config.depth):
            p = f"blocks.{i}."
            blocks.append({k[len(p):]: v for k, v in checked.items() if k.startswith(p)})
        object.__setattr__(self, "_blocks", tuple(blocks))

    def block(self, i: int) -> dict[str, np.ndarray]:
        """Weights of encoder layer ``i`` keyed without the ``blocks.{i}.`` prefix."""
        return self._blocks[i]


@dataclass(frozen=True)
class AttentionCapture:
    """Post-softmax attention and value tensors of one layer.

    ``attn`` is ``(batch, heads, N', N')`` and ``values`` is
    ``(batch, heads, N', head_dim)``, where ``N'`` is the token count entering
    that layer.
    """

    attn: np.ndarray
    values: np.ndarray
    layer_index: int


PruneHook = Callable[[AttentionCapture, np.ndarray], np.ndarray]


# --- weights -----------------------------------------------------------------


def _philox(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def generate_random_model(config: ViTConfig, seed: int = 0) -> ViTModel:
    """Deterministic random weights from a Philox (counter-based) generator.

    Projection matrices are drawn N(0, 1/fan_in), biases N(0, 0.02^2), layer
    norms start at gamma=1, beta=0.  Tensors are drawn in canonical file order,
    so the same ``(config, seed)`` gives bit-identical weights everywhere.
    """
    rng = _philox(seed)
    weights = {}
    for name, shape in expected_shapes(config).items():
        if ".norm" in name or name.startswith("norm."):
            fill = 1.0 if name.endswith("weight") else 0.0
            weights[name] = np.full(shape, fill, dtype=np.float32)
        elif name.endswith("weight"):
            scale = np.float32(1.0 / np.sqrt(shape[0]))
            weights[name] = rng.standard_normal(shape, dtype=np.float32) * scale
        else:
            weights[name] = rng.standard_normal(shape, dtype=np.float32) * np.float32(0.02)
    return ViTModel(config, weights)


def mean_pool_model(config: ViTConfig) -> ViTModel:
    """Hand-set weights that turn the encoder into a rule-based classifier.

    Layer 0 is a pass-through.  Every later layer has zero queries and keys,
    so attention is uniform, and identity value/output projections, so each
    token gains the mean of the layer-normed tokens.  The MLPs are zero.  The
    head predicts class ``k`` from feature ``k`` of the class token, i.e. the
    label is the argmax of the pooled features over the first
    ``num_classes`` dimensions.
    """
    d = config.embed_dim
    if config.num_classes > d:
        raise ValueError("mean_pool_model needs num_classes <= embed_dim")
    weights = {}
    for name, shape in expected_shapes(config).items():
        weights[name] = np.zeros(shape, dtype=np.float32)
        if name.endswith("norm1.weight") or name.endswith("norm2.weight") or name == "norm.weight":
            weights[name][:] = 1.0
    eye = np.eye(d, dtype=np.float32)
    for i in range(1, config.depth):
        weights[f"blocks.{i}.attn.qkv.weight"][:, 2 * d:] = eye
        weights[f"blocks.{i}.attn.proj.weight"][:] = eye
    weights["head.weight"][: config.num_classes, :] = np.eye(config.num_classes, dtype=np.float32)
    return ViTModel(config, weights)


def save_config(config: ViTConfig, path: str | os.PathLike) -> None:
    from tokenprune.serialization import atomic_write_bytes

    text = json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"
    atomic_write_bytes(path, text.encode("utf-8"))


def load_config(source: str | os.PathLike | Mapping) -> ViTConfig:
    if isinstance(source, Mapping):
        return ViTConfig.from_dict(source)
    path = Path(source)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    try:
        return ViTConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{path}: {exc}") from exc


def save_model(model: ViTModel, path: str | os.PathLike) -> None:
    write_tensors(path, model.weights)


def load_model(config_source, weights_source: str | os.PathLike) -> ViTModel:
    config = config_source if isinstance(config_source, ViTConfig) else load_config(config_source)
    tensors = read_tensors(weights_source)
    return ViTModel(config, tensors)


def model_hash(model: ViTModel) -> str:
    """SHA-256 over the config JSON and every weight's name, shape and bytes."""
    h = hashlib.sha256()
    h.update(json.dumps(model.config.to_dict(), sort_keys=True).encode())
    for name, arr in model.weights.items():
        h.update(name.encode())
        h.update(repr(arr.shape).encode())
        h.update(arr.astype("<f4").tobytes())
    return h.hexdigest()


def embed_tokens(source, config: ViTConfig, batch: int = 1, num_tokens: int | None = None,
                 seed: int = 0) -> np.ndarray:
    """Return a ``(batch, tokens, embed_dim)`` float32 input.

    ``source`` is either an array of pre-embedded tokens (validated and
    returned as float32) or ``None`` for standard-normal synthetic tokens drawn
    from a seeded Philox generator.
    """
    if source is not None:
        x = T.as_tensor(source, "tokens")
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[-1] != config.embed_dim:
            raise T.ShapeError(
                f"tokens must be (batch, tokens, {config.embed_dim}), got {x.shape}"
            )
        return x
    n = config.num_tokens if num_tokens is None else num_tokens
    if n < config.num_special_tokens + 1:
        raise ValueError(f"need at least {config.num_special_tokens + 1} tokens, got {n}")
    return _philox(seed).standard_normal((batch, n, config.embed_dim), dtype=np.float32)


# --- forward -----------------------------------------------------------------


def _attention(model: ViTModel, w: Mapping[str, np.ndarray], x: np.ndarray, layer: int):
    cfg = model.config
    b, n, d = x.shape
    h, c = cfg.num_heads, cfg.head_dim
    y = T.layer_norm(x, w["norm1.weight"], w["norm1.bias"])
    qkv = T.linear(y, w["attn.qkv.weight"], w["attn.qkv.bias"])
    qkv = qkv.reshape(b, n, 3, h, c).transpose(2, 0, 3, 1, 4)
    q, k, v = qkv[0], qkv[1], qkv[2]
    scores = T.matmul(q * np.float32(c ** -0.5), k.transpose(0, 1, 3, 2))
    attn = T.softmax(scores, axis=-1)
    out = T.matmul(attn, v).transpose(0, 2, 1, 3).reshape(b, n, d)
    out = T.linear(out, w["attn.proj.weight"], w["attn.proj.bias"])
    return out, AttentionCapture(attn=attn, values=np.ascontiguousarray(v), layer_index=layer)


def _mlp(w: Mapping[str, np.ndarray], x: np.ndarray) -> np.ndarray:
    y = T.layer_norm(x, w["norm2.weight"], w["norm2.bias"])
    y = T.gelu(T.linear(y, w["mlp.fc1.weight"], w["mlp.fc1.bias"]))
    return T.linear(y, w["mlp.fc2.weight"], w["mlp.fc2.bias"])


def _apply_hook(hook: PruneHook, capture: AttentionCapture, x: np.ndarray,
                special: int) -> np.ndarray:
    out = hook(capture, x)
    if out is x:
        return x
    out = np.asarray(out)
    if out.ndim != 3 or out.shape[0] != x.shape[0] or out.shape[2] != x.shape[2]:
        raise T.ShapeError(
            f"prune hook returned shape {out.shape}; expected (batch={x.shape[0]}, *, {x.shape[2]})"
        )
    if out.shape[1] < special + 1 or not np.array_equal(out[:, :special], x[:, :special]):
        raise ValueError("prune hook removed or altered special tokens")
    return np.ascontiguousarray(out, dtype=np.float32)


def forward(model: ViTModel, tokens, prune_hook: PruneHook | None = None,
            hook_layer: int | None = None, hook_point: str | None = None) -> np.ndarray:
    """Run the encoder and return ``(batch, num_classes)`` logits.

    If ``prune_hook`` is given it is called as ``hook(capture, x)`` at layer
    ``hook_layer`` (default: ``prune_hook.layer``) and its return value
    replaces the activations for the rest of the network.  With
    ``hook_point="attention"`` (the default, or ``prune_hook.point``) the hook
    runs right after the attention residual, so that layer's MLP already sees
    the reduced token set; with ``"output"`` it runs after the whole block.
    """
    cfg = model.config
    x = T.as_tensor(tokens, "tokens")
    if x.ndim != 3 or x.shape[2] != cfg.embed_dim:
        raise T.ShapeError(f"tokens must be (batch, tokens, {cfg.embed_dim}), got {x.shape}")
    if x.shape[1] < cfg.num_special_tokens + 1:
        raise ValueError(
            f"need at least {cfg.num_special_tokens + 1} tokens, got {x.shape[1]}"
        )
    if prune_hook is not None:
        if hook_layer is None:
            hook_layer = getattr(prune_hook, "layer", None)
        if hook_point is None:
            hook_point = getattr(prune_hook, "point", "attention")
        if hook_layer is None or not 0 <= hook_layer < cfg.depth:
            raise ValueError(f"hook layer must be in [0, {cfg.depth}), got {hook_layer}")
        if hook_point not in HOOK_POINTS:
            raise ValueError(f"hook point must be one of {HOOK_POINTS}, got {hook_point!r}")

    for i in range(cfg.depth):
        w = model.block(i)
        attn_out, capture = _attention(model, w, x, i)
        x = x + attn_out
        hooked = prune_hook is not None and i == hook_layer
        if hooked and hook_point == "attention":
            x = _apply_hook(prune_hook, capture, x, cfg.num_special_tokens)
        x = x + _mlp(w, x)
        if hooked and hook_point == "output":
            x = _apply_hook(prune_hook, capture, x, cfg.num_special_tokens)

    cls = T.layer_norm(x[:, 0], model.weights["norm.weight"], model.weights["norm.bias"])
    return T.linear(cls, model.weights["head.weight"], model.weights["head.bias"])
