"""Pre-embedded token datasets: synthetic generation and file I/O.

A dataset file is a tensor container (see :mod:`tokenprune.serialization`)
holding ``tokens`` with shape ``(samples, tokens, embed_dim)`` and ``labels``
with shape ``(samples,)``; labels are stored as whole-number floats.  A JSON
file of the form ``{"synthetic": {...}}`` names a seeded synthetic dataset
instead, which is regenerated on load.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from tokenprune import schemas
from tokenprune.model import ViTConfig
from tokenprune.serialization import ModelFormatError, read_tensors, write_tensors


@dataclass(frozen=True)
class Dataset:
    tokens: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        tokens = np.ascontiguousarray(self.tokens, dtype=np.float32)
        labels = np.asarray(self.labels)
        if tokens.ndim != 3:
            raise ValueError(f"tokens must be (samples, tokens, dim), got {tokens.shape}")
        if labels.shape != (tokens.shape[0],):
            raise ValueError(f"labels shape {labels.shape} does not match {tokens.shape[0]} samples")
        if labels.size and not np.all(labels == np.round(labels)):
            raise ValueError("labels must be whole numbers")
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "labels", labels.astype(np.int64))

    def __len__(self) -> int:
        return self.tokens.shape[0]


def synthetic_dataset(config: ViTConfig, samples: int, classes: int | None = None, seed: int = 0,
                      signal: float = 1.0, signal_fraction: float = 0.25) -> Dataset:
    """Gaussian tokens where a random subset of patch tokens carries the label.

    Each sample gets a uniformly random label ``y``.  All tokens are
    standard normal except that a ``signal_fraction`` share of the prunable
    tokens get ``signal`` added to feature ``y``; special tokens are zero.
    Pooling more tokens therefore makes the label easier to read.
    """
    classes = config.num_classes if classes is None else classes
    if samples < 1:
        raise ValueError("samples must be positive")
    if not 1 <= classes <= min(config.num_classes, config.embed_dim):
        raise ValueError(
            f"classes must be in [1, {min(config.num_classes, config.embed_dim)}], got {classes}"
        )
    rng = np.random.Generator(np.random.Philox(seed))
    n, d, s = config.num_tokens, config.embed_dim, config.num_special_tokens
    labels = rng.integers(0, classes, size=samples)
    tokens = rng.standard_normal((samples, n, d), dtype=np.float32)
    tokens[:, :s] = 0.0
    n_signal = max(1, int(round(signal_fraction * (n - s))))
    for i in range(samples):
        carriers = s + rng.choice(n - s, size=n_signal, replace=False)
        tokens[i, carriers, labels[i]] += np.float32(signal)
    return Dataset(tokens, labels)


def save_dataset(dataset: Dataset, path: str | os.PathLike) -> None:
    write_tensors(path, {"tokens": dataset.tokens,
                         "labels": dataset.labels.astype(np.float32)})


def load_dataset(path: str | os.PathLike, config: ViTConfig | None = None) -> Dataset:
    """Load a binary dataset, or regenerate one from a synthetic JSON spec."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:1] == b"{":
        try:
            spec = json.loads(raw.decode("utf-8"))
            schemas.validate(spec, "dataset_spec")
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from exc
        if config is None:
            raise ValueError(f"{path}: a model config is needed to build a synthetic dataset")
        params = spec["synthetic"]
        return synthetic_dataset(config, **params)
    tensors = read_tensors(path)
    for key in ("tokens", "labels"):
        if key not in tensors:
            raise ModelFormatError(f"{path}: missing tensor {key!r}")
    return Dataset(tensors["tokens"], tensors["labels"])
