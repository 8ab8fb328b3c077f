"""Training-free token pruning with attention and value scores.

Each prunable token gets an importance score made of two terms:

* attention score: take the max over heads of the post-softmax attention map,
  sum the attention each token *receives* (a column sum over queries), then
  divide by the largest score so the top token scores 1;
* value score: take the max over heads of the value tensor, sum over the
  feature dimension, then softmax across tokens.

The lowest-scoring ``R`` tokens are removed and replaced by a single
inattentive token holding their mean, appended after the kept tokens.
Special (prefix) tokens are never scored or removed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tokenprune import tensor as T
from tokenprune.model import AttentionCapture

# Axis of the head-reduced (query, key) attention map summed to score a token.
# 0 sums over queries (attention received by each key token); switching to 1
# would score by attention given instead.
ATTENTION_SUM_AXIS = 0

SPECIAL_SCORE = np.inf


@dataclass(frozen=True)
class ImportanceScores:
    """Per-token scores, shape ``(batch, N')`` each.

    Special tokens hold ``+inf`` in every field so they always rank first.
    """

    a_s: np.ndarray
    v_s: np.ndarray
    total: np.ndarray
    special_count: int

    @property
    def num_tokens(self) -> int:
        return self.total.shape[-1]


def _batched(x: np.ndarray, core_ndim: int, name: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float32)
    if x.ndim == core_ndim:
        return x[None], True
    if x.ndim != core_ndim + 1:
        raise T.ShapeError(f"{name} must have {core_ndim} or {core_ndim + 1} dims, got {x.shape}")
    return x, False


def _check_special(special_count: int, n: int) -> None:
    if not 0 <= special_count < n:
        raise ValueError(f"special_count must be in [0, {n}), got {special_count}")


def attention_scores(attn, special_count: int = 1) -> np.ndarray:
    """Attention-received scores from ``(H, N, N)`` or ``(batch, H, N, N)`` maps."""
    a, squeeze = _batched(attn, 3, "attention")
    if a.shape[-1] != a.shape[-2]:
        raise T.ShapeError(f"attention slices must be square, got {a.shape[-2:]}")
    _check_special(special_count, a.shape[-1])
    m = np.max(a, axis=1)
    scores = np.sum(m, axis=1 + ATTENTION_SUM_AXIS, dtype=np.float32)
    prunable = scores[:, special_count:]
    scores[:, special_count:] = prunable / np.max(prunable, axis=-1, keepdims=True)
    scores[:, :special_count] = SPECIAL_SCORE
    return scores[0] if squeeze else scores


def value_scores(values, special_count: int = 1) -> np.ndarray:
    """Softmax-normalised value scores from ``(H, N, C)`` or ``(batch, H, N, C)``."""
    v, squeeze = _batched(values, 3, "values")
    _check_special(special_count, v.shape[-2])
    per_token = np.sum(np.max(v, axis=1), axis=-1, dtype=np.float32)
    scores = np.empty_like(per_token)
    scores[:, special_count:] = T.softmax(per_token[:, special_count:], axis=-1)
    scores[:, :special_count] = SPECIAL_SCORE
    return scores[0] if squeeze else scores


def token_importance(capture: AttentionCapture, special_count: int = 1) -> ImportanceScores:
    a_s = attention_scores(capture.attn, special_count)
    v_s = value_scores(capture.values, special_count)
    if a_s.shape != v_s.shape:
        raise T.ShapeError(f"attention gives {a_s.shape} scores but values give {v_s.shape}")
    return ImportanceScores(a_s=a_s, v_s=v_s, total=a_s + v_s, special_count=special_count)


def keep_indices(total, special_count: int, n_keep: int) -> np.ndarray:
    """Indices of the tokens to keep, ascending, for each row of ``total``.

    Special tokens are always kept; the remaining ``n_keep - special_count``
    slots go to the highest scores, with equal scores resolved in favour of the
    lower token index.
    """
    total = np.atleast_2d(np.asarray(total))
    n = total.shape[-1]
    if not special_count <= n_keep <= n:
        raise ValueError(f"n_keep must be in [{special_count}, {n}], got {n_keep}")
    prunable = total[:, special_count:]
    # stable sort on the negated score keeps lower indices first among ties
    order = np.argsort(-prunable, axis=-1, kind="stable")[:, : n_keep - special_count]
    chosen = np.sort(order, axis=-1) + special_count
    head = np.broadcast_to(np.arange(special_count), (total.shape[0], special_count))
    return np.concatenate([head, chosen], axis=-1)


def prune_tokens(activations, scores: ImportanceScores, r: int) -> np.ndarray:
    """Drop the ``r`` least important tokens and append their mean.

    Returns ``(batch, N' - r + 1, d)``; ``r == 0`` returns the input unchanged.
    """
    x = np.asarray(activations, dtype=np.float32)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.ndim != 3:
        raise T.ShapeError(f"activations must be (batch, tokens, dim), got {x.shape}")
    b, n, _ = x.shape
    total = np.atleast_2d(scores.total)
    if total.shape != (b, n):
        raise T.ShapeError(f"scores shape {total.shape} does not match activations {x.shape}")
    s = scores.special_count
    if r == 0:
        return x[0] if squeeze else x
    if not 1 <= r <= n - s - 1:
        raise ValueError(f"R must be in [0, {n - s - 1}] for {n} tokens with {s} special, got {r}")

    keep = keep_indices(total, s, n - r)
    mask = np.ones((b, n), dtype=bool)
    np.put_along_axis(mask, keep, False, axis=1)
    kept = np.take_along_axis(x, keep[:, :, None], axis=1)
    pruned = x[mask].reshape(b, r, x.shape[2])
    inattentive = np.mean(pruned, axis=1, dtype=np.float64).astype(np.float32)
    out = np.concatenate([kept, inattentive[:, None, :]], axis=1)
    return out[0] if squeeze else out


@dataclass(frozen=True)
class TokenPruner:
    """Forward hook that prunes ``r`` tokens at encoder layer ``layer``."""

    r: int
    layer: int
    special_count: int = 1
    point: str = "attention"

    def __call__(self, capture: AttentionCapture, x: np.ndarray) -> np.ndarray:
        if self.r == 0:
            return x
        scores = token_importance(capture, self.special_count)
        return prune_tokens(x, scores, self.r)


class RandomTokenDropper:
    """Hook that removes uniformly random prunable tokens, with no inattentive token.

    Each sample in the batch gets its own draw.  Used as the accuracy proxy:
    random removal is a pessimistic stand-in for any informed pruning rule.
    """

    def __init__(self, n_keep: int, layer: int, special_count: int,
                 rng: np.random.Generator, point: str = "output"):
        self.n_keep = n_keep
        self.layer = layer
        self.special_count = special_count
        self.rng = rng
        self.point = point

    def __call__(self, capture: AttentionCapture, x: np.ndarray) -> np.ndarray:
        b, n, _ = x.shape
        if self.n_keep >= n:
            return x
        s = self.special_count
        noise = self.rng.random((b, n))
        keep = keep_indices(noise, s, self.n_keep)
        return np.take_along_axis(x, keep[:, :, None], axis=1)
