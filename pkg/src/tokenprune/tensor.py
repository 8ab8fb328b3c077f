"""Dense float32 tensor math for the transformer forward pass.

Tensors are plain ``numpy.ndarray`` objects with dtype ``float32`` in C
(row-major) order.  Every function here is pure: it never mutates its inputs
and returns a fresh float32 array.  Reductions run through numpy's pairwise
kernels and matrix products through BLAS sgemm, both of which use a fixed
accumulation order for a given shape, so repeated calls are bit-identical.
"""

from __future__ import annotations

import math

import numpy as np

DTYPE = np.float32
LAYER_NORM_EPS = 1e-6

_GELU_C = math.sqrt(2.0 / math.pi)


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_tensor(x, name: str = "tensor") -> np.ndarray:
    """Return ``x`` as a C-contiguous float32 array, rejecting non-finite values."""
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    if arr.size == 0 or any(d <= 0 for d in arr.shape):
        raise ShapeError(f"{name} has an empty dimension: shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def _check_axis(x: np.ndarray, axis: int) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} out of range for shape {x.shape}")
    return axis % x.ndim


def matmul(a, b) -> np.ndarray:
    """Matrix product ``a @ b``; leading dimensions broadcast as batch dims."""
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")
    try:
        return np.matmul(a, b)
    except ValueError as exc:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}") from exc


def softmax(x, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    axis = _check_axis(x, axis)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def layer_norm(x, gamma, beta, eps: float = LAYER_NORM_EPS) -> np.ndarray:
    """Normalise over the last axis, then scale by ``gamma`` and shift by ``beta``."""
    x = np.asarray(x, dtype=DTYPE)
    gamma = np.asarray(gamma, dtype=DTYPE)
    beta = np.asarray(beta, dtype=DTYPE)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(
            f"layer_norm parameters must have shape ({d},), got gamma {gamma.shape} and beta {beta.shape}"
        )
    mean = np.mean(x, axis=-1, keepdims=True)
    centered = x - mean
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    out = centered / np.sqrt(var + DTYPE(eps))
    return out * gamma + beta


def gelu(x) -> np.ndarray:
    """GELU, tanh approximation: ``0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))``.

    This is the variant most ViT codebases ship; it differs from the exact
    erf form by less than 1e-3 everywhere.
    """
    x = np.asarray(x, dtype=DTYPE)
    inner = DTYPE(_GELU_C) * (x + DTYPE(0.044715) * x * x * x)
    return DTYPE(0.5) * x * (DTYPE(1.0) + np.tanh(inner))


def linear(x, weight, bias=None) -> np.ndarray:
    """Affine map ``x @ weight + bias`` with ``weight`` stored as (in, out)."""
    x = np.asarray(x, dtype=DTYPE)
    weight = np.asarray(weight, dtype=DTYPE)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"cannot apply weight {weight.shape} to input {x.shape}")
    out = np.matmul(x, weight)
    if bias is not None:
        bias = np.asarray(bias, dtype=DTYPE)
        if bias.shape != (weight.shape[1],):
            raise ShapeError(f"bias shape {bias.shape} does not match weight {weight.shape}")
        out += bias
    return out


def amax(x, axis: int) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    return np.max(x, axis=_check_axis(x, axis))


def sum(x, axis: int) -> np.ndarray:  # noqa: A001 - mirrors the reduction's name
    x = np.asarray(x, dtype=DTYPE)
    return np.sum(x, axis=_check_axis(x, axis), dtype=DTYPE)
