"""Latency and proxy-accuracy curves over kept-token counts.

Latency is the median wall-clock time of a full forward pass, measured with
``time.perf_counter_ns`` after a number of untimed warmup passes.  Timing
assumes a quiet process: run it on one thread with nothing else executing.

Accuracy uses random token removal after the first encoder layer as a cheap,
pessimistic proxy for what a real pruning rule would achieve.  It depends only
on the model, not on the device, so a stored accuracy curve can be merged with
latency re-measured elsewhere (:func:`merge_accuracy`).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import time
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from tokenprune import schemas
from tokenprune.data import Dataset
from tokenprune.model import ViTModel, embed_tokens, forward, model_hash
from tokenprune.pruning import RandomTokenDropper, TokenPruner
from tokenprune.serialization import atomic_write_bytes

log = logging.getLogger(__name__)

DEPLOYED_PRUNE = "deployed-prune"
RAW_TOKEN_COUNT = "raw-token-count"
MODES = (DEPLOYED_PRUNE, RAW_TOKEN_COUNT)

DEFAULT_REPS = 100
DEFAULT_WARMUP = 10
PROFILE_SCHEMA_VERSION = 1


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class MeasurementError(RuntimeError):
    """Timing produced unusable numbers (e.g. a zero median)."""


@dataclass(frozen=True)
class LatencySample:
    n_keep: int
    median_us: float
    iqr_us: float
    repetitions: int
    warmup_count: int

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.median_us > 0:
            raise MeasurementError(f"non-positive median latency {self.median_us} at n={self.n_keep}")
        if self.iqr_us < 0:
            raise ValueError("iqr must be non-negative")


@dataclass(frozen=True)
class GridPoint:
    n: int
    latency: LatencySample | None
    accuracy: float | None


@dataclass(frozen=True)
class WorkloadProfile:
    model_hash: str
    num_tokens: int
    special_count: int
    mode: str
    stride: int
    grid: tuple[GridPoint, ...]
    device_label: str = ""
    prune_layer: int | None = None
    manifest_hash: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(self.grid))
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        ns = [p.n for p in self.grid]
        if not ns:
            raise ValueError("profile grid is empty")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("grid n values must be strictly increasing")
        lo, hi = self.special_count + 1, self.num_tokens
        if ns[0] < lo or ns[-1] > hi:
            raise ValueError(f"grid n values must lie in [{lo}, {hi}]")
        for p in self.grid:
            if p.accuracy is not None and not 0.0 <= p.accuracy <= 1.0:
                raise ValueError(f"accuracy at n={p.n} outside [0, 1]: {p.accuracy}")

    # derived arrays are cached and read-only; the profile itself is frozen

    @cached_property
    def n(self) -> np.ndarray:
        return _frozen(np.array([p.n for p in self.grid], dtype=np.int64))

    @cached_property
    def latency(self) -> np.ndarray:
        if any(p.latency is None for p in self.grid):
            raise ValueError("profile has grid points without latency")
        return _frozen(np.array([p.latency.median_us for p in self.grid], dtype=np.float64))

    @cached_property
    def accuracy(self) -> np.ndarray:
        if any(p.accuracy is None for p in self.grid):
            raise ValueError("profile has grid points without accuracy")
        return _frozen(np.array([p.accuracy for p in self.grid], dtype=np.float64))

    @property
    def has_accuracy(self) -> bool:
        return all(p.accuracy is not None for p in self.grid)

    def to_dict(self) -> dict:
        rows = []
        for p in self.grid:
            lat = p.latency
            rows.append({
                "n": p.n,
                "median_us": None if lat is None else lat.median_us,
                "iqr_us": None if lat is None else lat.iqr_us,
                "reps": None if lat is None else lat.repetitions,
                "warmup": None if lat is None else lat.warmup_count,
                "accuracy": p.accuracy,
            })
        doc = {
            "schema_version": PROFILE_SCHEMA_VERSION,
            "model_hash": self.model_hash,
            "device_label": self.device_label,
            "mode": self.mode,
            "num_tokens": self.num_tokens,
            "special_count": self.special_count,
            "stride": self.stride,
            "prune_layer": self.prune_layer,
            "grid": rows,
        }
        if self.manifest_hash is not None:
            doc["manifest_hash"] = self.manifest_hash
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "WorkloadProfile":
        schemas.validate(doc, "profile")
        grid = []
        for row in doc["grid"]:
            lat = None
            if row["median_us"] is not None:
                lat = LatencySample(row["n"], row["median_us"], row["iqr_us"], row["reps"],
                                    row.get("warmup") or 0)
            grid.append(GridPoint(row["n"], lat, row["accuracy"]))
        return cls(model_hash=doc["model_hash"], num_tokens=doc["num_tokens"],
                   special_count=doc["special_count"], mode=doc["mode"], stride=doc["stride"],
                   grid=tuple(grid), device_label=doc["device_label"],
                   prune_layer=doc.get("prune_layer"), manifest_hash=doc.get("manifest_hash"))

    def content_hash(self) -> str:
        """SHA-256 of the canonical JSON form, ignoring the manifest reference."""
        return self._content_hash

    @cached_property
    def _content_hash(self) -> str:
        doc = self.to_dict()
        doc.pop("manifest_hash", None)
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "median_us", "iqr_us", "accuracy"])
        for p in self.grid:
            lat = p.latency
            w.writerow([p.n,
                        "" if lat is None else repr(lat.median_us),
                        "" if lat is None else repr(lat.iqr_us),
                        "" if p.accuracy is None else repr(p.accuracy)])
        return buf.getvalue()


def save_profile(profile: WorkloadProfile, path: str | os.PathLike, csv_path=None) -> None:
    text = json.dumps(profile.to_dict(), indent=2) + "\n"
    atomic_write_bytes(path, text.encode())
    if csv_path is not None:
        atomic_write_bytes(csv_path, profile.to_csv().encode())


def load_profile(path: str | os.PathLike) -> WorkloadProfile:
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from exc
    try:
        return WorkloadProfile.from_dict(doc)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc


# --- statistics -------------------------------------------------------------


def median_iqr(samples: Sequence[float]) -> tuple[float, float]:
    """Median (mean of the central pair for even counts) and inclusive IQR.

    Quartiles interpolate linearly between order statistics at positions
    ``q * (n - 1)``, the same rule as ``statistics.quantiles(method="inclusive")``.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("no samples")
    q1, med, q3 = np.percentile(x, [25, 50, 75], method="linear")
    return float(med), float(q3 - q1)


# --- latency ------------------------------------------------------------------


def default_layer(depth: int) -> int:
    # local import keeps the profiler free of scheduler state
    from tokenprune.scheduler import default_prune_layer

    return default_prune_layer(depth)


def _check_n_keep(model: ViTModel, n_keep: int) -> None:
    cfg = model.config
    lo, hi = cfg.num_special_tokens + 1, cfg.num_tokens
    if not lo <= n_keep <= hi:
        raise ValueError(f"n_keep must be in [{lo}, {hi}], got {n_keep}")


def time_call(fn: Callable[[], object], repetitions: int, warmup: int,
              clock: Callable[[], int] = time.perf_counter_ns) -> list[float]:
    """Run ``fn`` ``warmup`` times untimed, then return ``repetitions`` timings in µs."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if warmup < 0:
        raise ValueError("warmup must be >= 0")
    for _ in range(warmup):
        fn()
    out = []
    for _ in range(repetitions):
        start = clock()
        fn()
        out.append((clock() - start) / 1e3)
    return out


def measure_latency(model: ViTModel, n_keep: int, mode: str = DEPLOYED_PRUNE,
                    repetitions: int = DEFAULT_REPS, warmup: int = DEFAULT_WARMUP,
                    prune_layer: int | None = None, batch: int = 1, seed: int = 0,
                    clock: Callable[[], int] = time.perf_counter_ns) -> LatencySample:
    """Median forward latency when keeping ``n_keep`` tokens.

    ``deployed-prune`` feeds all ``N`` tokens and prunes ``N - n_keep`` of them
    at ``prune_layer`` (default: a quarter of the depth), i.e. the shipped
    configuration.  ``raw-token-count`` feeds ``n_keep`` tokens and never
    prunes.
    """
    cfg = model.config
    _check_n_keep(model, n_keep)
    if mode == DEPLOYED_PRUNE:
        layer = default_layer(cfg.depth) if prune_layer is None else prune_layer
        if not 0 <= layer < cfg.depth:
            raise ValueError(f"prune_layer must be in [0, {cfg.depth}), got {layer}")
        x = embed_tokens(None, cfg, batch=batch, seed=seed)
        hook = TokenPruner(cfg.num_tokens - n_keep, layer, cfg.num_special_tokens)
        fn = lambda: forward(model, x, hook)  # noqa: E731
    elif mode == RAW_TOKEN_COUNT:
        x = embed_tokens(None, cfg, batch=batch, num_tokens=n_keep, seed=seed)
        fn = lambda: forward(model, x)  # noqa: E731
    else:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    med, iqr = median_iqr(time_call(fn, repetitions, warmup, clock))
    return LatencySample(n_keep, med, iqr, repetitions, warmup)


def compare_latency(fn_a: Callable[[], object], fn_b: Callable[[], object],
                    repetitions: int = DEFAULT_REPS, warmup: int = DEFAULT_WARMUP,
                    clock: Callable[[], int] = time.perf_counter_ns
                    ) -> tuple[tuple[float, float], tuple[float, float]]:
    """Time two callables in alternating order; return ``(median, iqr)`` for each.

    Interleaving spreads slow drifts in machine state (frequency scaling,
    background load) evenly over both sides of the comparison.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    for _ in range(warmup):
        fn_a()
        fn_b()
    ta, tb = [], []
    for i in range(repetitions):
        order = ((fn_a, ta), (fn_b, tb)) if i % 2 == 0 else ((fn_b, tb), (fn_a, ta))
        for fn, sink in order:
            start = clock()
            fn()
            sink.append((clock() - start) / 1e3)
    return median_iqr(ta), median_iqr(tb)


# --- accuracy -----------------------------------------------------------------


def predict(model: ViTModel, tokens: np.ndarray, hook=None, batch_size: int = 64) -> np.ndarray:
    """Top-1 class per sample, evaluated in fixed-size chunks."""
    preds = []
    for start in range(0, tokens.shape[0], batch_size):
        logits = forward(model, tokens[start:start + batch_size], hook)
        preds.append(np.argmax(logits, axis=-1))
    return np.concatenate(preds)


def measure_accuracy_proxy(model: ViTModel, dataset: Dataset, n_keep: int, seed: int = 0,
                           trials: int = 1, removal_layer: int = 0,
                           batch_size: int = 64) -> float:
    """Top-1 accuracy with random tokens removed after ``removal_layer``.

    Each trial removes ``N - n_keep`` uniformly random prunable tokens from
    every sample (independent draws, no inattentive token); the result is the
    mean accuracy over all samples and trials.
    """
    cfg = model.config
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if dataset.tokens.shape[1:] != (cfg.num_tokens, cfg.embed_dim):
        raise ValueError(
            f"dataset tokens are {dataset.tokens.shape[1:]}, model expects "
            f"({cfg.num_tokens}, {cfg.embed_dim})"
        )
    if dataset.labels.min() < 0 or dataset.labels.max() >= cfg.num_classes:
        raise ValueError(f"dataset labels must be in [0, {cfg.num_classes})")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    _check_n_keep(model, n_keep)

    if n_keep == cfg.num_tokens:
        trials = 1  # nothing is removed, every trial is identical
    rng = np.random.Generator(np.random.Philox(seed))
    correct = 0
    for _ in range(trials):
        hook = RandomTokenDropper(n_keep, removal_layer, cfg.num_special_tokens, rng)
        correct += int(np.sum(predict(model, dataset.tokens, hook, batch_size) == dataset.labels))
    return correct / (trials * len(dataset))


# --- grid ---------------------------------------------------------------------


def grid_points(n_min: int, n_max: int, stride: int) -> list[int]:
    """``n_min, n_min + stride, ...``; ``n_max`` is appended if the stride misses it."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if n_min > n_max:
        raise ValueError(f"n_min {n_min} exceeds n_max {n_max}")
    pts = list(range(n_min, n_max + 1, stride))
    if pts[-1] != n_max:
        pts.append(n_max)
    return pts


def profile_grid(model: ViTModel, dataset: Dataset | None = None, n_min: int | None = None,
                 n_max: int | None = None, stride: int = 1, mode: str = DEPLOYED_PRUNE,
                 reps: int = DEFAULT_REPS, warmup: int = DEFAULT_WARMUP, seed: int = 0,
                 device_label: str = "", prune_layer: int | None = None,
                 skip_accuracy: bool = False, trials: int = 1,
                 progress: Callable[[int, int], None] | None = None) -> WorkloadProfile:
    """Measure latency (and, given a dataset, proxy accuracy) at each grid point."""
    cfg = model.config
    n_min = cfg.num_special_tokens + 1 if n_min is None else n_min
    n_max = cfg.num_tokens if n_max is None else n_max
    ns = grid_points(n_min, n_max, stride)
    for n in (ns[0], ns[-1]):
        _check_n_keep(model, n)
    if mode == DEPLOYED_PRUNE and prune_layer is None:
        prune_layer = default_layer(cfg.depth)
    want_accuracy = dataset is not None and not skip_accuracy

    grid = []
    for i, n in enumerate(ns):
        lat = measure_latency(model, n, mode, reps, warmup, prune_layer, seed=seed)
        acc = measure_accuracy_proxy(model, dataset, n, seed, trials) if want_accuracy else None
        grid.append(GridPoint(n, lat, acc))
        log.debug("n=%d median=%.1fus acc=%s", n, lat.median_us, acc)
        if progress is not None:
            progress(i + 1, len(ns))
    return WorkloadProfile(
        model_hash=model_hash(model), num_tokens=cfg.num_tokens,
        special_count=cfg.num_special_tokens, mode=mode, stride=stride, grid=tuple(grid),
        device_label=device_label, prune_layer=prune_layer if mode == DEPLOYED_PRUNE else None,
    )


def merge_accuracy(latency_profile: WorkloadProfile,
                   accuracy_profile: WorkloadProfile) -> WorkloadProfile:
    """Attach a stored accuracy curve to a freshly measured latency curve."""
    if latency_profile.model_hash != accuracy_profile.model_hash:
        raise ValueError("profiles come from different models")
    acc = {p.n: p.accuracy for p in accuracy_profile.grid if p.accuracy is not None}
    missing = [p.n for p in latency_profile.grid if p.n not in acc]
    if missing:
        raise ValueError(f"accuracy profile lacks grid points {missing[:5]}")
    grid = tuple(replace(p, accuracy=acc[p.n]) for p in latency_profile.grid)
    return replace(latency_profile, grid=grid, manifest_hash=None)


# --- non-linearities -----------------------------------------------------------


class LatencyStep(NamedTuple):
    n_before: int
    n_after: int
    change: float  # signed, relative to the latency at n_before


def detect_nonlinearities(profile, relative_threshold: float = 0.1,
                          latency: Sequence[float] | None = None) -> list[LatencyStep]:
    """Adjacent grid pairs whose relative latency change is at least the threshold.

    Accepts a :class:`WorkloadProfile`, or grid ``n`` values plus ``latency``.
    Drops (latency falling as tokens are added) are reported with a negative
    change.
    """
    if isinstance(profile, WorkloadProfile):
        ns, lat = profile.n, profile.latency
    else:
        ns = np.asarray(profile)
        lat = np.asarray(latency, dtype=np.float64)
        if ns.shape != lat.shape:
            raise ValueError("n and latency must have the same length")
    if relative_threshold < 0:
        raise ValueError("threshold must be non-negative")
    steps = []
    for i in range(len(ns) - 1):
        change = (lat[i + 1] - lat[i]) / lat[i]
        if abs(change) >= relative_threshold:
            steps.append(LatencyStep(int(ns[i]), int(ns[i + 1]), float(change)))
    return steps


def steps_document(steps: Sequence[LatencyStep], threshold: float, profile_hash: str | None,
                   manifest_hash: str | None = None) -> dict:
    doc = {
        "schema_version": 1,
        "threshold": threshold,
        "profile_hash": profile_hash,
        "steps": [{"n_before": s.n_before, "n_after": s.n_after, "change": s.change}
                  for s in steps],
    }
    if manifest_hash is not None:
        doc["manifest_hash"] = manifest_hash
    return doc
