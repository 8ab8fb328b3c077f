"""Offline choice of how many tokens to prune, and where.

Each grid point ``n`` gets two utilities in ``[0, 1]``::

    U_A(n) = A(n) / max A          # accuracy kept
    U_L(n) = 1 - L(n) / max L      # latency saved

and the kept-token count is the grid argmax of
``alpha * U_A(n) + (1 - alpha) * U_L(n)``.  All ``R = N - N_keep`` tokens are
pruned at a single layer about a quarter of the way into the network.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import NamedTuple

import numpy as np

from tokenprune import schemas
from tokenprune.profiler import WorkloadProfile
from tokenprune.serialization import atomic_write_bytes

DEFAULT_ALPHA = 0.5
PRUNE_DEPTH_FRACTION = Decimal("0.25")
SCHEDULE_SCHEMA_VERSION = 1


class DegenerateProfileError(ValueError):
    """The profile cannot be normalised (no accuracy or no positive maximum)."""


class UtilityPoint(NamedTuple):
    n: int
    u_a: float
    u_l: float
    u: float


@dataclass(frozen=True)
class PruningSchedule:
    alpha: float
    num_tokens: int
    n_keep: int
    prune_layer: int
    utility_trace: tuple[UtilityPoint, ...] = ()
    profile_hash: str | None = None
    special_count: int = 1
    manifest_hash: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "utility_trace",
                           tuple(UtilityPoint(*p) for p in self.utility_trace))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not self.special_count + 1 <= self.n_keep <= self.num_tokens:
            raise ValueError(
                f"n_keep must be in [{self.special_count + 1}, {self.num_tokens}], got {self.n_keep}"
            )
        if self.prune_layer < 0:
            raise ValueError("prune_layer must be non-negative")

    @property
    def r(self) -> int:
        return self.num_tokens - self.n_keep

    def to_dict(self) -> dict:
        doc = {
            "schema_version": SCHEDULE_SCHEMA_VERSION,
            "alpha": self.alpha,
            "N": self.num_tokens,
            "n_keep": self.n_keep,
            "R": self.r,
            "prune_layer": self.prune_layer,
            "special_count": self.special_count,
            "profile_hash": self.profile_hash,
            "utility_trace": [p._asdict() for p in self.utility_trace],
        }
        if self.manifest_hash is not None:
            doc["manifest_hash"] = self.manifest_hash
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "PruningSchedule":
        schemas.validate(doc, "schedule")
        if doc["R"] != doc["N"] - doc["n_keep"]:
            raise ValueError(f"R={doc['R']} does not equal N - n_keep = {doc['N'] - doc['n_keep']}")
        trace = tuple(UtilityPoint(p["n"], p["u_a"], p["u_l"], p["u"])
                      for p in doc["utility_trace"])
        return cls(alpha=doc["alpha"], num_tokens=doc["N"], n_keep=doc["n_keep"],
                   prune_layer=doc["prune_layer"], utility_trace=trace,
                   profile_hash=doc["profile_hash"], special_count=doc["special_count"],
                   manifest_hash=doc.get("manifest_hash"))


def utility_accuracy(profile_or_accuracy) -> np.ndarray:
    acc = (profile_or_accuracy.accuracy if isinstance(profile_or_accuracy, WorkloadProfile)
           else np.asarray(profile_or_accuracy, dtype=np.float64))
    top = acc.max()
    if not top > 0:
        raise DegenerateProfileError("accuracy curve has no positive value")
    return acc / top


def utility_latency(profile_or_latency) -> np.ndarray:
    lat = (profile_or_latency.latency if isinstance(profile_or_latency, WorkloadProfile)
           else np.asarray(profile_or_latency, dtype=np.float64))
    top = lat.max()
    if not top > 0:
        raise DegenerateProfileError("latency curve has no positive value")
    return 1.0 - lat / top


def default_prune_layer(depth: int) -> int:
    """``round(depth / 4)`` rounding halves up, clamped to ``[1, depth - 1]``.

    Depth 12 gives layer 3 and depth 40 gives layer 10 (0-based).
    """
    if depth < 1:
        raise ValueError("depth must be positive")
    if depth == 1:
        return 0
    layer = int((PRUNE_DEPTH_FRACTION * depth).quantize(Decimal(1), rounding=ROUND_HALF_UP))
    return min(max(layer, 1), depth - 1)


def best_index(utility: np.ndarray) -> int:
    """Index of the maximum, preferring the last (largest ``n``) among ties."""
    return int(np.flatnonzero(utility == utility.max())[-1])


def argmax_utility(ns, accuracy, latency, alpha: float = DEFAULT_ALPHA):
    """Best grid ``n`` for raw curves, with the per-point utilities.

    Returns ``(n_keep, u_a, u_l, u)``.
    """
    u_a = utility_accuracy(accuracy)
    u_l = utility_latency(latency)
    u = alpha * u_a + (1.0 - alpha) * u_l
    return int(np.asarray(ns)[best_index(u)]), u_a, u_l, u


def select_schedule(profile: WorkloadProfile, alpha: float = DEFAULT_ALPHA,
                    depth: int | None = None, special_count: int | None = None,
                    prune_layer: int | None = None) -> PruningSchedule:
    """Pick ``N_keep`` maximising the combined utility over the measured grid.

    No interpolation between grid points: only measured ``n`` are eligible.
    Pass ``depth`` to derive the prune layer, or ``prune_layer`` to override it.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if not profile.has_accuracy:
        raise DegenerateProfileError("profile has no accuracy curve")
    ns = profile.n
    n_keep, u_a, u_l, u = argmax_utility(ns, profile.accuracy, profile.latency, alpha)

    if prune_layer is None:
        if depth is None:
            raise ValueError("either depth or prune_layer is required")
        prune_layer = default_prune_layer(depth)
    elif depth is not None and not 0 <= prune_layer < depth:
        raise ValueError(f"prune_layer must be in [0, {depth}), got {prune_layer}")

    trace = tuple(UtilityPoint(int(n), float(a), float(l), float(t))
                  for n, a, l, t in zip(ns, u_a, u_l, u))
    return PruningSchedule(
        alpha=float(alpha), num_tokens=profile.num_tokens, n_keep=n_keep,
        prune_layer=prune_layer, utility_trace=trace, profile_hash=profile.content_hash(),
        special_count=profile.special_count if special_count is None else special_count,
    )


def schedule_report(schedule: PruningSchedule, profile: WorkloadProfile) -> dict:
    """Plot-ready rows of latency, accuracy and utilities per grid point."""
    if len(schedule.utility_trace) != len(profile.grid):
        raise ValueError("schedule trace and profile grid have different lengths")
    rows = []
    for point, trace in zip(profile.grid, schedule.utility_trace):
        if point.n != trace.n:
            raise ValueError(f"grid mismatch: profile n={point.n}, trace n={trace.n}")
        rows.append({
            "n": point.n,
            "latency_us": point.latency.median_us if point.latency else None,
            "accuracy": point.accuracy,
            "utility_accuracy": trace.u_a,
            "utility_latency": trace.u_l,
            "utility": trace.u,
            "optimum": point.n == schedule.n_keep,
        })
    return {
        "alpha": schedule.alpha,
        "N": schedule.num_tokens,
        "n_keep": schedule.n_keep,
        "R": schedule.r,
        "prune_layer": schedule.prune_layer,
        "rows": rows,
    }


def report_csv(report: dict) -> str:
    buf = io.StringIO()
    cols = ["n", "latency_us", "accuracy", "utility_accuracy", "utility_latency", "utility",
            "optimum"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in report["rows"]:
        w.writerow(["" if row[c] is None else (int(row[c]) if c == "optimum" else repr(row[c]))
                    for c in cols])
    return buf.getvalue()


def save_schedule(schedule: PruningSchedule, path: str | os.PathLike) -> None:
    atomic_write_bytes(path, (json.dumps(schedule.to_dict(), indent=2) + "\n").encode())


def load_schedule(path: str | os.PathLike) -> PruningSchedule:
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from exc
    try:
        return PruningSchedule.from_dict(doc)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc
