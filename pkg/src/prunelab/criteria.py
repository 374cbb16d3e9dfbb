"""Filter pruning criteria: lp-norm scores and average-distance scores.

All criteria produce a score per filter with the convention "prune the
smallest". Norm scores capture magnitude; average-distance scores capture
how replaceable a filter is by its layer-mates (a small mean distance to
the other filters marks a redundant filter).

Cosine is direction-only: the printed cosine formula is a similarity, so
the score used here is 1 - similarity, keeping small = similar = prunable.
A zero filter has no direction; its cosine distance to anything else is
defined as 1 (maximally non-informative) and flagged via logging.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import flatten_filters

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Criterion:
    """One of: norm (lp-norm), minkowski (average Minkowski distance),
    cosine (average cosine distance). p is ignored for cosine."""

    kind: str  # "norm" | "minkowski" | "cosine"
    p: float = 2.0

    def __post_init__(self):
        if self.kind not in ("norm", "minkowski", "cosine"):
            raise ValueError(f"unknown criterion kind {self.kind!r}")
        if self.kind != "cosine" and self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")

    @property
    def name(self) -> str:
        if self.kind == "norm":
            return f"l{self.p:g}"
        if self.kind == "minkowski":
            return f"minkowski{self.p:g}"
        return "cosine"

    @property
    def is_distance_based(self) -> bool:
        return self.kind in ("minkowski", "cosine")


def parse_criterion(name: str) -> Criterion:
    name = name.strip().lower()
    if name.startswith("l") and name[1:].replace(".", "", 1).isdigit():
        return Criterion("norm", float(name[1:]))
    if name.startswith("minkowski") and name[9:].replace(".", "", 1).isdigit():
        return Criterion("minkowski", float(name[9:]))
    if name == "cosine":
        return Criterion("cosine")
    raise ValueError(
        f"unknown criterion {name!r} (expected l<p>, minkowski<p>, or cosine)"
    )


DEFAULT_CRITERIA = (
    Criterion("norm", 1),
    Criterion("norm", 2),
    Criterion("minkowski", 1),
    Criterion("minkowski", 2),
    Criterion("cosine"),
)


def lp_norm_scores(weights: np.ndarray, p: float) -> np.ndarray:
    """Per-filter lp norm of a (N_out, ...) weight bank."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    flat = np.abs(flatten_filters(np.asarray(weights, dtype=np.float64)))
    return (flat**p).sum(axis=1) ** (1.0 / p)


def minkowski_distance(x: np.ndarray, y: np.ndarray, p: float) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return float((np.abs(x - y) ** p).sum() ** (1.0 / p))


def cosine_distance(x: np.ndarray, y: np.ndarray) -> float:
    """1 - cos(x, y) in [0, 2]; pairs involving a zero vector score 1."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        log.warning("cosine distance on a zero-norm vector; returning 1.0")
        return 1.0
    return float(np.clip(1.0 - float(x @ y) / (nx * ny), 0.0, 2.0))


def _pairwise_distance_matrix(z: np.ndarray, criterion: Criterion) -> np.ndarray:
    n = z.shape[0]
    if criterion.kind == "minkowski":
        diff = np.abs(z[:, None, :] - z[None, :, :]) ** criterion.p
        d = diff.sum(axis=2) ** (1.0 / criterion.p)
    else:  # cosine
        # cosine is invariant to positive per-filter rescaling; dividing each
        # row by its max |entry| keeps the Gram diagonal near 1 so the
        # normalization below cannot underflow for tiny-magnitude filters
        row_max = np.max(np.abs(z), axis=1, keepdims=True)
        zn = z / np.where(row_max == 0, 1.0, row_max)
        gram = zn @ zn.T
        sq = np.diag(gram).copy()
        zero = sq == 0
        if zero.any():
            # routine under soft pruning (zeroed filters), so debug not warning
            log.debug(
                "cosine average distance: %d zero-norm filter(s), their "
                "pair distances default to 1.0", int(zero.sum()),
            )
        safe = np.where(zero, 1.0, sq)
        # normalize via the Gram diagonal so identical filters get sim == 1 exactly
        sim = gram / np.sqrt(np.outer(safe, safe))
        d = np.clip(1.0 - sim, 0.0, 2.0)
        d[zero, :] = 1.0
        d[:, zero] = 1.0
    np.fill_diagonal(d, 0.0)  # self-distance is exactly zero
    return d


def average_distance_scores(weights: np.ndarray, criterion: Criterion) -> np.ndarray:
    """Mean distance from each filter to all filters of its layer
    (self term contributes 0; divisor is the filter count)."""
    if not criterion.is_distance_based:
        raise ValueError(f"{criterion.name} is not a distance criterion")
    z = flatten_filters(np.asarray(weights, dtype=np.float64))
    d = _pairwise_distance_matrix(z, criterion)
    return d.sum(axis=1) / z.shape[0]


def criterion_scores(weights: np.ndarray, criterion: Criterion) -> np.ndarray:
    if criterion.kind == "norm":
        return lp_norm_scores(weights, criterion.p)
    return average_distance_scores(weights, criterion)


def select_filters(scores: np.ndarray, prune_rate: float) -> list[int]:
    """Indices of the floor(rate * N) smallest scores, ascending.
    Ties break toward the lower filter index."""
    if not 0 <= prune_rate < 1:
        raise ValueError(f"prune_rate must be in [0, 1), got {prune_rate}")
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores contain non-finite values")
    # tiny epsilon so rates like 1/3 on 3 filters floor to 1, not 0
    n_prune = int(prune_rate * scores.shape[0] + 1e-9)
    order = np.argsort(scores, kind="stable")
    return sorted(int(i) for i in order[:n_prune])
