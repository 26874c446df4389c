"""Fuzzy c-means engine used for granular pruning.

Memberships follow the inverse-distance-ratio rule and the optimization
objective is the weighted sum of squared point-to-centroid distances;
the partition coefficient scores a finished partition and drives the
automatic granule-count sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

DEFAULT_FUZZIFIER = 2.0
DEFAULT_EPSILON = 1e-6
DEFAULT_MAX_ITER = 300


@dataclass
class ColumnMeta:
    """Normalization record for one attribute column."""

    name: str
    kind: str  # "numeric" | "categorical"
    vmin: float
    vmax: float
    encoding: dict[str, int] | None = None
    ordered: bool = False

    def denormalize(self, x: float) -> float:
        if self.vmax == self.vmin:
            return self.vmin
        return x * (self.vmax - self.vmin) + self.vmin

    def normalize(self, value) -> float:
        if self.kind == "categorical":
            value = float(self.encoding[str(value)])
        else:
            value = float(value)
        if self.vmax == self.vmin:
            return 0.0
        return (value - self.vmin) / (self.vmax - self.vmin)

    def categories(self) -> list[str]:
        return list(self.encoding) if self.encoding else []


@dataclass
class AttributeMatrix:
    """Per-provider attribute values, min-max normalized to [0, 1] per column."""

    provider_ids: list[str]
    attributes: list[str]
    values: np.ndarray  # shape (n, N_a)
    norm_meta: dict[str, ColumnMeta]

    @classmethod
    def from_records(
        cls,
        provider_ids: list[str],
        records: list[dict],
        attributes: list[str] | None = None,
        ordered_categories: dict[str, list[str]] | None = None,
    ) -> "AttributeMatrix":
        """Build the matrix from raw catalog records.

        Numeric columns are min-max scaled; categorical columns are integer
        coded first (rank order when an ordering is configured, sorted order
        otherwise). Multi-valued cells contribute their first (primary) value.
        """
        if not records:
            raise ConfigError("cannot build an attribute matrix from zero records")
        ordered_categories = ordered_categories or {}
        if attributes is None:
            attributes = [k for k in records[0] if k not in ("provider_id", "service_type")]
        cols = []
        meta: dict[str, ColumnMeta] = {}
        for attr in attributes:
            raw = [_primary(rec[attr]) for rec in records]
            if all(isinstance(v, float) for v in raw):
                vals = np.array(raw, dtype=float)
                vmin, vmax = float(vals.min()), float(vals.max())
                meta[attr] = ColumnMeta(attr, "numeric", vmin, vmax)
            elif all(isinstance(v, str) for v in raw):
                if attr in ordered_categories:
                    order = list(ordered_categories[attr])
                    unknown = sorted(set(raw) - set(order))
                    if unknown:
                        raise ConfigError(f"values {unknown} missing from the ordering of {attr!r}")
                    ordered = True
                else:
                    order = sorted(set(raw))
                    ordered = False
                encoding = {v: i for i, v in enumerate(order)}
                vals = np.array([encoding[v] for v in raw], dtype=float)
                vmin, vmax = 0.0, float(len(order) - 1)
                meta[attr] = ColumnMeta(attr, "categorical", vmin, vmax, encoding, ordered)
            else:
                raise ConfigError(f"column {attr!r} mixes numeric and string values")
            span = vmax - vmin
            cols.append((vals - vmin) / span if span > 0 else np.zeros_like(vals))
        return cls(list(provider_ids), list(attributes), np.column_stack(cols), meta)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def column(self, attr: str) -> np.ndarray:
        return self.values[:, self.attributes.index(attr)]

    def subset(self, rows: np.ndarray, attributes: list[str] | None = None) -> "AttributeMatrix":
        """Row/column restriction; normalization metadata is shared, not rescaled."""
        attributes = self.attributes if attributes is None else list(attributes)
        cols = [self.attributes.index(a) for a in attributes]
        rows = np.asarray(rows, dtype=int)
        return AttributeMatrix(
            [self.provider_ids[i] for i in rows],
            attributes,
            self.values[np.ix_(rows, cols)].copy(),
            self.norm_meta,
        )


@dataclass
class GranulePartition:
    """Result of one fuzzy c-means run."""

    memberships: np.ndarray  # shape (p, n), columns sum to 1
    centroids: np.ndarray  # shape (p, N_a)
    objective: float
    p: int
    fuzzifier: float
    converged: bool
    iterations: int
    objective_history: list[float] = field(default_factory=list)

    def hard_labels(self) -> np.ndarray:
        """Crisp assignment by maximal membership; ties go to the lower granule index."""
        return self.memberships.argmax(axis=0)


def _primary(value):
    return value[0] if isinstance(value, (tuple, list)) else value


def _distances(centroids: np.ndarray, data: np.ndarray) -> np.ndarray:
    """Euclidean distances, shape (p, n)."""
    diff = centroids[:, None, :] - data[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def membership(distances: np.ndarray, fuzzifier: float) -> np.ndarray:
    """Membership degrees from a (p, n) distance matrix.

    Each cell is the inverse of the summed distance ratios raised to
    2/(m-1). A point at zero distance from some centroid is assigned
    crisply to the lowest-index such centroid.
    """
    if fuzzifier <= 1.0:
        raise ConfigError(f"fuzzifier must exceed 1, got {fuzzifier}")
    d = np.asarray(distances, dtype=float)
    if d.ndim != 2:
        raise ValueError("distances must be a (p, n) matrix")
    if (d < 0).any():
        raise ValueError("distances must be non-negative")
    u = np.zeros_like(d)
    zero_cols = (d == 0.0).any(axis=0)
    if zero_cols.any():
        idx = np.flatnonzero(zero_cols)
        first_zero = (d[:, idx] == 0.0).argmax(axis=0)
        u[first_zero, idx] = 1.0
    regular = ~zero_cols
    if regular.any():
        inv = d[:, regular] ** (-2.0 / (fuzzifier - 1.0))
        u[:, regular] = inv / inv.sum(axis=0)
    return u


def objective(memberships: np.ndarray, distances: np.ndarray, fuzzifier: float) -> float:
    """Weighted squared-distance objective of a (membership, distance) pair."""
    u = np.asarray(memberships, dtype=float)
    d = np.asarray(distances, dtype=float)
    if u.shape != d.shape:
        raise ValueError(f"shape mismatch: memberships {u.shape} vs distances {d.shape}")
    return float(((u**fuzzifier) * (d * d)).sum())


def _update_centroids(
    memberships: np.ndarray, data: np.ndarray, fuzzifier: float, previous: np.ndarray
) -> np.ndarray:
    w = memberships**fuzzifier
    wsum = w.sum(axis=1)
    new = previous.copy()
    live = wsum > 0.0
    new[live] = (w[live] @ data) / wsum[live, None]
    return new


def fcm(
    data,
    p: int,
    fuzzifier: float = DEFAULT_FUZZIFIER,
    epsilon: float = DEFAULT_EPSILON,
    max_iter: int = DEFAULT_MAX_ITER,
    seed=0,
    initial_centroids: np.ndarray | None = None,
) -> GranulePartition:
    """Run fuzzy c-means to convergence.

    Alternates the membership update and the weighted-mean centroid update
    until the objective changes by less than ``epsilon`` between iterations.
    Initial centroids are ``p`` distinct data rows drawn by seeded sampling
    unless given explicitly. Deterministic for a fixed seed.
    """
    x = np.asarray(getattr(data, "values", data), dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ConfigError("data must be a non-empty (n, N_a) matrix")
    n = x.shape[0]
    if not 1 <= p <= n:
        raise ConfigError(f"granule count {p} outside [1, {n}]")
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    if fuzzifier <= 1.0:
        raise ConfigError(f"fuzzifier must exceed 1, got {fuzzifier}")

    if initial_centroids is not None:
        centroids = np.asarray(initial_centroids, dtype=float).copy()
        if centroids.shape != (p, x.shape[1]):
            raise ConfigError("initial centroids have the wrong shape")
    else:
        rng = np.random.default_rng(seed)
        # draw distinct rows by value where the data allows it, otherwise the
        # duplicates would collapse the granules at the first iteration
        unique = np.unique(x, axis=0)
        if len(unique) >= p:
            idx = np.sort(rng.choice(len(unique), size=p, replace=False))
            centroids = unique[idx].copy()
        else:
            idx = np.sort(rng.choice(n, size=p, replace=False))
            centroids = x[idx].copy()

    d = _distances(centroids, x)
    u = membership(d, fuzzifier)
    j = objective(u, d, fuzzifier)
    history = [j]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        centroids = _update_centroids(u, x, fuzzifier, centroids)
        d = _distances(centroids, x)
        u = membership(d, fuzzifier)
        j_new = objective(u, d, fuzzifier)
        history.append(j_new)
        done = abs(j_new - j) < epsilon
        j = j_new
        if done:
            converged = True
            break
    return GranulePartition(u, centroids, j, p, fuzzifier, converged, iterations, history)


def fpc(memberships: np.ndarray) -> float:
    """Fuzzy partition coefficient: mean of squared memberships, in [1/p, 1]."""
    u = np.asarray(memberships, dtype=float)
    n = u.shape[1]
    return float((u * u).sum() / n)


@dataclass
class PSweep:
    """Outcome of the automatic granule-count sweep."""

    p: int
    scores: dict[int, float]
    degenerate: bool
    partition: GranulePartition | None = None


def sweep_p(
    data,
    fuzzifier: float = DEFAULT_FUZZIFIER,
    epsilon: float = DEFAULT_EPSILON,
    max_iter: int = DEFAULT_MAX_ITER,
    seed=0,
) -> PSweep:
    """Test partition quality for p in [2, floor(sqrt(n))] and keep the best.

    Ties go to the smaller p. Fewer than 4 rows leave no sweep range at all;
    p=2 is returned with the degenerate flag set.
    """
    x = np.asarray(getattr(data, "values", data), dtype=float)
    n = x.shape[0]
    upper = math.isqrt(n)
    if n < 4 or upper < 2:
        part = fcm(x, 2, fuzzifier, epsilon, max_iter, seed=seed_entropy(seed) + [2]) if n >= 2 else None
        return PSweep(2, {}, True, part)
    scores: dict[int, float] = {}
    best_p, best_score, best_part = 2, -1.0, None
    for p in range(2, upper + 1):
        part = fcm(x, p, fuzzifier, epsilon, max_iter, seed=seed_entropy(seed) + [p])
        score = fpc(part.memberships)
        scores[p] = score
        if score > best_score:
            best_p, best_score, best_part = p, score, part
    return PSweep(best_p, scores, False, best_part)


def select_p(
    data,
    fuzzifier: float = DEFAULT_FUZZIFIER,
    epsilon: float = DEFAULT_EPSILON,
    seed=0,
    max_iter: int = DEFAULT_MAX_ITER,
) -> int:
    """Granule count with the maximum partition coefficient over the sweep range."""
    return sweep_p(data, fuzzifier, epsilon, max_iter, seed).p


def seed_entropy(seed) -> list[int]:
    """Seed material as an entropy list so sub-runs can derive disjoint streams."""
    if isinstance(seed, (list, tuple)):
        return [int(s) for s in seed]
    return [int(seed)]
