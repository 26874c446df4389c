"""Offline compilation of dialog-policy trees.

The granular strategy recursively re-clusters each granule's services over
the attributes not yet asked, stopping once a node holds few enough services
or nothing is left to split. A single-attribute k-means tree serves as the
traditional baseline. Trees serialize to a canonical versioned document that
round-trips byte for byte.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .clustering import (
    DEFAULT_EPSILON,
    DEFAULT_FUZZIFIER,
    DEFAULT_MAX_ITER,
    AttributeMatrix,
    GranulePartition,
    fcm,
    seed_entropy,
    sweep_p,
)
from .errors import ConfigError, Reprompt

TREE_SCHEMA_VERSION = 1
NUMERIC_MISS_PENALTY = 1000.0  # interval containment always beats raw distance


@dataclass
class AttributeFacet:
    """One granule's footprint along a single inquiring attribute."""

    kind: str  # "numeric" | "categorical"
    centroid: float  # denormalized units (category code scale for categoricals)
    rank: int  # position among siblings along this attribute
    low: float | None = None
    high: float | None = None
    categories: list[str] | None = None
    ordered: bool = False

    def summary(self, attr: str) -> str:
        if self.kind == "numeric":
            return f"{attr} {_fmt(self.low)}–{_fmt(self.high)}"
        return f"{attr}: {', '.join(self.categories or [])}"


@dataclass
class GranuleDescriptor:
    """Attribute footprints of one child granule, keyed by attribute name."""

    facets: dict[str, AttributeFacet]

    def summary(self) -> str:
        return "; ".join(facet.summary(attr) for attr, facet in self.facets.items())


@dataclass
class PolicyNode:
    node_id: int
    candidates: list[str]  # provider ids
    depth: int  # root is 1: eliciting the service type is round one
    inquiring: list[str] = field(default_factory=list)
    children: list[tuple[GranuleDescriptor, "PolicyNode"]] = field(default_factory=list)
    leaf: bool = False
    indivisible: bool = False

    def walk(self):
        yield self
        for _, child in self.children:
            yield from child.walk()


@dataclass
class PolicyTree:
    service_type: str
    root: PolicyNode
    n_threshold: int
    strategy: str  # "grc" | "kmeans"
    config: dict

    def nodes(self):
        return self.root.walk()

    def leaves(self):
        return [n for n in self.root.walk() if n.leaf]

    def node_by_id(self, node_id: int) -> PolicyNode:
        for node in self.root.walk():
            if node.node_id == node_id:
                return node
        raise KeyError(node_id)

    def max_depth(self) -> int:
        return max(n.depth for n in self.root.walk())


@dataclass
class LeafSizeProfile:
    sizes: list[int]
    x: int


@dataclass
class PolicyBuildConfig:
    strategy: str = "grc"
    fuzzifier: float = DEFAULT_FUZZIFIER
    epsilon: float = DEFAULT_EPSILON
    max_iter: int = DEFAULT_MAX_ITER
    tau: float = 0.5
    x: int = 8
    seed: int = 1

    def snapshot(self) -> dict:
        return {
            "strategy": self.strategy,
            "fuzzifier": self.fuzzifier,
            "epsilon": self.epsilon,
            "max_iter": self.max_iter,
            "tau": self.tau,
            "x": self.x,
            "seed": self.seed,
        }


def _fmt(x) -> str:
    if x is None:
        return "?"
    return str(int(x)) if float(x).is_integer() else f"{x:.2f}"


def choose_inquiry_attributes(
    partition: GranulePartition, attributes: list[str], tau: float = 0.5
) -> list[str]:
    """Attributes worth asking about this round, widest centroid spread first.

    Every attribute whose inter-centroid spread reaches ``tau`` times the
    widest spread is kept; the widest one is always included, even when all
    centroids coincide.
    """
    if partition.p < 2:
        raise ConfigError("inquiry selection needs at least two granules")
    spreads = partition.centroids.max(axis=0) - partition.centroids.min(axis=0)
    top = float(spreads.max())
    if top <= 0.0:
        return [attributes[int(spreads.argmax())]]
    keep = [
        (attr, float(s)) for attr, s in zip(attributes, spreads) if s >= tau * top
    ]
    keep.sort(key=lambda kv: (-kv[1], kv[0]))
    return [attr for attr, _ in keep]


def _facet(
    matrix: AttributeMatrix, rows: np.ndarray, attr: str, centroid_norm: float
) -> AttributeFacet:
    meta = matrix.norm_meta[attr]
    col = matrix.column(attr)[rows]
    centroid = meta.denormalize(centroid_norm)
    if meta.kind == "numeric":
        return AttributeFacet(
            "numeric",
            centroid,
            rank=0,
            low=meta.denormalize(float(col.min())),
            high=meta.denormalize(float(col.max())),
        )
    decode = {code: value for value, code in meta.encoding.items()}
    cats = sorted({decode[int(round(meta.denormalize(float(v))))] for v in col})
    return AttributeFacet(
        "categorical", centroid, rank=0, categories=cats, ordered=meta.ordered
    )


def _assign_ranks(children: list[tuple[GranuleDescriptor, PolicyNode]], inquiring: list[str]):
    for attr in inquiring:
        order = sorted(
            range(len(children)), key=lambda i: (children[i][0].facets[attr].centroid, i)
        )
        for rank, idx in enumerate(order):
            children[idx][0].facets[attr].rank = rank


class _NodeCounter:
    def __init__(self):
        self.next = 0

    def take(self) -> int:
        value = self.next
        self.next += 1
        return value


def _leaf(counter, matrix, depth, n_threshold) -> PolicyNode:
    node = PolicyNode(counter.take(), list(matrix.provider_ids), depth, leaf=True)
    node.indivisible = len(node.candidates) > n_threshold
    return node


def _grow_grc(
    matrix: AttributeMatrix,
    remaining: list[str],
    depth: int,
    n_threshold: int,
    config: PolicyBuildConfig,
    counter: _NodeCounter,
    path: list[int],
) -> PolicyNode:
    n = matrix.n
    if n <= n_threshold or not remaining or n < 2:
        return _leaf(counter, matrix, depth, n_threshold)

    sub = matrix.subset(np.arange(n), remaining)
    node_seed = seed_entropy(config.seed) + path
    sweep = sweep_p(sub.values, config.fuzzifier, config.epsilon, config.max_iter, node_seed)
    partition = sweep.partition
    inquiring = choose_inquiry_attributes(partition, remaining, config.tau)
    spreads = partition.centroids.max(axis=0) - partition.centroids.min(axis=0)
    if float(spreads.max()) <= 1e-12:
        return _leaf(counter, matrix, depth, n_threshold)

    labels = partition.hard_labels()
    groups = [np.flatnonzero(labels == g) for g in range(partition.p)]
    groups = [g for g in groups if len(g)]
    if len(groups) < 2:
        return _leaf(counter, matrix, depth, n_threshold)

    node = PolicyNode(counter.take(), list(matrix.provider_ids), depth, inquiring=inquiring)
    primary = inquiring[0]
    attr_pos = {a: i for i, a in enumerate(remaining)}
    order = sorted(
        range(len(groups)),
        key=lambda g: (float(partition.centroids[g, attr_pos[primary]]), g),
    )
    next_attrs = [a for a in remaining if a not in inquiring]
    for child_pos, g in enumerate(order):
        rows = groups[g]
        descriptor = GranuleDescriptor(
            {
                attr: _facet(matrix, rows, attr, float(partition.centroids[g, attr_pos[attr]]))
                for attr in inquiring
            }
        )
        child = _grow_grc(
            matrix.subset(rows),
            next_attrs,
            depth + 1,
            n_threshold,
            config,
            counter,
            path + [child_pos],
        )
        node.children.append((descriptor, child))
    _assign_ranks(node.children, inquiring)
    return node


def build_policy_tree(
    services: AttributeMatrix, config: PolicyBuildConfig, n_threshold: int
) -> PolicyTree:
    """Compile the granular-pruning question tree for one service type."""
    if services.n == 0:
        raise ConfigError("cannot build a policy tree without services")
    if n_threshold < 1:
        raise ConfigError("leaf threshold must be at least 1")
    counter = _NodeCounter()
    root = _grow_grc(services, list(services.attributes), 1, n_threshold, config, counter, [])
    snapshot = config.snapshot() | {"n": n_threshold}
    return PolicyTree("", root, n_threshold, "grc", snapshot)


def collect_leaf_sizes(tree: PolicyTree) -> LeafSizeProfile:
    """Leaf candidate-set cardinalities, the input array for the threshold rule."""
    sizes = sorted(len(leaf.candidates) for leaf in tree.leaves())
    return LeafSizeProfile(sizes, tree.config.get("x", 8))


def auto_n(x: int, res) -> int:
    """Pick the leaf threshold from the leaf-size frequency profile.

    Literal transcription of the published walk: sort distinct (value,
    frequency) pairs by value, keep the upper half from the median position,
    start at the most frequent pair (ties to the larger value), then follow
    the left/right frequency-difference rules. The walk's final value is
    capped at the one-shot recommendation limit ``x``.
    """
    sizes = list(res.sizes) if isinstance(res, LeafSizeProfile) else list(res)
    if x < 1:
        raise ConfigError("upper limit x must be at least 1")
    if not sizes:
        raise ConfigError("empty leaf-size profile")

    pairs = sorted(Counter(sizes).items())  # (value, frequency), value ascending
    median_pos = (len(pairs) - 1) // 2
    candidate = pairs[median_pos:]
    start = max(range(len(candidate)), key=lambda i: (candidate[i][1], candidate[i][0]))

    v = 0
    i = start
    while i < len(candidate) and v < x:
        v = candidate[i][0]
        if len(candidate) == 1:
            d_left = d_right = math.inf  # no neighbors: the walk cannot move
        elif i == 0:
            d_left = math.inf
            d_right = candidate[i][1] - candidate[i + 1][1]
        elif i == len(candidate) - 1:
            d_right = math.inf
            d_left = candidate[i][1] - candidate[i - 1][1]
        else:
            d_right = candidate[i][1] - candidate[i + 1][1]
            d_left = candidate[i][1] - candidate[i - 1][1]
        a_left, a_right = abs(d_left), abs(d_right)
        if d_right < 0 and d_left < 0:
            if a_left < a_right:
                v = candidate[i - 1][0]
                break
        elif d_right > 0 and d_left > 0:
            if a_left > a_right:
                break
        elif d_right > 0 and d_left < 0:
            if a_left > a_right:
                v = candidate[i - 1][0]
            break
        i += 1
    return min(v, x)


def bootstrap_n(services: AttributeMatrix, x: int, config: PolicyBuildConfig) -> int:
    """Resolve the threshold circularity: provisional tree at x, then auto_n."""
    if x < 1:
        raise ConfigError("upper limit x must be at least 1")
    provisional = build_policy_tree(services, config, n_threshold=x)
    profile = collect_leaf_sizes(provisional)
    return auto_n(x, profile)


def _kmeans_1d(col: np.ndarray, k: int, seed) -> tuple[np.ndarray, np.ndarray, float]:
    """Plain Lloyd iterations on one attribute column; returns labels, centers, sse."""
    n = len(col)
    rng = np.random.default_rng(seed)
    unique = np.unique(col)
    if len(unique) >= k:
        centers = unique[np.sort(rng.choice(len(unique), size=k, replace=False))].astype(float)
    else:
        centers = col[np.sort(rng.choice(n, size=k, replace=False))].astype(float)
    centers = centers.copy()
    for _ in range(100):
        dist = np.abs(col[None, :] - centers[:, None])
        labels = dist.argmin(axis=0)
        new = centers.copy()
        for c in range(k):
            members = col[labels == c]
            if len(members):
                new[c] = members.mean()
        if np.allclose(new, centers, atol=1e-12):
            centers = new
            break
        centers = new
    dist = np.abs(col[None, :] - centers[:, None])
    labels = dist.argmin(axis=0)
    sse = float(((col - centers[labels]) ** 2).sum())
    return labels, centers, sse


def _elbow_k(col: np.ndarray, seed) -> int:
    """Cluster count by the largest second difference of the SSE curve."""
    n = len(col)
    upper = math.isqrt(n)
    if upper < 2:
        return 2
    ks = list(range(1, upper + 1))
    sse = {k: _kmeans_1d(col, k, seed_entropy(seed) + [k])[2] for k in ks}
    if upper == 2:
        return 2
    best_k, best_gain = 2, -math.inf
    for k in range(2, upper + 1):
        drop_in = sse[k - 1] - sse[k]
        drop_out = sse[k] - sse[k + 1] if k + 1 <= upper else 0.0
        gain = drop_in - drop_out
        if gain > best_gain + 1e-12:
            best_k, best_gain = k, gain
    return best_k


def _grow_kmeans(
    matrix: AttributeMatrix,
    remaining: list[str],
    depth: int,
    n_threshold: int,
    seed: int,
    counter: _NodeCounter,
    path: list[int],
) -> PolicyNode:
    n = matrix.n
    if n <= n_threshold or not remaining or n < 2:
        return _leaf(counter, matrix, depth, n_threshold)

    variances = [float(matrix.column(a).var()) for a in remaining]
    best = int(np.argmax(variances))
    if variances[best] <= 1e-12:
        return _leaf(counter, matrix, depth, n_threshold)
    attr = remaining[best]
    col = matrix.column(attr)

    node_seed = seed_entropy(seed) + path
    k = min(_elbow_k(col, node_seed), n)
    labels, centers, _ = _kmeans_1d(col, k, node_seed + [k])
    groups = [np.flatnonzero(labels == g) for g in range(k)]
    groups = [g for g in groups if len(g)]
    if len(groups) < 2:
        return _leaf(counter, matrix, depth, n_threshold)

    node = PolicyNode(counter.take(), list(matrix.provider_ids), depth, inquiring=[attr])
    order = sorted(range(len(groups)), key=lambda g: (float(centers[g]), g))
    next_attrs = [a for a in remaining if a != attr]
    for child_pos, g in enumerate(order):
        rows = groups[g]
        descriptor = GranuleDescriptor({attr: _facet(matrix, rows, attr, float(centers[g]))})
        child = _grow_kmeans(
            matrix.subset(rows), next_attrs, depth + 1, n_threshold, seed, counter,
            path + [child_pos],
        )
        node.children.append((descriptor, child))
    _assign_ranks(node.children, [attr])
    return node


def kmeans_policy_tree(
    services: AttributeMatrix, n_threshold: int, seed: int = 1
) -> PolicyTree:
    """Traditional baseline: one attribute per round, split by hard k-means."""
    if services.n == 0:
        raise ConfigError("cannot build a policy tree without services")
    if n_threshold < 1:
        raise ConfigError("leaf threshold must be at least 1")
    counter = _NodeCounter()
    root = _grow_kmeans(
        services, list(services.attributes), 1, n_threshold, seed, counter, []
    )
    snapshot = {"strategy": "kmeans", "seed": seed, "n": n_threshold}
    return PolicyTree("", root, n_threshold, "kmeans", snapshot)


def route(node: PolicyNode, answer, fuzzy_terms: dict[str, float] | None = None) -> PolicyNode:
    """Advance to the child granule matching the user's answer.

    Accepts an explicit child index, or a mapping from inquiring attributes
    to numeric values, category names, or ordinal fuzzy terms. A numeric
    value prefers children whose interval contains it, settling overlaps by
    the nearer centroid; a fuzzy term picks the child at the matching rank.
    """
    if node.leaf or not node.children:
        raise Reprompt("node has no children to route into")
    fuzzy_terms = fuzzy_terms or {}

    if isinstance(answer, int) and not isinstance(answer, bool):
        if 0 <= answer < len(node.children):
            return node.children[answer][1]
        raise Reprompt(f"option index {answer} out of range")

    if not isinstance(answer, dict):
        raise Reprompt("answer must be an option index or attribute mapping")
    relevant = {a: v for a, v in answer.items() if a in node.inquiring}
    if not relevant:
        raise Reprompt("answer does not address the inquiring attributes")

    k = len(node.children)
    spans: dict[str, float] = {}
    for attr in relevant:
        centroids = [desc.facets[attr].centroid for desc, _ in node.children]
        spans[attr] = max(max(centroids) - min(centroids), 1e-9)

    best_idx, best_score = None, math.inf
    for idx, (descriptor, child) in enumerate(node.children):
        score = 0.0
        for attr, value in relevant.items():
            facet = descriptor.facets[attr]
            score += _facet_distance(facet, value, k, spans[attr], fuzzy_terms)
            if math.isinf(score):
                break
        if score < best_score:
            best_idx, best_score = idx, score
    if best_idx is None or math.isinf(best_score):
        raise Reprompt("no granule matches the answer")
    return node.children[best_idx][1]


def _facet_distance(
    facet: AttributeFacet, value, k: int, span: float, fuzzy_terms: dict[str, float]
) -> float:
    if isinstance(value, str):
        term = value.strip().lower()
        if facet.kind == "categorical" and facet.categories and term in facet.categories:
            return 0.0
        if term in fuzzy_terms and (facet.kind == "numeric" or facet.ordered):
            target = round(fuzzy_terms[term] * (k - 1))
            return float(abs(facet.rank - target))
        try:
            value = float(term)
        except ValueError:
            return math.inf
    if facet.kind != "numeric":
        return math.inf
    value = float(value)
    distance = abs(value - facet.centroid) / span
    if not (facet.low <= value <= facet.high):
        distance += NUMERIC_MISS_PENALTY
    return distance


def _facet_to_doc(facet: AttributeFacet) -> dict:
    doc = {"kind": facet.kind, "centroid": facet.centroid, "rank": facet.rank}
    if facet.kind == "numeric":
        doc["low"] = facet.low
        doc["high"] = facet.high
    else:
        doc["categories"] = facet.categories
        doc["ordered"] = facet.ordered
    return doc


def _node_to_doc(node: PolicyNode) -> dict:
    return {
        "id": node.node_id,
        "depth": node.depth,
        "candidates": node.candidates,
        "inquiring": node.inquiring,
        "leaf": node.leaf,
        "indivisible": node.indivisible,
        "children": [
            {
                "descriptor": {a: _facet_to_doc(f) for a, f in desc.facets.items()},
                "node": _node_to_doc(child),
            }
            for desc, child in node.children
        ],
    }


def tree_to_doc(tree: PolicyTree) -> dict:
    return {
        "schema_version": TREE_SCHEMA_VERSION,
        "service_type": tree.service_type,
        "strategy": tree.strategy,
        "n": tree.n_threshold,
        "config": tree.config,
        "root": _node_to_doc(tree.root),
    }


def dumps_tree(tree: PolicyTree) -> str:
    return json.dumps(tree_to_doc(tree), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def save_tree(tree: PolicyTree, path) -> None:
    Path(path).write_text(dumps_tree(tree), encoding="utf-8")


def _facet_from_doc(doc: dict) -> AttributeFacet:
    return AttributeFacet(
        kind=doc["kind"],
        centroid=doc["centroid"],
        rank=doc["rank"],
        low=doc.get("low"),
        high=doc.get("high"),
        categories=doc.get("categories"),
        ordered=doc.get("ordered", False),
    )


def _node_from_doc(doc: dict) -> PolicyNode:
    node = PolicyNode(
        node_id=doc["id"],
        candidates=list(doc["candidates"]),
        depth=doc["depth"],
        inquiring=list(doc["inquiring"]),
        leaf=doc["leaf"],
        indivisible=doc["indivisible"],
    )
    for entry in doc["children"]:
        descriptor = GranuleDescriptor(
            {a: _facet_from_doc(f) for a, f in entry["descriptor"].items()}
        )
        node.children.append((descriptor, _node_from_doc(entry["node"])))
    return node


def tree_from_doc(doc: dict) -> PolicyTree:
    if doc.get("schema_version") != TREE_SCHEMA_VERSION:
        raise ConfigError(f"unsupported tree schema: {doc.get('schema_version')}")
    return PolicyTree(
        service_type=doc["service_type"],
        root=_node_from_doc(doc["root"]),
        n_threshold=doc["n"],
        strategy=doc["strategy"],
        config=dict(doc["config"]),
    )


def load_tree(path) -> PolicyTree:
    return tree_from_doc(json.loads(Path(path).read_text(encoding="utf-8")))


def compile_tree(
    services: AttributeMatrix,
    service_type: str,
    config: PolicyBuildConfig,
    n_override: int | None = None,
    use_auto_n: bool = False,
) -> PolicyTree:
    """Resolve the threshold and build the tree for the configured strategy."""
    if n_override is not None:
        if not 1 <= n_override <= config.x:
            raise ConfigError(f"manual N {n_override} outside [1, {config.x}]")
        n = n_override
    elif use_auto_n:
        n = bootstrap_n(services, config.x, replace(config, strategy="grc"))
    else:
        n = config.x
    if config.strategy == "kmeans":
        tree = kmeans_policy_tree(services, n, config.seed)
    else:
        tree = build_policy_tree(services, config, n)
    tree.service_type = service_type
    tree.config["service_type"] = service_type
    return tree
