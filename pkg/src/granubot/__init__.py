"""Granular-pruning dialog engine for service requirement elicitation."""

__version__ = "0.1.0"

from .clustering import (
    AttributeMatrix,
    GranulePartition,
    fcm,
    fpc,
    membership,
    objective,
    select_p,
)
from .dialogue import DialogueEngine, Reply, Session
from .evaluation import SimulationReport, compare, hit_rate, simulate_all_paths
from .kg import ServiceKG, load_catalog, train_embeddings
from .policy import (
    PolicyBuildConfig,
    PolicyTree,
    auto_n,
    build_policy_tree,
    kmeans_policy_tree,
)
from .registry import Registry, build_registry, load_registry, save_store
from .synth import SyntheticCatalogSpec, fixture_catalog, generate_catalog

__all__ = [
    "AttributeMatrix", "GranulePartition", "fcm", "fpc", "membership", "objective",
    "select_p", "DialogueEngine", "Reply", "Session", "SimulationReport", "compare",
    "hit_rate", "simulate_all_paths", "ServiceKG", "load_catalog", "train_embeddings",
    "PolicyBuildConfig", "PolicyTree", "auto_n", "build_policy_tree",
    "kmeans_policy_tree", "Registry", "build_registry", "load_registry", "save_store",
    "SyntheticCatalogSpec", "fixture_catalog", "generate_catalog",
]
