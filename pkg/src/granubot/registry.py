"""Build, persist, and reload everything the online dialogue needs.

A store directory holds the catalog copy, the exported triple list, one
policy-tree file per (service type, strategy), optional embeddings, and a
meta document tying it together.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .clustering import AttributeMatrix
from .errors import CatalogError, ConfigError
from .kg import (
    CatalogTable,
    EmbeddingTable,
    ServiceKG,
    load_catalog,
    parse_catalog,
    parse_synonyms,
    train_embeddings,
)
from .nlu import SlotLexicon
from .policy import PolicyBuildConfig, PolicyTree, compile_tree, load_tree, save_tree
from .synth import ORDERED_CATEGORIES

STRATEGIES = ("grc", "kmeans")


def data_file(name: str) -> Path:
    return Path(str(resources.files("granubot") / "data" / name))


def load_templates(path) -> dict[str, str]:
    templates: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.rstrip("\n")
        if not line or line.startswith("#"):
            continue
        key, _, template = line.partition("\t")
        if not template:
            raise CatalogError(f"bad template line: {line!r}")
        templates[key] = template.replace("\\n", "\n")
    return templates


def load_fuzzy_terms(path) -> dict[str, float]:
    terms: dict[str, float] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        term, _, value = line.partition("\t")
        terms[term.strip().lower()] = float(value)
    return terms


@dataclass
class Registry:
    """Immutable bundle of catalog, graph, lexicons, and compiled trees."""

    kg: ServiceKG
    catalog: CatalogTable
    slot_lexicon: SlotLexicon
    fuzzy_terms: dict[str, float]
    templates: dict[str, str]
    trees: dict[tuple[str, str], PolicyTree]
    matrices: dict[str, AttributeMatrix]
    embeddings: EmbeddingTable | None = None
    default_strategy: str = "grc"
    records_by_provider: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.records_by_provider:
            self.records_by_provider = self.catalog.by_provider_id()

    def tree_for(self, service_type: str, strategy: str | None = None) -> PolicyTree:
        key = (service_type, strategy or self.default_strategy)
        if key not in self.trees:
            raise ConfigError(f"no tree for {key}")
        return self.trees[key]

    def service_types(self) -> list[str]:
        return sorted({t for t, _ in self.trees})


def type_matrices(table: CatalogTable) -> dict[str, AttributeMatrix]:
    out = {}
    for service_type, records in sorted(table.by_type().items()):
        out[service_type] = AttributeMatrix.from_records(
            [r.provider_id for r in records],
            [r.attributes for r in records],
            ordered_categories=ORDERED_CATEGORIES,
        )
    return out


def build_registry(
    catalog_source,
    config: PolicyBuildConfig | None = None,
    strategies: tuple[str, ...] = STRATEGIES,
    n_override: int | None = 8,
    use_auto_n: bool = False,
    synonyms: dict[str, str] | None = None,
    with_embeddings: bool = False,
    embedding_epochs: int = 60,
) -> Registry:
    """Compile everything from a catalog file or table, in memory."""
    config = config or PolicyBuildConfig()
    table = parse_catalog(catalog_source)
    if synonyms is None:
        synonyms = parse_synonyms(data_file("synonyms.tsv"))
    kg = load_catalog(table, synonyms)
    matrices = type_matrices(table)
    trees: dict[tuple[str, str], PolicyTree] = {}
    for service_type, matrix in matrices.items():
        for strategy in strategies:
            cfg = replace(config, strategy=strategy)
            trees[(service_type, strategy)] = compile_tree(
                matrix, service_type, cfg, n_override=n_override, use_auto_n=use_auto_n
            )
    embeddings = None
    if with_embeddings:
        embeddings = train_embeddings(kg, epochs=embedding_epochs, seed=config.seed)
    return Registry(
        kg=kg,
        catalog=table,
        slot_lexicon=SlotLexicon.from_file(data_file("slot_lexicon.tsv")),
        fuzzy_terms=load_fuzzy_terms(data_file("fuzzy_terms.tsv")),
        templates=load_templates(data_file("templates.tsv")),
        trees=trees,
        matrices=matrices,
        embeddings=embeddings,
    )


def save_store(registry: Registry, store_dir, catalog_text: str | None = None) -> Path:
    store = Path(store_dir)
    store.mkdir(parents=True, exist_ok=True)
    (store / "trees").mkdir(exist_ok=True)
    if catalog_text is not None:
        (store / "catalog.csv").write_text(catalog_text, encoding="utf-8")
    registry.kg.export_triples(store / "kg_triples.tsv")
    meta = {
        "schema_version": 1,
        "service_types": registry.service_types(),
        "strategies": sorted({s for _, s in registry.trees}),
        "default_strategy": registry.default_strategy,
        "n_by_type": {
            f"{t}/{s}": tree.n_threshold for (t, s), tree in sorted(registry.trees.items())
        },
    }
    (store / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    for (service_type, strategy), tree in registry.trees.items():
        save_tree(tree, store / "trees" / f"{service_type}.{strategy}.json")
    if registry.embeddings is not None:
        emb = registry.embeddings
        ids = sorted(emb.entity_vectors)
        rels = sorted(emb.relation_vectors)
        np.savez(
            store / "embeddings.npz",
            entity_ids=np.array(ids),
            entity_vectors=np.stack([emb.entity_vectors[i] for i in ids]),
            relations=np.array(rels),
            relation_vectors=np.stack([emb.relation_vectors[r] for r in rels]),
            losses=np.array(emb.epoch_losses),
        )
    return store


def load_registry(store_dir, synonyms: dict[str, str] | None = None) -> Registry:
    store = Path(store_dir)
    catalog_path = store / "catalog.csv"
    if not catalog_path.exists():
        raise CatalogError(f"{store}: missing catalog.csv (run the build first)")
    meta = json.loads((store / "meta.json").read_text())
    table = parse_catalog(catalog_path)
    if synonyms is None:
        synonyms = parse_synonyms(data_file("synonyms.tsv"))
    kg = load_catalog(table, synonyms)
    trees = {}
    for path in sorted((store / "trees").glob("*.json")):
        tree = load_tree(path)
        trees[(tree.service_type, tree.strategy)] = tree
    embeddings = None
    emb_path = store / "embeddings.npz"
    if emb_path.exists():
        data = np.load(emb_path, allow_pickle=False)
        embeddings = EmbeddingTable(
            {int(i): v for i, v in zip(data["entity_ids"], data["entity_vectors"])},
            {str(r): v for r, v in zip(data["relations"], data["relation_vectors"])},
            dim=int(data["entity_vectors"].shape[1]),
            epoch_losses=[float(x) for x in data["losses"]],
        )
    return Registry(
        kg=kg,
        catalog=table,
        slot_lexicon=SlotLexicon.from_file(data_file("slot_lexicon.tsv")),
        fuzzy_terms=load_fuzzy_terms(data_file("fuzzy_terms.tsv")),
        templates=load_templates(data_file("templates.tsv")),
        trees=trees,
        matrices=type_matrices(table),
        embeddings=embeddings,
        default_strategy=meta.get("default_strategy", "grc"),
    )
