"""Service knowledge graph: catalog ingestion, reasoning, and goal inference.

The catalog file is turned into a triple store (provider -[attribute]-> value,
service -[employ]-> provider), the reasoning chain walks concept -> service ->
candidate entities -> providers, and a translation embedding supports goal
inference when the user names attributes but not the service itself.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CatalogError, ConfigError, EmptyCandidates, NotFound

EMPLOY_RELATION = "employ"
MULTI_VALUE_SEPARATOR = ";"


def _normalize_term(term: str) -> str:
    return " ".join(term.casefold().split())


@dataclass(frozen=True)
class Entity:
    id: int
    name: str
    kind: str  # "service" | "provider" | "attribute_value" | "concept"
    domain: str | None = None


@dataclass(frozen=True)
class Triple:
    head: int
    relation: str
    tail: int


@dataclass
class CandidateSet:
    """Ordered candidate entity ids with the triples that admitted each one."""

    members: list[int]
    provenance: dict[int, list[Triple]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.members)


class ServiceKG:
    """Immutable triple store over the service catalog."""

    def __init__(
        self,
        entities: list[Entity],
        triples: list[Triple],
        synonyms: dict[str, str] | None = None,
    ):
        self.entities: dict[int, Entity] = {}
        for ent in entities:
            if ent.id in self.entities:
                raise CatalogError(f"duplicate entity id {ent.id}")
            self.entities[ent.id] = ent
        for t in triples:
            if t.head not in self.entities or t.tail not in self.entities:
                raise CatalogError(f"triple {t} references a missing entity")
        self.triples: list[Triple] = list(triples)
        self.relations: set[str] = {t.relation for t in triples}

        self._adjacency: dict[int, list[Triple]] = {}
        for t in self.triples:
            self._adjacency.setdefault(t.head, []).append(t)
            self._adjacency.setdefault(t.tail, []).append(t)

        # surface lexicon: entity names first (first id wins on collisions),
        # then synonym entries pointing at canonical entity names
        self.lexicon: dict[str, int] = {}
        for ent in sorted(self.entities.values(), key=lambda e: e.id):
            self.lexicon.setdefault(_normalize_term(ent.name), ent.id)
        for surface, canonical in (synonyms or {}).items():
            target = self.lexicon.get(_normalize_term(canonical))
            if target is not None:
                self.lexicon.setdefault(_normalize_term(surface), target)

    def neighbors(self, entity_id: int) -> list[Triple]:
        return self._adjacency.get(entity_id, [])

    def entities_of_kind(self, kind: str) -> list[Entity]:
        return [e for e in sorted(self.entities.values(), key=lambda e: e.id) if e.kind == kind]

    def service_for_domain(self, domain: str) -> Entity | None:
        for ent in self.entities_of_kind("service"):
            if ent.domain == domain:
                return ent
        return None

    def export_triples(self, path) -> None:
        """Write the triple list, one `head<TAB>relation<TAB>tail` per line."""
        lines = [f"{t.head}\t{t.relation}\t{t.tail}" for t in self.triples]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class CatalogRecord:
    provider_id: str
    service_type: str
    attributes: dict[str, float | str | tuple[str, ...]]


@dataclass
class CatalogTable:
    attributes: list[str]
    records: list[CatalogRecord]
    rejected: int = 0

    def by_type(self) -> dict[str, list[CatalogRecord]]:
        grouped: dict[str, list[CatalogRecord]] = {}
        for rec in self.records:
            grouped.setdefault(rec.service_type, []).append(rec)
        return grouped

    def by_provider_id(self) -> dict[str, CatalogRecord]:
        return {rec.provider_id: rec for rec in self.records}


def parse_catalog(source) -> CatalogTable:
    """Read the line-oriented catalog.

    Expected header: provider_id, service_type, attr_1, ..., attr_k. Unquoted
    fields are numeric, quoted fields are categorical; a quoted field may hold
    several values separated by ';'. Broken rows are dropped and counted.
    """
    if isinstance(source, CatalogTable):
        return source
    path = Path(source)
    if not path.exists():
        raise CatalogError(f"{path}: catalog file not found")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise CatalogError(f"{path}: empty catalog")
    header = next(csv.reader([lines[0]]))
    if len(header) < 3 or header[0] != "provider_id" or header[1] != "service_type":
        raise CatalogError(f"{path}: header must start with provider_id, service_type")
    attr_names = header[2:]
    records: list[CatalogRecord] = []
    rejected = 0
    reader = csv.reader(lines[1:], quoting=csv.QUOTE_NONNUMERIC)
    while True:
        try:
            row = next(reader)
        except StopIteration:
            break
        except ValueError:
            rejected += 1
            continue
        if not row:
            continue
        if len(row) != len(header) or not row[0] or not row[1]:
            rejected += 1
            continue
        attrs: dict[str, float | str | tuple[str, ...]] = {}
        ok = True
        for name, cell in zip(attr_names, row[2:]):
            if isinstance(cell, float):
                attrs[name] = cell
            else:
                parts = tuple(p.strip() for p in str(cell).split(MULTI_VALUE_SEPARATOR))
                if not all(parts):
                    ok = False
                    break
                attrs[name] = parts[0] if len(parts) == 1 else parts
        if not ok or not attrs:
            rejected += 1
            continue
        records.append(CatalogRecord(str(row[0]), str(row[1]), attrs))
    if not records:
        raise CatalogError(f"{path}: no valid records")
    return CatalogTable(attr_names, records, rejected)


def format_value(value: float | str) -> str:
    """Stable surface form for an attribute value entity name."""
    if isinstance(value, float):
        return str(int(value)) if value.is_integer() else repr(value)
    return str(value)


def load_catalog(source, synonyms: dict[str, str] | None = None) -> ServiceKG:
    """Materialize the catalog as a knowledge graph.

    One provider entity per record, one service entity per service type, one
    attribute_value entity per distinct (attribute, value) pair; providers
    link to values under the attribute name and services employ providers.
    """
    table = parse_catalog(source)
    entities: list[Entity] = []
    triples: list[Triple] = []
    next_id = 0

    provider_ids: dict[str, int] = {}
    for rec in table.records:
        if rec.provider_id in provider_ids:
            raise CatalogError(f"duplicate provider id {rec.provider_id!r}")
        provider_ids[rec.provider_id] = next_id
        entities.append(Entity(next_id, rec.provider_id, "provider", rec.service_type))
        next_id += 1

    service_ids: dict[str, int] = {}
    for rec in table.records:
        if rec.service_type not in service_ids:
            service_ids[rec.service_type] = next_id
            entities.append(Entity(next_id, rec.service_type, "service", rec.service_type))
            next_id += 1

    value_ids: dict[tuple[str, str], int] = {}
    for rec in table.records:
        for attr, value in rec.attributes.items():
            values = value if isinstance(value, tuple) else (value,)
            for v in values:
                key = (attr, format_value(v))
                if key not in value_ids:
                    value_ids[key] = next_id
                    entities.append(Entity(next_id, key[1], "attribute_value"))
                    next_id += 1
                triples.append(Triple(provider_ids[rec.provider_id], attr, value_ids[key]))
        triples.append(
            Triple(service_ids[rec.service_type], EMPLOY_RELATION, provider_ids[rec.provider_id])
        )
    return ServiceKG(entities, triples, synonyms)


def parse_synonyms(path) -> dict[str, str]:
    """Read `surface<TAB>canonical` pairs, one per line."""
    out: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise CatalogError(f"bad synonym line: {line!r}")
        out[parts[0]] = parts[1]
    return out


def map_concept(term: str, kg: ServiceKG) -> int:
    """Resolve a surface term to an entity id, exact match before normalized."""
    if not term or not term.strip():
        raise NotFound("empty concept term")
    if term in kg.lexicon:
        return kg.lexicon[term]
    normalized = _normalize_term(term)
    if normalized in kg.lexicon:
        return kg.lexicon[normalized]
    raise NotFound(f"no entity for term {term!r}")


def one_hop(kg: ServiceKG, entity_id: int) -> CandidateSet:
    """All entities one triple away, with the admitting triples recorded."""
    members: list[int] = []
    provenance: dict[int, list[Triple]] = {}
    for t in kg.neighbors(entity_id):
        other = t.tail if t.head == entity_id else t.head
        if other == entity_id:
            continue
        if other not in provenance:
            members.append(other)
            provenance[other] = []
        provenance[other].append(t)
    return CandidateSet(members, provenance)


def _service_entity_for(kg: ServiceKG, entity_id: int) -> Entity | None:
    ent = kg.entities[entity_id]
    if ent.kind == "service":
        return ent
    if ent.kind == "concept":
        for t in kg.neighbors(entity_id):
            other = kg.entities[t.tail if t.head == entity_id else t.head]
            if other.kind == "service":
                return other
        if ent.domain:
            return kg.service_for_domain(ent.domain)
    if ent.kind == "provider" and ent.domain:
        return kg.service_for_domain(ent.domain)
    return None


def resolve_candidates(intent, kg: ServiceKG) -> CandidateSet:
    """Map the intention to a service entity and collect its 1-hop neighborhood.

    Profession restricts are tried first; any other restrict value that maps
    to a concept or service entity is accepted as a fallback.
    """
    terms: list[str] = []
    for concern in intent.concerns:
        for rs in concern:
            if rs.label == "pro":
                terms.extend(sorted(rs.attributes))
    for concern in intent.concerns:
        for rs in concern:
            if rs.label != "pro":
                terms.extend(sorted(rs.attributes))
    for term in terms:
        try:
            entity_id = map_concept(term, kg)
        except NotFound:
            continue
        service = _service_entity_for(kg, entity_id)
        if service is not None:
            return one_hop(kg, service.id)
    raise EmptyCandidates("no restrict term resolves to a service entity")


def filter_providers(t: CandidateSet, kg: ServiceKG) -> CandidateSet:
    """Keep members that are providers or employ-connected to a provider."""
    if not t.members:
        raise EmptyCandidates("cannot filter an empty candidate set")
    members: list[int] = []
    provenance: dict[int, list[Triple]] = {}
    for member in t.members:
        ent = kg.entities[member]
        admitting = list(t.provenance.get(member, []))
        qualified = ent.kind == "provider"
        if not qualified:
            for tri in kg.neighbors(member):
                if (
                    tri.head == member
                    and tri.relation == EMPLOY_RELATION
                    and kg.entities[tri.tail].kind == "provider"
                ):
                    qualified = True
                    admitting.append(tri)
                    break
        if qualified and member not in provenance:
            members.append(member)
            provenance[member] = admitting
    if not members:
        raise EmptyCandidates("no candidate satisfies the provider constraint")
    return CandidateSet(members, provenance)


@dataclass
class EmbeddingTable:
    """Translation embedding vectors for entities and relation labels."""

    entity_vectors: dict[int, np.ndarray]
    relation_vectors: dict[str, np.ndarray]
    dim: int
    epoch_losses: list[float] = field(default_factory=list)

    def score(self, head: int, relation: str, tail: int) -> float:
        v = self.entity_vectors[head] + self.relation_vectors[relation] - self.entity_vectors[tail]
        return float(np.linalg.norm(v))


def train_embeddings(
    kg: ServiceKG,
    dim: int = 32,
    margin: float = 1.0,
    epochs: int = 100,
    seed: int = 0,
    learning_rate: float = 0.05,
) -> EmbeddingTable:
    """Fit head + relation ~ tail vectors with margin ranking against corruptions.

    Full-batch gradient steps, one uniformly corrupted negative per positive,
    entity vectors renormalized to unit length after every epoch.
    """
    if dim < 2:
        raise ConfigError("embedding dimension must be at least 2")
    if epochs <= 0:
        raise ConfigError("epochs must be positive")
    if not kg.triples:
        raise ConfigError("cannot train embeddings on an empty graph")

    ent_ids = sorted(kg.entities)
    ent_index = {e: i for i, e in enumerate(ent_ids)}
    rel_names = sorted(kg.relations)
    rel_index = {r: i for i, r in enumerate(rel_names)}
    n_ent = len(ent_ids)

    rng = np.random.default_rng(seed)
    bound = 1.0 / math.sqrt(dim)
    ent = rng.uniform(-bound, bound, size=(n_ent, dim))
    rel = rng.uniform(-bound, bound, size=(len(rel_names), dim))
    ent /= np.linalg.norm(ent, axis=1, keepdims=True)

    heads = np.array([ent_index[t.head] for t in kg.triples])
    rels = np.array([rel_index[t.relation] for t in kg.triples])
    tails = np.array([ent_index[t.tail] for t in kg.triples])
    m = len(kg.triples)

    losses: list[float] = []
    for _ in range(epochs):
        corrupt_head = rng.random(m) < 0.5
        replacements = rng.integers(0, n_ent, size=m)
        neg_heads = np.where(corrupt_head, replacements, heads)
        neg_tails = np.where(corrupt_head, tails, replacements)

        pos_vec = ent[heads] + rel[rels] - ent[tails]
        neg_vec = ent[neg_heads] + rel[rels] - ent[neg_tails]
        pos_d = np.linalg.norm(pos_vec, axis=1)
        neg_d = np.linalg.norm(neg_vec, axis=1)
        viol = margin + pos_d - neg_d
        active = viol > 0.0
        losses.append(float(np.maximum(viol, 0.0).mean()))
        if not active.any():
            continue

        pos_g = pos_vec[active] / np.maximum(pos_d[active], 1e-12)[:, None]
        neg_g = neg_vec[active] / np.maximum(neg_d[active], 1e-12)[:, None]
        step = learning_rate / max(int(active.sum()), 1)

        ent_grad = np.zeros_like(ent)
        rel_grad = np.zeros_like(rel)
        np.add.at(ent_grad, heads[active], pos_g)
        np.add.at(ent_grad, tails[active], -pos_g)
        np.add.at(rel_grad, rels[active], pos_g - neg_g)
        np.add.at(ent_grad, neg_heads[active], -neg_g)
        np.add.at(ent_grad, neg_tails[active], neg_g)
        ent -= step * ent_grad
        rel -= step * rel_grad
        ent /= np.linalg.norm(ent, axis=1, keepdims=True)

    return EmbeddingTable(
        {e: ent[i].copy() for e, i in ent_index.items()},
        {r: rel[i].copy() for r, i in rel_index.items()},
        dim,
        losses,
    )


def infer_goal(
    attribute_terms: list[str], kg: ServiceKG, emb: EmbeddingTable, k: int
) -> list[int]:
    """Rank service entities against the attribute values the user mentioned.

    Each resolved value is translated back through its own incident relations
    plus the employ hop; services are ordered by summed distance, ties by id.
    """
    resolved: list[int] = []
    for term in attribute_terms:
        try:
            entity_id = map_concept(term, kg)
        except NotFound:
            continue
        if kg.entities[entity_id].kind == "attribute_value" and entity_id not in resolved:
            resolved.append(entity_id)
    if not resolved:
        raise NotFound("no attribute term resolves to an attribute value entity")
    if k <= 0:
        return []

    employ = emb.relation_vectors.get(EMPLOY_RELATION)
    if employ is None:
        employ = np.zeros(emb.dim)
    scores: list[tuple[float, int]] = []
    for service in kg.entities_of_kind("service"):
        total = 0.0
        base = emb.entity_vectors[service.id] + employ
        for value_id in sorted(resolved):
            incident = sorted(
                {t.relation for t in kg.neighbors(value_id) if t.tail == value_id}
            )
            for relation in incident:
                diff = base + emb.relation_vectors[relation] - emb.entity_vectors[value_id]
                total += float(np.linalg.norm(diff))
        scores.append((total, service.id))
    scores.sort()
    return [sid for _, sid in scores[:k]]
