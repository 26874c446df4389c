import numpy as np
import pytest

from granubot.errors import CatalogError, ConfigError, EmptyCandidates, NotFound
from granubot.kg import (
    CandidateSet,
    Entity,
    ServiceKG,
    Triple,
    filter_providers,
    infer_goal,
    load_catalog,
    map_concept,
    one_hop,
    parse_catalog,
    resolve_candidates,
    train_embeddings,
)
from granubot.nlu import IntentionResult, RestrictSet


def write_catalog(tmp_path, rows, header="provider_id,service_type,price,gender"):
    path = tmp_path / "catalog.csv"
    path.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")
    return path


def intent(label, *values):
    return IntentionResult([[RestrictSet(label, set(values))]])


def reasoning_toy():
    """Concept -> service -> {two generic entities + one employ-connected entity}."""
    entities = [
        Entity(1, "HouseKeeper", "concept", "housekeeping"),
        Entity(2, "housekeeping", "service", "housekeeping"),
        Entity(3, "y1", "attribute_value"),
        Entity(4, "y2", "attribute_value"),
        Entity(5, "agency", "attribute_value"),
        Entity(6, "per1", "provider", "housekeeping"),
    ]
    triples = [
        Triple(2, "related", 3),
        Triple(2, "related", 4),
        Triple(2, "offered_by", 5),
        Triple(5, "employ", 6),
    ]
    return ServiceKG(entities, triples)


class TestLoadCatalog:
    def test_minimal_record(self, tmp_path):
        path = write_catalog(tmp_path, ['"p1","housekeeping",1200'], header="provider_id,service_type,price")
        kg = load_catalog(path)
        assert len(kg.triples) == 2
        assert len(kg.entities) == 3
        kinds = sorted(e.kind for e in kg.entities.values())
        assert kinds == ["attribute_value", "provider", "service"]

    def test_shared_value_deduplicated(self, tmp_path):
        rows = [f'"p{i}","housekeeping",1200,"woman"' for i in range(3)]
        kg = load_catalog(write_catalog(tmp_path, rows))
        values = kg.entities_of_kind("attribute_value")
        assert [e.name for e in values] == ["1200", "woman"]
        woman = [e for e in values if e.name == "woman"][0]
        assert sum(1 for t in kg.triples if t.tail == woman.id) == 3

    def test_malformed_rows_rejected_with_count(self, tmp_path):
        rows = [
            '"p1","housekeeping",1200,"woman"',
            '"p2","housekeeping",not_a_number,"man"',
            '"p3","housekeeping",1500',
            '"p4","housekeeping",1800,"man"',
        ]
        table = parse_catalog(write_catalog(tmp_path, rows))
        assert len(table.records) == 2
        assert table.rejected == 2

    def test_empty_catalog_is_fatal(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("provider_id,service_type,price\n", encoding="utf-8")
        with pytest.raises(CatalogError):
            parse_catalog(path)

    def test_multivalue_cell_yields_one_triple_per_value(self, tmp_path):
        path = write_catalog(
            tmp_path,
            ['"p1","housekeeping","north;east"'],
            header="provider_id,service_type,service_area",
        )
        kg = load_catalog(path)
        areas = {e.name for e in kg.entities_of_kind("attribute_value")}
        assert areas == {"north", "east"}
        assert sum(1 for t in kg.triples if t.relation == "service_area") == 2

    def test_graph_closure_enforced(self):
        with pytest.raises(CatalogError):
            ServiceKG([Entity(1, "a", "provider")], [Triple(1, "r", 99)])


class TestMapConcept:
    def test_synonym_resolves_to_service(self, tmp_path):
        kg = load_catalog(
            write_catalog(tmp_path, ['"p1","housekeeping",1200,"woman"']),
            synonyms={"HouseKeeper": "housekeeping"},
        )
        service = kg.entities_of_kind("service")[0]
        assert map_concept("HouseKeeper", kg) == service.id

    def test_normalization_matches_variants(self, tmp_path):
        kg = load_catalog(
            write_catalog(tmp_path, ['"p1","housekeeping",1200,"woman"']),
            synonyms={"HouseKeeper": "housekeeping"},
        )
        a = map_concept("HouseKeeper", kg)
        assert map_concept("housekeeper ", kg) == a
        assert map_concept("  HOUSEKEEPER", kg) == a

    def test_empty_term_rejected(self, tmp_path):
        kg = load_catalog(write_catalog(tmp_path, ['"p1","housekeeping",1200,"woman"']))
        with pytest.raises(NotFound):
            map_concept("", kg)

    def test_unknown_term_not_found(self, tmp_path):
        kg = load_catalog(write_catalog(tmp_path, ['"p1","housekeeping",1200,"woman"']))
        with pytest.raises(NotFound):
            map_concept("spaceship", kg)


class TestResolveCandidates:
    def test_concept_chain_matches_figure_shape(self):
        kg = reasoning_toy()
        t = resolve_candidates(intent("pro", "HouseKeeper"), kg)
        assert len(t) == 3
        assert set(t.members) == {3, 4, 5}

    def test_isolated_service_gives_empty_neighborhood(self):
        kg = ServiceKG(
            [Entity(1, "lonely", "service", "lonely"), Entity(2, "x", "provider", "x")],
            [Triple(1, "employ", 2)],
        )
        # drop the only edge by querying an entity with no remaining links
        assert one_hop(kg, 2).members == [1]
        lonely = ServiceKG([Entity(1, "lonely", "service", "lonely")], [])
        assert one_hop(lonely, 1).members == []

    def test_matches_brute_force_one_hop(self, tmp_path):
        rows = [f'"p{i}","housekeeping",{1000 + 100 * i},"woman"' for i in range(10)]
        kg = load_catalog(write_catalog(tmp_path, rows))
        service = kg.entities_of_kind("service")[0]
        t = one_hop(kg, service.id)
        expected = set()
        for tri in kg.triples:
            if tri.head == service.id:
                expected.add(tri.tail)
            elif tri.tail == service.id:
                expected.add(tri.head)
        assert set(t.members) == expected
        assert len(t.members) == 10  # the ten providers

    def test_unresolvable_intent(self):
        kg = reasoning_toy()
        with pytest.raises(EmptyCandidates):
            resolve_candidates(intent("pro", "astronaut"), kg)

    def test_provenance_recorded(self):
        kg = reasoning_toy()
        t = resolve_candidates(intent("pro", "HouseKeeper"), kg)
        for member in t.members:
            assert t.provenance[member], "each member needs an admitting triple"


class TestFilterProviders:
    def test_figure_step3_refinement(self):
        kg = reasoning_toy()
        t = resolve_candidates(intent("pro", "HouseKeeper"), kg)
        refined = filter_providers(t, kg)
        assert refined.members == [5]  # employ-connected entity survives

    def test_idempotent_and_order_preserving(self):
        kg = reasoning_toy()
        t = CandidateSet([6, 5])
        once = filter_providers(t, kg)
        twice = filter_providers(once, kg)
        assert once.members == twice.members == [6, 5]

    def test_pure_provider_set_unchanged(self):
        kg = reasoning_toy()
        assert filter_providers(CandidateSet([6]), kg).members == [6]

    def test_all_filtered_out(self):
        kg = reasoning_toy()
        with pytest.raises(EmptyCandidates):
            filter_providers(CandidateSet([3, 4]), kg)

    def test_matches_brute_force_predicate(self, tmp_path):
        rng = np.random.default_rng(5)
        rows = [f'"p{i}","housekeeping",{1000 + 100 * i},"woman"' for i in range(20)]
        kg = load_catalog(write_catalog(tmp_path, rows))
        ids = sorted(kg.entities)
        sample = [int(i) for i in rng.choice(ids, size=15, replace=False)]
        providers = {e.id for e in kg.entities_of_kind("provider")}

        def qualifies(eid):
            if eid in providers:
                return True
            return any(
                t.head == eid and t.relation == "employ" and t.tail in providers
                for t in kg.triples
            )

        expected = [i for i in sample if qualifies(i)]
        if expected:
            assert filter_providers(CandidateSet(sample), kg).members == expected
        else:
            with pytest.raises(EmptyCandidates):
                filter_providers(CandidateSet(sample), kg)


def embedding_toy():
    entities = [
        Entity(0, "s", "service", "s"),
        Entity(1, "a", "provider", "s"),
        Entity(2, "b", "provider", "s"),
        Entity(3, "v", "attribute_value"),
    ]
    triples = [
        Triple(0, "employ", 1),
        Triple(0, "employ", 2),
        Triple(1, "price", 3),
        Triple(2, "price", 3),
    ]
    return ServiceKG(entities, triples)


class TestEmbeddings:
    def test_loss_decreases_on_toy(self):
        emb = train_embeddings(embedding_toy(), dim=8, epochs=150, seed=3)
        assert emb.epoch_losses[-1] < emb.epoch_losses[0]

    def test_single_triple_beats_every_corruption(self):
        kg = ServiceKG(
            [Entity(0, "a", "provider"), Entity(1, "b", "attribute_value")],
            [Triple(0, "r", 1)],
        )
        emb = train_embeddings(kg, dim=4, epochs=200, seed=1)
        true = emb.score(0, "r", 1)
        corruptions = [emb.score(1, "r", 1), emb.score(0, "r", 0)]
        assert all(true < c for c in corruptions)

    def test_deterministic_under_seed(self):
        a = train_embeddings(embedding_toy(), dim=8, epochs=50, seed=9)
        b = train_embeddings(embedding_toy(), dim=8, epochs=50, seed=9)
        for eid in a.entity_vectors:
            assert np.array_equal(a.entity_vectors[eid], b.entity_vectors[eid])
        for rel in a.relation_vectors:
            assert np.array_equal(a.relation_vectors[rel], b.relation_vectors[rel])

    def test_unit_norm_after_training(self):
        emb = train_embeddings(embedding_toy(), dim=8, epochs=30, seed=2)
        for vec in emb.entity_vectors.values():
            assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-9)

    def test_config_errors(self):
        with pytest.raises(ConfigError):
            train_embeddings(embedding_toy(), dim=1)
        with pytest.raises(ConfigError):
            train_embeddings(embedding_toy(), dim=8, epochs=0)


class TestInferGoal:
    def goal_catalog(self, tmp_path):
        rows = [
            '"c1","cooking",2000,"soup"',
            '"c2","cooking",2400,"stew"',
            '"k1","cleaning",1800,"mop"',
            '"k2","cleaning",2200,"broom"',
        ]
        path = write_catalog(tmp_path, rows, header="provider_id,service_type,price,tool")
        return load_catalog(path)

    def test_connected_service_ranked_first(self, tmp_path):
        kg = self.goal_catalog(tmp_path)
        emb = train_embeddings(kg, dim=16, epochs=400, seed=7)
        ranked = infer_goal(["soup", "stew"], kg, emb, k=2)
        cooking = [e for e in kg.entities_of_kind("service") if e.name == "cooking"][0]
        assert ranked[0] == cooking.id

    def test_k_zero_gives_empty(self, tmp_path):
        kg = self.goal_catalog(tmp_path)
        emb = train_embeddings(kg, dim=8, epochs=10, seed=0)
        assert infer_goal(["soup"], kg, emb, k=0) == []

    def test_tie_broken_by_ascending_id(self, tmp_path):
        kg = self.goal_catalog(tmp_path)
        dim = 4
        flat = {eid: np.zeros(dim) for eid in kg.entities}
        rels = {r: np.zeros(dim) for r in kg.relations}
        from granubot.kg import EmbeddingTable

        emb = EmbeddingTable(flat, rels, dim)
        services = [e.id for e in kg.entities_of_kind("service")]
        assert infer_goal(["soup"], kg, emb, k=2) == sorted(services)

    def test_unresolvable_terms(self, tmp_path):
        kg = self.goal_catalog(tmp_path)
        emb = train_embeddings(kg, dim=8, epochs=10, seed=0)
        with pytest.raises(NotFound):
            infer_goal(["warp drive"], kg, emb, k=1)

    def test_permutation_stable(self, tmp_path):
        kg = self.goal_catalog(tmp_path)
        emb = train_embeddings(kg, dim=16, epochs=100, seed=11)
        a = infer_goal(["soup", "stew", "mop"], kg, emb, k=3)
        b = infer_goal(["mop", "soup", "stew"], kg, emb, k=3)
        assert a == b


def test_paper_scale_catalog_shape(paper_catalog):
    # the default synthetic catalog must land exactly on the reference shape
    kg = load_catalog(paper_catalog.table)
    assert len(kg.triples) == 9478
    assert len(kg.entities) == 960
    assert len(kg.relations) == 10
    kinds = {}
    for e in kg.entities.values():
        kinds[e.kind] = kinds.get(e.kind, 0) + 1
    assert kinds == {"provider": 827, "service": 16, "attribute_value": 117}
