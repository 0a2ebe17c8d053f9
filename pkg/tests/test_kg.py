import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyside.errors import KindConflict, SchemaViolation
from polyside.kg import HAS_TARGET_KEY, EntityKind, KnowledgeGraph, RelationKind

from conftest import make_graph, random_graph


def test_intern_is_idempotent_and_contiguous():
    g = KnowledgeGraph()
    a = g.intern_entity("CID000000271", EntityKind.DRUG)
    assert a == 0
    assert g.intern_entity("CID000000271", EntityKind.DRUG) == 0
    p = g.intern_entity("9606.ENSP00000353915", EntityKind.PROTEIN)
    assert p == 1
    assert g.entity_kind(p) is EntityKind.PROTEIN
    with pytest.raises(KindConflict):
        g.intern_entity("CID000000271", EntityKind.PROTEIN)


def test_symmetric_duplicate_is_noop():
    g = KnowledgeGraph()
    a = g.intern_entity("A", EntityKind.DRUG)
    b = g.intern_entity("B", EntityKind.DRUG)
    r = g.intern_relation("C1", RelationKind.POLYPHARMACY)
    assert g.add_triple(a, r, b)
    assert not g.add_triple(b, r, a)
    assert g.count(r) == 1
    assert len(g) == 1


def test_has_target_index_and_schema():
    g = KnowledgeGraph()
    a = g.intern_entity("A", EntityKind.DRUG)
    p = g.intern_entity("P", EntityKind.PROTEIN)
    ht = g.intern_relation(HAS_TARGET_KEY, RelationKind.HAS_TARGET)
    g.add_triple(a, ht, p)
    assert g.neighbors(a, ht) == (p,)
    assert g.heads(p, ht) == (a,)
    with pytest.raises(SchemaViolation):
        g.add_triple(p, ht, a)


def test_self_loop_rejected():
    g = KnowledgeGraph()
    a = g.intern_entity("A", EntityKind.DRUG)
    r = g.intern_relation("C1", RelationKind.POLYPHARMACY)
    with pytest.raises(SchemaViolation):
        g.add_triple(a, r, a)


def test_empty_graph_neighbors():
    g = KnowledgeGraph().freeze()
    assert g.neighbors(0, 0) == ()
    assert not g.contains(0, 0, 1)


def test_interacts_with_symmetric_lookup():
    g = make_graph(proteins=["p1", "p2"], ppi=[("p1", "p2")])
    iw = g.relation_id("interactsWith")
    p1, p2 = g.entity_id("p1"), g.entity_id("p2")
    assert g.neighbors(p2, iw) == (p1,)
    assert g.contains(p2, iw, p1) and g.contains(p1, iw, p2)


def test_neighbors_match_linear_scan():
    g = make_graph(["a", "b", "c"], ["p"], {"S": [("a", "b"), ("c", "b")]}, targets=[("a", "p")])
    for e in range(g.n_entities):
        for r in range(g.n_relations):
            scan = set()
            for h, rr, t in g.triples:
                if rr != r:
                    continue
                if h == e:
                    scan.add(t)
                if t == e and g.relation_kind(r) in (RelationKind.POLYPHARMACY, RelationKind.INTERACTS_WITH):
                    scan.add(h)
            assert g.neighbors(e, r) == tuple(sorted(scan))


def test_contains_agrees_with_set_oracle(rng):
    g = random_graph(rng, n_drugs=12, n_proteins=8, n_side_effects=3)
    oracle = set()
    for h, r, t in g.triples:
        oracle.add((h, r, t))
        if g.relation_kind(r) in (RelationKind.POLYPHARMACY, RelationKind.INTERACTS_WITH):
            oracle.add((t, r, h))
    probes = rng.integers(0, [g.n_entities, g.n_relations, g.n_entities], size=(1000, 3))
    expected = np.array([tuple(p) in oracle for p in probes.tolist()])
    got = np.array([g.contains(*p) for p in probes.tolist()])
    assert (got == expected).all()
    assert (g.contains_many(probes[:, 0], probes[:, 1], probes[:, 2]) == expected).all()
    assert expected.any()


def test_filtered_shares_ids():
    g = make_graph(["a", "b", "c"], poly={"S": [("a", "b"), ("b", "c")]})
    r = g.relation_id("S")
    sub = g.filtered(lambda d: d.head != g.entity_id("a"))
    assert sub.entity_id("a") == g.entity_id("a")
    assert sub.count(r) == 1
    assert sub.frozen


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7), st.integers(0, 2)), max_size=40))
def test_graph_invariants(edges):
    g = KnowledgeGraph()
    drugs = [g.intern_entity(f"d{i}", EntityKind.DRUG) for i in range(8)]
    rels = [g.intern_relation(f"s{i}", RelationKind.POLYPHARMACY) for i in range(3)]
    added = set()
    for a, b, r in edges:
        if a == b:
            continue
        new = g.add_triple(drugs[a], rels[r], drugs[b])
        key = (min(a, b), max(a, b), r)
        assert new == (key not in added)
        added.add(key)
    g.freeze()
    assert sum(g.count(r) for r in rels) == len(added) == len(g)
    for r in rels:
        for h in drugs:
            nb = set(g.neighbors(h, r))
            for t in drugs:
                assert g.contains(h, r, t) == g.contains(t, r, h)
                assert (t in nb) == g.contains(h, r, t)
    keys = [g.entity_key(i) for i in range(g.n_entities)]
    assert [g.entity_id(k) for k in keys] == list(range(g.n_entities))
