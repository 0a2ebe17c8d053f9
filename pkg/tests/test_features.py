from collections import Counter
from itertools import combinations

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from polyside.features import (
    FeatureTemplate,
    Featurizer,
    TemplateKind,
    enumerate_templates,
    featurize,
    read_manifest,
    write_manifest,
)
from polyside.kg import RelationKind

from conftest import make_graph, random_graph

SHARED, INTER = TemplateKind.SHARED_TARGET, TemplateKind.INTERACTING_TARGETS


def oracle_rules(g, h, t):
    """Re-evaluate both rules for every protein and protein pair by triple scans."""
    ht = g.relation_of_kind(RelationKind.HAS_TARGET)
    iw = g.relation_of_kind(RelationKind.INTERACTS_WITH)
    targets = {(d.head, d.tail) for d in g.triples if d.relation == ht}
    ppi = {(d.head, d.tail) for d in g.triples if d.relation == iw}
    ppi |= {(q, p) for p, q in ppi}
    prots = sorted({p for _, p in targets} | {p for pair in ppi for p in pair})
    out = set()
    for p in prots:
        if (h, p) in targets and (t, p) in targets:
            out.add(FeatureTemplate(SHARED, (p,)))
    for p, q in combinations(prots, 2):
        fwd = (h, p) in targets and (p, q) in ppi and (t, q) in targets
        bwd = (h, q) in targets and (q, p) in ppi and (t, p) in targets
        if fwd or bwd:
            out.add(FeatureTemplate(INTER, (p, q)))
    return out


def drug_pairs(g):
    from polyside.kg import EntityKind
    drugs = g.entities_of_kind(EntityKind.DRUG).tolist()
    return [(a, b) for a, b in combinations(drugs, 2)]


def test_no_targets_empty_space():
    g = make_graph(["a", "b"], poly={"S": [("a", "b")]})
    a, b = g.entity_id("a"), g.entity_id("b")
    assert len(enumerate_templates(g, [(a, b)], 1)) == 0


def test_threshold_twelve_pairs():
    drugs = [f"d{i}" for i in range(13)]
    g = make_graph(drugs, ["p"], targets=[(d, "p") for d in drugs])
    ids = [g.entity_id(d) for d in drugs]
    pairs = [(ids[0], ids[i]) for i in range(1, 13)]
    space = enumerate_templates(g, pairs, min_support=10)
    assert space.templates == [FeatureTemplate(SHARED, (g.entity_id("p"),))]
    assert space.support == [12]
    assert len(enumerate_templates(g, pairs[:9], min_support=10)) == 0


def test_space_matches_brute_force_oracle():
    for seed in range(10):
        g = random_graph(np.random.default_rng(seed), n_drugs=8, n_proteins=5)
        pairs = drug_pairs(g)
        counts = Counter()
        for h, t in pairs:
            counts.update(oracle_rules(g, h, t))
        for min_support in (1, 2, 4):
            space = enumerate_templates(g, pairs + [(t, h) for h, t in pairs], min_support)
            expected = {tpl: c for tpl, c in counts.items() if c >= min_support}
            assert dict(zip(space.templates, space.support)) == expected


def test_featurize_matches_oracle_and_is_symmetric():
    g = random_graph(np.random.default_rng(4), n_drugs=12, n_proteins=6)
    pairs = drug_pairs(g)
    space = enumerate_templates(g, pairs, 1)
    rng = np.random.default_rng(0)
    for i in rng.choice(len(pairs), size=min(100, len(pairs)), replace=False):
        h, t = pairs[i]
        fv = featurize(space, g, h, t)
        assert fv == featurize(space, g, t, h)
        assert list(fv) == sorted(set(fv))
        assert {space.templates[j] for j in fv} == oracle_rules(g, h, t)


def test_disjoint_noninteracting_targets_give_empty_vector():
    g = make_graph(["a", "b", "c"], ["p", "q", "r"], targets=[("a", "p"), ("b", "q"), ("c", "p")],
                   ppi=[("p", "r")])
    a, b, c = (g.entity_id(k) for k in "abc")
    space = enumerate_templates(g, [(a, b), (a, c)], 1)
    assert featurize(space, g, a, b) == ()
    assert featurize(space, g, a, c) == (0,)


def test_interacting_targets_either_direction():
    g = make_graph(["a", "b"], ["p", "q"], targets=[("a", "q"), ("b", "p")], ppi=[("p", "q")])
    a, b = g.entity_id("a"), g.entity_id("b")
    space = enumerate_templates(g, [(a, b)], 1)
    p, q = sorted((g.entity_id("p"), g.entity_id("q")))
    assert space.templates == [FeatureTemplate(INTER, (p, q))]


def test_manifest_round_trip(tmp_path):
    g = random_graph(np.random.default_rng(8), n_drugs=10, n_proteins=6)
    space = enumerate_templates(g, drug_pairs(g), 2)
    path = tmp_path / "features.txt"
    write_manifest(path, space, g)
    back = read_manifest(path, g, 2)
    assert back.templates == space.templates and back.support == space.support
    assert back.digest(g) == space.digest(g)
    line = path.read_text().splitlines()[0].split(" ")
    assert line[0] == "0" and line[1] in ("shared_target", "interacting_targets")


def test_featurizer_memo_matches_pure():
    g = random_graph(np.random.default_rng(2), n_drugs=10, n_proteins=6)
    pairs = drug_pairs(g)
    space = enumerate_templates(g, pairs, 1)
    f = Featurizer(space, g)
    for h, t in pairs * 2:
        assert f(t, h) == featurize(space, g, h, t)
    heads = np.array([p[0] for p in pairs])
    tails = np.array([p[1] for p in pairs])
    indptr, indices = f.csr(heads, tails)
    for i, (h, t) in enumerate(pairs):
        assert tuple(indices[indptr[i]:indptr[i + 1]]) == f(h, t)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.data())
def test_removing_a_triple_never_adds_features(seed, data):
    g = random_graph(np.random.default_rng(seed), n_drugs=7, n_proteins=5)
    structural = [d for d in g.triples if g.relation_kind(d.relation) is not RelationKind.POLYPHARMACY]
    if not structural:
        return
    victim = structural[data.draw(st.integers(0, len(structural) - 1))]
    smaller = g.filtered(lambda d: d != victim)
    pairs = drug_pairs(g)
    space = enumerate_templates(g, pairs, 1)
    for h, t in pairs:
        assert set(featurize(space, smaller, h, t)) <= set(featurize(space, g, h, t))
