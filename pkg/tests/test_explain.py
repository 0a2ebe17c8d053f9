import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyside.errors import UnknownPair
from polyside.explain import attribute, default_candidates, format_explanation, rank_candidates
from polyside.features import Featurizer, enumerate_templates
from polyside.kg import EntityKind
from polyside.model import Mode, init_for_graph, poe_logit

from conftest import make_graph, random_graph


def _setup(seed, n_drugs=10):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n_drugs=n_drugs, n_proteins=6, p_target=0.5, p_ppi=0.5)
    drugs = g.entities_of_kind(EntityKind.DRUG)
    pairs = [(a, b) for i, a in enumerate(drugs.tolist()) for b in drugs.tolist()[i + 1:]]
    space = enumerate_templates(g, pairs, 1)
    f = Featurizer(space, g)
    p = init_for_graph(g, len(space), 4, rng)
    p.rel_weights[:] = rng.normal(size=p.rel_weights.shape)
    return g, f, p, drugs, pairs


def test_single_candidate_rank_one():
    g, f, p, drugs, pairs = _setup(0)
    res = rank_candidates(p, f, 0, [pairs[3]], Mode.COMBINED)
    assert res.n_candidates == 1 and res.rank_of(*pairs[3]) == 1
    with pytest.raises(UnknownPair):
        res.rank_of(*pairs[4])


def test_order_matches_hand_logits():
    g, f, p, drugs, pairs = _setup(1)
    res = rank_candidates(p, f, 1, pairs, Mode.COMBINED)
    logits = {pr: poe_logit(p, f, pr[0], 1, pr[1], Mode.COMBINED) for pr in pairs}
    expected = sorted(pairs, key=lambda pr: (-logits[pr], pr))
    assert [tuple(x) for x in res.pairs.tolist()] == expected
    for i, pr in enumerate(expected, start=1):
        assert res.rank_of(pr[1], pr[0]) == i


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_rank_invariant_to_input_order(seed):
    g, f, p, drugs, pairs = _setup(seed % 7)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(pairs))
    shuffled = [pairs[i][::-1] if rng.random() < 0.5 else pairs[i] for i in perm]
    a = rank_candidates(p, f, 0, pairs, Mode.EMBEDDING_ONLY)
    b = rank_candidates(p, f, 0, shuffled, Mode.EMBEDDING_ONLY)
    assert np.array_equal(a.pairs, b.pairs) and np.array_equal(a.logits, b.logits)


def test_attribution_is_exactly_additive():
    for seed in range(5):
        g, f, p, drugs, pairs = _setup(seed)
        for a, b in pairs:
            for r in range(2):
                att = attribute(p, f, (a, b), r)
                logit = poe_logit(p, f, a, r, b, Mode.COMBINED)
                assert att.logit == logit
                total = att.embedding_contribution + sum(v for _, _, v in att.feature_contributions)
                assert abs(total - logit) <= 1e-12
                mags = [abs(v) for _, _, v in att.feature_contributions]
                assert mags == sorted(mags, reverse=True)


def test_removing_feature_changes_logit_by_contribution():
    g, f, p, drugs, pairs = _setup(2)
    for a, b in pairs:
        att = attribute(p, f, (a, b), 0)
        for idx, _, v in att.feature_contributions:
            q = p.copy()
            q.rel_weights[0, idx] = 0.0
            delta = poe_logit(p, f, a, 0, b, Mode.COMBINED) - poe_logit(q, f, a, 0, b, Mode.COMBINED)
            assert abs(delta - v) <= 1e-12


def test_empty_features_and_zero_weights():
    g, f, p, drugs, pairs = _setup(3)
    empty = next(pr for pr in pairs if not f(*pr))
    att = attribute(p, f, empty, 0)
    assert att.feature_contributions == []
    assert att.embedding_contribution == poe_logit(p, f, empty[0], 0, empty[1], Mode.COMBINED)
    p.rel_weights[:] = 0.0
    full = next(pr for pr in pairs if f(*pr))
    assert all(v == 0.0 for _, _, v in attribute(p, f, full, 0).feature_contributions)


def test_default_candidates_exclude_known():
    g = make_graph(["a", "b", "c", "d"], poly={"S": [("a", "b")]})
    r = g.relation_id("S")
    cands = default_candidates(g, r, g.entities_of_kind(EntityKind.DRUG))
    assert len(cands) == 5
    ab = sorted((g.entity_id("a"), g.entity_id("b")))
    assert ab not in cands.tolist()


def test_explanation_block():
    g, f, p, drugs, pairs = _setup(4)
    pair = next(pr for pr in pairs if f(*pr))
    logits = {m: poe_logit(p, f, pair[0], 0, pair[1], m) for m in Mode}
    ranks = {m: rank_candidates(p, f, 0, pairs, m).rank_of(*pair) for m in Mode}
    text = format_explanation(g, pair, 0, logits, ranks, attribute(p, f, pair, 0), len(pairs), 3)
    lines = text.splitlines()
    assert lines[0].startswith("pair ") and lines[1].startswith("side_effect S0 name of S0")
    assert any(line.startswith("combined logit") for line in lines)
    assert any(line.startswith("feature ") for line in lines)
