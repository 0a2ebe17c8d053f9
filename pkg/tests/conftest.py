import sys

import numpy as np
import pytest

from polyside.kg import (
    HAS_TARGET_KEY,
    INTERACTS_WITH_KEY,
    MONO_KEY,
    EntityKind,
    KnowledgeGraph,
    RelationKind,
)
from polyside.synthetic import PlantedRuleConfig


def make_graph(drugs=(), proteins=(), poly=None, targets=(), ppi=(), mono=(), freeze=True):
    """Toy graph from external keys.  ``poly`` maps side-effect code -> list of drug pairs."""
    g = KnowledgeGraph()
    for d in drugs:
        g.intern_entity(d, EntityKind.DRUG)
    for p in proteins:
        g.intern_entity(p, EntityKind.PROTEIN)
    for code, pairs in (poly or {}).items():
        r = g.intern_relation(code, RelationKind.POLYPHARMACY, f"name of {code}")
        for a, b in pairs:
            g.add_triple(g.intern_entity(a, EntityKind.DRUG), r, g.intern_entity(b, EntityKind.DRUG))
    iw = g.intern_relation(INTERACTS_WITH_KEY, RelationKind.INTERACTS_WITH)
    for p, q in ppi:
        g.add_triple(g.intern_entity(p, EntityKind.PROTEIN), iw, g.intern_entity(q, EntityKind.PROTEIN))
    ht = g.intern_relation(HAS_TARGET_KEY, RelationKind.HAS_TARGET)
    for d, p in targets:
        g.add_triple(g.intern_entity(d, EntityKind.DRUG), ht, g.intern_entity(p, EntityKind.PROTEIN))
    if mono:
        mr = g.intern_relation(MONO_KEY, RelationKind.MONO_SIDE_EFFECT)
        for d, m in mono:
            g.add_triple(g.intern_entity(d, EntityKind.DRUG), mr, g.intern_entity(m, EntityKind.MONO_EFFECT))
    return g.freeze() if freeze else g


def random_graph(rng, n_drugs=8, n_proteins=5, n_side_effects=2, p_poly=0.3, p_target=0.35, p_ppi=0.4):
    drugs = [f"D{i}" for i in range(n_drugs)]
    prots = [f"P{i}" for i in range(n_proteins)]
    poly = {}
    for s in range(n_side_effects):
        poly[f"S{s}"] = [(drugs[i], drugs[j]) for i in range(n_drugs) for j in range(i + 1, n_drugs)
                         if rng.random() < p_poly]
    targets = [(d, p) for d in drugs for p in prots if rng.random() < p_target]
    ppi = [(prots[i], prots[j]) for i in range(n_proteins) for j in range(i + 1, n_proteins)
           if rng.random() < p_ppi]
    return make_graph(drugs, prots, poly, targets, ppi)


SMALL_PLANTED = PlantedRuleConfig(n_drugs=60, n_proteins=80, n_side_effects=3, n_hubs=12,
                                  n_ppi=150, rules_per_side_effect=3, rule_edge_prob=0.5,
                                  n_mono=10, mono_per_drug=2, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_prepared(tmp_path_factory):
    """Ingested, split and regime-prepared planted-rule data at toy scale."""
    from polyside.dataset import Regime, SplitSpec
    from polyside.ingest import ingest_dataset
    from polyside.pipeline import make_splits, prepare
    from polyside.synthetic import generate, write_files

    paths = write_files(generate(SMALL_PLANTED), tmp_path_factory.mktemp("small"))
    g, _ = ingest_dataset(paths)
    return prepare(g, make_splits(g, SplitSpec(seed=0)), Regime.FULL)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
