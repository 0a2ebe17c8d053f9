"""Candidate ranking for one side effect and additive attribution of a pair's logit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Splits
from .errors import UnknownPair
from .features import FeatureTemplate
from .kg import KnowledgeGraph
from .model import Mode, ModelParams, distmult_score, poe_logits


@dataclass
class RankingResult:
    side_effect: int
    pairs: np.ndarray    # (n, 2), best first
    logits: np.ndarray   # (n,)

    def __post_init__(self):
        self._rank = {(int(a), int(b)): i + 1 for i, (a, b) in enumerate(self.pairs.tolist())}

    @property
    def n_candidates(self) -> int:
        return len(self.pairs)

    def rank_of(self, a: int, b: int) -> int:
        key = (min(a, b), max(a, b))
        try:
            return self._rank[key]
        except KeyError:
            raise UnknownPair(f"pair {key} is not a candidate") from None

    def top(self, n: int):
        return [(tuple(p), float(s), i + 1)
                for i, (p, s) in enumerate(zip(self.pairs[:n].tolist(), self.logits[:n]))]


def default_candidates(g: KnowledgeGraph, side_effect: int, drugs, splits: Splits | None = None) -> np.ndarray:
    """All unordered pairs of the given drugs not known to have this side effect."""
    drugs = np.sort(np.asarray(drugs, dtype=np.int64))
    i, j = np.triu_indices(len(drugs), k=1)
    a, b = drugs[i], drugs[j]
    known = g.contains_many(a, np.full(len(a), side_effect), b)
    if splits is not None:
        pos = set()
        for s in splits:
            p = s.positives
            sel = p.side_effect == side_effect
            pos.update(zip(p.drug_a[sel].tolist(), p.drug_b[sel].tolist()))
        if pos:
            known |= np.array([(x, y) in pos for x, y in zip(a.tolist(), b.tolist())])
    return np.column_stack([a[~known], b[~known]])


def rank_candidates(params: ModelParams, featurizer, side_effect: int, candidates,
                    mode: Mode) -> RankingResult:
    """Sort candidate pairs by descending logit; ties go to the smaller (a, b) pair."""
    cand = np.asarray(candidates, dtype=np.int64).reshape(-1, 2)
    if len(cand) == 0:
        raise ValueError("candidate set is empty")
    cand = np.column_stack([cand.min(axis=1), cand.max(axis=1)])
    cand = cand[np.lexsort((cand[:, 1], cand[:, 0]))]
    logits = poe_logits(params, featurizer, cand[:, 0], side_effect, cand[:, 1], mode)
    order = np.argsort(-logits, kind="stable")
    return RankingResult(side_effect, cand[order], logits[order])


@dataclass
class Attribution:
    pair: tuple[int, int]
    side_effect: int
    embedding_contribution: float
    feature_contributions: list[tuple[int, FeatureTemplate, float]]  # sorted by |value| desc

    @property
    def logit(self) -> float:
        """Embedding part plus feature parts summed in ascending feature index."""
        rel = 0.0
        for _, _, v in sorted(self.feature_contributions, key=lambda c: c[0]):
            rel += v
        return self.embedding_contribution + rel


def attribute(params: ModelParams, featurizer, pair, side_effect: int) -> Attribution:
    a, b = min(pair), max(pair)
    emb = distmult_score(params, a, side_effect, b)
    w = params.rel_weights[side_effect]
    contribs = [(i, featurizer.space.templates[i], float(w[i])) for i in featurizer(a, b)]
    contribs.sort(key=lambda c: (-abs(c[2]), c[0]))
    return Attribution((a, b), side_effect, emb, contribs)


def format_explanation(g: KnowledgeGraph, pair, side_effect: int, logits: dict, ranks: dict,
                       attribution: Attribution, n_candidates: int, top_n: int = 10) -> str:
    a, b = min(pair), max(pair)
    lines = [
        f"pair {g.entity_key(a)} {g.entity_key(b)}",
        f"side_effect {g.relation_key(side_effect)} {g.relation_name(side_effect)}",
        f"candidates {n_candidates}",
    ]
    for mode in (Mode.EMBEDDING_ONLY, Mode.COMBINED):
        if mode in logits:
            lines.append(f"{mode.value} logit {logits[mode]:.6f} rank {ranks[mode]}")
    lines.append(f"embedding_contribution {attribution.embedding_contribution:.6f}")
    for i, tpl, v in attribution.feature_contributions[:top_n]:
        lines.append(f"feature {i} {v:+.6f} {tpl.describe(g)}")
    return "\n".join(lines) + "\n"
