"""Ranking metrics and per-side-effect evaluation reports.

AP-style metrics rank by descending score with a stable sort, so tied scores
keep their input order.  AuROC uses average ranks, counting ties as 1/2.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .dataset import ExampleSet
from .errors import Degenerate


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")
    return scores, labels


def auroc(scores, labels) -> float:
    """Probability that a random positive outranks a random negative (Mann-Whitney)."""
    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise Degenerate("auroc needs at least one positive and one negative")
    ranks = rankdata(scores, method="average")
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _ranked_hits(scores, labels):
    order = np.argsort(-scores, kind="stable")
    return labels[order]


def aupr(scores, labels) -> float:
    """Average precision: mean of precision@rank over the ranks holding positives."""
    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise Degenerate("aupr needs at least one positive")
    hits = _ranked_hits(scores, labels)
    ranks = np.flatnonzero(hits) + 1
    precision = np.arange(1, n_pos + 1) / ranks
    return float(precision.sum() / n_pos)


def ap_at_k(scores, labels, k: int = 50) -> float:
    """Average precision restricted to the top-k, normalised by min(k, n_pos)."""
    scores, labels = _check(scores, labels)
    if len(scores) == 0:
        raise ValueError("empty ranking")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise Degenerate("ap@k needs at least one positive")
    hits = _ranked_hits(scores, labels)[:k]
    ranks = np.flatnonzero(hits) + 1
    precision = np.arange(1, len(ranks) + 1) / ranks
    return float(precision.sum() / min(k, n_pos))


def tie_fraction(scores) -> float:
    scores = np.asarray(scores).ravel()
    if len(scores) == 0:
        return 0.0
    return 1.0 - len(np.unique(scores)) / len(scores)


@dataclass
class SideEffectMetrics:
    auroc: float
    aupr: float
    ap50: float
    n_pos: int
    n_neg: int
    tie_fraction: float = 0.0


@dataclass
class EvalReport:
    per_side_effect: dict[int, SideEffectMetrics]
    aggregate: tuple[float, float, float]
    pooled: tuple[float, float, float]
    degenerate: dict[int, str] = field(default_factory=dict)

    # Flag in the report when more than this share of a side effect's scores tie.
    TIE_WARNING = 0.05

    def format(self, relation_key=str) -> str:
        lines = ["relation auroc aupr ap50 n_pos n_neg"]
        for r in sorted(self.per_side_effect):
            m = self.per_side_effect[r]
            flag = " ties" if m.tie_fraction > self.TIE_WARNING else ""
            lines.append(f"{relation_key(r)} {m.auroc:.6f} {m.aupr:.6f} {m.ap50:.6f} "
                         f"{m.n_pos} {m.n_neg}{flag}")
        for r in sorted(self.degenerate):
            lines.append(f"{relation_key(r)} degenerate {self.degenerate[r]}")
        a = self.aggregate
        p = self.pooled
        lines.append(f"aggregate {a[0]:.6f} {a[1]:.6f} {a[2]:.6f} {len(self.per_side_effect)}")
        lines.append(f"pooled {p[0]:.6f} {p[1]:.6f} {p[2]:.6f}")
        return "\n".join(lines) + "\n"

    def summary_json(self) -> str:
        a = self.aggregate
        return json.dumps({
            "auroc": a[0], "aupr": a[1], "ap50": a[2],
            "pooled": {"auroc": self.pooled[0], "aupr": self.pooled[1], "ap50": self.pooled[2]},
            "n_side_effects": len(self.per_side_effect),
            "n_degenerate": len(self.degenerate),
        }, indent=2, sort_keys=True) + "\n"


def _nan_metrics():
    return (float("nan"),) * 3


def _side_effect_metrics(s, y, k):
    try:
        return SideEffectMetrics(auroc(s, y), aupr(s, y), ap_at_k(s, y, k),
                                 int(y.sum()), int((~y).sum()), tie_fraction(s))
    except Degenerate as exc:
        return str(exc).split(" needs")[0] + f" n_pos={int(y.sum())} n_neg={int((~y).sum())}"


def evaluate(scorer, examples: ExampleSet, k: int = 50, threads: int = 1) -> EvalReport:
    """Score every example with ``scorer(a, b, r) -> logits`` and report metrics per side effect.

    Per-side-effect metrics may be computed on ``threads`` workers; the report
    does not depend on the thread count.
    """
    if len(examples) == 0:
        return EvalReport({}, _nan_metrics(), _nan_metrics())
    scores = np.asarray(scorer(examples.drug_a, examples.drug_b, examples.side_effect), dtype=np.float64)
    labels = examples.label.astype(bool)
    per, bad = {}, {}
    order = np.argsort(examples.side_effect, kind="stable")
    rels = examples.side_effect[order]
    bounds = np.flatnonzero(np.diff(rels)) + 1
    groups = np.split(order, bounds)
    jobs = [(scores[idx], labels[idx], k) for idx in groups]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda j: _side_effect_metrics(*j), jobs))
    else:
        results = [_side_effect_metrics(*j) for j in jobs]
    for idx, res in zip(groups, results):
        r = int(examples.side_effect[idx[0]])
        if isinstance(res, SideEffectMetrics):
            per[r] = res
        else:
            bad[r] = res
    if per:
        vals = np.array([(m.auroc, m.aupr, m.ap50) for m in per.values()])
        aggregate = tuple(float(v) for v in vals.mean(axis=0))
    else:
        aggregate = _nan_metrics()
    try:
        pooled = (auroc(scores, labels), aupr(scores, labels), ap_at_k(scores, labels, k))
    except Degenerate:
        pooled = _nan_metrics()
    return EvalReport(per, aggregate, pooled, bad)
