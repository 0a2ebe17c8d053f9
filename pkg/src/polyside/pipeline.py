"""Glue between the stages: splits -> training graph -> regime -> features -> model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Regime, Splits, SplitSpec, apply_regime, build_examples, stratified_split, training_graph
from .features import Featurizer, RelationalFeatureSpace, enumerate_templates
from .kg import KnowledgeGraph
from .metrics import EvalReport, evaluate
from .model import BaselineFeaturizer, Mode
from .trainer import TrainConfig, TrainResult, baseline_scorer, model_scorer, train, train_baseline

MODELS = ("baseline", "distmult", "kblrn")
MODEL_MODES = {"distmult": Mode.EMBEDDING_ONLY, "kblrn": Mode.COMBINED}


@dataclass
class Prepared:
    graph: KnowledgeGraph        # full graph, all positives
    train_graph: KnowledgeGraph  # regime-filtered graph holding training positives only
    splits: Splits               # regime-filtered splits
    regime: Regime


def make_splits(g: KnowledgeGraph, spec: SplitSpec) -> Splits:
    return stratified_split(build_examples(g, spec.seed), spec)


def prepare(g: KnowledgeGraph, splits: Splits, regime: Regime) -> Prepared:
    g_train, regime_splits = apply_regime(training_graph(g, splits), splits, regime)
    return Prepared(g, g_train, regime_splits, Regime(regime))


def support_pairs(prep: Prepared) -> np.ndarray:
    """Distinct drug pairs among training positives."""
    p = prep.splits.train.positives
    return np.unique(np.column_stack([p.drug_a, p.drug_b]), axis=0)


def build_space(prep: Prepared, min_support: int = 10) -> RelationalFeatureSpace:
    return enumerate_templates(prep.train_graph, support_pairs(prep), min_support)


def fit(prep: Prepared, model: str, cfg: TrainConfig, space: RelationalFeatureSpace | None = None,
        deterministic: bool = True, on_epoch=None) -> TrainResult:
    if model == "baseline":
        return train_baseline(prep.train_graph, prep.splits, cfg, deterministic=deterministic)
    mode = MODEL_MODES[model]
    cfg = TrainConfig(**{**cfg.__dict__, "mode": mode})
    featurizer = Featurizer(space, prep.train_graph) if space is not None else None
    return train(prep.train_graph, prep.splits, featurizer, cfg,
                 deterministic=deterministic, on_epoch=on_epoch)


def scorer_for(prep: Prepared, model: str, params, space: RelationalFeatureSpace | None = None):
    if model == "baseline":
        return baseline_scorer(params, BaselineFeaturizer(prep.train_graph))
    featurizer = Featurizer(space, prep.train_graph) if space is not None else None
    return model_scorer(params, featurizer, MODEL_MODES[model])


def evaluate_model(prep: Prepared, model: str, params, space=None, split: str = "test") -> EvalReport:
    examples = getattr(prep.splits, split)
    return evaluate(scorer_for(prep, model, params, space), examples)
