"""Relational feature templates over drug pairs.

Two templates are evaluated for a drug pair (h, t):

* shared target ``p``: hasTarget(h, p) and hasTarget(t, p)
* interacting targets ``{p, q}``: hasTarget(h, p), interactsWith(p, q),
  hasTarget(t, q), in either orientation

Template instances are kept only if they hold for at least ``min_support``
of the support pairs.  A pair's feature vector is the sorted tuple of active
template indices.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ParseError
from .kg import KnowledgeGraph, RelationKind


class TemplateKind(str, Enum):
    SHARED_TARGET = "shared_target"
    INTERACTING_TARGETS = "interacting_targets"


class FeatureTemplate(NamedTuple):
    kind: TemplateKind
    proteins: tuple  # (p,) for shared target, (p, q) with p < q for interacting targets

    def describe(self, g: KnowledgeGraph) -> str:
        names = [g.entity_names.get(p, g.entity_key(p)) for p in self.proteins]
        if self.kind is TemplateKind.SHARED_TARGET:
            return f"shared target {names[0]}"
        return f"interacting targets {names[0]} -- {names[1]}"


def _targets(g: KnowledgeGraph, d: int, has_target) -> tuple:
    return g.neighbors(d, has_target) if has_target is not None else ()


def active_templates(g: KnowledgeGraph, h: int, t: int) -> set[FeatureTemplate]:
    """Every template instance whose rule is true for (h, t), before pruning."""
    has_target = g.relation_of_kind(RelationKind.HAS_TARGET)
    interacts = g.relation_of_kind(RelationKind.INTERACTS_WITH)
    th = _targets(g, h, has_target)
    tt = _targets(g, t, has_target)
    if not th or not tt:
        return set()
    out = {FeatureTemplate(TemplateKind.SHARED_TARGET, (p,)) for p in set(th) & set(tt)}
    if interacts is not None:
        for src, dst in ((th, set(tt)), (tt, set(th))):
            for p in src:
                for q in g.neighbors(p, interacts):
                    if q in dst:
                        out.add(FeatureTemplate(TemplateKind.INTERACTING_TARGETS, (min(p, q), max(p, q))))
    return out


def _sort_key(tpl: FeatureTemplate):
    return (0 if tpl.kind is TemplateKind.SHARED_TARGET else 1, tpl.proteins)


@dataclass
class RelationalFeatureSpace:
    templates: list[FeatureTemplate]
    support: list[int]
    min_support: int = 10
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {tpl: i for i, tpl in enumerate(self.templates)}

    def __len__(self):
        return len(self.templates)

    def manifest_text(self, g: KnowledgeGraph) -> str:
        lines = []
        for i, (tpl, s) in enumerate(zip(self.templates, self.support)):
            prots = ",".join(g.entity_key(p) for p in tpl.proteins)
            lines.append(f"{i} {tpl.kind.value} {prots} {s}")
        return "".join(line + "\n" for line in lines)

    def digest(self, g: KnowledgeGraph) -> str:
        text = f"min_support={self.min_support}\n" + self.manifest_text(g)
        return hashlib.sha256(text.encode()).hexdigest()


def enumerate_templates(g: KnowledgeGraph, pairs, min_support: int = 10) -> RelationalFeatureSpace:
    """Count template support over distinct drug pairs and keep the frequent ones."""
    if min_support < 1:
        raise ValueError("min_support must be >= 1")
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    seen = {(min(a, b), max(a, b)) for a, b in pairs.tolist()}
    counts = Counter()
    for h, t in seen:
        counts.update(active_templates(g, h, t))
    kept = sorted((tpl for tpl, c in counts.items() if c >= min_support), key=_sort_key)
    return RelationalFeatureSpace(kept, [counts[t] for t in kept], min_support)


def featurize(space: RelationalFeatureSpace, g: KnowledgeGraph, h: int, t: int) -> tuple[int, ...]:
    idx = space.index
    return tuple(sorted(idx[tpl] for tpl in active_templates(g, h, t) if tpl in idx))


class Featurizer:
    """Memoised ``featurize`` bound to one (space, graph) pair."""

    def __init__(self, space: RelationalFeatureSpace, g: KnowledgeGraph):
        self.space = space
        self.g = g
        self._cache: dict[tuple[int, int], tuple[int, ...]] = {}

    def __call__(self, h: int, t: int) -> tuple[int, ...]:
        key = (h, t) if h <= t else (t, h)
        fv = self._cache.get(key)
        if fv is None:
            fv = featurize(self.space, self.g, *key)
            self._cache[key] = fv
        return fv

    def csr(self, heads, tails) -> tuple[np.ndarray, np.ndarray]:
        """Feature vectors of many pairs as (indptr, indices)."""
        heads = np.asarray(heads).ravel().tolist()
        tails = np.asarray(tails).ravel().tolist()
        indptr = np.zeros(len(heads) + 1, dtype=np.int64)
        flat = []
        for i, (h, t) in enumerate(zip(heads, tails)):
            fv = self(h, t)
            flat.extend(fv)
            indptr[i + 1] = indptr[i] + len(fv)
        return indptr, np.array(flat, dtype=np.int64)


class NullFeaturizer:
    """Stands in for a Featurizer when no relational features are used."""

    space = RelationalFeatureSpace([], [], 1)

    def __call__(self, h, t):
        return ()

    def csr(self, heads, tails):
        n = np.asarray(heads).size
        return np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)


def write_manifest(path, space: RelationalFeatureSpace, g: KnowledgeGraph) -> None:
    Path(path).write_text(space.manifest_text(g), encoding="utf-8")


def read_manifest(path, g: KnowledgeGraph, min_support: int) -> RelationalFeatureSpace:
    templates, support = [], []
    path = Path(path)
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        parts = line.split(" ")
        if len(parts) != 4 or int(parts[0]) != len(templates):
            raise ParseError(path, lineno, "malformed feature manifest line")
        try:
            kind = TemplateKind(parts[1])
            prots = tuple(g.entity_id(k) for k in parts[2].split(","))
        except (ValueError, KeyError) as exc:
            raise ParseError(path, lineno, str(exc)) from None
        templates.append(FeatureTemplate(kind, prots))
        support.append(int(parts[3]))
    return RelationalFeatureSpace(templates, support, min_support)
