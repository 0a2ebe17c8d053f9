"""Labeled drug-pair examples, negative sampling, stratified splits and regimes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import Exhausted, ParseError
from .kg import EntityKind, KnowledgeGraph, RelationKind


class Example(NamedTuple):
    drug_a: int
    drug_b: int
    side_effect: int
    label: int  # 1 positive, 0 negative


@dataclass
class ExampleSet:
    """Column-oriented examples; ``drug_a < drug_b`` for every row."""

    drug_a: np.ndarray
    drug_b: np.ndarray
    side_effect: np.ndarray
    label: np.ndarray

    @classmethod
    def empty(cls):
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z.copy(), z.copy(), z.copy())

    @classmethod
    def from_examples(cls, examples):
        arr = np.array([tuple(e) for e in examples], dtype=np.int64).reshape(-1, 4)
        return cls(arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy(), arr[:, 3].copy())

    def __post_init__(self):
        self.drug_a = np.asarray(self.drug_a, dtype=np.int64)
        self.drug_b = np.asarray(self.drug_b, dtype=np.int64)
        self.side_effect = np.asarray(self.side_effect, dtype=np.int64)
        self.label = np.asarray(self.label, dtype=np.int64)

    def __len__(self):
        return len(self.label)

    def __iter__(self):
        for row in zip(self.drug_a.tolist(), self.drug_b.tolist(),
                       self.side_effect.tolist(), self.label.tolist()):
            yield Example(*row)

    def subset(self, mask_or_index) -> "ExampleSet":
        return ExampleSet(self.drug_a[mask_or_index], self.drug_b[mask_or_index],
                          self.side_effect[mask_or_index], self.label[mask_or_index])

    def concat(self, other: "ExampleSet") -> "ExampleSet":
        return ExampleSet(*(np.concatenate([x, y]) for x, y in zip(self._cols(), other._cols())))

    def _cols(self):
        return self.drug_a, self.drug_b, self.side_effect, self.label

    @property
    def positives(self) -> "ExampleSet":
        return self.subset(self.label == 1)

    def rows(self) -> set[tuple]:
        return set(zip(*(c.tolist() for c in self._cols())))


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 20190601

    def __post_init__(self):
        if len(self.fractions) != 3:
            raise ValueError("fractions must be (train, valid, test)")
        if any(not 0 < f < 1 for f in self.fractions):
            raise ValueError(f"each fraction must lie in (0, 1): {self.fractions}")
        if not math.isclose(sum(self.fractions), 1.0, abs_tol=1e-9):
            raise ValueError(f"fractions must sum to 1: {self.fractions}")


@dataclass
class Splits:
    train: ExampleSet
    valid: ExampleSet
    test: ExampleSet
    names: tuple = field(default=("train", "valid", "test"), repr=False)

    def __iter__(self):
        return iter((self.train, self.valid, self.test))

    def items(self):
        return zip(self.names, self)

    def map(self, fn) -> "Splits":
        return Splits(*(fn(s) for s in self))


class Regime(str, Enum):
    FULL = "full"
    DRUG_DRUG_ONLY = "drug_drug_only"
    TARGETED_DRUGS_ONLY = "targeted_drugs_only"


def positive_examples(g: KnowledgeGraph) -> ExampleSet:
    parts = []
    for r in g.relations_of_kind(RelationKind.POLYPHARMACY):
        pairs = g.triples_of(r)
        parts.append(np.column_stack([pairs, np.full(len(pairs), r), np.ones(len(pairs))]))
    if not parts:
        return ExampleSet.empty()
    arr = np.concatenate(parts).astype(np.int64)
    return ExampleSet(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])


def sample_negatives(g: KnowledgeGraph, seed: int, drugs=None) -> ExampleSet:
    """One uniformly drawn absent drug pair per positive, per side effect.

    Pairs are drawn by rejection over unordered pairs of distinct drugs.
    Relations are processed in id order from a single generator, so the
    result is a pure function of (graph, seed).
    """
    rng = np.random.default_rng(seed)
    drugs = g.entities_of_kind(EntityKind.DRUG) if drugs is None else np.sort(np.asarray(drugs))
    n = len(drugs)
    n_pairs = n * (n - 1) // 2
    N = g.n_entities
    out = []
    for r in g.relations_of_kind(RelationKind.POLYPHARMACY):
        pos = g.triples_of(r)
        m = len(pos)
        if m == 0:
            continue
        if m > n_pairs - m:
            raise Exhausted(
                f"side effect {g.relation_key(r)!r} has {m} positives but only "
                f"{n_pairs - m} absent drug pairs"
            )
        taken = set((pos[:, 0] * N + pos[:, 1]).tolist())
        chosen = []
        while len(chosen) < m:
            need = m - len(chosen)
            i = rng.integers(n, size=2 * need + 8)
            j = rng.integers(n, size=2 * need + 8)
            a = np.minimum(drugs[i], drugs[j])
            b = np.maximum(drugs[i], drugs[j])
            for x, y in zip(a.tolist(), b.tolist()):
                if x == y:
                    continue
                code = x * N + y
                if code in taken:
                    continue
                taken.add(code)
                chosen.append((x, y))
                if len(chosen) == m:
                    break
        arr = np.array(chosen, dtype=np.int64)
        out.append(np.column_stack([arr, np.full(m, r), np.zeros(m, dtype=np.int64)]))
    if not out:
        return ExampleSet.empty()
    arr = np.concatenate(out)
    return ExampleSet(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])


def build_examples(g: KnowledgeGraph, seed: int) -> ExampleSet:
    return positive_examples(g).concat(sample_negatives(g, seed))


def stratum_counts(n: int, fractions) -> tuple[int, int, int]:
    """(train, valid, test) sizes for a stratum of n: floor for valid/test, rest to train."""
    n_valid = math.floor(n * fractions[1] + 1e-9)
    n_test = math.floor(n * fractions[2] + 1e-9)
    return n - n_valid - n_test, n_valid, n_test


def stratified_split(examples: ExampleSet, spec: SplitSpec = SplitSpec()) -> Splits:
    if len(examples) == 0:
        raise ValueError("cannot split an empty example set")
    rng = np.random.default_rng(spec.seed)
    key = examples.side_effect * 2 + examples.label
    order = np.argsort(key, kind="stable")
    boundaries = np.flatnonzero(np.diff(key[order])) + 1
    assign = np.zeros(len(examples), dtype=np.int64)
    for stratum in np.split(order, boundaries):
        idx = stratum[rng.permutation(len(stratum))]
        n_train, n_valid, _ = stratum_counts(len(idx), spec.fractions)
        assign[idx[n_train:n_train + n_valid]] = 1
        assign[idx[n_train + n_valid:]] = 2
    # Rows are emitted in a seeded random order so that insertion order, which
    # breaks score ties in the AP metrics, carries no label information.
    out = []
    for s in range(3):
        rows = np.flatnonzero(assign == s)
        out.append(examples.subset(rows[rng.permutation(len(rows))]))
    return Splits(*out)


def training_graph(g: KnowledgeGraph, splits: Splits) -> KnowledgeGraph:
    """Drop validation and test positives so they cannot leak through graph edges."""
    held = set()
    for s in (splits.valid, splits.test):
        p = s.positives
        held.update(zip(p.drug_a.tolist(), p.side_effect.tolist(), p.drug_b.tolist()))
    if not held:
        return g
    return g.filtered(lambda d: d not in held)


def apply_regime(g: KnowledgeGraph, splits: Splits, regime: Regime) -> tuple[KnowledgeGraph, Splits]:
    regime = Regime(regime)
    if regime is Regime.FULL:
        return g, splits
    if regime is Regime.DRUG_DRUG_ONLY:
        drop = {RelationKind.HAS_TARGET, RelationKind.INTERACTS_WITH}
        return g.filtered(lambda d: g.relation_kind(d.relation) not in drop), splits
    has_target = g.relation_of_kind(RelationKind.HAS_TARGET)
    drugs = g.entities_of_kind(EntityKind.DRUG)
    if has_target is None:
        removed = set(drugs.tolist())
    else:
        removed = {d for d in drugs.tolist() if not g.neighbors(d, has_target)}
    view = g.filtered(lambda d: d.head not in removed and d.tail not in removed)
    gone = np.array(sorted(removed), dtype=np.int64)

    def keep(s):
        return s.subset(~(np.isin(s.drug_a, gone) | np.isin(s.drug_b, gone)))

    return view, splits.map(keep)


def remaining_drugs(g: KnowledgeGraph, regime: Regime) -> np.ndarray:
    """Drug ids that survive a regime (all drugs unless targeted-only)."""
    drugs = g.entities_of_kind(EntityKind.DRUG)
    if Regime(regime) is not Regime.TARGETED_DRUGS_ONLY:
        return drugs
    r = g.relation_of_kind(RelationKind.HAS_TARGET)
    if r is None:
        return drugs[:0]
    return np.array([d for d in drugs.tolist() if g.neighbors(d, r)], dtype=np.int64)


# -- split files -------------------------------------------------------------

SPLIT_MAGIC = "# polyside-splits"


def write_splits(path, g: KnowledgeGraph, splits: Splits, manifest: dict) -> None:
    header = " ".join(f"{k}={v}" for k, v in manifest.items())
    lines = [f"{SPLIT_MAGIC} {header}", "drug_a\tdrug_b\tside_effect\tlabel\tsplit"]
    for name, s in splits.items():
        for a, b, r, y in s:
            label = "positive" if y == 1 else "negative"
            lines.append(f"{g.entity_key(a)}\t{g.entity_key(b)}\t{g.relation_key(r)}\t{label}\t{name}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_splits(path, g: KnowledgeGraph) -> tuple[Splits, dict]:
    path = Path(path)
    rows = {"train": [], "valid": [], "test": []}
    manifest = {}
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith(SPLIT_MAGIC):
            raise ParseError(path, 1, "not a split file")
        for tok in first[len(SPLIT_MAGIC):].split():
            k, _, v = tok.partition("=")
            manifest[k] = v
        fh.readline()
        for lineno, line in enumerate(fh, start=3):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 5:
                raise ParseError(path, lineno, "expected 5 tab-separated fields")
            a, b, r, label, split = parts
            try:
                ia, ib, ir = g.entity_id(a), g.entity_id(b), g.relation_id(r)
            except KeyError as exc:
                raise ParseError(path, lineno, f"unknown key {exc}") from None
            if split not in rows or label not in ("positive", "negative"):
                raise ParseError(path, lineno, f"bad label/split {label!r}/{split!r}")
            rows[split].append((min(ia, ib), max(ia, ib), ir, int(label == "positive")))
    return Splits(*(ExampleSet.from_examples(rows[k]) for k in ("train", "valid", "test"))), manifest
