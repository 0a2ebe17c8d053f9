"""Interned, index-backed multi-relational graph.

Entities and relations are interned to dense integer ids in insertion order.
Symmetric relations (polypharmacy side effects and protein interactions) are
stored once in canonical ``(min id, max id)`` form and answered in both
directions.  A graph is built by a single writer and then frozen; frozen
graphs are read-only.
"""

from __future__ import annotations

from enum import Enum
from typing import Callable, Iterable, NamedTuple

import numpy as np

from .errors import KindConflict, SchemaViolation


class EntityKind(str, Enum):
    DRUG = "drug"
    PROTEIN = "protein"
    MONO_EFFECT = "mono_effect"


class RelationKind(str, Enum):
    POLYPHARMACY = "polypharmacy"
    HAS_TARGET = "has_target"
    INTERACTS_WITH = "interacts_with"
    MONO_SIDE_EFFECT = "mono_side_effect"


SCHEMA = {
    RelationKind.POLYPHARMACY: (EntityKind.DRUG, EntityKind.DRUG),
    RelationKind.HAS_TARGET: (EntityKind.DRUG, EntityKind.PROTEIN),
    RelationKind.INTERACTS_WITH: (EntityKind.PROTEIN, EntityKind.PROTEIN),
    RelationKind.MONO_SIDE_EFFECT: (EntityKind.DRUG, EntityKind.MONO_EFFECT),
}
SYMMETRIC = frozenset({RelationKind.POLYPHARMACY, RelationKind.INTERACTS_WITH})

# Fixed keys for the two singleton structural relations and the mono relation.
HAS_TARGET_KEY = "hasTarget"
INTERACTS_WITH_KEY = "interactsWith"
MONO_KEY = "hasMonoSideEffect"


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class _Interner:
    def __init__(self):
        self.keys: list[str] = []
        self.kinds: list = []
        self.index: dict[str, int] = {}

    def intern(self, key, kind):
        if not key:
            raise ValueError("interned keys must be non-empty")
        i = self.index.get(key)
        if i is not None:
            if self.kinds[i] != kind:
                raise KindConflict(
                    f"{key!r} already interned as {self.kinds[i].value}, not {kind.value}"
                )
            return i
        i = len(self.keys)
        self.keys.append(key)
        self.kinds.append(kind)
        self.index[key] = i
        return i

    def __len__(self):
        return len(self.keys)


class KnowledgeGraph:
    def __init__(self):
        self._entities = _Interner()
        self._relations = _Interner()
        self.relation_names: dict[int, str] = {}
        self.entity_names: dict[int, str] = {}
        self._edges: dict[int, set] = {}
        self._adj: dict[tuple[int, int], set | tuple] = {}
        self._triples: list[Triple] = []
        self._frozen = False
        self._codes = None
        self._n_code = 0

    # -- interning ---------------------------------------------------------

    def intern_entity(self, key: str, kind: EntityKind) -> int:
        self._check_mutable()
        return self._entities.intern(key, EntityKind(kind))

    def intern_relation(self, key: str, kind: RelationKind, name: str | None = None) -> int:
        self._check_mutable()
        kind = RelationKind(kind)
        if kind is RelationKind.HAS_TARGET and key != HAS_TARGET_KEY:
            raise SchemaViolation(f"hasTarget relation must use key {HAS_TARGET_KEY!r}")
        if kind is RelationKind.INTERACTS_WITH and key != INTERACTS_WITH_KEY:
            raise SchemaViolation(f"interactsWith relation must use key {INTERACTS_WITH_KEY!r}")
        r = self._relations.intern(key, kind)
        if name is not None and r not in self.relation_names:
            self.relation_names[r] = name
        self._edges.setdefault(r, set())
        return r

    def entity_id(self, key: str) -> int:
        return self._entities.index[key]

    def relation_id(self, key: str) -> int:
        return self._relations.index[key]

    def entity_key(self, e: int) -> str:
        return self._entities.keys[e]

    def entity_kind(self, e: int) -> EntityKind:
        return self._entities.kinds[e]

    def relation_key(self, r: int) -> str:
        return self._relations.keys[r]

    def relation_kind(self, r: int) -> RelationKind:
        return self._relations.kinds[r]

    def relation_name(self, r: int) -> str:
        return self.relation_names.get(r, self._relations.keys[r])

    @property
    def n_entities(self) -> int:
        return len(self._entities)

    @property
    def n_relations(self) -> int:
        return len(self._relations)

    def entities_of_kind(self, kind: EntityKind) -> np.ndarray:
        kind = EntityKind(kind)
        return np.array(
            [i for i, k in enumerate(self._entities.kinds) if k is kind], dtype=np.int64
        )

    def relations_of_kind(self, kind: RelationKind) -> list[int]:
        kind = RelationKind(kind)
        return [i for i, k in enumerate(self._relations.kinds) if k is kind]

    def relation_of_kind(self, kind: RelationKind) -> int | None:
        """Id of a singleton relation kind (hasTarget, interactsWith, mono), or None."""
        rs = self.relations_of_kind(kind)
        return rs[0] if rs else None

    # -- construction --------------------------------------------------------

    def canonical(self, h: int, r: int, t: int) -> Triple:
        if self._relations.kinds[r] in SYMMETRIC and h > t:
            h, t = t, h
        return Triple(h, r, t)

    def add_triple(self, h: int, r: int, t: int) -> bool:
        """Insert a triple; returns False if it was already present."""
        self._check_mutable()
        kind = self._relations.kinds[r]
        want_h, want_t = SCHEMA[kind]
        kh, kt = self._entities.kinds[h], self._entities.kinds[t]
        if kh is not want_h or kt is not want_t:
            raise SchemaViolation(
                f"{kind.value} expects ({want_h.value}, {want_t.value}), "
                f"got ({kh.value}, {kt.value})"
            )
        if h == t:
            raise SchemaViolation(f"self-loop on {self.entity_key(h)!r} for {kind.value}")
        d = self.canonical(h, r, t)
        edges = self._edges[r]
        if (d.head, d.tail) in edges:
            return False
        edges.add((d.head, d.tail))
        self._triples.append(d)
        self._adj.setdefault((d.head, r), set()).add(d.tail)
        if kind in SYMMETRIC:
            self._adj.setdefault((d.tail, r), set()).add(d.head)
        else:
            # reverse index: (tail, relation) -> heads, kept under a negative key
            self._adj.setdefault((d.tail, ~r), set()).add(d.head)
        return True

    def freeze(self) -> "KnowledgeGraph":
        if self._frozen:
            return self
        self._adj = {k: tuple(sorted(v)) for k, v in self._adj.items()}
        self._edges = {r: frozenset(v) for r, v in self._edges.items()}
        n = max(self.n_entities, 1)
        self._n_code = n
        if self._triples:
            arr = np.array(self._triples, dtype=np.int64)
            codes = (arr[:, 1] * n + arr[:, 0]) * n + arr[:, 2]
            self._codes = np.sort(codes)
        else:
            self._codes = np.zeros(0, dtype=np.int64)
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    def _check_mutable(self):
        if self._frozen:
            raise RuntimeError("graph is frozen")

    # -- lookups ---------------------------------------------------------

    def neighbors(self, e: int, r: int) -> tuple[int, ...]:
        """Entities u with (e, r, u) in the graph, or (u, r, e) for symmetric r."""
        got = self._adj.get((e, r), ())
        return got if self._frozen else tuple(sorted(got))

    def heads(self, t: int, r: int) -> tuple[int, ...]:
        """Entities u with (u, r, t); equals neighbors() for symmetric r."""
        if self._relations.kinds[r] in SYMMETRIC:
            return self.neighbors(t, r)
        got = self._adj.get((t, ~r), ())
        return got if self._frozen else tuple(sorted(got))

    def contains(self, h: int, r: int, t: int) -> bool:
        if r < 0 or r >= self.n_relations:
            return False
        d = self.canonical(h, r, t)
        return (d.head, d.tail) in self._edges.get(r, ())

    def contains_many(self, h, r, t) -> np.ndarray:
        """Vectorised ``contains`` over equal-length integer arrays (frozen graphs only)."""
        if not self._frozen:
            raise RuntimeError("contains_many requires a frozen graph")
        h = np.asarray(h, dtype=np.int64)
        r = np.asarray(r, dtype=np.int64)
        t = np.asarray(t, dtype=np.int64)
        h, r, t = np.broadcast_arrays(h, r, t)
        sym = np.zeros(self.n_relations, dtype=bool)
        for i, k in enumerate(self._relations.kinds):
            sym[i] = k in SYMMETRIC
        swap = sym[r] & (h > t)
        lo = np.where(swap, t, h)
        hi = np.where(swap, h, t)
        n = self._n_code
        codes = (r * n + lo) * n + hi
        pos = np.searchsorted(self._codes, codes)
        pos = np.minimum(pos, max(len(self._codes) - 1, 0))
        if len(self._codes) == 0:
            return np.zeros(codes.shape, dtype=bool)
        return self._codes[pos] == codes

    @property
    def triples(self) -> list[Triple]:
        return self._triples

    def __len__(self) -> int:
        return len(self._triples)

    def count(self, r: int) -> int:
        return len(self._edges.get(r, ()))

    def edges(self, r: int):
        """Canonical (head, tail) pairs of relation r, sorted."""
        return sorted(self._edges.get(r, ()))

    def triples_of(self, r: int) -> np.ndarray:
        pairs = self.edges(r)
        return np.array(pairs, dtype=np.int64).reshape(-1, 2)

    # -- derived graphs ---------------------------------------------------

    def filtered(self, keep: Callable[[Triple], bool]) -> "KnowledgeGraph":
        """Frozen copy sharing this graph's id tables, keeping triples where ``keep`` is true."""
        return self._rebuild(d for d in self._triples if keep(d))

    def _rebuild(self, triples: Iterable[Triple]) -> "KnowledgeGraph":
        g = KnowledgeGraph()
        g._entities = self._entities
        g._relations = self._relations
        g.relation_names = self.relation_names
        g.entity_names = self.entity_names
        g._edges = {r: set() for r in self._edges}
        for d in triples:
            g._edges[d.relation].add((d.head, d.tail))
            g._triples.append(d)
            g._adj.setdefault((d.head, d.relation), set()).add(d.tail)
            if self._relations.kinds[d.relation] in SYMMETRIC:
                g._adj.setdefault((d.tail, d.relation), set()).add(d.head)
            else:
                g._adj.setdefault((d.tail, ~d.relation), set()).add(d.head)
        return g.freeze()
