"""Scoring: DistMult expert, relational-feature expert, their product, and the baseline.

All scores are logits.  The embedding expert for relation r contributes
``exp((e_h * e_t) . w_r)`` and the relational expert ``exp(x_(h,t) . v_r)``
where ``x_(h,t)`` is the binary feature vector of the pair, so the log of the
unnormalised product is the sum of the two exponents.

Relational scores are accumulated left to right over ascending feature
indices starting from 0.0, and the combined logit is ``embedding + relational``.
``attribute`` in :mod:`polyside.explain` relies on that order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange, MissingEmbedding, ParseError
from .kg import EntityKind, KnowledgeGraph, RelationKind


class Mode(str, Enum):
    EMBEDDING_ONLY = "embedding_only"
    COMBINED = "combined"


@dataclass
class ModelParams:
    entity_emb: np.ndarray      # (n_entities, k)
    embed_weights: np.ndarray   # (n_relations, k)
    rel_weights: np.ndarray     # (n_relations, n_features)
    entity_mask: np.ndarray     # bool, entities that own an embedding
    relation_mask: np.ndarray   # bool, relations that own embedding weights

    @property
    def dim(self) -> int:
        return self.entity_emb.shape[1]

    @property
    def n_features(self) -> int:
        return self.rel_weights.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(*(a.copy() for a in self.arrays()))

    def arrays(self):
        return (self.entity_emb, self.embed_weights, self.rel_weights,
                self.entity_mask, self.relation_mask)

    def equal(self, other: "ModelParams") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


def init_params(n_entities: int, n_relations: int, n_features: int, dim: int,
                rng: np.random.Generator, entities=None, relations=None) -> ModelParams:
    """Uniform(-6/sqrt(k), 6/sqrt(k)) embeddings, zero relational weights.

    ``entities`` / ``relations`` restrict which ids own parameters; the rest
    are zero rows flagged as missing.
    """
    bound = 6.0 / np.sqrt(dim)
    E = rng.uniform(-bound, bound, size=(n_entities, dim))
    W = rng.uniform(-bound, bound, size=(n_relations, dim))
    emask = np.ones(n_entities, dtype=bool)
    rmask = np.ones(n_relations, dtype=bool)
    if entities is not None:
        emask[:] = False
        emask[np.asarray(entities, dtype=np.int64)] = True
    if relations is not None:
        rmask[:] = False
        rmask[np.asarray(relations, dtype=np.int64)] = True
    E[~emask] = 0.0
    W[~rmask] = 0.0
    return ModelParams(E, W, np.zeros((n_relations, n_features)), emask, rmask)


def init_for_graph(g: KnowledgeGraph, n_features: int, dim: int, rng, drugs=None) -> ModelParams:
    """Parameters for every entity/relation that can appear in a scored triple of g.

    ``drugs`` defaults to every interned drug.
    """
    scored = scored_relations(g)
    if drugs is None:
        drugs = g.entities_of_kind(EntityKind.DRUG)
    ents = set(np.asarray(drugs).tolist())
    for r in scored:
        if g.relation_kind(r) is not RelationKind.POLYPHARMACY:
            for h, t in g.edges(r):
                ents.add(h)
                ents.add(t)
    return init_params(g.n_entities, g.n_relations, n_features, dim, rng,
                       entities=sorted(ents), relations=scored)


def scored_relations(g: KnowledgeGraph) -> list[int]:
    """Polypharmacy relations plus the structural relations present in g."""
    out = list(g.relations_of_kind(RelationKind.POLYPHARMACY))
    for kind in (RelationKind.HAS_TARGET, RelationKind.INTERACTS_WITH):
        r = g.relation_of_kind(kind)
        if r is not None and g.count(r) > 0:
            out.append(r)
    return sorted(out)


# -- experts ------------------------------------------------------------------

def distmult_scores(params: ModelParams, h, r, t) -> np.ndarray:
    h = np.asarray(h, dtype=np.int64)
    r = np.asarray(r, dtype=np.int64)
    t = np.asarray(t, dtype=np.int64)
    if not (params.entity_mask[h].all() and params.entity_mask[t].all()):
        bad = np.concatenate([h[~params.entity_mask[h]], t[~params.entity_mask[t]]])
        raise MissingEmbedding(f"no embedding for entities {sorted(set(bad.tolist()))[:5]}")
    if not params.relation_mask[r].all():
        raise MissingEmbedding(f"no embedding weights for relations {sorted(set(r[~params.relation_mask[r]].tolist()))[:5]}")
    return (params.entity_emb[h] * params.entity_emb[t] * params.embed_weights[r]).sum(axis=-1)


def distmult_score(params: ModelParams, h: int, r: int, t: int) -> float:
    return float(distmult_scores(params, [h], [r], [t])[0])


def relational_score(params: ModelParams, r: int, fv) -> float:
    w = params.rel_weights[r]
    total = 0.0
    for i in fv:
        if i < 0 or i >= len(w):
            raise IndexOutOfRange(f"feature index {i} outside [0, {len(w)})")
        total += w[i]
    return float(total)


def relational_scores(params: ModelParams, r, indptr, indices) -> np.ndarray:
    """Vectorised relational scores for candidates in CSR layout (one row per candidate)."""
    r = np.asarray(r, dtype=np.int64).ravel()
    n = len(indptr) - 1
    if len(indices) == 0:
        return np.zeros(n)
    if indices.max() >= params.n_features or indices.min() < 0:
        raise IndexOutOfRange("feature index outside the feature space")
    seg = np.repeat(np.arange(n), np.diff(indptr))
    vals = params.rel_weights[r[seg], indices]
    return np.bincount(seg, weights=vals, minlength=n)


def poe_logits(params: ModelParams, featurizer, h, r, t, mode: Mode) -> np.ndarray:
    h = np.asarray(h, dtype=np.int64)
    r = np.asarray(r, dtype=np.int64)
    t = np.asarray(t, dtype=np.int64)
    shape = np.broadcast_shapes(h.shape, r.shape, t.shape)
    h, r, t = (np.broadcast_to(x, shape).ravel() for x in (h, r, t))
    out = distmult_scores(params, h, r, t)
    if Mode(mode) is Mode.COMBINED and params.n_features:
        indptr, indices = featurizer.csr(h, t)
        out = out + relational_scores(params, r, indptr, indices)
    return out.reshape(shape)


def poe_logit(params: ModelParams, featurizer, h: int, r: int, t: int, mode: Mode) -> float:
    emb = distmult_score(params, h, r, t)
    if Mode(mode) is Mode.EMBEDDING_ONLY:
        return emb
    return emb + relational_score(params, r, featurizer(h, t))


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = np.exp(z - z.max())
    return z / z.sum()


def poe_probability(params: ModelParams, featurizer, candidates, d, mode: Mode) -> float:
    """Probability of triple d normalised over the candidate triples (which must include d)."""
    candidates = [tuple(c) for c in candidates]
    d = tuple(d)
    if not candidates:
        raise ValueError("candidate set is empty")
    try:
        i = candidates.index(d)
    except ValueError:
        raise ValueError(f"{d} is not among the candidates") from None
    arr = np.array(candidates, dtype=np.int64)
    logits = poe_logits(params, featurizer, arr[:, 0], arr[:, 1], arr[:, 2], mode)
    return float(softmax(logits)[i])


# -- baseline ---------------------------------------------------------------------

class BaselineFeaturizer:
    """Per-drug indicators over training mono side effects and targeted proteins."""

    def __init__(self, g: KnowledgeGraph):
        self.g = g
        mono = g.relation_of_kind(RelationKind.MONO_SIDE_EFFECT)
        target = g.relation_of_kind(RelationKind.HAS_TARGET)
        mono_vocab = sorted({t for _, t in g.edges(mono)}) if mono is not None else []
        prot_vocab = sorted({t for _, t in g.edges(target)}) if target is not None else []
        self.vocab = [("mono", e) for e in mono_vocab] + [("target", p) for p in prot_vocab]
        col = {e: i for i, e in enumerate(mono_vocab)}
        off = len(mono_vocab)
        col_p = {p: off + i for i, p in enumerate(prot_vocab)}
        self.dim = len(self.vocab)
        self._rows = {}
        for d in g.entities_of_kind(EntityKind.DRUG).tolist():
            idx = []
            if mono is not None:
                idx += [col[e] for e in g.neighbors(d, mono)]
            if target is not None:
                idx += [col_p[p] for p in g.neighbors(d, target)]
            self._rows[d] = np.array(sorted(idx), dtype=np.int64)

    def active(self, a: int, b: int) -> np.ndarray:
        a, b = min(a, b), max(a, b)
        empty = np.zeros(0, dtype=np.int64)
        return np.concatenate([self._rows.get(a, empty), self._rows.get(b, empty) + self.dim])

    def __call__(self, a: int, b: int) -> np.ndarray:
        x = np.zeros(2 * self.dim)
        x[self.active(a, b)] = 1.0
        return x

    def csr(self, a, b):
        a = np.asarray(a).ravel().tolist()
        b = np.asarray(b).ravel().tolist()
        parts = [self.active(x, y) for x, y in zip(a, b)]
        indptr = np.zeros(len(parts) + 1, dtype=np.int64)
        np.cumsum([len(p) for p in parts], out=indptr[1:])
        indices = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
        return indptr, indices

    def digest(self) -> str:
        text = "\n".join(f"{k} {self.g.entity_key(e)}" for k, e in self.vocab)
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class BaselineParams:
    weights: np.ndarray  # (n_relations, 2 * dim)
    bias: np.ndarray     # (n_relations,)

    def copy(self) -> "BaselineParams":
        return BaselineParams(self.weights.copy(), self.bias.copy())


def baseline_score(bp: BaselineParams, x, r: int) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (bp.weights.shape[1],):
        raise DimensionMismatch(f"expected vector of length {bp.weights.shape[1]}, got {x.shape}")
    return float(bp.weights[r] @ x + bp.bias[r])


def baseline_scores(bp: BaselineParams, bf: BaselineFeaturizer, a, b, r) -> np.ndarray:
    r = np.asarray(r, dtype=np.int64).ravel()
    indptr, indices = bf.csr(a, b)
    n = len(r)
    seg = np.repeat(np.arange(n), np.diff(indptr))
    lin = np.bincount(seg, weights=bp.weights[r[seg], indices], minlength=n)
    return lin + bp.bias[r]


# -- checkpoints --------------------------------------------------------------------

CKPT_MAGIC = "POLYSIDE-CKPT"
BASELINE_MAGIC = "POLYSIDE-BASELINE"
FORMAT_VERSION = 1


def _write(path, header: dict, magic: str, arrays):
    line = " ".join([magic, f"v{FORMAT_VERSION}"] + [f"{k}={v}" for k, v in header.items()])
    with open(path, "wb") as fh:
        fh.write(line.encode("ascii") + b"\n")
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read_header(path, magic):
    path = Path(path)
    with open(path, "rb") as fh:
        line = fh.readline().decode("ascii", errors="replace").rstrip("\n")
        body = fh.read()
    parts = line.split(" ")
    if len(parts) < 2 or parts[0] != magic:
        raise ParseError(path, 1, f"not a {magic} file")
    if parts[1] != f"v{FORMAT_VERSION}":
        raise ParseError(path, 1, f"unsupported format version {parts[1]}")
    header = dict(p.split("=", 1) for p in parts[2:])
    return header, np.frombuffer(body, dtype="<f8")


def save_checkpoint(path, params: ModelParams, space_hash: str, model: str) -> None:
    n_e, k = params.entity_emb.shape
    n_r, n_f = params.rel_weights.shape
    header = dict(model=model, k=k, entities=n_e, relations=n_r, features=n_f, space=space_hash)
    _write(path, header, CKPT_MAGIC, [
        params.entity_mask.astype(np.float64), params.entity_emb,
        params.relation_mask.astype(np.float64), params.embed_weights, params.rel_weights,
    ])


def load_checkpoint(path, space_hash: str | None = None) -> tuple[ModelParams, dict]:
    header, flat = _read_header(path, CKPT_MAGIC)
    if space_hash is not None and header["space"] != space_hash:
        raise ParseError(path, 1, "checkpoint was trained on a different feature space")
    k, n_e, n_r, n_f = (int(header[x]) for x in ("k", "entities", "relations", "features"))
    sizes = [n_e, n_e * k, n_r, n_r * k, n_r * n_f]
    if flat.size != sum(sizes):
        raise ParseError(path, 1, "checkpoint payload size does not match header")
    chunks = np.split(flat.copy(), np.cumsum(sizes)[:-1])
    params = ModelParams(
        entity_emb=chunks[1].reshape(n_e, k),
        embed_weights=chunks[3].reshape(n_r, k),
        rel_weights=chunks[4].reshape(n_r, n_f),
        entity_mask=chunks[0] != 0,
        relation_mask=chunks[2] != 0,
    )
    return params, header


def save_baseline(path, bp: BaselineParams, vocab_hash: str) -> None:
    n_r, width = bp.weights.shape
    _write(path, dict(model="baseline", width=width, relations=n_r, vocab=vocab_hash),
           BASELINE_MAGIC, [bp.weights, bp.bias])


def load_baseline(path, vocab_hash: str | None = None) -> BaselineParams:
    header, flat = _read_header(path, BASELINE_MAGIC)
    if vocab_hash is not None and header["vocab"] != vocab_hash:
        raise ParseError(path, 1, "baseline checkpoint was trained on a different vocabulary")
    n_r, width = int(header["relations"]), int(header["width"])
    if flat.size != n_r * width + n_r:
        raise ParseError(path, 1, "checkpoint payload size does not match header")
    flat = flat.copy()
    return BaselineParams(flat[: n_r * width].reshape(n_r, width), flat[n_r * width:])
