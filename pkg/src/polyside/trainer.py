"""Sampled-softmax training for the DistMult / product-of-experts model and the baseline.

Each positive triple d is scored against ``n`` corruptions that replace one
endpoint with a uniformly drawn entity of the right kind.  The loss for d is
``-log softmax(logits)[d]`` over ``{d} + corruptions(d)``, plus an L2 penalty
on the parameters the batch touches.  Gradients are computed in closed form
and applied as sparse row updates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dataset import ExampleSet, Splits
from .errors import Exhausted, NumericDivergence
from .features import NullFeaturizer
from .kg import SCHEMA, EntityKind, KnowledgeGraph
from .metrics import evaluate
from .model import (
    BaselineFeaturizer,
    BaselineParams,
    Mode,
    ModelParams,
    baseline_scores,
    init_for_graph,
    poe_logits,
    relational_scores,
    scored_relations,
)


class Optimizer(str, Enum):
    SGD = "sgd"
    ADAGRAD = "adagrad"


@dataclass
class TrainConfig:
    dim: int = 100
    negatives_per_positive: int = 10
    batch_size: int = 512
    learning_rate: float = 0.1
    optimizer: Optimizer = Optimizer.ADAGRAD
    max_epochs: int = 100
    patience: int = 5
    seed: int = 0
    mode: Mode = Mode.EMBEDDING_ONLY
    l2: float = 0.0

    def __post_init__(self):
        self.optimizer = Optimizer(self.optimizer)
        self.mode = Mode(self.mode)
        for name in ("dim", "negatives_per_positive", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate < 0 or self.l2 < 0 or self.max_epochs < 0 or self.patience < 1:
            raise ValueError("learning_rate, l2, max_epochs must be >= 0 and patience >= 1")


@dataclass
class EpochLog:
    epoch: int
    loss: float
    valid_auroc: float
    valid_aupr: float
    elapsed_s: float | None

    def line(self) -> str:
        el = "-" if self.elapsed_s is None else f"{self.elapsed_s:.3f}"
        return f"{self.epoch} {self.loss:.6f} {self.valid_auroc:.6f} {self.valid_aupr:.6f} {el}"


LOG_HEADER = "epoch loss valid_auroc valid_aupr elapsed_s"


def format_log(log: list[EpochLog]) -> str:
    return "\n".join([LOG_HEADER] + [e.line() for e in log]) + "\n"


@dataclass
class TrainResult:
    params: object
    log: list[EpochLog]
    best_epoch: int


# -- corruption sampling ---------------------------------------------------------

class EntityPools:
    """Candidate replacement entities by kind, restricted to the active ones."""

    def __init__(self, g: KnowledgeGraph, allowed=None):
        allowed = None if allowed is None else set(np.asarray(allowed).tolist())
        self.by_kind = {}
        for kind in EntityKind:
            ids = g.entities_of_kind(kind)
            if allowed is not None:
                ids = np.array([e for e in ids.tolist() if e in allowed], dtype=np.int64)
            self.by_kind[kind] = ids


def corrupt_batch(g: KnowledgeGraph, heads, rels, tails, n: int, rng: np.random.Generator,
                  pools: EntityPools, max_rounds: int = 64):
    """Corrupt each positive n times; returns (H, T) arrays of shape (B, n)."""
    heads = np.asarray(heads, dtype=np.int64)
    rels = np.asarray(rels, dtype=np.int64)
    tails = np.asarray(tails, dtype=np.int64)
    B = len(heads)
    H = np.repeat(heads[:, None], n, axis=1)
    T = np.repeat(tails[:, None], n, axis=1)
    R = np.repeat(rels[:, None], n, axis=1)
    kinds = [g.relation_kind(r) for r in range(g.n_relations)]
    pool_list = [pools.by_kind[k] for k in EntityKind]
    kind_pos = {k: i for i, k in enumerate(EntityKind)}
    head_pool = np.array([kind_pos[SCHEMA[k][0]] for k in kinds], dtype=np.int64)
    tail_pool = np.array([kind_pos[SCHEMA[k][1]] for k in kinds], dtype=np.int64)
    todo = np.ones((B, n), dtype=bool)
    for _ in range(max_rounds):
        rows, cols = np.nonzero(todo)
        if len(rows) == 0:
            break
        side = rng.integers(2, size=len(rows))
        pool_id = np.where(side == 0, head_pool[rels[rows]], tail_pool[rels[rows]])
        pick = np.empty(len(rows), dtype=np.int64)
        for pid in np.unique(pool_id).tolist():
            sel = pool_id == pid
            pool = pool_list[pid]
            if len(pool) == 0:
                raise Exhausted("no entities available for corruption")
            pick[sel] = pool[rng.integers(len(pool), size=int(sel.sum()))]
        h = np.where(side == 0, pick, heads[rows])
        t = np.where(side == 1, pick, tails[rows])
        ok = (h != t) & ~g.contains_many(h, R[rows, cols], t)
        H[rows[ok], cols[ok]] = h[ok]
        T[rows[ok], cols[ok]] = t[ok]
        todo[rows[ok], cols[ok]] = False
    for b in np.unique(np.nonzero(todo)[0]).tolist():
        # rejection stalled: sample exactly from the enumerated valid corruptions
        valid = _valid_corruptions(g, heads[b], rels[b], tails[b], pools, kinds, head_pool, tail_pool, pool_list)
        if not valid:
            raise Exhausted(
                f"no valid corruption of ({g.entity_key(heads[b])}, {g.relation_key(rels[b])}, "
                f"{g.entity_key(tails[b])})"
            )
        cols = np.flatnonzero(todo[b])
        choice = rng.integers(len(valid), size=len(cols))
        for c, j in zip(cols.tolist(), choice.tolist()):
            H[b, c], T[b, c] = valid[j]
        todo[b] = False
    return H, T


def _valid_corruptions(g, h, r, t, pools, kinds, head_pool, tail_pool, pool_list):
    out = []
    for x in pool_list[head_pool[r]].tolist():
        if x != t and not g.contains(x, r, t):
            out.append((x, t))
    for x in pool_list[tail_pool[r]].tolist():
        if x != h and not g.contains(h, r, x):
            out.append((h, x))
    return out


def sample_corruptions(g: KnowledgeGraph, d, n: int, rng: np.random.Generator, pools=None):
    """n corruptions of triple d, each replacing one endpoint and absent from g."""
    pools = pools or EntityPools(g)
    h, r, t = d
    H, T = corrupt_batch(g, [h], [r], [t], n, rng, pools)
    return [(int(a), int(r), int(b)) for a, b in zip(H[0], T[0])]


# -- loss and gradients ---------------------------------------------------------

@dataclass
class Batch:
    """Candidates per positive: column 0 is the positive, the rest its corruptions."""

    heads: np.ndarray   # (B, C)
    tails: np.ndarray   # (B, C)
    rels: np.ndarray    # (B,)
    indptr: np.ndarray | None = None   # CSR feature rows over the B*C candidates
    indices: np.ndarray | None = None


def make_batch(heads, rels, tails, featurizer=None) -> Batch:
    heads = np.asarray(heads, dtype=np.int64)
    tails = np.asarray(tails, dtype=np.int64)
    rels = np.asarray(rels, dtype=np.int64)
    if featurizer is None:
        return Batch(heads, tails, rels)
    indptr, indices = featurizer.csr(heads, tails)
    return Batch(heads, tails, rels, indptr, indices)


def _aggregate_rows(idx, vals, width):
    uniq, inv = np.unique(idx, return_inverse=True)
    out = np.zeros((len(uniq), width))
    np.add.at(out, inv, vals)
    return uniq, out


def batch_loss_and_grads(params: ModelParams, batch: Batch, mode: Mode, l2: float = 0.0):
    """Sampled-softmax negative log-likelihood of the batch and its sparse gradient.

    Returns ``(loss, grads)`` where grads maps parameter name to
    ``(index, values)`` with unique indices; ``index`` is a row array for the
    embedding tables and a ``(rows, cols)`` pair for ``rel_weights``.
    """
    # overflow is detected below and raised as NumericDivergence
    with np.errstate(over="ignore", invalid="ignore"):
        return _loss_and_grads(params, batch, mode, l2)


def _loss_and_grads(params, batch, mode, l2):
    H, T, R = batch.heads, batch.tails, batch.rels
    B, C = H.shape
    k = params.dim
    E, W = params.entity_emb, params.embed_weights
    eh, et = E[H], E[T]
    w = W[R][:, None, :]
    logits = (eh * et * w).sum(axis=-1)
    combined = Mode(mode) is Mode.COMBINED and batch.indptr is not None and params.n_features > 0
    if combined:
        RR = np.repeat(R, C)
        logits = logits + relational_scores(params, RR, batch.indptr, batch.indices).reshape(B, C)
    top = logits.max(axis=1, keepdims=True)
    z = np.exp(logits - top)
    Z = z.sum(axis=1)
    loss = float((top[:, 0] + np.log(Z) - logits[:, 0]).sum())
    G = z / Z[:, None]
    G[:, 0] -= 1.0
    Gx = G[..., None]
    g_head = (Gx * et * w).reshape(-1, k)
    g_tail = (Gx * eh * w).reshape(-1, k)
    g_rel = (Gx * eh * et).sum(axis=1)

    ent_rows, ent_grad = _aggregate_rows(np.concatenate([H.ravel(), T.ravel()]),
                                         np.concatenate([g_head, g_tail]), k)
    rel_rows, rel_grad = _aggregate_rows(R, g_rel, k)
    grads = {"entity_emb": (ent_rows, ent_grad), "embed_weights": (rel_rows, rel_grad)}

    if combined:
        F = params.n_features
        seg = np.repeat(np.arange(B * C), np.diff(batch.indptr))
        keys = RR[seg] * F + batch.indices
        uniq, inv = np.unique(keys, return_inverse=True)
        vals = np.bincount(inv, weights=G.ravel()[seg], minlength=len(uniq))
        grads["rel_weights"] = ((uniq // F, uniq % F), vals)

    if l2 > 0:
        for name, (idx, g) in grads.items():
            p = getattr(params, name)[idx]
            loss += l2 * float((p * p).sum())
            grads[name] = (idx, g + 2.0 * l2 * p)

    if not np.isfinite(loss) or not all(np.isfinite(g).all() for _, g in grads.values()):
        raise NumericDivergence("non-finite loss or gradient")
    return loss, grads


class SparseOptimizer:
    """SGD or AdaGrad applied to the rows/entries named in a sparse gradient."""

    def __init__(self, target, kind: Optimizer, lr: float, eps: float = 1e-10):
        self.target = target
        self.kind = Optimizer(kind)
        self.lr = lr
        self.eps = eps
        self.acc = {}

    def step(self, grads):
        for name, (idx, g) in grads.items():
            p = getattr(self.target, name)
            if self.kind is Optimizer.SGD:
                p[idx] -= self.lr * g
                continue
            acc = self.acc.get(name)
            if acc is None:
                acc = self.acc[name] = np.zeros_like(p)
            acc[idx] += g * g
            p[idx] -= self.lr * g / (np.sqrt(acc[idx]) + self.eps)


# -- training loops ---------------------------------------------------------

def active_drugs(g: KnowledgeGraph, splits: Splits) -> np.ndarray:
    """Drugs that appear in the graph's triples or in any split."""
    drugs = set()
    for s in splits:
        drugs.update(s.drug_a.tolist())
        drugs.update(s.drug_b.tolist())
    for d in g.triples:
        if g.entity_kind(d.head) is EntityKind.DRUG:
            drugs.add(d.head)
        if g.entity_kind(d.tail) is EntityKind.DRUG:
            drugs.add(d.tail)
    return np.array(sorted(drugs), dtype=np.int64)


def training_triples(g: KnowledgeGraph) -> np.ndarray:
    parts = []
    for r in scored_relations(g):
        pairs = g.triples_of(r)
        parts.append(np.column_stack([pairs[:, 0], np.full(len(pairs), r), pairs[:, 1]]))
    if not parts:
        return np.zeros((0, 3), dtype=np.int64)
    return np.concatenate(parts).astype(np.int64)


def model_scorer(params: ModelParams, featurizer, mode: Mode):
    def score(a, b, r):
        return poe_logits(params, featurizer, a, r, b, mode)
    return score


def _validate(scorer, valid: ExampleSet):
    rep = evaluate(scorer, valid)
    return rep.aggregate[0], rep.aggregate[1]


def _compare(metric, best):
    """1 if metric improves on best, 0 if it ties (or is undefined), -1 otherwise."""
    if np.isnan(metric) or metric == best:
        return 0
    return 1 if metric > best else -1


def train(g: KnowledgeGraph, splits: Splits, featurizer, cfg: TrainConfig,
          deterministic: bool = True, on_epoch=None) -> TrainResult:
    """Fit a DistMult (EmbeddingOnly) or product-of-experts (Combined) model on g.

    Early-stops on validation AuPR and returns the best-validation parameters.
    """
    if featurizer is None or cfg.mode is Mode.EMBEDDING_ONLY:
        featurizer = featurizer or NullFeaturizer()
    n_features = len(featurizer.space) if cfg.mode is Mode.COMBINED else 0
    rng = np.random.default_rng(cfg.seed)
    drugs = active_drugs(g, splits)
    params = init_for_graph(g, n_features, cfg.dim, rng, drugs=drugs)
    pools = EntityPools(g, allowed=np.flatnonzero(params.entity_mask))
    opt = SparseOptimizer(params, cfg.optimizer, cfg.learning_rate)
    pos = training_triples(g)
    batch_feats = featurizer if cfg.mode is Mode.COMBINED else None

    best = params.copy()
    best_metric = -np.inf
    best_epoch = 0
    since = 0
    log: list[EpochLog] = []
    t0 = time.perf_counter()
    for epoch in range(1, cfg.max_epochs + 1):
        total = 0.0
        perm = rng.permutation(len(pos))
        for start in range(0, len(pos), cfg.batch_size):
            chunk = pos[perm[start:start + cfg.batch_size]]
            h, r, t = chunk[:, 0], chunk[:, 1], chunk[:, 2]
            Hc, Tc = corrupt_batch(g, h, r, t, cfg.negatives_per_positive, rng, pools)
            heads = np.concatenate([h[:, None], Hc], axis=1)
            tails = np.concatenate([t[:, None], Tc], axis=1)
            batch = make_batch(heads, r, tails, batch_feats)
            try:
                loss, grads = batch_loss_and_grads(params, batch, cfg.mode, cfg.l2)
            except NumericDivergence as exc:
                raise NumericDivergence(f"epoch {epoch}: {exc}", log) from None
            total += loss
            if cfg.learning_rate > 0:
                opt.step(grads)
        auroc, aupr = _validate(model_scorer(params, featurizer, cfg.mode), splits.valid)
        elapsed = None if deterministic else time.perf_counter() - t0
        entry = EpochLog(epoch, total / max(len(pos), 1), auroc, aupr, elapsed)
        log.append(entry)
        if on_epoch is not None:
            on_epoch(entry)
        # ties keep the later, longer-trained parameters but do not reset patience
        cmp = _compare(aupr, best_metric)
        if cmp >= 0:
            best, best_epoch = params.copy(), epoch
        if cmp > 0:
            best_metric, since = aupr, 0
        else:
            since += 1
            if since >= cfg.patience:
                break
    return TrainResult(best, log, best_epoch)


def baseline_loss_and_grads(bp: BaselineParams, bf: BaselineFeaturizer, examples: ExampleSet,
                            l2: float = 0.0, csr=None):
    """Summed logistic loss of per-side-effect linear models and its sparse gradient."""
    r = examples.side_effect
    y = examples.label.astype(np.float64)
    indptr, indices = csr if csr is not None else bf.csr(examples.drug_a, examples.drug_b)
    n = len(r)
    seg = np.repeat(np.arange(n), np.diff(indptr))
    z = np.bincount(seg, weights=bp.weights[r[seg], indices], minlength=n) + bp.bias[r]
    loss = float((np.logaddexp(0.0, z) - y * z).sum())
    resid = 0.5 * (1.0 + np.tanh(0.5 * z)) - y  # sigmoid(z) - y
    width = bp.weights.shape[1]
    keys = r[seg] * width + indices
    uniq, inv = np.unique(keys, return_inverse=True)
    wg = np.bincount(inv, weights=resid[seg], minlength=len(uniq))
    br, binv = np.unique(r, return_inverse=True)
    bg = np.bincount(binv, weights=resid, minlength=len(br))
    grads = {"weights": ((uniq // width, uniq % width), wg), "bias": (br, bg)}
    if l2 > 0:
        p = bp.weights[grads["weights"][0]]
        loss += l2 * float((p * p).sum())
        grads["weights"] = (grads["weights"][0], wg + 2.0 * l2 * p)
    if not np.isfinite(loss) or not np.isfinite(wg).all():
        raise NumericDivergence("non-finite baseline loss or gradient")
    return loss, grads


def baseline_scorer(bp: BaselineParams, bf: BaselineFeaturizer):
    def score(a, b, r):
        return baseline_scores(bp, bf, a, b, r)
    return score


def train_baseline(g: KnowledgeGraph, splits: Splits, cfg: TrainConfig,
                   bf: BaselineFeaturizer | None = None, deterministic: bool = True) -> TrainResult:
    bf = bf or BaselineFeaturizer(g)
    rng = np.random.default_rng(cfg.seed)
    bp = BaselineParams(np.zeros((g.n_relations, 2 * bf.dim)), np.zeros(g.n_relations))
    opt = SparseOptimizer(bp, cfg.optimizer, cfg.learning_rate)
    train_set = splits.train
    best, best_metric, best_epoch, since = bp.copy(), -np.inf, 0, 0
    log: list[EpochLog] = []
    t0 = time.perf_counter()
    for epoch in range(1, cfg.max_epochs + 1):
        total = 0.0
        perm = rng.permutation(len(train_set))
        for start in range(0, len(train_set), cfg.batch_size):
            chunk = train_set.subset(perm[start:start + cfg.batch_size])
            try:
                loss, grads = baseline_loss_and_grads(bp, bf, chunk, cfg.l2)
            except NumericDivergence as exc:
                raise NumericDivergence(f"epoch {epoch}: {exc}", log) from None
            total += loss
            if cfg.learning_rate > 0:
                opt.step(grads)
        auroc, aupr = _validate(baseline_scorer(bp, bf), splits.valid)
        elapsed = None if deterministic else time.perf_counter() - t0
        log.append(EpochLog(epoch, total / max(len(train_set), 1), auroc, aupr, elapsed))
        # ties keep the later, longer-trained parameters but do not reset patience
        cmp = _compare(aupr, best_metric)
        if cmp >= 0:
            best, best_epoch = bp.copy(), epoch
        if cmp > 0:
            best_metric, since = aupr, 0
        else:
            since += 1
            if since >= cfg.patience:
                break
    return TrainResult(best, log, best_epoch)
