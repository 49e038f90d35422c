"""Mention-pair scorer: fixed token vectors, bucketed feature embeddings and a
two-layer feed-forward network trained with the mention-ranking objective.

Everything is plain numpy with a hand-written backward pass.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .corpus_io import Clustering, Document, Mention
from .decoder import links_to_clusters
from .features import SCHEMES, MentionType, PairFeatures, bucket, bucketize, candidate_pairs
from .metrics import evaluate

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
TABLES = ("width", "d_m", "d_s", "d_lca", "lc_lca", "wc_lca", "type")
TABLE_ROWS = {name: SCHEMES[name].n_buckets for name in TABLES if name in SCHEMES}
TABLE_ROWS["type"] = len(MentionType)


# -- token vectors ---------------------------------------------------------

class HashedEmbeddings:
    """Deterministic pseudo-random vector per token string."""

    mode = "hashed"

    def __init__(self, dim: int = 32, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def token_vector(self, token: str) -> np.ndarray:
        v = self._cache.get(token)
        if v is None:
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            rng = np.random.default_rng([self.seed, int.from_bytes(digest, "little")])
            v = rng.standard_normal(self.dim)
            self._cache[token] = v
        return v

    def doc_vectors(self, doc: Document) -> np.ndarray:
        return np.stack([self.token_vector(t) for t in doc.tokens])


class FileEmbeddings:
    """Vectors read from a text file of per-document blocks::

        # <doc_id>
        0.1 0.2 ...     (one line per token)
    """

    mode = "file"

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.blocks: dict[str, np.ndarray] = {}
        current, rows = None, []
        for line_no, line in enumerate(self.path.read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if line.startswith("#"):
                if current is not None:
                    self.blocks[current] = np.asarray(rows, dtype=float)
                current, rows = line[1:].strip(), []
            elif line:
                if current is None:
                    raise ValueError(f"{self.path}:{line_no}: vector before any '# <doc_id>' header")
                rows.append([float(x) for x in line.split()])
        if current is not None:
            self.blocks[current] = np.asarray(rows, dtype=float)
        dims = {b.shape[1] for b in self.blocks.values() if b.size}
        if len(dims) > 1:
            raise ValueError(f"{self.path}: inconsistent vector widths {sorted(dims)}")
        self.dim = dims.pop() if dims else 0

    def doc_vectors(self, doc: Document) -> np.ndarray:
        block = self.blocks.get(doc.doc_id)
        if block is None:
            raise KeyError(f"no vectors for document {doc.doc_id!r} in {self.path}")
        if len(block) < len(doc.tokens):
            k = len(block)
            raise KeyError(f"{doc.doc_id}: missing vector for token {k} {doc.tokens[k]!r}")
        if not np.all(np.isfinite(block)):
            raise ValueError(f"{doc.doc_id}: non-finite vector values")
        return block[: len(doc.tokens)]


# -- configuration ---------------------------------------------------------

@dataclass(frozen=True)
class Toggles:
    use_disc: bool = True
    use_type: bool = True
    use_ds: bool = True

    def blocks(self) -> list[str]:
        out = ["d_m"]
        if self.use_ds:
            out.append("d_s")
        if self.use_disc:
            out += ["d_lca", "lc_lca", "wc_lca"]
        if self.use_type:
            out.append("type")
        return out


PRESETS = {
    "baseline": Toggles(use_disc=False, use_type=False, use_ds=True),
    "+type": Toggles(use_disc=False, use_type=True, use_ds=True),
    "+disc": Toggles(use_disc=True, use_type=False, use_ds=True),
    "+disc+type": Toggles(use_disc=True, use_type=True, use_ds=True),
    "+disc+type-ds": Toggles(use_disc=True, use_type=True, use_ds=False),
}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.005
    max_epochs: int = 100
    dropout: float = 0.2
    max_antecedents: int = 50
    seed: int = 0
    patience: int = 10
    use_disc: bool = True
    use_type: bool = True
    use_ds: bool = True
    hidden: int = 150
    feature_dim: int = 20
    init_scale: float = 0.1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.max_antecedents < 1:
            raise ValueError("max_antecedents must be >= 1")

    @property
    def toggles(self) -> Toggles:
        return Toggles(self.use_disc, self.use_type, self.use_ds)

    def with_preset(self, name: str) -> "TrainConfig":
        return replace(self, **asdict(PRESETS[name]))


# -- parameters --------------------------------------------------------------

class ScorerParams:
    """Named arrays: ``E_<table>`` embedding tables, ``W1 b1 W2 b2 w3 b3``."""

    def __init__(self, arrays: dict[str, np.ndarray], toggles: Toggles, token_dim: int):
        self.arrays = arrays
        self.toggles = toggles
        self.token_dim = token_dim
        self.feature_dim = arrays["E_width"].shape[1]
        self.hidden = arrays["b1"].shape[0]
        expected = self.input_dim
        if arrays["W1"].shape[0] != expected:
            raise ValueError(f"W1 expects {arrays['W1'].shape[0]} inputs, toggles give {expected}")

    @property
    def repr_dim(self) -> int:
        return 3 * self.token_dim + self.feature_dim

    @property
    def input_dim(self) -> int:
        return 3 * self.repr_dim + self.feature_dim * len(self.toggles.blocks())

    @staticmethod
    def shapes(toggles: Toggles, token_dim: int, feature_dim: int = 20, hidden: int = 150):
        repr_dim = 3 * token_dim + feature_dim
        in_dim = 3 * repr_dim + feature_dim * len(toggles.blocks())
        shapes = {f"E_{t}": (TABLE_ROWS[t], feature_dim) for t in TABLES}
        shapes.update(W1=(in_dim, hidden), b1=(hidden,), W2=(hidden, hidden), b2=(hidden,),
                      w3=(hidden,), b3=())
        return shapes

    @classmethod
    def init(cls, toggles: Toggles, token_dim: int, feature_dim: int = 20, hidden: int = 150,
             seed: int = 0, scale: float = 0.1) -> "ScorerParams":
        rng = np.random.default_rng(seed)
        arrays = {name: rng.uniform(-scale, scale, size=shape)
                  for name, shape in cls.shapes(toggles, token_dim, feature_dim, hidden).items()}
        return cls(arrays, toggles, token_dim)

    @classmethod
    def zeros(cls, toggles: Toggles, token_dim: int, feature_dim: int = 20, hidden: int = 150):
        arrays = {name: np.zeros(shape)
                  for name, shape in cls.shapes(toggles, token_dim, feature_dim, hidden).items()}
        return cls(arrays, toggles, token_dim)

    def __getitem__(self, name):
        return self.arrays[name]

    def copy(self) -> "ScorerParams":
        return ScorerParams({k: v.copy() for k, v in self.arrays.items()}, self.toggles, self.token_dim)

    def zeros_like(self) -> "ScorerParams":
        return ScorerParams({k: np.zeros_like(v) for k, v in self.arrays.items()}, self.toggles, self.token_dim)

    def step(self, grads: "ScorerParams", lr: float):
        for k, g in grads.arrays.items():
            self.arrays[k] -= lr * g

    def save(self, path: str | Path):
        meta = {"version": CHECKPOINT_VERSION, "toggles": asdict(self.toggles), "token_dim": self.token_dim}
        with open(path, "wb") as f:
            np.savez(f, __meta__=np.array(json.dumps(meta)), **self.arrays)

    @classmethod
    def load(cls, path: str | Path) -> "ScorerParams":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["__meta__"]))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
            arrays = {k: z[k].astype(float) for k in z.files if k != "__meta__"}
        return cls(arrays, Toggles(**meta["toggles"]), meta["token_dim"])


# -- single-mention / single-pair API -----------------------------------------

def mention_repr(provider, doc: Document, m: Mention, params: ScorerParams, vectors=None) -> np.ndarray:
    """[first token ; last token ; span mean ; width embedding]."""
    vecs = provider.doc_vectors(doc) if vectors is None else vectors
    span = vecs[m.start:m.end]
    width = params["E_width"][bucket(m.width, SCHEMES["width"])]
    return np.concatenate([span[0], span[-1], span.mean(axis=0), width])


def _feature_index(feats: PairFeatures, name: str) -> int:
    if name == "type":
        return int(feats.type_j)
    return bucket(getattr(feats, name), SCHEMES[name])


def pair_score(params: ScorerParams, repr_i, repr_j, feats: PairFeatures, toggles: Toggles | None = None) -> float:
    """Score one antecedent/anaphor pair at inference (no dropout)."""
    toggles = params.toggles if toggles is None else toggles
    if toggles != params.toggles:
        raise ValueError("toggles differ from the ones the parameters were built for")
    repr_i, repr_j = np.asarray(repr_i), np.asarray(repr_j)
    if repr_i.shape != (params.repr_dim,) or repr_j.shape != (params.repr_dim,):
        raise ValueError(f"mention representations must have length {params.repr_dim}")
    parts = [repr_i, repr_j, repr_i * repr_j]
    parts += [params[f"E_{name}"][_feature_index(feats, name)] for name in toggles.blocks()]
    x = np.concatenate(parts)
    h1 = np.maximum(x @ params["W1"] + params["b1"], 0.0)
    h2 = np.maximum(h1 @ params["W2"] + params["b2"], 0.0)
    return float(h2 @ params["w3"] + params["b3"])


# -- batched document computation ---------------------------------------------

@dataclass
class PreparedDoc:
    """Everything the network needs for one document, precomputed once."""

    doc_id: str
    n_mentions: int
    base: np.ndarray  # (n, 3D) fixed part of mention representations
    width_idx: np.ndarray
    pi: np.ndarray
    pj: np.ndarray
    feats: dict[str, np.ndarray]  # bucket indices per feature table
    seg_starts: np.ndarray  # first pair of each anaphor 1..n-1
    gold: np.ndarray  # (P,) pair is coreferent
    has_gold: np.ndarray  # (n-1,) anaphor has a gold antecedent in its window
    gold_clustering: Clustering = field(repr=False, default=None)
    raw: object = field(repr=False, default=None)


def prepare_doc(doc: Document, tree, provider, max_antecedents: int = 50) -> PreparedDoc:
    n = len(doc.mentions)
    dim = provider.dim
    if n:
        vecs = provider.doc_vectors(doc)
        base = np.stack([
            np.concatenate([vecs[m.start], vecs[m.end - 1], vecs[m.start:m.end].mean(axis=0)])
            for m in doc.mentions
        ])
    else:
        base = np.zeros((0, 3 * dim))
    pairs = candidate_pairs(doc, tree, max_antecedents)
    feats = {name: bucketize(getattr(pairs, name), SCHEMES[name])
             for name in ("d_m", "d_s", "d_lca", "lc_lca", "wc_lca")}
    feats["type"] = pairs.type_j.copy()
    chain = np.asarray([doc.chain_of(k) for k in range(n)], dtype=np.int64)
    gold = chain[pairs.i] == chain[pairs.j] if len(pairs) else np.zeros(0, dtype=bool)
    seg_starts = np.flatnonzero(np.r_[True, pairs.j[1:] != pairs.j[:-1]]) if len(pairs) else np.zeros(0, np.int64)
    has_gold = np.logical_or.reduceat(gold, seg_starts) if len(pairs) else np.zeros(0, dtype=bool)
    return PreparedDoc(
        doc_id=doc.doc_id, n_mentions=n, base=base,
        width_idx=bucketize(pairs.widths, SCHEMES["width"]),
        pi=pairs.i, pj=pairs.j, feats=feats, seg_starts=seg_starts,
        gold=gold, has_gold=has_gold, gold_clustering=doc.gold_clustering(), raw=pairs,
    )


def _forward(params: ScorerParams, pd: PreparedDoc, mask=None):
    R = np.concatenate([pd.base, params["E_width"][pd.width_idx]], axis=1)
    Ri, Rj = R[pd.pi], R[pd.pj]
    blocks = params.toggles.blocks()
    X = np.concatenate([Ri, Rj, Ri * Rj] + [params[f"E_{b}"][pd.feats[b]] for b in blocks], axis=1)
    Z1 = X @ params["W1"] + params["b1"]
    H1 = np.maximum(Z1, 0.0)
    if mask is not None:
        H1 = H1 * mask
    Z2 = H1 @ params["W2"] + params["b2"]
    H2 = np.maximum(Z2, 0.0)
    s = H2 @ params["w3"] + params["b3"]
    return s, (R, Ri, Rj, X, Z1, H1, Z2, H2)


def pair_scores(params: ScorerParams, pd: PreparedDoc) -> np.ndarray:
    """Inference scores for all candidate pairs of ``pd``."""
    if not len(pd.pi):
        return np.zeros(0)
    return _forward(params, pd)[0]


def _segment_logsumexp(values, seg_starts, include_zero=True):
    with np.errstate(invalid="ignore"):
        mx = np.maximum.reduceat(values, seg_starts)
    if include_zero:
        mx = np.maximum(mx, 0.0)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    seg_ids = np.repeat(np.arange(len(seg_starts)), np.diff(np.r_[seg_starts, len(values)]))
    total = np.add.reduceat(np.exp(values - safe[seg_ids]), seg_starts)
    if include_zero:
        total = total + np.exp(-safe)
    with np.errstate(divide="ignore"):
        return safe + np.log(total), seg_ids


def candidate_probabilities(scores, pd: PreparedDoc):
    """Softmax over {dummy} + candidates per anaphor: (pair probs, dummy probs)."""
    lse, seg_ids = _segment_logsumexp(scores, pd.seg_starts)
    return np.exp(scores - lse[seg_ids]), np.exp(-lse)


def _loss_terms(s, pd: PreparedDoc):
    lse_all, seg_ids = _segment_logsumexp(s, pd.seg_starts)
    gold_s = np.where(pd.gold, s, -np.inf)
    lse_gold, _ = _segment_logsumexp(gold_s, pd.seg_starts, include_zero=False)
    lse_gold = np.where(pd.has_gold, lse_gold, 0.0)  # dummy is the only gold option
    loss = float(np.sum(lse_all - lse_gold))
    p_all = np.exp(s - lse_all[seg_ids])
    p_gold = np.where(pd.gold, np.exp(s - lse_gold[seg_ids]), 0.0)
    return loss, p_all - p_gold


def doc_loss(params: ScorerParams, pd: PreparedDoc, mask=None) -> float:
    """Negative log marginal likelihood of the gold antecedents."""
    if pd.n_mentions == 0:
        raise ValueError(f"{pd.doc_id}: document has no mentions")
    if not len(pd.pi):
        return 0.0
    s, _ = _forward(params, pd, mask)
    return _loss_terms(s, pd)[0]


def loss_and_grad(params: ScorerParams, pd: PreparedDoc, mask=None) -> tuple[float, ScorerParams]:
    """Loss and its exact gradient.  ``mask`` is the (scaled) dropout mask on
    the first hidden layer, or None for no dropout."""
    if pd.n_mentions == 0:
        raise ValueError(f"{pd.doc_id}: document has no mentions")
    grads = params.zeros_like()
    if not len(pd.pi):
        return 0.0, grads
    s, (R, Ri, Rj, X, Z1, H1, Z2, H2) = _forward(params, pd, mask)
    loss, ds = _loss_terms(s, pd)
    g = grads.arrays

    g["b3"] = np.asarray(ds.sum())
    g["w3"] = H2.T @ ds
    dZ2 = np.outer(ds, params["w3"]) * (Z2 > 0)
    g["W2"] = H1.T @ dZ2
    g["b2"] = dZ2.sum(axis=0)
    dH1 = dZ2 @ params["W2"].T
    if mask is not None:
        dH1 *= mask
    dZ1 = dH1 * (Z1 > 0)
    g["W1"] = X.T @ dZ1
    g["b1"] = dZ1.sum(axis=0)
    dX = dZ1 @ params["W1"].T

    rd = R.shape[1]
    dprod = dX[:, 2 * rd:3 * rd]
    dRi = dX[:, :rd] + dprod * Rj
    dRj = dX[:, rd:2 * rd] + dprod * Ri
    dR = np.zeros_like(R)
    np.add.at(dR, pd.pi, dRi)
    np.add.at(dR, pd.pj, dRj)
    np.add.at(g["E_width"], pd.width_idx, dR[:, 3 * params.token_dim:])
    off = 3 * rd
    fd = params.feature_dim
    for b in params.toggles.blocks():
        np.add.at(g[f"E_{b}"], pd.feats[b], dX[:, off:off + fd])
        off += fd
    return loss, grads


def dropout_mask(rng: np.random.Generator, shape, rate: float):
    if rate <= 0:
        return None
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


# -- decoding and training -------------------------------------------------------

def predict(params: ScorerParams, pd: PreparedDoc) -> Clustering:
    """Best-antecedent decoding: link to the top candidate when it beats the
    dummy's score of 0."""
    if not len(pd.pi):
        return links_to_clusters({}, pd.n_mentions)
    s = pair_scores(params, pd)
    links = {}
    # candidates ascend within each segment, so argmax picks the earliest on ties
    for seg, start in enumerate(pd.seg_starts):
        end = pd.seg_starts[seg + 1] if seg + 1 < len(pd.seg_starts) else len(s)
        k = start + int(np.argmax(s[start:end]))
        if s[k] > 0:
            links[int(pd.pj[k])] = int(pd.pi[k])
    return links_to_clusters(links, pd.n_mentions)


def evaluate_prepared(params: ScorerParams, prepared) -> float:
    report = evaluate((pd.gold_clustering, predict(params, pd)) for pd in prepared)
    return report.avg_f1


@dataclass
class History:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = 0

    def to_rows(self):
        return [dict(e) for e in self.epochs]


def train(train_docs, dev_docs, config: TrainConfig, token_dim: int | None = None,
          init: ScorerParams | None = None):
    """Per-document gradient descent with early stopping on dev average F1.

    ``train_docs``/``dev_docs`` are lists of PreparedDoc.  Returns the params
    of the best dev epoch and the per-epoch history.
    """
    if not train_docs:
        raise ValueError("empty training split")
    if not dev_docs:
        raise ValueError("empty development split")
    token_dim = token_dim or train_docs[0].base.shape[1] // 3
    params = init.copy() if init is not None else ScorerParams.init(
        config.toggles, token_dim, config.feature_dim, config.hidden, config.seed, config.init_scale)
    order_rng = np.random.default_rng([config.seed, 1])
    drop_rng = np.random.default_rng([config.seed, 2])
    train_docs = [pd for pd in train_docs if pd.n_mentions]

    history = History()
    init_loss = sum(doc_loss(params, pd) for pd in train_docs)
    best_f1 = evaluate_prepared(params, dev_docs)
    history.epochs.append({"epoch": 0, "loss": init_loss, "dev_avg_f1": best_f1})
    best = params.copy()
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        total = 0.0
        for k in order_rng.permutation(len(train_docs)):
            pd = train_docs[k]
            mask = dropout_mask(drop_rng, (len(pd.pi), params.hidden), config.dropout)
            loss, grads = loss_and_grad(params, pd, mask)
            total += loss
            if config.learning_rate:
                params.step(grads, config.learning_rate)
        f1 = evaluate_prepared(params, dev_docs)
        history.epochs.append({"epoch": epoch, "loss": total, "dev_avg_f1": f1})
        log.info("epoch %d loss %.3f dev avg F1 %.4f", epoch, total, f1)
        if f1 > best_f1:
            best_f1, best, stale = f1, params.copy(), 0
            history.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break
    return best, history
