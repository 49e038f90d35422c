"""Pair features: mention distances, discourse-tree features and mention types."""
from __future__ import annotations

import bisect
import enum
import io
import csv
from dataclasses import dataclass

import numpy as np

from .corpus_io import Document, Mention
from .rst_tree import RstTree, lca, node_stats

PRONOUNS = frozenset("""
i me my mine myself we us our ours ourselves you your yours yourself yourselves
he him his himself she her hers herself it its itself they them their theirs themselves
this that these those who whom whose which
""".split())


class MentionType(enum.IntEnum):
    PRONOUN = 0
    NAMED_ENTITY = 1
    OTHER_NP = 2


@dataclass(frozen=True)
class BucketScheme:
    name: str
    thresholds: tuple[int, ...]

    def __post_init__(self):
        t = tuple(self.thresholds)
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError(f"{self.name}: thresholds must be strictly ascending")
        object.__setattr__(self, "thresholds", t)

    @property
    def n_buckets(self) -> int:
        return len(self.thresholds) + 1

    def __call__(self, value: int) -> int:
        return bucket(value, self)


def bucket(value: int, scheme: BucketScheme) -> int:
    if value < 0:
        raise ValueError(f"{scheme.name}: negative value {value}")
    return bisect.bisect_right(scheme.thresholds, value)


DISTANCE_BUCKETS = (1, 2, 3, 4, 5, 8, 16, 32, 64)
COVERAGE_BUCKETS = (1, 2, 4, 8, 16, 32, 64, 128, 256)
DLCA_CAP = 30

SCHEMES = {
    "d_m": BucketScheme("d_m", DISTANCE_BUCKETS),
    "d_s": BucketScheme("d_s", DISTANCE_BUCKETS),
    "d_lca": BucketScheme("d_lca", tuple(range(1, DLCA_CAP + 1))),
    "lc_lca": BucketScheme("lc_lca", COVERAGE_BUCKETS),
    "wc_lca": BucketScheme("wc_lca", COVERAGE_BUCKETS),
    "width": BucketScheme("width", DISTANCE_BUCKETS),
}


@dataclass(frozen=True)
class PairFeatures:
    d_m: int
    d_s: int
    width_i: int
    width_j: int
    d_lca: int
    lc_lca: int
    wc_lca: int
    type_j: MentionType


def _check_aligned(doc: Document, tree: RstTree):
    if tree.token_count != len(doc.tokens) or (tree.doc_id and tree.doc_id != doc.doc_id):
        raise ValueError(f"tree {tree.doc_id!r} does not belong to document {doc.doc_id!r}")


def mention_edu(doc: Document, tree: RstTree, m: Mention) -> int:
    """Leaf holding the mention's first token."""
    return tree.leaf_for_token(m.start)


def discourse_features(doc: Document, tree: RstTree, m_i: Mention, m_j: Mention) -> tuple[int, int, int]:
    """(d_lca, lc_lca, wc_lca) for antecedent ``m_i`` and anaphor ``m_j``.

    d_lca is measured on the anaphor side: edges from m_j's leaf up to the LCA.
    """
    _check_aligned(doc, tree)
    a = mention_edu(doc, tree, m_i)
    b = mention_edu(doc, tree, m_j)
    n = lca(tree, a, b)
    _, tokens, sentences = node_stats(tree, n, doc)
    return tree.depth[b] - tree.depth[n], sentences, tokens


def mention_type(doc: Document, m: Mention) -> MentionType:
    if m.text.lower() in PRONOUNS:
        return MentionType.PRONOUN
    if doc.ne_spans is not None:
        if any(s < m.end and m.start < e for s, e, _ in doc.ne_spans):
            return MentionType.NAMED_ENTITY
        return MentionType.OTHER_NP
    # no NE layer: capitalized token that is not sentence-initial
    sent = doc.sentence_index
    for k in range(m.start, m.end):
        tok = doc.tokens[k]
        if tok[:1].isupper() and k > 0 and sent[k] == sent[k - 1]:
            return MentionType.NAMED_ENTITY
    return MentionType.OTHER_NP


def pair_base_features(doc: Document, m_i: Mention, m_j: Mention) -> tuple[int, int, int, int]:
    """(d_m, d_s, width_i, width_j)."""
    if m_i.id >= m_j.id:
        raise ValueError(f"antecedent {m_i.id} must precede anaphor {m_j.id}")
    d_s = doc.sentence_index[m_j.start] - doc.sentence_index[m_i.start]
    return m_j.id - m_i.id, d_s, m_i.width, m_j.width


def pair_features(doc: Document, tree: RstTree, i: int, j: int) -> PairFeatures:
    m_i, m_j = doc.mentions[i], doc.mentions[j]
    d_m, d_s, w_i, w_j = pair_base_features(doc, m_i, m_j)
    d_lca, lc, wc = discourse_features(doc, tree, m_i, m_j)
    return PairFeatures(d_m, d_s, w_i, w_j, d_lca, lc, wc, mention_type(doc, m_j))


@dataclass
class DocPairs:
    """Raw (unbucketed) features for every candidate pair of one document.

    Pairs are grouped by anaphor: for anaphor j the candidates are the
    previous ``min(j, K)`` mentions in ascending order.
    """

    doc_id: str
    n_mentions: int
    i: np.ndarray
    j: np.ndarray
    d_m: np.ndarray
    d_s: np.ndarray
    d_lca: np.ndarray
    lc_lca: np.ndarray
    wc_lca: np.ndarray
    type_j: np.ndarray
    widths: np.ndarray
    types: np.ndarray

    def __len__(self):
        return len(self.i)


def candidate_pairs(doc: Document, tree: RstTree | None, max_antecedents: int = 50) -> DocPairs:
    """Featurize all candidate pairs.  With ``tree=None`` the discourse
    columns are zero."""
    if tree is not None:
        _check_aligned(doc, tree)
    n = len(doc.mentions)
    ii, jj = [], []
    for j in range(1, n):
        for i in range(max(0, j - max_antecedents), j):
            ii.append(i)
            jj.append(j)
    ii = np.asarray(ii, dtype=np.int64)
    jj = np.asarray(jj, dtype=np.int64)
    starts = np.asarray([m.start for m in doc.mentions], dtype=np.int64)
    sent = np.asarray(doc.sentence_index, dtype=np.int64)
    types = np.asarray([mention_type(doc, m) for m in doc.mentions], dtype=np.int64)
    widths = np.asarray([m.width for m in doc.mentions], dtype=np.int64)
    d_lca = np.zeros(len(ii), dtype=np.int64)
    lc = np.zeros(len(ii), dtype=np.int64)
    wc = np.zeros(len(ii), dtype=np.int64)
    if tree is not None and len(ii):
        leaves = [mention_edu(doc, tree, m) for m in doc.mentions]
        cache: dict[tuple[int, int], tuple[int, int, int]] = {}
        for k, (i, j) in enumerate(zip(ii.tolist(), jj.tolist())):
            key = (leaves[i], leaves[j])
            if key not in cache:
                node = lca(tree, *key)
                _, tokens, sentences = node_stats(tree, node, doc)
                cache[key] = (tree.depth[key[1]] - tree.depth[node], sentences, tokens)
            d_lca[k], lc[k], wc[k] = cache[key]
    return DocPairs(
        doc_id=doc.doc_id,
        n_mentions=n,
        i=ii,
        j=jj,
        d_m=jj - ii,
        d_s=sent[starts[jj]] - sent[starts[ii]] if len(ii) else np.zeros(0, dtype=np.int64),
        d_lca=d_lca,
        lc_lca=lc,
        wc_lca=wc,
        type_j=types[jj] if len(ii) else np.zeros(0, dtype=np.int64),
        widths=widths,
        types=types,
    )


def bucketize(values: np.ndarray, scheme: BucketScheme) -> np.ndarray:
    return np.searchsorted(np.asarray(scheme.thresholds), values, side="right")


FEATURE_CSV_COLUMNS = ("doc_id", "i", "j", "d_m", "d_s", "d_lca", "lc_lca", "wc_lca", "type_j")


def features_csv(pairs_per_doc) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(FEATURE_CSV_COLUMNS)
    for p in pairs_per_doc:
        for k in range(len(p)):
            w.writerow([p.doc_id, p.i[k], p.j[k], p.d_m[k], p.d_s[k], p.d_lca[k],
                        p.lc_lca[k], p.wc_lca[k], MentionType(p.type_j[k]).name])
    return out.getvalue()
