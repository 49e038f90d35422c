"""Closest-antecedent pair extraction and d_lca distributions per mention-pair
category."""
from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus_io import Corpus, Document
from .features import PRONOUNS, MentionType, discourse_features, mention_type
from .rst_tree import RstTree

PRP_N, NE_N, NP_N, OTHER = "PRP-N", "NE-N", "NP-N", "OTHER"
CATEGORIES = (PRP_N, NE_N, NP_N, OTHER)

STOP_WORDS = frozenset("""
a an the
about above across after against along among around at before behind below beneath
beside between beyond by down during except for from in inside into like near of off
on onto out outside over past since through throughout to toward towards under until
up upon with within without
""".split()) | PRONOUNS


@dataclass(frozen=True)
class RelevantPair:
    doc_id: str
    i: int
    j: int
    category: str
    d_lca: int | None = None


def closest_antecedents(doc: Document) -> list[tuple[int, int]]:
    """(i, j) with i the closest earlier mention of j's gold chain."""
    last: dict[int, int] = {}
    out = []
    for m in doc.mentions:
        chain = doc.chain_of(m.id)
        if chain in last:
            out.append((last[chain], m.id))
        last[chain] = m.id
    return out


def content_tokens(doc: Document, mention_id: int) -> set[str]:
    m = doc.mentions[mention_id]
    return {t.lower() for t in doc.tokens[m.start:m.end]} - STOP_WORDS


def categorize(doc: Document, pair) -> str:
    i, j = (pair.i, pair.j) if isinstance(pair, RelevantPair) else pair
    t_i = mention_type(doc, doc.mentions[i])
    t_j = mention_type(doc, doc.mentions[j])
    if t_i == MentionType.PRONOUN:
        return OTHER
    if t_j == MentionType.PRONOUN:
        return PRP_N
    if t_j == MentionType.NAMED_ENTITY:
        return NE_N
    if not content_tokens(doc, i) & content_tokens(doc, j):
        return NP_N
    return OTHER


def relevant_pairs(doc: Document, tree: RstTree | None = None) -> list[RelevantPair]:
    out = []
    for i, j in closest_antecedents(doc):
        d = None
        if tree is not None:
            d = discourse_features(doc, tree, doc.mentions[i], doc.mentions[j])[0]
        out.append(RelevantPair(doc.doc_id, i, j, categorize(doc, (i, j)), d))
    return out


@dataclass
class DlcaHistogram:
    rows: list[tuple[str, int, int, float, float]]  # category, d_lca, count, fraction, cum_fraction
    pairs: list[RelevantPair]
    max_tree_depth: int

    def values(self, category: str) -> list[int]:
        return [p.d_lca for p in self.pairs if p.category == category]

    def median(self, category: str) -> float:
        v = self.values(category)
        return float(np.median(v)) if v else float("nan")

    def fraction_below(self, category: str, bound: int) -> float:
        v = self.values(category)
        return sum(x < bound for x in v) / len(v) if v else float("nan")

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["category", "d_lca", "count", "fraction", "cum_fraction"])
        for cat, d, n, frac, cum in self.rows:
            w.writerow([cat, d, n, f"{frac:.6f}", f"{cum:.6f}"])
        return out.getvalue()

    def summary(self, categories=(PRP_N, NE_N, NP_N)) -> list[str]:
        lines = [f"max_tree_depth={self.max_tree_depth}"]
        for cat in categories:
            v = self.values(cat)
            if not v:
                lines.append(f"{cat} n=0")
                continue
            lines.append(
                f"{cat} n={len(v)} median={self.median(cat):g} max={max(v)} "
                f"frac_lt5={self.fraction_below(cat, 5):.4f} frac_lt8={self.fraction_below(cat, 8):.4f}")
        return lines


def dlca_histogram(corpus: Corpus, trees: dict[str, RstTree], categories=(PRP_N, NE_N, NP_N)) -> DlcaHistogram:
    """Per-category normalized d_lca histogram over closest-antecedent pairs."""
    missing = [d.doc_id for d in corpus if d.doc_id not in trees]
    if missing:
        raise KeyError(f"missing RST trees for documents: {', '.join(missing)}")
    pairs = []
    for doc in corpus:
        pairs += [p for p in relevant_pairs(doc, trees[doc.doc_id]) if p.category in categories]
    rows = []
    for cat in categories:
        counts = Counter(p.d_lca for p in pairs if p.category == cat)
        total = sum(counts.values())
        cum = 0
        for d in sorted(counts):
            cum += counts[d]
            rows.append((cat, d, counts[d], counts[d] / total, cum / total))
    depth = max((trees[d.doc_id].max_depth() for d in corpus), default=0)
    return DlcaHistogram(rows, pairs, depth)
