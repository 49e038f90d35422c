"""MUC, B-cubed and CEAF coreference metrics, the CoNLL average, and a
one-tailed t-test for comparing runs."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import betainc

from .corpus_io import Clustering


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, p_num, p_den, r_num, r_den) -> "PRF":
        p = p_num / p_den if p_den else 0.0
        r = r_num / r_den if r_den else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        return cls(p, r, f)

    def line(self, name: str) -> str:
        return f"{name} P={self.precision:.4f} R={self.recall:.4f} F1={self.f1:.4f}"


@dataclass(frozen=True)
class EvalReport:
    muc: PRF
    b_cubed: PRF
    ceaf_e: PRF
    ceaf_m: PRF

    @property
    def avg_f1(self) -> float:
        return avg_f1(self.muc, self.b_cubed, self.ceaf_e)

    def lines(self) -> list[str]:
        return [
            self.muc.line("MUC"),
            self.b_cubed.line("B3"),
            self.ceaf_e.line("CEAFe"),
            self.ceaf_m.line("CEAFm"),
            f"AVG_F1={self.avg_f1:.4f}",
        ]


def _as_sets(clustering) -> list[frozenset]:
    if isinstance(clustering, Clustering):
        clustering = clustering.clusters
    return [frozenset(c) for c in clustering if len(c)]


def align(gold, pred) -> tuple[list[frozenset], list[frozenset]]:
    """Check both sides cover the same mentions.  Mentions that appear only
    in ``gold`` are added to ``pred`` as singletons (dropped singletons)."""
    g, p = _as_sets(gold), _as_sets(pred)
    g_ids = set().union(*g) if g else set()
    p_ids = set().union(*p) if p else set()
    if sum(map(len, g)) != len(g_ids) or sum(map(len, p)) != len(p_ids):
        raise ValueError("clusters overlap")
    extra = p_ids - g_ids
    if extra:
        raise ValueError(f"mention universes differ: {sorted(extra)} not in gold")
    p = p + [frozenset([m]) for m in sorted(g_ids - p_ids)]
    return g, p


def _muc_side(keys, responses):
    num = den = 0
    where = {m: k for k, c in enumerate(responses) for m in c}
    for k in keys:
        parts = {where.get(m, ("unaligned", m)) for m in k}
        num += len(k) - len(parts)
        den += len(k) - 1
    return num, den


def muc_counts(gold, pred):
    g, p = align(gold, pred)
    r_num, r_den = _muc_side(g, p)
    p_num, p_den = _muc_side(p, g)
    return p_num, p_den, r_num, r_den


def _b3_side(keys, responses):
    where = {m: c for c in responses for m in c}
    num = 0.0
    den = 0
    for k in keys:
        for m in k:
            num += len(k & where[m]) / len(k)
            den += 1
    return num, den


def b_cubed_counts(gold, pred):
    g, p = align(gold, pred)
    r_num, r_den = _b3_side(g, p)
    p_num, p_den = _b3_side(p, g)
    return p_num, p_den, r_num, r_den


def phi4(k: frozenset, r: frozenset) -> float:
    return 2 * len(k & r) / (len(k) + len(r))


def _ceaf_similarity(g, p, sim):
    if not g or not p:
        return 0.0
    m = np.zeros((len(g), len(p)))
    for a, k in enumerate(g):
        for b, r in enumerate(p):
            if k & r:
                m[a, b] = sim(k, r)
    rows, cols = linear_sum_assignment(m, maximize=True)
    return float(m[rows, cols].sum())


def ceaf_e_counts(gold, pred):
    g, p = align(gold, pred)
    total = _ceaf_similarity(g, p, phi4)
    return total, len(p), total, len(g)


def ceaf_m_counts(gold, pred):
    g, p = align(gold, pred)
    total = _ceaf_similarity(g, p, lambda k, r: len(k & r))
    n = sum(map(len, g))
    return total, n, total, n


def muc(gold, pred) -> PRF:
    return PRF.from_counts(*muc_counts(gold, pred))


def b_cubed(gold, pred) -> PRF:
    return PRF.from_counts(*b_cubed_counts(gold, pred))


def ceaf_e(gold, pred) -> PRF:
    return PRF.from_counts(*ceaf_e_counts(gold, pred))


def ceaf_m(gold, pred) -> PRF:
    return PRF.from_counts(*ceaf_m_counts(gold, pred))


def avg_f1(muc_prf, b3_prf, ceafe_prf) -> float:
    return (muc_prf.f1 + b3_prf.f1 + ceafe_prf.f1) / 3.0


def evaluate(pairs: Iterable[tuple[Clustering, Clustering]]) -> EvalReport:
    """Corpus-level scores over (gold, pred) document pairs; numerators and
    denominators are summed across documents before dividing."""
    sums = {name: np.zeros(4) for name in ("muc", "b3", "ceafe", "ceafm")}
    funcs = {"muc": muc_counts, "b3": b_cubed_counts, "ceafe": ceaf_e_counts, "ceafm": ceaf_m_counts}
    for gold, pred in pairs:
        for name, fn in funcs.items():
            sums[name] += fn(gold, pred)
    return EvalReport(*(PRF.from_counts(*sums[n]) for n in ("muc", "b3", "ceafe", "ceafm")))


def _t_sf(t: float, df: float) -> float:
    """P(T > t) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    tail = 0.5 * float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return tail if t >= 0 else 1.0 - tail


def t_test_one_tailed(sample_a: Sequence[float], sample_b: Sequence[float], paired: bool = False):
    """One-tailed t-test of H1: mean(a) > mean(b).  Returns (t, p).

    Welch's unequal-variance test by default; ``paired=True`` tests the
    per-index differences instead.
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least 2 values")
    if paired:
        if len(a) != len(b):
            raise ValueError("paired test needs equal-length samples")
        d = a - b
        mean, se2, df = d.mean(), d.var(ddof=1) / len(d), len(d) - 1.0
    else:
        va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
        mean, se2 = a.mean() - b.mean(), va + vb
        df = se2 ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1)) if se2 > 0 else 1.0
    if se2 == 0:
        if mean == 0:
            return 0.0, 0.5
        return math.copysign(math.inf, mean), 0.0 if mean > 0 else 1.0
    t = float(mean / math.sqrt(se2))
    return t, _t_sf(t, df)
