"""Best-antecedent decoding and link clustering."""
from __future__ import annotations

from typing import Iterable, Mapping

from .corpus_io import Clustering

__all__ = ["Clustering", "UnionFind", "select_antecedents", "links_to_clusters"]


class UnionFind:
    """Disjoint sets over 0..n-1 with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra

    def groups(self) -> list[list[int]]:
        out: dict[int, list[int]] = {}
        for x in range(len(self.parent)):
            out.setdefault(self.find(x), []).append(x)
        return sorted(out.values())


def select_antecedents(scores: Mapping[int, Mapping[int, float]]) -> dict[int, int]:
    """Map each anaphor to its best-scoring candidate if that score beats the
    dummy (fixed at 0).  Ties go to the dummy, then to the earliest candidate."""
    links = {}
    for anaphor, cands in scores.items():
        best, best_score = None, 0.0
        for cand in sorted(cands):
            if cand >= anaphor:
                raise ValueError(f"candidate {cand} does not precede anaphor {anaphor}")
            s = cands[cand]
            if s > best_score:
                best, best_score = cand, s
        if best is not None:
            links[anaphor] = best
    return links


def links_to_clusters(links: Mapping[int, int] | Iterable[tuple[int, int]], n_mentions: int) -> Clustering:
    """Connected components of the antecedent links; unlinked mentions stay singletons."""
    items = links.items() if isinstance(links, Mapping) else links
    uf = UnionFind(n_mentions)
    for anaphor, antecedent in items:
        if not (0 <= antecedent < n_mentions and 0 <= anaphor < n_mentions):
            raise ValueError(f"link {anaphor}->{antecedent} outside 0..{n_mentions - 1}")
        if antecedent >= anaphor:
            raise ValueError(f"link {anaphor}->{antecedent} points forward")
        uf.union(anaphor, antecedent)
    return Clustering.from_sets(uf.groups())
