"""Synthetic corpora whose coreference structure depends on discourse-tree
proximity and mention type.

Each document is a sequence of sentences split into EDUs, with a random
binary tree over the EDUs.  Mentions are placed in EDUs left to right; an
anaphor of type ``t`` picks (with probability ``locality``) an entity whose
latest mention sits within ``theta[t]`` edges of the anaphor's leaf, measured
from the anaphor up to the LCA.  Pronouns take the structurally closest such
entity; names and common nouns pick uniformly, so their antecedents spread
further up the tree.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus_io import Corpus, build_document, write_conll
from .features import MentionType
from .rst_tree import RstTree, parse_rst, tree_filename

NAMES = """Adams Baker Carter Dalton Ellis Foster Garcia Harper Irving Jensen Keller
Lawson Morgan Nolan Oliver Parker Quinn Reyes Sutton Turner Underwood Vaughn
Walker Young Zimmer Abbott Blake Chandler Dixon Emerson Fletcher Grant Hayes
Ingram Jordan Kendall Lambert Mercer Norris Owens Preston Ramsey Shelton
Thornton Upton Vance Whitaker Yates""".split()

NOUNS = """company official report agency board group plan leader firm court
worker market bank city country council program deal fund team""".split()

PRONOUN_FORMS = tuple("""he him his himself she her hers herself it its itself
they them their theirs themselves""".split())

CONNECTIVES = ("Then", "Later", "Meanwhile", "Still", "Also", "Now", "Soon", "Yet")

FILLERS = """said had made went saw told asked found gave took
about after before over under around again soon very quite often
and but so because while although when where
new old big small long short early late good bad
ago today there here really still just even also""".split()

RELATIONS = ("Elaboration", "Joint", "Attribution", "Contrast", "Background",
             "Cause", "Same-Unit", "Temporal")

_TYPE_ORDER = (MentionType.PRONOUN, MentionType.NAMED_ENTITY, MentionType.OTHER_NP)


@dataclass(frozen=True)
class SynthConfig:
    n_docs: int = 260
    sentences: tuple[int, int] = (8, 14)
    edus_per_sentence: tuple[int, int] = (1, 3)
    tokens_per_edu: tuple[int, int] = (3, 7)
    entities: tuple[int, int] = (4, 8)
    mention_slots: int = 2
    mention_rate: float = 0.5
    # probabilities of pronoun / named entity / other NP anaphors
    type_mix: tuple[float, float, float] = (0.45, 0.25, 0.30)
    new_entity_rate: float = 0.3
    locality: float = 0.9
    # d_lca thresholds for pronoun / named entity / other NP anaphors
    theta: tuple[int, int, int] = (3, 9, 6)
    # probability that a tree split peels off a single EDU
    chain_bias: float = 0.4
    seed: int = 0

    def __post_init__(self):
        for name in ("sentences", "edus_per_sentence", "tokens_per_edu", "entities"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ValueError(f"{name}: invalid range ({lo}, {hi})")
        for name in ("mention_rate", "new_entity_rate", "locality", "chain_bias"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be a probability, got {v}")
        if any(p < 0 for p in self.type_mix) or abs(sum(self.type_mix) - 1) > 1e-9:
            raise ValueError("type_mix must be non-negative and sum to 1")
        if self.n_docs < 0 or self.mention_slots < 0:
            raise ValueError("n_docs and mention_slots must be non-negative")
        max_mentions = self.sentences[1] * self.edus_per_sentence[1] * self.mention_slots
        if self.mention_rate > 0 and self.entities[0] > max_mentions:
            raise ValueError(
                f"infeasible: at least {self.entities[0]} entities but at most {max_mentions} mentions per document")
        if self.entities[1] > len(NAMES):
            raise ValueError(f"at most {len(NAMES)} entities per document are supported")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        for k, v in d.items():
            if isinstance(v, list):
                d[k] = tuple(v)
        return cls(**d)


class _Shape:
    """Random binary tree over leaves 0..L-1 (structure only)."""

    def __init__(self, rng, n_leaves, chain_bias=0.0):
        self.chain_bias = chain_bias
        self.parent: list[int] = []
        self.depth: list[int] = []
        self.children: list[tuple] = []
        self.relation: list[str] = []
        self.leaf_node = [0] * n_leaves
        self._build(rng, 0, n_leaves, -1)

    def _build(self, rng, lo, hi, parent):
        nid = len(self.parent)
        self.parent.append(parent)
        self.depth.append(0 if parent < 0 else self.depth[parent] + 1)
        self.children.append(())
        self.relation.append(RELATIONS[int(rng.integers(len(RELATIONS)))])
        if hi - lo == 1:
            self.leaf_node[lo] = nid
            self.children[nid] = ("leaf", lo)
            return nid
        if hi - lo > 2 and rng.random() < self.chain_bias:
            # peel off one EDU: elaboration-style chains make trees deep
            split = lo + 1 if rng.random() < 0.5 else hi - 1
        else:
            split = int(rng.integers(lo + 1, hi))
        left = self._build(rng, lo, split, nid)
        right = self._build(rng, split, hi, nid)
        self.children[nid] = (left, right)
        return nid

    def d_lca(self, leaf_a, leaf_b):
        """Edges from leaf_b up to LCA(leaf_a, leaf_b)."""
        a, b = self.leaf_node[leaf_a], self.leaf_node[leaf_b]
        start = self.depth[b]
        while self.depth[a] > self.depth[b]:
            a = self.parent[a]
        while self.depth[b] > self.depth[a]:
            b = self.parent[b]
        while a != b:
            a, b = self.parent[a], self.parent[b]
        return start - self.depth[a]

    def sexpr(self, edu_ranges, nid=0):
        kids = self.children[nid]
        if kids[0] == "leaf":
            s, e = edu_ranges[kids[1]]
            return f"(edu {kids[1]} {s} {e})"
        return f"(node {self.relation[nid]} {self.sexpr(edu_ranges, kids[0])} {self.sexpr(edu_ranges, kids[1])})"


def _randint(rng, lo_hi):
    lo, hi = lo_hi
    return int(rng.integers(lo, hi + 1))


def generate_document(config: SynthConfig, rng: np.random.Generator, name: str):
    """One synthetic document and its (binary) RST tree."""
    n_sent = _randint(rng, config.sentences)
    edu_sentence = []
    for s in range(n_sent):
        edu_sentence += [s] * _randint(rng, config.edus_per_sentence)
    n_edus = len(edu_sentence)
    shape = _Shape(rng, n_edus, config.chain_bias)
    target_entities = _randint(rng, config.entities)
    theta = dict(zip(_TYPE_ORDER, config.theta))
    mix = np.asarray(config.type_mix)

    entities: list[dict] = []
    names = [NAMES[k] for k in rng.permutation(len(NAMES))]
    edu_mentions: list[list[tuple[int, list[str]]]] = [[] for _ in range(n_edus)]
    count = 0

    for leaf in range(n_edus):
        for _ in range(config.mention_slots):
            if rng.random() >= config.mention_rate:
                continue
            mtype = _TYPE_ORDER[int(rng.choice(3, p=mix))]
            new = not entities or (len(entities) < target_entities and rng.random() < config.new_entity_rate)
            if new:
                if mtype == MentionType.PRONOUN:
                    w = mix[1:] / mix[1:].sum() if mix[1:].sum() > 0 else np.array([0.5, 0.5])
                    mtype = _TYPE_ORDER[1 + int(rng.choice(2, p=w))]
                nouns = rng.choice(len(NOUNS), size=2, replace=False)
                ent = {"id": len(entities), "name": names[len(entities)],
                       "nouns": [NOUNS[k] for k in nouns], "last_leaf": leaf, "last_pos": -1}
                entities.append(ent)
            else:
                dist = [shape.d_lca(e["last_leaf"], leaf) for e in entities]
                local = [e for e, d in zip(entities, dist) if d <= theta[mtype]]
                far = [e for e, d in zip(entities, dist) if d > theta[mtype]]
                want_local = rng.random() < config.locality
                pool = local if (want_local and local) or not far else far
                if mtype == MentionType.PRONOUN:
                    # segment topic: nearest segment, earliest entity in it
                    ent = min(pool, key=lambda e: (dist[e["id"]], e["last_pos"]))
                elif mtype == MentionType.NAMED_ENTITY:
                    # names are grounded: they reach for the outermost entity in range
                    reach = max(dist[e["id"]] for e in pool)
                    outer = [e for e in pool if dist[e["id"]] == reach]
                    ent = outer[int(rng.integers(len(outer)))]
                else:
                    ent = pool[int(rng.integers(len(pool)))]
            if mtype == MentionType.PRONOUN:
                surface = [PRONOUN_FORMS[int(rng.integers(len(PRONOUN_FORMS)))]]
            elif mtype == MentionType.NAMED_ENTITY:
                surface = [ent["name"]]
            else:
                surface = ["the", ent["nouns"][int(rng.integers(2))]]
            ent["last_leaf"] = leaf
            ent["last_pos"] = count
            count += 1
            edu_mentions[leaf].append((ent["id"], surface))

    sentences: list[list[str]] = [[] for _ in range(n_sent)]
    spans = []
    edu_ranges = []
    offset = 0

    def filler():
        return FILLERS[int(rng.integers(len(FILLERS)))]

    for leaf in range(n_edus):
        s = edu_sentence[leaf]
        first_in_sentence = not sentences[s]
        toks = [CONNECTIVES[int(rng.integers(len(CONNECTIVES)))] if first_in_sentence else filler()]
        for ent_id, surface in edu_mentions[leaf]:
            start = offset + len(toks)
            toks += surface
            spans.append((start, start + len(surface), ent_id))
            toks.append(filler())
        while len(toks) < _randint(rng, config.tokens_per_edu):
            toks.append(filler())
        last_in_sentence = leaf + 1 == n_edus or edu_sentence[leaf + 1] != s
        if last_in_sentence:
            toks.append(".")
        sentences[s].extend(toks)
        edu_ranges.append((offset, offset + len(toks)))
        offset += len(toks)

    doc = build_document(name, "000", sentences, spans)
    tree = parse_rst(shape.sexpr(edu_ranges), doc)
    return doc, tree


def generate(config: SynthConfig, seed: int | None = None) -> tuple[Corpus, dict[str, RstTree]]:
    """Deterministic corpus of ``config.n_docs`` documents plus their trees."""
    seed = config.seed if seed is None else seed
    docs, trees = [], {}
    for k in range(config.n_docs):
        rng = np.random.default_rng([seed, k])
        doc, tree = generate_document(config, rng, f"synth_{k:04d}")
        docs.append(doc)
        trees[doc.doc_id] = tree
    return Corpus(tuple(docs)), trees


DEFAULT_SPLITS = {"train": 200, "dev": 20, "test": 40}


def generate_splits(config: SynthConfig | None = None, sizes=None, seed: int | None = None):
    """Generate ``sum(sizes)`` documents and cut them into named splits in order.

    Returns ``{split: (Corpus, trees)}``.
    """
    config = config or SynthConfig()
    sizes = dict(sizes or DEFAULT_SPLITS)
    total = sum(sizes.values())
    corpus, trees = generate(SynthConfig.from_dict({**asdict(config), "n_docs": total}), seed)
    out, start = {}, 0
    for split, n in sizes.items():
        docs = corpus.documents[start:start + n]
        out[split] = (Corpus(docs), {d.doc_id: trees[d.doc_id] for d in docs})
        start += n
    return out


def write_corpus_dir(outdir: str | Path, corpus: Corpus, trees: dict[str, RstTree]) -> list[str]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for doc in corpus:
        conll = outdir / f"{doc.name.replace('/', '__')}.conll"
        conll.write_text(write_conll(doc), encoding="utf-8")
        (outdir / tree_filename(doc.doc_id)).write_text(trees[doc.doc_id].to_sexpr() + "\n", encoding="utf-8")
        written += [conll.name, tree_filename(doc.doc_id)]
    return written


def write_synth(outdir: str | Path, config: SynthConfig, sizes=None, seed: int | None = None) -> dict:
    """Write generated documents (optionally into split subdirectories) and a
    manifest with the config, seed and a digest of every file."""
    outdir = Path(outdir)
    seed = config.seed if seed is None else seed
    files = {}
    if sizes:
        for split, (corpus, trees) in generate_splits(config, sizes, seed).items():
            for f in write_corpus_dir(outdir / split, corpus, trees):
                files[f"{split}/{f}"] = None
    else:
        corpus, trees = generate(config, seed)
        for f in write_corpus_dir(outdir, corpus, trees):
            files[f] = None
    for rel in files:
        files[rel] = hashlib.sha256((outdir / rel).read_bytes()).hexdigest()
    manifest = {"generator": "discoref.synth", "seed": seed, "config": asdict(config),
                "splits": dict(sizes) if sizes else None, "files": files}
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
