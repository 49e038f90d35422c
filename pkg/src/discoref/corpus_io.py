"""Reading and writing CoNLL-2012 style coreference documents.

The accepted layout is one token per line with whitespace-separated columns::

    <doc> <part> <word index> <token> [middle columns ...] <coref>

Sentences are separated by blank lines and every document is wrapped in
``#begin document (<doc>); part <n>`` / ``#end document``.  With exactly one
middle column that column is read as a named-entity layer in the same bracket
convention as the coreference column (``(PER``, ``PER)``, ``(PER)``).  With
seven or more middle columns (the full CoNLL-2012 layout) the NE layer is the
eleventh column, in the star convention (``(PERSON*``, ``*``, ``*)``).
Middle columns are kept verbatim so documents round-trip.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

BEGIN_RE = re.compile(r"^#begin document \((.+)\);\s*part\s+(\S+)\s*$")
END_RE = re.compile(r"^#end document\b")
SINGLE_RE = re.compile(r"^\((\d+)\)$")
OPEN_RE = re.compile(r"^\((\d+)$")
CLOSE_RE = re.compile(r"^(\d+)\)$")

# index of the NE layer inside the middle columns of the full CoNLL-2012 layout
_FULL_LAYOUT_NE = 6


class ConllError(ValueError):
    """Malformed CoNLL input or an inconsistent document."""

    def __init__(self, message: str, doc: str | None = None, line: int | None = None):
        where = []
        if doc is not None:
            where.append(f"document {doc!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
        self.doc = doc
        self.line = line


@dataclass(frozen=True)
class Mention:
    id: int
    start: int
    end: int  # exclusive
    text: str

    @property
    def width(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class CorefChain:
    chain_id: int
    mention_ids: frozenset[int]


@dataclass(frozen=True)
class Clustering:
    """A partition (or partial partition) of one document's mention ids.

    Clusters are normalized: members sorted, clusters sorted by first member.
    """

    clusters: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        norm = tuple(sorted(tuple(sorted(set(c))) for c in self.clusters if len(c)))
        seen: set[int] = set()
        for c in norm:
            for m in c:
                if m in seen:
                    raise ValueError(f"mention {m} appears in more than one cluster")
                seen.add(m)
        object.__setattr__(self, "clusters", norm)

    @classmethod
    def from_sets(cls, clusters: Iterable[Iterable[int]]) -> "Clustering":
        return cls(tuple(tuple(c) for c in clusters))

    def mention_ids(self) -> set[int]:
        return {m for c in self.clusters for m in c}

    def cluster_of(self) -> dict[int, int]:
        return {m: k for k, c in enumerate(self.clusters) for m in c}

    def without_singletons(self) -> "Clustering":
        return Clustering(tuple(c for c in self.clusters if len(c) > 1))

    def __len__(self):
        return len(self.clusters)


@dataclass(frozen=True)
class Document:
    name: str
    part: str
    tokens: tuple[str, ...]
    sentence_index: tuple[int, ...]
    mentions: tuple[Mention, ...]
    gold_chains: tuple[CorefChain, ...]
    ne_spans: tuple[tuple[int, int, str], ...] | None = None
    middle_columns: tuple[tuple[str, ...], ...] | None = None
    _chain_of: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        n = len(self.tokens)
        if n == 0:
            raise ConllError("empty document", self.doc_id)
        if len(self.sentence_index) != n:
            raise ConllError("sentence_index length differs from token count", self.doc_id)
        prev = 0
        for k, s in enumerate(self.sentence_index):
            if (k == 0 and s != 0) or s < prev or s > prev + 1:
                raise ConllError("sentence ids must start at 0 and increase by at most 1", self.doc_id)
            prev = s
        if self.middle_columns is not None and len(self.middle_columns) != n:
            raise ConllError("middle column count differs from token count", self.doc_id)
        for k, m in enumerate(self.mentions):
            if m.id != k:
                raise ConllError(f"mention ids must be dense, got {m.id} at {k}", self.doc_id)
            if not 0 <= m.start < m.end <= n:
                raise ConllError(f"mention span [{m.start},{m.end}) out of bounds", self.doc_id)
            if k and (m.start, m.end) < (self.mentions[k - 1].start, self.mentions[k - 1].end):
                raise ConllError("mentions not sorted by (start, end)", self.doc_id)
        chain_of = {}
        for chain in self.gold_chains:
            if not chain.mention_ids:
                raise ConllError(f"chain {chain.chain_id} is empty", self.doc_id)
            for m in chain.mention_ids:
                if m in chain_of:
                    raise ConllError(f"mention {m} belongs to two chains", self.doc_id)
                if not 0 <= m < len(self.mentions):
                    raise ConllError(f"chain {chain.chain_id} references unknown mention {m}", self.doc_id)
                chain_of[m] = chain.chain_id
        if len(chain_of) != len(self.mentions):
            raise ConllError("every mention must belong to exactly one chain", self.doc_id)
        object.__setattr__(self, "_chain_of", chain_of)

    @property
    def doc_id(self) -> str:
        return f"{self.name}#{self.part}"

    @property
    def n_sentences(self) -> int:
        return self.sentence_index[-1] + 1

    def chain_of(self, mention_id: int) -> int:
        return self._chain_of[mention_id]

    def gold_clustering(self) -> Clustering:
        return Clustering.from_sets(c.mention_ids for c in self.gold_chains)


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]

    def __post_init__(self):
        object.__setattr__(self, "documents", tuple(self.documents))
        seen = set()
        for d in self.documents:
            if d.doc_id in seen:
                raise ConllError("duplicate document id", d.doc_id)
            seen.add(d.doc_id)

    def __iter__(self):
        return iter(self.documents)

    def __len__(self):
        return len(self.documents)

    def __getitem__(self, k):
        return self.documents[k]

    def by_id(self) -> dict[str, Document]:
        return {d.doc_id: d for d in self.documents}


def build_document(name, part, sentences, mention_spans, ne_spans=None, middle_columns=None):
    """Assemble a Document from sentences (lists of tokens) and
    ``(start, end, chain)`` spans.  Chains are renumbered densely in order of
    first mention."""
    tokens = [t for s in sentences for t in s]
    sent_idx = [k for k, s in enumerate(sentences) for _ in s]
    spans = sorted(set(mention_spans), key=lambda x: (x[0], x[1], x[2]))
    mentions = []
    members: dict[int, list[int]] = {}
    for k, (start, end, chain) in enumerate(spans):
        mentions.append(Mention(k, start, end, " ".join(tokens[start:end])))
        members.setdefault(chain, []).append(k)
    chains = []
    for new_id, (_, ids) in enumerate(sorted(members.items(), key=lambda kv: kv[1][0])):
        chains.append(CorefChain(new_id, frozenset(ids)))
    return Document(
        name=name,
        part=part,
        tokens=tuple(tokens),
        sentence_index=tuple(sent_idx),
        mentions=tuple(mentions),
        gold_chains=tuple(chains),
        ne_spans=tuple(ne_spans) if ne_spans is not None else None,
        middle_columns=tuple(tuple(c) for c in middle_columns) if middle_columns is not None else None,
    )


def _parse_ne_column(values: Sequence[str], doc_id: str, line_nos: Sequence[int]):
    spans = []
    stack: list[tuple[str, int]] = []
    for tok, (value, line_no) in enumerate(zip(values, line_nos)):
        if value in ("-", "*", "_"):
            continue
        for piece in value.split("|"):
            opens = piece.startswith("(")
            closes = piece.endswith(")")
            label = piece.strip("()*")
            if opens and closes:
                spans.append((tok, tok + 1, label))
            elif opens:
                stack.append((label, tok))
            elif closes:
                if not stack:
                    raise ConllError(f"unbalanced NE bracket {piece!r}", doc_id, line_no)
                idx = len(stack) - 1
                if label:
                    while idx >= 0 and stack[idx][0] != label:
                        idx -= 1
                    if idx < 0:
                        raise ConllError(f"NE close {piece!r} has no matching open", doc_id, line_no)
                open_label, start = stack.pop(idx)
                spans.append((start, tok + 1, open_label))
            elif piece.strip("*"):
                raise ConllError(f"bad NE marker {piece!r}", doc_id, line_no)
    if stack:
        raise ConllError(f"unclosed NE span(s) {[s[0] for s in stack]}", doc_id, line_nos[-1] if line_nos else None)
    return tuple(sorted(spans))


def _finish_document(name, part, rows, sent_idx, begin_line):
    doc_id = f"{name}#{part}"
    if not rows:
        raise ConllError("empty document", doc_id, begin_line)
    tokens = [r[1][3] for r in rows]
    line_nos = [r[0] for r in rows]
    ncols = {len(r[1]) for r in rows}
    if len(ncols) != 1:
        raise ConllError("inconsistent column count", doc_id, begin_line)
    middle = [tuple(r[1][4:-1]) for r in rows]

    stacks: dict[int, list[tuple[int, int]]] = {}
    spans: list[tuple[int, int, int]] = []
    for tok, (line_no, cols) in enumerate(rows):
        col = cols[-1]
        if col in ("-", "_"):
            continue
        for piece in col.split("|"):
            if m := SINGLE_RE.match(piece):
                spans.append((tok, tok + 1, int(m.group(1))))
            elif m := OPEN_RE.match(piece):
                stacks.setdefault(int(m.group(1)), []).append((tok, line_no))
            elif m := CLOSE_RE.match(piece):
                chain = int(m.group(1))
                if not stacks.get(chain):
                    raise ConllError(f"unbalanced bracket: {piece!r} closes nothing", doc_id, line_no)
                start, _ = stacks[chain].pop()
                spans.append((start, tok + 1, chain))
            else:
                raise ConllError(f"bad coreference marker {piece!r}", doc_id, line_no)
    for chain, st in stacks.items():
        if st:
            raise ConllError(f"unbalanced bracket: chain {chain} opened but never closed", doc_id, st[-1][1])
    if len(set(spans)) != len(spans):
        dup = next(s for s in spans if spans.count(s) > 1)
        raise ConllError(f"duplicate span [{dup[0]},{dup[1]}) in chain {dup[2]}", doc_id, begin_line)

    ne_spans = None
    width = len(middle[0])
    if width == 1:
        ne_spans = _parse_ne_column([m[0] for m in middle], doc_id, line_nos)
    elif width > _FULL_LAYOUT_NE:
        ne_spans = _parse_ne_column([m[_FULL_LAYOUT_NE] for m in middle], doc_id, line_nos)

    sentences: list[list[str]] = []
    for tok, s in zip(tokens, sent_idx):
        if s == len(sentences):
            sentences.append([])
        sentences[-1].append(tok)
    try:
        return build_document(name, part, sentences, spans, ne_spans, middle if width else None)
    except ConllError as e:
        raise ConllError(str(e), None, begin_line) from None


def parse_conll(text: str) -> Corpus:
    """Parse CoNLL-2012 formatted text into a Corpus."""
    docs = []
    current = None  # (name, part, begin_line)
    rows: list = []
    sent_idx: list[int] = []
    sent = 0
    sent_has_tokens = False
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("#begin document"):
            if current is not None:
                raise ConllError("#begin document inside an open document", current[0], line_no)
            m = BEGIN_RE.match(line)
            if not m:
                raise ConllError(f"malformed header {line!r}", None, line_no)
            current = (m.group(1), m.group(2), line_no)
            rows, sent_idx, sent, sent_has_tokens = [], [], 0, False
        elif END_RE.match(line):
            if current is None:
                raise ConllError("#end document without #begin", None, line_no)
            docs.append(_finish_document(current[0], current[1], rows, sent_idx, current[2]))
            current = None
        elif not line:
            if sent_has_tokens:
                sent += 1
                sent_has_tokens = False
        elif line.startswith("#"):
            continue
        else:
            if current is None:
                raise ConllError("token line outside a document", None, line_no)
            cols = line.split()
            if len(cols) < 5:
                raise ConllError(f"expected at least 5 columns, got {len(cols)}", f"{current[0]}#{current[1]}", line_no)
            rows.append((line_no, cols))
            sent_idx.append(sent)
            sent_has_tokens = True
    if current is not None:
        raise ConllError("missing #end document", f"{current[0]}#{current[1]}", current[2])
    return Corpus(tuple(docs))


def _coref_column(doc: Document, clusters: Sequence[Sequence[int]]) -> list[str]:
    opens: list[list[int]] = [[] for _ in doc.tokens]
    singles: list[list[int]] = [[] for _ in doc.tokens]
    closes: list[list[int]] = [[] for _ in doc.tokens]
    for chain_id, members in enumerate(clusters):
        for mid in members:
            m = doc.mentions[mid]
            if m.width == 1:
                singles[m.start].append(chain_id)
            else:
                opens[m.start].append(chain_id)
                closes[m.end - 1].append(chain_id)
    out = []
    for k in range(len(doc.tokens)):
        # closes before opens: a same-chain close and open on one token must
        # pop the older bracket, not the one opened here
        pieces = [f"{c})" for c in sorted(closes[k])]
        pieces += [f"({c})" for c in sorted(singles[k])]
        pieces += [f"({c}" for c in sorted(opens[k])]
        out.append("|".join(pieces) if pieces else "-")
    return out


def write_conll(doc: Document, clustering: Clustering | None = None, keep_singletons: bool = True) -> str:
    """Serialize ``doc`` with ``clustering`` (gold chains when None) in the
    coreference column."""
    if clustering is None:
        clustering = doc.gold_clustering()
    ids = clustering.mention_ids()
    unknown = sorted(m for m in ids if not 0 <= m < len(doc.mentions))
    if unknown:
        raise ConllError(f"clustering references unknown mention ids {unknown}", doc.doc_id)
    missing = sorted(set(range(len(doc.mentions))) - ids)
    if missing:
        raise ConllError(f"clustering does not cover mentions {missing}", doc.doc_id)
    clusters = [c for c in clustering.clusters if keep_singletons or len(c) > 1]
    coref = _coref_column(doc, clusters)

    lines = [f"#begin document ({doc.name}); part {doc.part}"]
    word = 0
    for k, tok in enumerate(doc.tokens):
        if k and doc.sentence_index[k] != doc.sentence_index[k - 1]:
            lines.append("")
            word = 0
        cols = [doc.name, doc.part, str(word), tok]
        if doc.middle_columns is not None:
            cols.extend(doc.middle_columns[k])
        cols.append(coref[k])
        lines.append("\t".join(cols))
        word += 1
    lines.append("")
    lines.append("#end document")
    return "\n".join(lines) + "\n"


def write_corpus(docs: Iterable[Document], clusterings: Iterable[Clustering] | None = None,
                 keep_singletons: bool = True) -> str:
    docs = list(docs)
    if clusterings is None:
        clusterings = [None] * len(docs)
    return "".join(write_conll(d, c, keep_singletons) for d, c in zip(docs, clusterings))


def read_corpus(path: str | Path) -> Corpus:
    """Read a single file or every ``*.conll`` file in a directory (sorted by name)."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.conll"))
    else:
        files = [path]
    docs = []
    for f in files:
        try:
            docs.extend(parse_conll(f.read_text(encoding="utf-8")).documents)
        except ConllError as e:
            raise ConllError(f"{f.name}: {e}") from None
    return Corpus(tuple(docs))
