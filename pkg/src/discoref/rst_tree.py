"""RST discourse trees: s-expression IO, binarization and structural queries.

Serialized form, whitespace-insensitive::

    (node <relation> <child> <child> ...)
    (edu <id> <start_tok> <end_tok_exclusive>)

Relation labels are opaque.  Leaves must tile the document's tokens exactly,
in order.
"""
from __future__ import annotations

import bisect
import re
from dataclasses import dataclass
from pathlib import Path

from .corpus_io import Document

_TOKEN_RE = re.compile(r"\(|\)|[^\s()]+")


class RstParseError(ValueError):
    pass


class RstAlignmentError(RstParseError):
    """Leaf token ranges do not tile the document."""

    def __init__(self, message, offending_edus=()):
        super().__init__(message)
        self.offending_edus = list(offending_edus)


@dataclass(frozen=True)
class RstNode:
    kind: str  # "leaf" or "internal"
    relation: str | None
    children: tuple[int, ...]
    edu_id: int | None
    token_range: tuple[int, int]  # covered tokens; for internal nodes the union of its leaves
    leaf_count: int
    token_count: int

    @property
    def is_leaf(self) -> bool:
        return self.kind == "leaf"


class RstTree:
    """Immutable arena-backed tree.  Node ids index ``nodes``."""

    def __init__(self, nodes, root, doc_id=""):
        self.nodes: tuple[RstNode, ...] = tuple(nodes)
        self.root: int = root
        self.doc_id = doc_id
        parent = [-1] * len(self.nodes)
        depth = [0] * len(self.nodes)
        leaves = []
        stack = [root]
        while stack:
            nid = stack.pop()
            node = self.nodes[nid]
            if node.is_leaf:
                leaves.append(nid)
            for c in reversed(node.children):
                parent[c] = nid
                depth[c] = depth[nid] + 1
                stack.append(c)
        self.parent = tuple(parent)
        self.depth = tuple(depth)
        self.leaves: tuple[int, ...] = tuple(leaves)
        self._leaf_starts = [self.nodes[n].token_range[0] for n in self.leaves]
        self._leaf_set = frozenset(leaves)

    def __len__(self):
        return len(self.nodes)

    def __repr__(self):
        return f"RstTree({self.doc_id!r}, {len(self.leaves)} leaves, {len(self.nodes)} nodes)"

    @property
    def token_count(self) -> int:
        return self.nodes[self.root].token_count

    def max_depth(self) -> int:
        return max(self.depth[n] for n in self.leaves)

    def is_binary(self) -> bool:
        return all(n.is_leaf or len(n.children) == 2 for n in self.nodes)

    def leaf_for_token(self, tok: int) -> int:
        """Leaf node id whose token range contains ``tok``."""
        k = bisect.bisect_right(self._leaf_starts, tok) - 1
        if k < 0 or not tok < self.nodes[self.leaves[k]].token_range[1]:
            raise IndexError(f"token {tok} is outside the tree")
        return self.leaves[k]

    def check_leaf(self, nid):
        if nid not in self._leaf_set:
            raise ValueError(f"node {nid} is not a leaf of {self!r}")

    def ancestors(self, nid):
        """Node ids from ``nid`` up to the root, inclusive."""
        out = [nid]
        while self.parent[out[-1]] != -1:
            out.append(self.parent[out[-1]])
        return out

    def to_sexpr(self, nid=None) -> str:
        nid = self.root if nid is None else nid
        node = self.nodes[nid]
        if node.is_leaf:
            return f"(edu {node.edu_id} {node.token_range[0]} {node.token_range[1]})"
        inner = " ".join(self.to_sexpr(c) for c in node.children)
        return f"(node {node.relation} {inner})"


def _make_tree(raw, doc_id):
    """Build an RstTree from nested tuples ``("edu", id, s, e)`` /
    ``("node", rel, [children])``, computing cached counts bottom-up."""
    nodes: list[RstNode | None] = []

    def build(item):
        # iterative post-order keeps deep right-branching chains off the C stack
        out_stack: list[int] = []
        work = [(item, False)]
        while work:
            it, done = work.pop()
            if it[0] == "edu":
                _, edu_id, s, e = it
                nodes.append(RstNode("leaf", None, (), edu_id, (s, e), 1, e - s))
                out_stack.append(len(nodes) - 1)
            elif not done:
                work.append((it, True))
                for c in reversed(it[2]):
                    work.append((c, False))
            else:
                k = len(it[2])
                kids = tuple(out_stack[-k:])
                del out_stack[-k:]
                first, last = nodes[kids[0]], nodes[kids[-1]]
                nodes.append(RstNode(
                    "internal", it[1], kids, None,
                    (first.token_range[0], last.token_range[1]),
                    sum(nodes[c].leaf_count for c in kids),
                    sum(nodes[c].token_count for c in kids),
                ))
                out_stack.append(len(nodes) - 1)
        return out_stack[-1]

    root = build(raw)
    return RstTree(nodes, root, doc_id)


def _read_sexpr(text):
    tokens = _TOKEN_RE.findall(text)
    if not tokens:
        raise RstParseError("empty tree")
    pos = 0
    stack: list[list] = []
    result = None
    while pos < len(tokens):
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if not stack:
                raise RstParseError(f"unbalanced ')' at token {pos - 1}")
            done = stack.pop()
            if stack:
                stack[-1].append(done)
            elif result is None:
                result = done
            else:
                raise RstParseError("more than one tree in input")
        else:
            if not stack:
                raise RstParseError(f"atom {tok!r} outside parentheses")
            stack[-1].append(tok)
    if stack:
        raise RstParseError("unbalanced '(': input ends inside a node")
    return result


def _convert(sexpr):
    # explicit stack: converts list form to the tuple form used by _make_tree
    def leaf(lst):
        if len(lst) != 4:
            raise RstParseError(f"edu needs (edu id start end), got {lst!r}")
        try:
            return ("edu", int(lst[1]), int(lst[2]), int(lst[3]))
        except ValueError:
            raise RstParseError(f"non-integer field in {lst!r}") from None

    if not isinstance(sexpr, list) or not sexpr or isinstance(sexpr[0], list):
        raise RstParseError(f"expected (node ...) or (edu ...), got {sexpr!r}")
    if sexpr[0] == "edu":
        return leaf(sexpr)
    root = None
    todo = [(sexpr, None)]
    while todo:
        lst, holder = todo.pop()
        if not lst or isinstance(lst[0], list):
            raise RstParseError(f"expected (node ...) or (edu ...), got {lst!r}")
        head = lst[0]
        if head == "edu":
            item = leaf(lst)
        elif head == "node":
            if len(lst) < 3 or isinstance(lst[1], list):
                raise RstParseError(f"node needs a relation and at least one child: {lst!r}")
            kids: list = []
            item = ("node", lst[1], kids)
            for child in lst[2:]:
                if not isinstance(child, list):
                    raise RstParseError(f"unexpected atom {child!r} among children")
                kids.append(None)
                todo.append((child, (kids, len(kids) - 1)))
        else:
            raise RstParseError(f"unknown node type {head!r}")
        if holder is None:
            root = item
        else:
            holder[0][holder[1]] = item
    return root


def _validate_alignment(tree: RstTree, token_count: int):
    offending = []
    problems = []
    expected = 0
    for k, nid in enumerate(tree.leaves):
        node = tree.nodes[nid]
        s, e = node.token_range
        if node.edu_id != k:
            problems.append(f"edu id {node.edu_id} at leaf position {k}")
            offending.append(node.edu_id)
        if s >= e:
            problems.append(f"edu {node.edu_id} has empty range [{s},{e})")
            offending.append(node.edu_id)
        elif s > expected:
            problems.append(f"gap at tokens [{expected},{s}) before edu {node.edu_id}")
            offending.append(node.edu_id)
        elif s < expected:
            problems.append(f"edu {node.edu_id} overlaps previous edu at token {s}")
            offending.append(node.edu_id)
        if e > token_count:
            problems.append(f"edu {node.edu_id} ends at {e} beyond document length {token_count}")
            offending.append(node.edu_id)
        expected = max(expected, e)
    if expected < token_count:
        problems.append(f"tokens [{expected},{token_count}) not covered by any edu")
        if tree.leaves:
            offending.append(tree.nodes[tree.leaves[-1]].edu_id)
    if problems:
        raise RstAlignmentError(
            f"{tree.doc_id}: EDUs misaligned with document: " + "; ".join(problems),
            sorted(set(offending)),
        )


def parse_rst(text: str, doc: Document | int, doc_id: str | None = None) -> RstTree:
    """Parse a serialized tree and check it tiles ``doc``'s tokens.

    ``doc`` may be a Document or a bare token count.
    """
    if isinstance(doc, Document):
        token_count, doc_id = len(doc.tokens), doc_id or doc.doc_id
    else:
        token_count = int(doc)
    tree = _make_tree(_convert(_read_sexpr(text)), doc_id or "")
    _validate_alignment(tree, token_count)
    return tree


def binarize(tree: RstTree) -> RstTree:
    """Right-branching binarization; synthetic nodes keep the parent's label.

    Unary internal nodes are spliced out.
    """
    if tree.is_binary():
        return tree

    def raw(nid):
        node = tree.nodes[nid]
        if node.is_leaf:
            return ("edu", node.edu_id, *node.token_range)
        kids = [raw(c) for c in node.children]
        if len(kids) == 1:
            return kids[0]
        item = kids[-1]
        for c in reversed(kids[1:-1]):
            item = ("node", node.relation, [c, item])
        return ("node", node.relation, [kids[0], item])

    return _make_tree(raw(tree.root), tree.doc_id)


def lca(tree: RstTree, leaf_a: int, leaf_b: int) -> int:
    tree.check_leaf(leaf_a)
    tree.check_leaf(leaf_b)
    a, b = leaf_a, leaf_b
    depth, parent = tree.depth, tree.parent
    while depth[a] > depth[b]:
        a = parent[a]
    while depth[b] > depth[a]:
        b = parent[b]
    while a != b:
        a, b = parent[a], parent[b]
    return a


def node_stats(tree: RstTree, node: int, doc: Document) -> tuple[int, int, int]:
    """(leaf count, token count, sentence count) under ``node``."""
    n = tree.nodes[node]
    s, e = n.token_range
    sentences = doc.sentence_index[e - 1] - doc.sentence_index[s] + 1
    return n.leaf_count, n.token_count, sentences


def load_tree(path: str | Path, doc: Document) -> RstTree:
    return binarize(parse_rst(Path(path).read_text(encoding="utf-8"), doc))


def tree_filename(doc_id: str) -> str:
    return doc_id.replace("/", "__") + ".rst"


def load_trees(rst_dir: str | Path, docs) -> dict[str, RstTree]:
    """Load and binarize ``<doc_id>.rst`` for every document.  Raises
    FileNotFoundError listing all documents without a tree."""
    rst_dir = Path(rst_dir)
    missing = [d.doc_id for d in docs if not (rst_dir / tree_filename(d.doc_id)).exists()]
    if missing:
        raise FileNotFoundError(f"no RST tree for documents: {', '.join(missing)}")
    return {d.doc_id: load_tree(rst_dir / tree_filename(d.doc_id), d) for d in docs}
