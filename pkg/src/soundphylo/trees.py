"""Rooted trees: Newick I/O, quartet classes, GQD and majority-rule consensus."""
from __future__ import annotations

import itertools
from dataclasses import dataclass


class NewickError(ValueError):
    def __init__(self, message, position=None):
        super().__init__(message if position is None else f"{message} at position {position}")
        self.position = position


class Node:
    __slots__ = ("label", "children", "parent")

    def __init__(self, label=None, children=None):
        self.label = label
        self.children = list(children or [])
        self.parent = None
        for c in self.children:
            c.parent = self

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def postorder(self):
        stack = [(self, False)]
        while stack:
            node, seen = stack.pop()
            if seen or node.is_leaf:
                yield node
            else:
                stack.append((node, True))
                stack.extend((c, False) for c in reversed(node.children))

    def leaf_labels(self):
        return [n.label for n in self.postorder() if n.is_leaf]


class RootedTree:
    """Rooted tree with uniquely labeled leaves and unlabeled internal nodes.

    Unary internal nodes are suppressed on construction.
    """

    def __init__(self, root: Node):
        self.root = _suppress_unary(root)
        self.root.parent = None
        labels = self.root.leaf_labels()
        if not labels:
            raise NewickError("empty tree")
        if len(set(labels)) != len(labels):
            dup = sorted({l for l in labels if labels.count(l) > 1})
            raise NewickError(f"duplicate leaf label(s) {dup}")
        self._leaves = frozenset(labels)
        self._cache = None

    @property
    def leaves(self) -> list:
        return sorted(self._leaves)

    @property
    def leaf_set(self) -> frozenset:
        return self._leaves

    def __len__(self):
        return len(self._leaves)

    def __eq__(self, other):
        return isinstance(other, RootedTree) and self.newick() == other.newick()

    def __hash__(self):
        return hash(self.newick())

    def __repr__(self):
        return f"RootedTree({self.newick()!r})"

    def nodes(self):
        return list(self.root.postorder())

    def clusters(self) -> dict:
        """Leaf set of every node, keyed by node."""
        out = {}
        for n in self.root.postorder():
            if n.is_leaf:
                out[n] = frozenset([n.label])
            else:
                out[n] = frozenset().union(*(out[c] for c in n.children))
        return out

    def clades(self) -> set:
        """Non-trivial clades: leaf sets of internal non-root nodes."""
        return {
            s for n, s in self.clusters().items() if not n.is_leaf and n is not self.root and len(s) > 1
        }

    def is_binary(self) -> bool:
        return all(len(n.children) in (0, 2) for n in self.root.postorder())

    def newick(self) -> str:
        return serialize_newick(self)

    def to_nested(self):
        def rec(n):
            return n.label if n.is_leaf else tuple(rec(c) for c in n.children)

        return rec(self.root)

    @classmethod
    def from_nested(cls, nested):
        def rec(x):
            return Node(children=[rec(c) for c in x]) if isinstance(x, tuple) else Node(label=x)

        return cls(rec(nested))

    @classmethod
    def from_clades(cls, leaves, clades):
        """Build the tree whose non-trivial clades are exactly ``clades`` (must be compatible)."""
        leaves = list(leaves)
        full = frozenset(leaves)
        sets = sorted({frozenset(c) for c in clades if 1 < len(c) < len(full)}, key=lambda s: (-len(s), sorted(s)))
        for a, b in itertools.combinations(sets, 2):
            if a & b and not (a <= b or b <= a):
                raise ValueError("incompatible clades")
        root = Node()
        nodes = {full: root}
        order = [full]
        for s in sets:
            parent = min((p for p in order if s < p), key=len)
            child = Node()
            child.parent = nodes[parent]
            nodes[parent].children.append(child)
            nodes[s] = child
            order.append(s)
        for leaf in leaves:
            parent = min((p for p in order if leaf in p), key=len)
            n = Node(label=leaf)
            n.parent = nodes[parent]
            nodes[parent].children.append(n)
        return cls(root)

    # pair MRCAs -----------------------------------------------------------

    def _pair_table(self):
        if self._cache is None:
            depth = {self.root: 0}
            order = []
            stack = [self.root]
            while stack:
                n = stack.pop()
                order.append(n)
                for c in n.children:
                    depth[c] = depth[n] + 1
                    stack.append(c)
            under = {}
            lca = {}
            for n in reversed(order):
                if n.is_leaf:
                    under[n] = [n.label]
                    continue
                groups = [under[c] for c in n.children]
                for g1, g2 in itertools.combinations(groups, 2):
                    for x in g1:
                        for y in g2:
                            lca[frozenset((x, y))] = n
                under[n] = [x for g in groups for x in g]
            self._cache = (depth, lca)
        return self._cache

    def mrca(self, labels):
        labels = list(labels)
        for l in labels:
            if l not in self._leaves:
                raise KeyError(f"unknown leaf {l!r}")
        if len(labels) == 1:
            return next(n for n in self.root.postorder() if n.label == labels[0])
        depth, lca = self._pair_table()
        return min((lca[frozenset(p)] for p in itertools.combinations(labels, 2)), key=lambda n: depth[n])


def _suppress_unary(node: Node) -> Node:
    for n in list(node.postorder()):
        new_children = []
        for c in n.children:
            while len(c.children) == 1:
                c = c.children[0]
            c.parent = n
            new_children.append(c)
        n.children = new_children
    while len(node.children) == 1:
        node = node.children[0]
    return node


# Newick ------------------------------------------------------------------

_DELIMS = set("(),:;[]")


def parse_newick(text: str) -> RootedTree:
    """Parse a Newick string; branch lengths, comments and internal labels are ignored."""
    s = text.strip()
    if not s:
        raise NewickError("empty tree", 0)
    pos = 0
    n = len(s)

    def skip_ws():
        nonlocal pos
        while pos < n:
            if s[pos].isspace():
                pos += 1
            elif s[pos] == "[":
                end = s.find("]", pos)
                if end < 0:
                    raise NewickError("unterminated comment", pos)
                pos = end + 1
            else:
                break

    def read_label():
        nonlocal pos
        skip_ws()
        if pos < n and s[pos] == "'":
            end = s.find("'", pos + 1)
            if end < 0:
                raise NewickError("unterminated quoted label", pos)
            label = s[pos + 1 : end]
            pos = end + 1
            return label
        start = pos
        while pos < n and s[pos] not in _DELIMS and not s[pos].isspace():
            pos += 1
        return s[start:pos]

    def skip_length():
        nonlocal pos
        skip_ws()
        if pos < n and s[pos] == ":":
            pos += 1
            skip_ws()
            start = pos
            while pos < n and s[pos] not in _DELIMS and not s[pos].isspace():
                pos += 1
            try:
                float(s[start:pos])
            except ValueError:
                raise NewickError("bad branch length", start) from None

    def subtree(depth):
        nonlocal pos
        skip_ws()
        if pos < n and s[pos] == "(":
            open_pos = pos
            pos += 1
            children = [subtree(depth + 1)]
            skip_ws()
            while pos < n and s[pos] == ",":
                pos += 1
                children.append(subtree(depth + 1))
                skip_ws()
            if pos >= n or s[pos] != ")":
                raise NewickError("unbalanced parentheses: missing ')'", open_pos if pos >= n else pos)
            pos += 1
            read_label()
            skip_length()
            return Node(children=children)
        label = read_label()
        if not label:
            raise NewickError("missing leaf label", pos)
        skip_length()
        return Node(label=label)

    root = subtree(0)
    skip_ws()
    if pos >= n or s[pos] != ";":
        if pos < n and s[pos] == ")":
            raise NewickError("unbalanced parentheses: unexpected ')'", pos)
        raise NewickError("expected ';'", pos)
    pos += 1
    skip_ws()
    if pos != n:
        raise NewickError("trailing characters after ';'", pos)
    return RootedTree(root)


def serialize_newick(tree: RootedTree) -> str:
    """Canonical Newick: children ordered by their smallest leaf label."""

    def rec(node):
        if node.is_leaf:
            return _quote(node.label), node.label
        parts = sorted((rec(c) for c in node.children), key=lambda x: x[1])
        return "(" + ",".join(p[0] for p in parts) + ")", parts[0][1]

    text, _ = rec(tree.root)
    if tree.root.is_leaf:
        return text + ";"
    return text + ";"


def _quote(label):
    if any(ch in _DELIMS or ch.isspace() or ch == "'" for ch in label):
        return "'" + label.replace("'", "") + "'"
    return label


def read_newick_file(path) -> list:
    """All trees in a file, one or more per line."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    trees = [parse_newick(chunk + ";") for chunk in text.split(";") if chunk.strip()]
    if not trees:
        raise NewickError(f"{path}: no trees")
    return trees


def render_ascii(tree: RootedTree) -> str:
    """Indented outline, one node per line; internal nodes show as '+'."""
    lines = []

    def key(node):
        return min(node.leaf_labels())

    def rec(node, indent):
        lines.append("  " * indent + (node.label if node.is_leaf else "+"))
        for c in sorted(node.children, key=key):
            rec(c, indent + 1)

    rec(tree.root, 0)
    return "\n".join(lines)


# quartets ------------------------------------------------------------------


@dataclass(frozen=True)
class QuartetClass:
    leaves: frozenset
    kind: str
    pairing: frozenset | None = None

    def __post_init__(self):
        if (self.kind == "butterfly") != (self.pairing is not None):
            raise ValueError("pairing must be given exactly for butterflies")

    @property
    def is_butterfly(self) -> bool:
        return self.kind == "butterfly"


def _classify(depth, lca, q):
    pairs = list(itertools.combinations(q, 2))
    nodes = [lca[frozenset(p)] for p in pairs]
    top = min(nodes, key=lambda x: depth[x])
    if all(x is top for x in nodes):
        return QuartetClass(frozenset(q), "star")
    deepest = max(depth[x] for x in nodes)
    close = [p for p, x in zip(pairs, nodes) if depth[x] == deepest]
    group = frozenset(close[0]) if len(close) < 3 else frozenset(itertools.chain.from_iterable(close))
    rest = frozenset(q) - group
    return QuartetClass(frozenset(q), "butterfly", frozenset((group, rest)))


def classify_quartet(tree: RootedTree, quartet) -> QuartetClass:
    """Star when every pair shares the MRCA of all four, else a butterfly.

    The butterfly's pairing is the pair with the deepest MRCA against the
    other two; when three leaves share that MRCA the split is 3 + 1.
    """
    q = tuple(sorted(set(quartet)))
    if len(q) != 4:
        raise ValueError("a quartet needs four distinct leaves")
    for l in q:
        if l not in tree.leaf_set:
            raise KeyError(f"unknown leaf {l!r}")
    depth, lca = tree._pair_table()
    return _classify(depth, lca, q)


def butterflies(tree: RootedTree) -> dict:
    """Map each butterfly quartet (sorted tuple) to its pairing."""
    depth, lca = tree._pair_table()
    out = {}
    for q in itertools.combinations(tree.leaves, 4):
        c = _classify(depth, lca, q)
        if c.is_butterfly:
            out[q] = c.pairing
    return out


def gqd(hypothesis: RootedTree, gold: RootedTree) -> float:
    """Share of gold butterflies not reproduced (same pairing) by the hypothesis."""
    if hypothesis.leaf_set != gold.leaf_set:
        diff = sorted(hypothesis.leaf_set ^ gold.leaf_set)
        raise ValueError(f"leaf sets differ: {diff}")
    bg = butterflies(gold)
    bh = butterflies(hypothesis)
    if not bg:
        if bh:
            raise ValueError("gold tree has no butterflies")
        return 0.0
    shared = sum(1 for q, p in bg.items() if bh.get(q) == p)
    return (len(bg) - shared) / len(bg)


# consensus -----------------------------------------------------------------


def majority_consensus(trees, threshold: float = 0.5) -> RootedTree:
    """Keep clades present in strictly more than ``threshold`` of the trees."""
    trees = list(trees)
    if not trees:
        raise ValueError("no trees")
    leaves = trees[0].leaf_set
    for t in trees[1:]:
        if t.leaf_set != leaves:
            raise ValueError(f"leaf sets differ: {sorted(t.leaf_set ^ leaves)}")
    counts = {}
    for t in trees:
        for c in t.clades():
            counts[c] = counts.get(c, 0) + 1
    m = len(trees)
    ranked = sorted(
        (c for c, k in counts.items() if k > threshold * m),
        key=lambda c: (-counts[c], -len(c), sorted(c)),
    )
    kept = []
    for c in ranked:
        if all(not (c & k) or c <= k or k <= c for k in kept):
            kept.append(c)
    return RootedTree.from_clades(sorted(leaves), kept)
