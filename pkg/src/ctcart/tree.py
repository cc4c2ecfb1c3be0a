"""Binary decision trees: topology, split rules and terminal maps.

A tree is a full binary tree stored in a node arena.  Node ids are stable:
read-only operations never change them, and structural edits (birth, death,
rotation) preserve the ids of all surviving nodes.  Freed arena slots are
reused smallest-first so that id ranges stay compact and runs are
reproducible.  All editing operations return a new tree; the input is never
mutated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

LEFT = 0
RIGHT = 1

ROTATION_NAMES = {LEFT: "left", RIGHT: "right"}


class SplitRule(NamedTuple):
    variable: int
    cutpoint_index: int


@dataclass(frozen=True)
class Internal:
    rule: SplitRule
    left: int
    right: int


@dataclass(frozen=True)
class Leaf:
    mu: float | None = None


class TreeError(ValueError):
    """Raised on invalid structural edits or malformed serializations."""


@dataclass
class Tree:
    """Node arena plus root index.  Entries that are None are free slots."""

    nodes: list
    root: int = 0

    @classmethod
    def single_leaf(cls, mu: float | None = None) -> "Tree":
        return cls(nodes=[Leaf(mu)], root=0)

    # -- queries ----------------------------------------------------------

    def node(self, node_id: int):
        nd = self.nodes[node_id]
        if nd is None:
            raise TreeError(f"node {node_id} is a free slot")
        return nd

    def is_leaf(self, node_id: int) -> bool:
        return isinstance(self.node(node_id), Leaf)

    def node_ids(self) -> list[int]:
        return [i for i, nd in enumerate(self.nodes) if nd is not None]

    def leaf_ids(self) -> list[int]:
        return [i for i in self.node_ids() if isinstance(self.nodes[i], Leaf)]

    def internal_ids(self) -> list[int]:
        return [i for i in self.node_ids() if isinstance(self.nodes[i], Internal)]

    @property
    def n_terminal(self) -> int:
        return len(self.leaf_ids())

    @property
    def n_internal(self) -> int:
        return len(self.internal_ids())

    def depths(self) -> dict[int, int]:
        """Depth of every live node; the root has depth 0."""
        out = {}
        stack = [(self.root, 0)]
        while stack:
            i, d = stack.pop()
            out[i] = d
            nd = self.node(i)
            if isinstance(nd, Internal):
                stack.append((nd.left, d + 1))
                stack.append((nd.right, d + 1))
        return out

    def parent_map(self) -> dict[int, tuple[int, int]]:
        """Map child id -> (parent id, LEFT or RIGHT)."""
        out = {}
        for i in self.internal_ids():
            nd = self.nodes[i]
            out[nd.left] = (i, LEFT)
            out[nd.right] = (i, RIGHT)
        return out

    def subtree_leaf_ids(self, node_id: int) -> list[int]:
        out = []
        stack = [node_id]
        while stack:
            i = stack.pop()
            nd = self.node(i)
            if isinstance(nd, Leaf):
                out.append(i)
            else:
                stack.append(nd.right)
                stack.append(nd.left)
        return sorted(out)

    def subtree_node_ids(self, node_id: int) -> list[int]:
        out = []
        stack = [node_id]
        while stack:
            i = stack.pop()
            out.append(i)
            nd = self.node(i)
            if isinstance(nd, Internal):
                stack.append(nd.right)
                stack.append(nd.left)
        return sorted(out)

    # -- allocation -------------------------------------------------------

    def _copy_nodes(self) -> list:
        return list(self.nodes)

    @staticmethod
    def _alloc(nodes: list) -> int:
        for i, nd in enumerate(nodes):
            if nd is None:
                return i
        nodes.append(None)
        return len(nodes) - 1

    def validate(self) -> None:
        """Raise TreeError unless this is a well-formed full binary tree."""
        seen: set[int] = set()
        stack = [self.root]
        while stack:
            i = stack.pop()
            if not (0 <= i < len(self.nodes)) or self.nodes[i] is None:
                raise TreeError(f"dangling child reference {i}")
            if i in seen:
                raise TreeError(f"node {i} reached twice")
            seen.add(i)
            nd = self.nodes[i]
            if isinstance(nd, Internal):
                stack.append(nd.left)
                stack.append(nd.right)
        live = {i for i, nd in enumerate(self.nodes) if nd is not None}
        if live != seen:
            raise TreeError(f"unreachable arena slots: {sorted(live - seen)}")
        mus = [self.nodes[i].mu is not None for i in self.leaf_ids()]
        if any(mus) and not all(mus):
            raise TreeError("mixed terminal maps: some leaves carry mu, some do not")


# -- editing operations (persistent: each returns a new tree) --------------


def terminal_nodes(tree: Tree) -> list[int]:
    """Terminal node ids in ascending order."""
    return tree.leaf_ids()


def death_candidates(tree: Tree) -> list[int]:
    """Internal nodes with two terminal children (the only legal death sites)."""
    out = []
    for i in tree.internal_ids():
        nd = tree.nodes[i]
        if tree.is_leaf(nd.left) and tree.is_leaf(nd.right):
            out.append(i)
    return out


def apply_birth(
    tree: Tree,
    terminal: int,
    rule: SplitRule,
    mus: tuple[float, float] | None = None,
) -> Tree:
    """Split a terminal node, turning it into an internal node with two fresh leaves.

    The split node keeps its id; the children take the two smallest free
    arena slots (left first).  ``mus`` supplies the children's terminal maps
    when sampling in full (non-marginalized) mode.
    """
    if not tree.is_leaf(terminal):
        raise TreeError(f"birth target {terminal} is not a terminal node")
    ml, mr = mus if mus is not None else (None, None)
    nodes = tree._copy_nodes()
    left = Tree._alloc(nodes)
    nodes[left] = Leaf(ml)
    right = Tree._alloc(nodes)
    nodes[right] = Leaf(mr)
    nodes[terminal] = Internal(rule, left, right)
    return Tree(nodes=nodes, root=tree.root)


def apply_death(tree: Tree, collapsible: int, mu: float | None = None) -> Tree:
    """Collapse an internal node whose children are both terminal."""
    if collapsible not in death_candidates(tree):
        raise TreeError(f"node {collapsible} is not collapsible")
    nd = tree.nodes[collapsible]
    nodes = tree._copy_nodes()
    nodes[nd.left] = None
    nodes[nd.right] = None
    nodes[collapsible] = Leaf(mu)
    while nodes and nodes[-1] is None:
        nodes.pop()
    return Tree(nodes=nodes, root=tree.root)


def rotate_candidates(tree: Tree) -> list[tuple[int, int]]:
    """Legal (node, outcome) rotation pairs, ascending by node then outcome.

    A left rotation at a node requires an internal right child; a right
    rotation requires an internal left child.
    """
    out = []
    for i in tree.internal_ids():
        nd = tree.nodes[i]
        if not tree.is_leaf(nd.right):
            out.append((i, LEFT))
        if not tree.is_leaf(nd.left):
            out.append((i, RIGHT))
    return out


def apply_rotate(tree: Tree, node: int, outcome: int) -> Tree:
    """Classic binary-search-tree rotation; rules travel with their nodes.

    The promoted child takes the rotated node's place (so the subtree keeps
    covering the same feature-space region) and every node keeps its id.
    Self-inverse as a family: a right rotation at ``node`` is undone by a
    left rotation at the promoted child, and vice versa.
    """
    nd = tree.node(node)
    if not isinstance(nd, Internal):
        raise TreeError(f"rotation site {node} is not internal")
    nodes = tree._copy_nodes()
    if outcome == RIGHT:
        pivot = nd.left
        pv = tree.node(pivot)
        if not isinstance(pv, Internal):
            raise TreeError(f"right rotation at {node} needs an internal left child")
        nodes[node] = Internal(nd.rule, pv.right, nd.right)
        nodes[pivot] = Internal(pv.rule, pv.left, node)
    elif outcome == LEFT:
        pivot = nd.right
        pv = tree.node(pivot)
        if not isinstance(pv, Internal):
            raise TreeError(f"left rotation at {node} needs an internal right child")
        nodes[node] = Internal(nd.rule, nd.left, pv.left)
        nodes[pivot] = Internal(pv.rule, node, pv.right)
    else:
        raise TreeError(f"unknown rotation outcome {outcome}")
    root = tree.root
    if node == root:
        root = pivot
    else:
        parent, side = tree.parent_map()[node]
        pn = nodes[parent]
        if side == LEFT:
            nodes[parent] = Internal(pn.rule, pivot, pn.right)
        else:
            nodes[parent] = Internal(pn.rule, pn.left, pivot)
    return Tree(nodes=nodes, root=root)


def replace_rule(tree: Tree, node: int, rule: SplitRule) -> Tree:
    """Swap the split rule at an internal node (used by the perturb step)."""
    nd = tree.node(node)
    if not isinstance(nd, Internal):
        raise TreeError(f"node {node} is not internal")
    nodes = tree._copy_nodes()
    nodes[node] = Internal(rule, nd.left, nd.right)
    return Tree(nodes=nodes, root=tree.root)


def set_leaf_mus(tree: Tree, mus: dict[int, float | None]) -> Tree:
    nodes = tree._copy_nodes()
    for i, mu in mus.items():
        if not isinstance(nodes[i], Leaf):
            raise TreeError(f"node {i} is not terminal")
        nodes[i] = Leaf(mu)
    return Tree(nodes=nodes, root=tree.root)


# -- routing ----------------------------------------------------------------


def route(
    tree: Tree,
    features: np.ndarray,
    grids: list[np.ndarray],
    idx: np.ndarray | None = None,
    start: int | None = None,
) -> dict[int, np.ndarray]:
    """Route observation indices to leaves; x <= cutpoint goes left."""
    if idx is None:
        idx = np.arange(features.shape[0])
    start = tree.root if start is None else start
    out: dict[int, np.ndarray] = {}
    stack = [(start, idx)]
    while stack:
        i, sub = stack.pop()
        nd = tree.node(i)
        if isinstance(nd, Leaf):
            out[i] = sub
        else:
            cut = grids[nd.rule.variable][nd.rule.cutpoint_index]
            go_left = features[sub, nd.rule.variable] <= cut
            stack.append((nd.left, sub[go_left]))
            stack.append((nd.right, sub[~go_left]))
    return out


def partition(tree: Tree, data) -> np.ndarray:
    """Leaf id reached by each observation of ``data`` (a Dataset)."""
    cells = route(tree, data.features, data.cutpoint_grids)
    out = np.empty(data.n, dtype=np.int64)
    for leaf, sub in cells.items():
        out[sub] = leaf
    return out


# -- canonical serialization ------------------------------------------------


def to_canonical(tree: Tree) -> str:
    """Pre-order text form: internal `I(v=..,c=..)(left,right)`, terminal `T`.

    Terminal maps are deliberately omitted so that the string identifies the
    (topology, rules) pair used for unique-tree counting.
    """
    parts: list[str] = []

    def emit(i: int) -> None:
        nd = tree.node(i)
        if isinstance(nd, Leaf):
            parts.append("T")
        else:
            parts.append(f"I(v={nd.rule.variable},c={nd.rule.cutpoint_index})(")
            emit(nd.left)
            parts.append(",")
            emit(nd.right)
            parts.append(")")

    emit(tree.root)
    return "".join(parts)


def from_canonical(text: str) -> Tree:
    """Parse the canonical pre-order form back into a tree."""
    nodes: list = []
    pos = 0

    def fail(msg: str) -> TreeError:
        return TreeError(f"bad tree string at position {pos}: {msg}")

    def expect(tok: str) -> None:
        nonlocal pos
        if not text.startswith(tok, pos):
            raise fail(f"expected {tok!r}")
        pos += len(tok)

    def parse_int() -> int:
        nonlocal pos
        j = pos
        while j < len(text) and (text[j].isdigit() or text[j] == "-"):
            j += 1
        if j == pos:
            raise fail("expected an integer")
        val = int(text[pos:j])
        pos = j
        return val

    def parse_node() -> int:
        nonlocal pos
        my_id = len(nodes)
        nodes.append(None)
        if text.startswith("T", pos):
            pos += 1
            nodes[my_id] = Leaf(None)
            return my_id
        expect("I(v=")
        var = parse_int()
        expect(",c=")
        cut = parse_int()
        expect(")(")
        left = parse_node()
        expect(",")
        right = parse_node()
        expect(")")
        nodes[my_id] = Internal(SplitRule(var, cut), left, right)
        return my_id

    root = parse_node()
    if pos != len(text):
        raise fail("trailing characters")
    tree = Tree(nodes=nodes, root=root)
    tree.validate()
    return tree


def trees_equal(a: Tree, b: Tree) -> bool:
    """Equality of (topology, rules), ignoring terminal maps and node ids."""
    return to_canonical(a) == to_canonical(b)


def iter_rules(tree: Tree) -> Iterator[SplitRule]:
    for i in tree.internal_ids():
        yield tree.nodes[i].rule
