"""Label trees: construction, chain-rule factorization, best-first search.

A tree over the class space lets the conditional class probability be
written as the product of child-given-parent factors along the path
from the root to the class leaf. Because every factor is at most one,
path products only shrink along edges, so a max-priority queue over
partial paths emits classes in exact non-increasing probability order.

Trees come from three places: a user-supplied hierarchy file, balanced
2-means clustering of class profile vectors, or Huffman coding of class
frequencies.

Hierarchy file format (UTF-8 text, ``#`` comments allowed):

    parent_id<TAB>child_id      one edge per line
    L<TAB>node_id<TAB>class_id  leaf-to-class mapping lines

Node ids are arbitrary non-negative integers; they are remapped to a
dense internal numbering on load.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CycleDetected,
    EmptyInput,
    InvalidParams,
    MissingNodeModel,
    MultipleRoots,
    UnaryInternalNode,
    UnmappedClass,
    UnnormalizedNode,
)

NODE_SUM_TOL = 1e-9


@dataclass
class LabelTree:
    parent: list[int | None]
    children: list[list[int]]
    node_class: list[int | None]
    root: int
    leaf_of: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.leaf_of:
            self.leaf_of = {
                c: v for v, c in enumerate(self.node_class) if c is not None
            }

    @property
    def n_nodes(self) -> int:
        return len(self.parent)

    @property
    def n_classes(self) -> int:
        return len(self.leaf_of)

    def is_leaf(self, node: int) -> bool:
        return not self.children[node]

    def internal_nodes(self) -> list[int]:
        return [v for v in range(self.n_nodes) if self.children[v]]

    def path(self, class_id: int) -> list[int]:
        """Nodes from the root down to the class leaf."""
        if class_id not in self.leaf_of:
            raise UnmappedClass(f"class {class_id} has no leaf")
        nodes = []
        v: int | None = self.leaf_of[class_id]
        while v is not None:
            nodes.append(v)
            v = self.parent[v]
        return nodes[::-1]

    def depth(self, class_id: int) -> int:
        return len(self.path(class_id)) - 1

    def subtree_classes(self) -> list[set[int]]:
        """Class set under each node, computed bottom-up."""
        sets: list[set[int]] = [set() for _ in range(self.n_nodes)]
        for v in reversed(self._topo_order()):
            if self.node_class[v] is not None:
                sets[v].add(self.node_class[v])
            for ch in self.children[v]:
                sets[v] |= sets[ch]
        return sets

    def _topo_order(self) -> list[int]:
        order = []
        stack = [self.root]
        while stack:
            v = stack.pop()
            order.append(v)
            stack.extend(reversed(self.children[v]))
        return order

    def validate(self) -> "LabelTree":
        n = self.n_nodes
        roots = [v for v in range(n) if self.parent[v] is None]
        if len(roots) != 1 or roots[0] != self.root:
            raise MultipleRoots(f"found {len(roots)} roots")
        order = self._topo_order()
        if len(order) != n or len(set(order)) != n:
            raise CycleDetected("nodes unreachable from the root")
        for v in range(n):
            has_class = self.node_class[v] is not None
            if self.children[v]:
                if has_class:
                    raise UnmappedClass(f"internal node {v} carries a class")
                if len(self.children[v]) < 2:
                    raise UnaryInternalNode(f"node {v} has a single child")
            elif not has_class:
                raise UnmappedClass(f"leaf node {v} has no class")
        classes = [c for c in self.node_class if c is not None]
        if len(classes) != len(set(classes)):
            raise UnmappedClass("a class maps to more than one leaf")
        return self


def load_hierarchy(text: str) -> LabelTree:
    """Parse the edge-list hierarchy format into a validated LabelTree."""
    edges: list[tuple[int, int]] = []
    leaf_lines: list[tuple[int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "L":
                if len(parts) != 3:
                    raise ValueError
                leaf_lines.append((int(parts[1]), int(parts[2])))
            else:
                if len(parts) != 2:
                    raise ValueError
                edges.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise InvalidParams(f"hierarchy line {lineno}: cannot parse {raw!r}") from None

    ids: list[int] = []
    seen: set[int] = set()
    for p, c in edges:
        for v in (p, c):
            if v not in seen:
                seen.add(v)
                ids.append(v)
    for v, _ in leaf_lines:
        if v not in seen:
            seen.add(v)
            ids.append(v)
    if not ids:
        raise EmptyInput("hierarchy has no nodes")
    dense = {ext: i for i, ext in enumerate(ids)}

    n = len(ids)
    parent: list[int | None] = [None] * n
    children: list[list[int]] = [[] for _ in range(n)]
    for p, c in edges:
        pi, ci = dense[p], dense[c]
        if parent[ci] is not None:
            raise CycleDetected(f"node {c} has multiple parents")
        parent[ci] = pi
        children[pi].append(ci)
    roots = [v for v in range(n) if parent[v] is None]
    if not roots:
        raise CycleDetected("every node has a parent; the edges close a cycle")
    if len(roots) > 1:
        raise MultipleRoots(f"found {len(roots)} root candidates")

    node_class: list[int | None] = [None] * n
    for ext, cls in leaf_lines:
        v = dense[ext]
        if node_class[v] is not None:
            raise UnmappedClass(f"node {ext} mapped to two classes")
        node_class[v] = cls

    tree = LabelTree(parent, children, node_class, roots[0])
    return tree.validate()


def relabel_preorder(tree: LabelTree) -> tuple[LabelTree, dict[int, int]]:
    """Renumber nodes in depth-first preorder (root becomes 0).

    Preorder is the numbering load_hierarchy reconstructs from a dumped
    file, so serialization round-trips are id-stable. Returns the
    relabeled tree and the old-to-new id mapping.
    """
    order = tree._topo_order()
    mapping = {old: new for new, old in enumerate(order)}
    n = len(order)
    parent: list[int | None] = [None] * n
    children: list[list[int]] = [[] for _ in range(n)]
    node_class: list[int | None] = [None] * n
    for old in order:
        new = mapping[old]
        if tree.parent[old] is not None:
            parent[new] = mapping[tree.parent[old]]
        children[new] = [mapping[c] for c in tree.children[old]]
        node_class[new] = tree.node_class[old]
    return LabelTree(parent, children, node_class, 0), mapping


def dump_hierarchy(tree: LabelTree) -> str:
    """Serialize to the edge-list format with canonical preorder ids."""
    canon, _ = relabel_preorder(tree)
    lines = []
    for v in canon._topo_order():
        if canon.parent[v] is not None:
            lines.append(f"{canon.parent[v]}\t{v}")
    for v in range(canon.n_nodes):
        if canon.node_class[v] is not None:
            lines.append(f"L\t{v}\t{canon.node_class[v]}")
    return "\n".join(lines) + "\n"


# --- builders ---------------------------------------------------------------


class _Builder:
    def __init__(self):
        self.parent: list[int | None] = []
        self.children: list[list[int]] = []
        self.node_class: list[int | None] = []

    def add(self, parent: int | None, class_id: int | None = None) -> int:
        v = len(self.parent)
        self.parent.append(parent)
        self.children.append([])
        self.node_class.append(class_id)
        if parent is not None:
            self.children[parent].append(v)
        return v

    def tree(self, root: int) -> LabelTree:
        return LabelTree(self.parent, self.children, self.node_class, root)


def class_profiles(dataset) -> np.ndarray:
    """L2-normalized mean feature vector per class (dense, K x D)."""
    K = dataset.n_classes
    sums = np.zeros((K, dataset.n_features))
    counts = np.zeros(K)
    X = dataset.X.tocsr()
    for c in range(K):
        rows = np.flatnonzero(dataset.y == c)
        if rows.size:
            sums[c] = np.asarray(X[rows].sum(axis=0)).ravel() / rows.size
            counts[c] = rows.size
    norms = np.linalg.norm(sums, axis=1)
    norms[norms == 0.0] = 1.0
    return sums / norms[:, None]


def _balanced_split(ids: np.ndarray, profiles: np.ndarray, eps_c: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Split ids into two halves (sizes differing by at most one).

    Standard 2-means assignment followed by a rebalance: points are
    ranked by the signed margin between their distances to the two
    centroids and the closest half is given to each side. Centroids
    iterate until movement drops below eps_c or 50 rounds.
    """
    X = profiles[ids]
    n = len(ids)
    start = rng.choice(n, size=2, replace=False)
    c0, c1 = X[start[0]].copy(), X[start[1]].copy()
    n0 = (n + 1) // 2
    left = right = None
    for _ in range(50):
        d0 = np.square(X - c0).sum(axis=1)
        d1 = np.square(X - c1).sum(axis=1)
        order = np.lexsort((ids, d0 - d1))
        left, right = order[:n0], order[n0:]
        new_c0 = X[left].mean(axis=0)
        new_c1 = X[right].mean(axis=0)
        move = max(np.linalg.norm(new_c0 - c0), np.linalg.norm(new_c1 - c1))
        c0, c1 = new_c0, new_c1
        if move < eps_c:
            break
    return ids[np.sort(left)], ids[np.sort(right)]


def build_2means_tree(
    profiles: np.ndarray,
    max_leaf: int = 20,
    eps_c: float = 1e-3,
    seed: int = 0,
) -> LabelTree:
    """Recursive balanced 2-means over class profiles.

    Class sets are halved until a node holds at most max_leaf classes;
    those classes then become its direct leaf children. Deterministic
    for a fixed seed.
    """
    profiles = np.asarray(profiles, dtype=np.float64)
    if profiles.ndim != 2 or profiles.shape[0] == 0:
        raise EmptyInput("need one profile vector per class")
    if max_leaf < 1:
        raise InvalidParams("max_leaf must be positive")
    K = profiles.shape[0]
    rng = np.random.default_rng(seed)
    b = _Builder()

    def grow(ids: np.ndarray, parent: int | None) -> int:
        if len(ids) == 1:
            return b.add(parent, class_id=int(ids[0]))
        v = b.add(parent)
        if len(ids) <= max_leaf:
            for c in ids:
                b.add(v, class_id=int(c))
        else:
            left, right = _balanced_split(ids, profiles, eps_c, rng)
            grow(left, v)
            grow(right, v)
        return v

    root = grow(np.arange(K), None)
    return b.tree(root).validate()


def build_huffman_tree(class_frequencies) -> LabelTree:
    """Binary tree minimizing expected depth under the frequencies.

    Merge ties are broken by the smallest class id contained in the
    subtree, making the construction deterministic.
    """
    freqs = np.asarray(class_frequencies, dtype=np.float64)
    if freqs.size == 0:
        raise EmptyInput("no class frequencies given")
    if np.any(freqs < 0):
        raise InvalidParams("frequencies must be non-negative")
    b = _Builder()
    if freqs.size == 1:
        root = b.add(None, class_id=0)
        return b.tree(root)

    # heap entries: (frequency, smallest class id in subtree, node id)
    heap = []
    for c, f in enumerate(freqs):
        v = b.add(None, class_id=c)
        heap.append((float(f), c, v))
    heapq.heapify(heap)
    while len(heap) > 1:
        f1, m1, v1 = heapq.heappop(heap)
        f2, m2, v2 = heapq.heappop(heap)
        v = b.add(None)
        for ch in (v1, v2):
            b.parent[ch] = v
            b.children[v].append(ch)
        heapq.heappush(heap, (f1 + f2, min(m1, m2), v))
    root = heap[0][2]
    return b.tree(root).validate()


# --- factorized probabilities ------------------------------------------------


def _node_dist(tree: LabelTree, node_probs, node: int) -> np.ndarray:
    try:
        dist = np.asarray(node_probs[node], dtype=np.float64)
    except (KeyError, IndexError):
        raise MissingNodeModel(f"no child distribution for node {node}") from None
    if dist.shape != (len(tree.children[node]),):
        raise UnnormalizedNode(
            f"node {node}: distribution length {dist.shape} does not match children"
        )
    if abs(dist.sum() - 1.0) > NODE_SUM_TOL:
        raise UnnormalizedNode(f"node {node}: child masses sum to {dist.sum()}")
    return dist


def path_probability(tree: LabelTree, node_probs, class_id: int) -> float:
    """Product of child-given-parent factors along the path to class_id.

    node_probs maps each internal node to a distribution over its
    children (in child order); the root contributes a factor of one.
    """
    nodes = tree.path(class_id)
    p = 1.0
    for v, child in zip(nodes, nodes[1:]):
        dist = _node_dist(tree, node_probs, v)
        p *= dist[tree.children[v].index(child)]
    return p


def factorize_distribution(tree: LabelTree, class_masses) -> dict[int, np.ndarray]:
    """Node-level child distributions whose path products recover the input.

    Subtree masses are summed bottom-up and each node's children are
    renormalized by the node total (uniform where the total is zero).
    """
    masses = np.asarray(class_masses, dtype=np.float64)
    subtree = np.zeros(tree.n_nodes)
    order = tree._topo_order()
    for v in reversed(order):
        if tree.node_class[v] is not None:
            subtree[v] += masses[tree.node_class[v]]
        for ch in tree.children[v]:
            subtree[v] += subtree[ch]
    node_probs: dict[int, np.ndarray] = {}
    for v in tree.internal_nodes():
        child_mass = np.array([subtree[ch] for ch in tree.children[v]])
        total = child_mass.sum()
        if total <= 0.0:
            node_probs[v] = np.full(len(child_mass), 1.0 / len(child_mass))
        else:
            node_probs[v] = child_mass / total
    return node_probs


# --- best-first provider ------------------------------------------------------


class TreeProvider:
    """Best-first traversal emitting classes by decreasing path probability.

    ``node_models`` is either a TreeNodeModels bundle or a mapping from
    internal node id to a fixed child distribution. Path probabilities
    accumulate in log space and are exponentiated once on emission, so
    deep trees do not underflow.
    """

    def __init__(self, tree: LabelTree, node_models):
        self.tree = tree
        self.node_models = node_models
        self.num_classes = tree.n_classes
        for v in tree.internal_nodes():
            if not self._covers(v):
                raise MissingNodeModel(f"internal node {v} has no child model")
        self._frontier: list[tuple[float, int]] = []
        self._x = None
        self.nodes_expanded = 0
        self.nodes_visited = 0

    def _covers(self, node: int) -> bool:
        if hasattr(self.node_models, "covers"):
            return self.node_models.covers(node)
        try:
            self.node_models[node]
        except (KeyError, IndexError):
            return False
        return True

    def _child_dist(self, node: int, x) -> np.ndarray:
        if hasattr(self.node_models, "child_dist"):
            dist = np.asarray(self.node_models.child_dist(node, x), dtype=np.float64)
            if abs(dist.sum() - 1.0) > NODE_SUM_TOL:
                raise UnnormalizedNode(f"node {node}: child masses sum to {dist.sum()}")
            return dist
        return _node_dist(self.tree, self.node_models, node)

    def init_prediction(self, x=None) -> None:
        self._x = x
        self._frontier = [(0.0, self.tree.root)]  # (-log p, node)
        self.nodes_expanded = 0
        self.nodes_visited = 0

    def get_next_class(self):
        while self._frontier:
            neg_logp, v = heapq.heappop(self._frontier)
            self.nodes_visited += 1
            cls = self.tree.node_class[v]
            if cls is not None:
                return cls, math.exp(-neg_logp)
            self.nodes_expanded += 1
            dist = self._child_dist(v, self._x)
            with np.errstate(divide="ignore"):
                child_logs = np.log(dist)
            for ch, lg in zip(self.tree.children[v], child_logs):
                heapq.heappush(self._frontier, (neg_logp - lg, ch))
        return None
