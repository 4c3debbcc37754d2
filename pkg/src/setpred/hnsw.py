"""Approximate top-s retrieval over class weight vectors.

A multi-layer proximity graph is built over the rows of a weight
matrix. Layer 0 holds every class; higher layers hold geometrically
sparser subsets and act as entry ramps for the greedy descent. Queries
walk the top layers greedily (candidate list of one) and then run a
best-first beam of width ef over layer 0, returning the classes with
the (approximately) largest inner products against the query vector.

Similarity is the raw inner product by default; the graph is traversed
in a non-metric fashion. The optional ``augmented`` build instead uses
the classic reduction of inner-product search to nearest neighbors:
every weight vector w is extended with sqrt(phi^2 - ||w||^2), with phi
the largest norm, queries are extended with 0, and edges follow the
negated squared euclidean distance in the extended space. Orderings
against a fixed query coincide; the two modes differ only in which
edges get built.

Neighbor selection during construction keeps the plain best-M by
similarity (no diversity heuristic); together with ef_construction it
is the main recall/speed knob. Per node and layer the degree is capped
at M, with the customary 2M allowance on layer 0.

Index file layout (all integers little-endian, version 1):

    magic b"SPHN" | u32 version | u32 dim | u32 K | u32 M
    u32 ef_construction | u32 n_layers | u64 seed | u32 entry_point
    u32 flags (bit 0: augmented build)
    then per layer, bottom first:
        u32 member_count
        per member in ascending node id:
            u32 node id delta (first member: the id itself)
            u32 neighbor_count
            u32 neighbor id deltas, ascending (first: the id itself)

Weight vectors are not part of the file; the loader re-attaches the
index to the model weights and checks their shape.
"""

from __future__ import annotations

import heapq
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, DimensionMismatch, EmptyInput, InvalidParams
from .linear import LinearModel

MAGIC = b"SPHN"
VERSION = 1


@dataclass
class HnswParams:
    m: int = 10
    ef_construction: int = 50
    level_lambda: float | None = None  # defaults to 1 / ln(m)
    seed: int = 0
    augmented: bool = False

    def resolved_lambda(self) -> float:
        if self.level_lambda is not None:
            return self.level_lambda
        return 1.0 / math.log(max(self.m, 2))


@dataclass
class QueryStats:
    """Mutable counters a caller may pass to instrument a query."""

    dot_products: int = 0
    nodes_visited: int = 0


class HnswIndex:
    """Layered proximity graph over K weight vectors; immutable once built."""

    def __init__(self, vectors: np.ndarray, params: HnswParams,
                 layers: list[dict[int, list[int]]], entry_point: int):
        self.vectors = vectors
        self.params = params
        self.layers = layers
        self.entry_point = entry_point
        if params.augmented:
            norms_sq = np.square(vectors).sum(axis=1)
            phi_sq = norms_sq.max()
            extra = np.sqrt(np.maximum(phi_sq - norms_sq, 0.0))
            self._aug = np.hstack([vectors, extra[:, None]])
            self._aug_norms = np.square(self._aug).sum(axis=1)
        else:
            self._aug = None
            self._aug_norms = None

    @property
    def n_classes(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def _query_repr(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size != self.dim:
            raise DimensionMismatch(f"query has dimension {x.size}, index has {self.dim}")
        if self._aug is not None:
            return np.append(x, 0.0)
        return x

    def _node_repr(self, i: int) -> np.ndarray:
        """Node-as-query representation used while building edges."""
        if self._aug is not None:
            return self._aug[i]
        return self.vectors[i]

    def _sims(self, q: np.ndarray, nodes: list[int], stats: QueryStats | None) -> np.ndarray:
        if stats is not None:
            stats.dot_products += len(nodes)
        if self._aug is not None:
            # negated squared distance up to a constant in the query
            return 2.0 * (self._aug[nodes] @ q) - self._aug_norms[nodes]
        return self.vectors[nodes] @ q

    def _search_layer(self, q, entry_ids, layer, ef, stats=None):
        """Best-first beam search; returns (sim, id) sorted best-first."""
        adjacency = self.layers[layer]
        entry_ids = [v for v in entry_ids if v in adjacency]
        visited = set(entry_ids)
        sims = self._sims(q, entry_ids, stats)
        candidates = [(-s, v) for s, v in zip(sims, entry_ids)]
        heapq.heapify(candidates)
        best = list(zip(sims, entry_ids))
        heapq.heapify(best)
        while candidates:
            neg_sim, v = heapq.heappop(candidates)
            if len(best) >= ef and -neg_sim < best[0][0]:
                break
            if stats is not None:
                stats.nodes_visited += 1
            fresh = [u for u in adjacency[v] if u not in visited]
            if not fresh:
                continue
            visited.update(fresh)
            for s, u in zip(self._sims(q, fresh, stats), fresh):
                if len(best) < ef:
                    heapq.heappush(best, (s, u))
                    heapq.heappush(candidates, (-s, u))
                elif s > best[0][0]:
                    heapq.heappushpop(best, (s, u))
                    heapq.heappush(candidates, (-s, u))
        return sorted(best, key=lambda t: (-t[0], t[1]))

    def query(self, x, k: int, ef_search: int, stats: QueryStats | None = None):
        """Approximate top-k classes by inner product with x.

        Returns at most k (class_id, inner_product) pairs, best first;
        ties broken by ascending id. ef_search below k is raised to k.
        """
        if k < 1:
            raise InvalidParams("k must be positive")
        q = self._query_repr(x)
        ef = max(ef_search, k)
        ep = [self.entry_point]
        for layer in range(self.n_layers - 1, 0, -1):
            found = self._search_layer(q, ep, layer, ef=1, stats=stats)
            ep = [v for _, v in found]
        found = self._search_layer(q, ep, 0, ef=ef, stats=stats)
        top = found[:k]
        if self._aug is None:
            return [(v, s) for s, v in top]
        ids = [v for _, v in top]
        raw = self.vectors[ids] @ np.asarray(x, dtype=np.float64).ravel()
        if stats is not None:
            stats.dot_products += len(ids)
        return sorted(zip(ids, raw.tolist()), key=lambda t: (-t[1], t[0]))

    def reachable_from_entry(self, layer: int = 0) -> set[int]:
        """Nodes reachable from the entry point along directed edges."""
        adjacency = self.layers[layer]
        if self.entry_point not in adjacency:
            return set()
        seen = {self.entry_point}
        stack = [self.entry_point]
        while stack:
            v = stack.pop()
            for u in adjacency[v]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        return seen


def mips_vectors(model: LinearModel) -> np.ndarray:
    """Retrieval vectors for a linear model: the bias folds in as a
    constant coordinate, so index scores equal w . x + b for queries
    extended with a trailing 1."""
    return np.hstack([model.weights, model.bias[:, None]])


def build_model_index(model: LinearModel, params: HnswParams | None = None) -> HnswIndex:
    """Index a model's classes for inner-product retrieval."""
    return hnsw_build(mips_vectors(model), params)


def hnsw_build(weights: np.ndarray, params: HnswParams | None = None) -> HnswIndex:
    """Insert all weight vectors into a fresh layered graph.

    Node ids are the row indices of the weight matrix. Level draws,
    and therefore the whole graph, are deterministic for a fixed seed.
    """
    params = params or HnswParams()
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[0] == 0:
        raise EmptyInput("need at least one weight vector")
    if params.m < 1 or params.ef_construction < 1:
        raise InvalidParams("m and ef_construction must be positive")
    K = weights.shape[0]
    rng = np.random.default_rng(params.seed)
    lam = params.resolved_lambda()
    levels = np.floor(-np.log(rng.uniform(size=K)) * lam).astype(np.int64)

    index = HnswIndex(weights, params, layers=[], entry_point=0)
    layers: list[dict[int, list[int]]] = [{} for _ in range(int(levels.max()) + 1)]
    index.layers = layers

    def cap(layer: int) -> int:
        return 2 * params.m if layer == 0 else params.m

    entry = 0
    top = int(levels[0])
    for lc in range(top + 1):
        layers[lc][0] = []
    for i in range(1, K):
        q = index._node_repr(i)
        level = int(levels[i])
        ep = [entry]
        for lc in range(top, level, -1):
            ep = [v for _, v in index._search_layer(q, ep, lc, ef=1)]
        for lc in range(min(top, level), -1, -1):
            found = index._search_layer(q, ep, lc, ef=params.ef_construction)
            neighbors = [v for _, v in found[: params.m]]
            layers[lc][i] = sorted(neighbors)
            for u in neighbors:
                peers = layers[lc][u]
                peers.append(i)
                if len(peers) > cap(lc):
                    sims = index._sims(index._node_repr(u), peers, None)
                    keep = sorted(
                        zip(sims, peers), key=lambda t: (-t[0], t[1])
                    )[: cap(lc)]
                    layers[lc][u] = sorted(v for _, v in keep)
                else:
                    peers.sort()
            ep = [v for _, v in found]
        for lc in range(top + 1, level + 1):
            layers[lc][i] = []
        if level > top:
            entry = i
            top = level
    index.entry_point = entry
    return index


def save_index(index: HnswIndex, path) -> None:
    """Write the documented binary layout; see the module docstring."""
    parts = [
        MAGIC,
        struct.pack(
            "<IIIIIIQII",
            VERSION,
            index.dim,
            index.n_classes,
            index.params.m,
            index.params.ef_construction,
            index.n_layers,
            index.params.seed,
            index.entry_point,
            1 if index.params.augmented else 0,
        ),
    ]
    for adjacency in index.layers:
        members = sorted(adjacency)
        parts.append(struct.pack("<I", len(members)))
        prev = 0
        for v in members:
            neigh = adjacency[v]
            parts.append(struct.pack("<II", v - prev, len(neigh)))
            prev = v
            last = 0
            for u in neigh:
                parts.append(struct.pack("<I", u - last))
                last = u
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_index(path, weights: np.ndarray) -> HnswIndex:
    """Read an index file and re-attach it to the given weight matrix."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise DataFormatError("not an index file (bad magic)")
    header = struct.unpack_from("<IIIIIIQII", blob, 4)
    version, dim, K, m, ef_c, n_layers, seed, entry, flags = header
    if version != VERSION:
        raise DataFormatError(f"unsupported index version {version}")
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (K, dim):
        raise DimensionMismatch(
            f"index was built over shape {(K, dim)}, weights have {weights.shape}"
        )
    offset = 4 + struct.calcsize("<IIIIIIQII")
    layers: list[dict[int, list[int]]] = []
    for _ in range(n_layers):
        (count,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        adjacency: dict[int, list[int]] = {}
        node = 0
        for j in range(count):
            delta, n_neigh = struct.unpack_from("<II", blob, offset)
            offset += 8
            node = node + delta if j else delta
            neigh = []
            last = 0
            for t in range(n_neigh):
                (d,) = struct.unpack_from("<I", blob, offset)
                offset += 4
                last = last + d if t else d
                neigh.append(last)
            adjacency[node] = neigh
        layers.append(adjacency)
    params = HnswParams(m=m, ef_construction=ef_c, seed=seed, augmented=bool(flags & 1))
    index = HnswIndex(weights, params, layers, entry)
    return index


def load_model_index(path, model: LinearModel) -> HnswIndex:
    """Load an index file for a model, bias-folded or plain."""
    try:
        return load_index(path, mips_vectors(model))
    except DimensionMismatch:
        return load_index(path, model.weights)


class HsgProvider:
    """Index-backed provider with query-size doubling.

    The initial query retrieves k0 classes; whenever the stream runs
    past what has been retrieved, the index is re-queried with twice
    the current list size (capped at K) and only the new ids are
    appended, so the already-emitted prefix never changes. Masses are
    exp(score - shift), with the shift fixed from the first batch.

    Under approximation a later batch can surface a class whose mass
    exceeds the last emitted one; such entries are clamped to the last
    emitted mass so the emission stays non-increasing, and counted in
    ``stats.late_finds`` for diagnostics. The candidate-list width per
    index query follows the current query size unless a fixed
    ``ef_search`` floor is given.
    """

    def __init__(self, model: LinearModel, index: HnswIndex, k0: int = 10,
                 ef_search: int | None = None):
        if index.n_classes != model.n_classes:
            raise DimensionMismatch("index does not match the model's class count")
        if index.dim == model.n_features + 1:
            self._fold_bias = True  # built over mips_vectors(model)
        elif index.dim == model.n_features:
            self._fold_bias = False
        else:
            raise DimensionMismatch("index does not match the model weights")
        if k0 < 1:
            raise InvalidParams("k0 must be positive")
        self.model = model
        self.index = index
        self.k0 = k0
        self.ef_search = ef_search
        self.num_classes = model.n_classes
        self.stats = HsgStats()
        self._x = None
        self._retrieved: list[tuple[int, float]] = []
        self._seen: set[int] = set()
        self._cursor = 0
        self._current_k = 0
        self._shift = 0.0

    def _ef(self, k: int) -> int:
        return max(self.ef_search or 0, k)

    def init_prediction(self, x) -> None:
        self._x = np.asarray(x, dtype=np.float64).ravel()
        if self._fold_bias:
            self._x = np.append(self._x, 1.0)
        self.stats = HsgStats()
        qs = QueryStats()
        k = min(self.k0, self.num_classes)
        batch = self.index.query(self._x, k, self._ef(k), stats=qs)
        self.stats.add_query(qs)
        self.stats.query_sizes.append(k)
        self._shift = max((score for _, score in batch), default=0.0)
        entries = [(c, math.exp(score - self._shift)) for c, score in batch]
        entries.sort(key=lambda t: (-t[1], t[0]))
        self._retrieved = entries
        self._seen = {c for c, _ in entries}
        self._cursor = 0
        self._current_k = k

    def _double(self) -> None:
        while self._cursor == len(self._retrieved) and self._current_k < self.num_classes:
            k = min(2 * len(self._retrieved), self.num_classes)
            qs = QueryStats()
            batch = self.index.query(self._x, k, self._ef(k), stats=qs)
            self.stats.add_query(qs)
            self.stats.query_sizes.append(k)
            self._current_k = k
            fresh = [(c, s) for c, s in batch if c not in self._seen]
            if not fresh:
                continue
            floor = self._retrieved[self._cursor - 1][1] if self._cursor else math.inf
            tail = self._retrieved[self._cursor:]
            for c, score in fresh:
                mass = math.exp(score - self._shift)
                if mass > floor:
                    mass = floor
                    self.stats.late_finds += 1
                tail.append((c, mass))
                self._seen.add(c)
            tail.sort(key=lambda t: (-t[1], t[0]))
            self._retrieved = self._retrieved[: self._cursor] + tail

    def get_next_class(self):
        if self._x is None:
            raise RuntimeError("init_prediction was not called")
        if self._cursor == len(self._retrieved):
            self._double()
            if self._cursor == len(self._retrieved):
                return None
        item = self._retrieved[self._cursor]
        self._cursor += 1
        return item


@dataclass
class HsgStats:
    dot_products: int = 0
    nodes_visited: int = 0
    queries: int = 0
    late_finds: int = 0
    query_sizes: list[int] = field(default_factory=list)

    def add_query(self, qs: QueryStats) -> None:
        self.queries += 1
        self.dot_products += qs.dot_products
        self.nodes_visited += qs.nodes_visited
