"""Taxonomy graph: parsing, validation, augmentation, distances, and splits.

The graph is a single-parent DAG of concepts. Edges point from a specific
child to a more general parent. A synthetic root can be attached so that
every node pair is connected, which makes all shortest-path hop counts
finite.
"""

from __future__ import annotations

import os
import tempfile
from collections import deque
from dataclasses import dataclass, field

import numpy as np

NodeId = int

DUMMY_LABEL = "__root__"

# Versioned PRNG tag recorded in split files; bump if the shuffle changes.
SPLIT_PRNG = "numpy-pcg64-v1"


class GraphError(ValueError):
    """Raised for malformed edge lists or invalid graph operations."""


@dataclass
class KnowledgeGraph:
    """Single-parent taxonomy with dense integer node ids.

    ``labels[i]`` is the display text of node ``i``; ``parent[i]`` is its
    parent id or ``None`` for subgraph roots (and the dummy root).
    """

    labels: list[str]
    parent: list[NodeId | None]
    children: list[list[NodeId]]
    edges: list[tuple[NodeId, NodeId]]  # (child, parent), insertion order
    subgraph_roots: set[NodeId]
    dummy_root: NodeId | None = None
    label_to_id: dict[str, NodeId] = field(default_factory=dict)

    @property
    def num_nodes(self) -> int:
        return len(self.labels)

    def node_ids(self) -> range:
        return range(len(self.labels))

    def has_node(self, node: NodeId) -> bool:
        return 0 <= node < len(self.labels)

    def is_leaf(self, node: NodeId) -> bool:
        """True for nodes with no children (the dummy root never qualifies)."""
        return not self.children[node] and node != self.dummy_root

    def leaves(self) -> list[NodeId]:
        """Childless nodes, excluding subgraph roots and the dummy root."""
        return [
            n
            for n in self.node_ids()
            if not self.children[n] and n not in self.subgraph_roots and n != self.dummy_root
        ]

    def internal_nodes(self) -> list[NodeId]:
        """Nodes with at least one child, excluding the dummy root."""
        return [n for n in self.node_ids() if self.children[n] and n != self.dummy_root]

    def eligible_children(self) -> list[NodeId]:
        """Nodes that may appear as a child in a split.

        Subgraph roots have no parent and the dummy root is synthetic, so
        neither can be a split child.
        """
        return [
            n
            for n in self.node_ids()
            if n not in self.subgraph_roots and n != self.dummy_root
        ]


def parse_graph(edge_list_text: str) -> KnowledgeGraph:
    """Parse a tab-separated edge list into a validated graph.

    Each non-comment line is ``child<TAB>parent``. Blank lines and lines
    starting with ``#`` are ignored. Labels are case-preserved and interned
    to dense ids in first-seen order.

    Raises:
        GraphError: on malformed lines, duplicate edges, a node with two
            distinct parents, or a directed cycle (the offending cycle is
            named in the message).
    """
    labels: list[str] = []
    label_to_id: dict[str, NodeId] = {}
    parent: list[NodeId | None] = []
    children: list[list[NodeId]] = []
    edges: list[tuple[NodeId, NodeId]] = []
    seen_edges: set[tuple[NodeId, NodeId]] = set()

    def intern(label: str) -> NodeId:
        node = label_to_id.get(label)
        if node is None:
            node = len(labels)
            label_to_id[label] = node
            labels.append(label)
            parent.append(None)
            children.append([])
        return node

    for lineno, raw in enumerate(edge_list_text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise GraphError(f"line {lineno}: expected 'child<TAB>parent', got {raw!r}")
        child_label, parent_label = parts[0].strip(), parts[1].strip()
        if not child_label or not parent_label:
            raise GraphError(f"line {lineno}: empty label")
        c = intern(child_label)
        p = intern(parent_label)
        if (c, p) in seen_edges:
            raise GraphError(f"line {lineno}: duplicate edge {child_label!r} -> {parent_label!r}")
        if parent[c] is not None and parent[c] != p:
            raise GraphError(
                f"line {lineno}: node {child_label!r} has two distinct parents "
                f"({labels[parent[c]]!r} and {parent_label!r}); single-parent graphs only"
            )
        if c == p:
            raise GraphError(f"line {lineno}: self-loop at {child_label!r}")
        seen_edges.add((c, p))
        parent[c] = p
        children[p].append(c)
        edges.append((c, p))

    g = KnowledgeGraph(
        labels=labels,
        parent=parent,
        children=children,
        edges=edges,
        subgraph_roots={n for n in range(len(labels)) if parent[n] is None},
        label_to_id=label_to_id,
    )
    cycle = _find_cycle(g)
    if cycle is not None:
        pretty = " -> ".join(labels[n] for n in cycle)
        raise GraphError(f"directed cycle detected: {pretty}")
    return g


def _find_cycle(g: KnowledgeGraph) -> list[NodeId] | None:
    """Follow parent pointers from every node; return a cycle if one exists."""
    state = [0] * g.num_nodes  # 0 unvisited, 1 on current path, 2 done
    for start in g.node_ids():
        if state[start] != 0:
            continue
        path: list[NodeId] = []
        node: NodeId | None = start
        while node is not None and state[node] == 0:
            state[node] = 1
            path.append(node)
            node = g.parent[node]
        if node is not None and state[node] == 1:
            at = path.index(node)
            return path[at:] + [node]
        for n in path:
            state[n] = 2
    return None


def add_dummy_root(g: KnowledgeGraph, label: str = DUMMY_LABEL) -> KnowledgeGraph:
    """Return a new graph with a synthetic root adopting every subgraph root.

    One edge ``(subgraph_root -> dummy)`` is added per subgraph root, so the
    undirected view of the result is connected.
    """
    if g.dummy_root is not None:
        raise GraphError("dummy root already present")
    if label in g.label_to_id:
        raise GraphError(f"label {label!r} already used by a graph node")
    labels = list(g.labels) + [label]
    parent: list[NodeId | None] = list(g.parent) + [None]
    children = [list(c) for c in g.children] + [[]]
    edges = list(g.edges)
    dummy = len(labels) - 1
    for root in sorted(g.subgraph_roots):
        parent[root] = dummy
        children[dummy].append(root)
        edges.append((root, dummy))
    label_to_id = dict(g.label_to_id)
    label_to_id[label] = dummy
    return KnowledgeGraph(
        labels=labels,
        parent=parent,
        children=children,
        edges=edges,
        subgraph_roots=set(g.subgraph_roots),
        dummy_root=dummy,
        label_to_id=label_to_id,
    )


def _undirected_adjacency(g: KnowledgeGraph) -> list[list[NodeId]]:
    adj: list[list[NodeId]] = [[] for _ in g.node_ids()]
    for c, p in g.edges:
        adj[c].append(p)
        adj[p].append(c)
    return adj


def _bfs_hops(adj: list[list[NodeId]], source: NodeId, n: int, cutoff: int | None = None) -> np.ndarray:
    """Hop counts from ``source`` on an undirected adjacency list (-1 = unreachable)."""
    dist = np.full(n, -1, dtype=np.int32)
    dist[source] = 0
    queue = deque([source])
    while queue:
        node = queue.popleft()
        d = int(dist[node])
        if cutoff is not None and d >= cutoff:
            continue
        for nbr in adj[node]:
            if dist[nbr] < 0:
                dist[nbr] = d + 1
                queue.append(nbr)
    return dist


@dataclass
class DistanceMatrix:
    """All-pairs undirected shortest-path hop counts plus the graph diameter."""

    dist: np.ndarray  # (n, n) int32
    diameter: int

    def __getitem__(self, pair: tuple[NodeId, NodeId]) -> int:
        a, b = pair
        return int(self.dist[a, b])

    @property
    def num_nodes(self) -> int:
        return int(self.dist.shape[0])

    def ring(self, center: NodeId, radius: int) -> np.ndarray:
        """Node ids at exactly ``radius`` hops from ``center``."""
        return np.flatnonzero(self.dist[center] == radius)


def all_pairs_distances(g: KnowledgeGraph) -> DistanceMatrix:
    """Breadth-first hop counts between every node pair.

    The graph must be connected in its undirected view; attach a dummy root
    first when the taxonomy has multiple subgraphs.
    """
    n = g.num_nodes
    if n == 0:
        raise GraphError("empty graph has no distances")
    adj = _undirected_adjacency(g)
    dist = np.empty((n, n), dtype=np.int32)
    for source in g.node_ids():
        row = _bfs_hops(adj, source, n)
        if (row < 0).any():
            missing = int(np.flatnonzero(row < 0)[0])
            raise GraphError(
                f"nodes {g.labels[source]!r} and {g.labels[missing]!r} are disconnected; "
                "add a dummy root to connect all subgraphs"
            )
        dist[source] = row
    return DistanceMatrix(dist=dist, diameter=int(dist.max()))


def neighborhood(g: KnowledgeGraph, center: NodeId, h: int) -> set[NodeId]:
    """All nodes within ``h`` undirected hops of ``center``, minus the dummy root."""
    if not g.has_node(center):
        raise GraphError(f"unknown node id {center}")
    if h < 0:
        raise GraphError("hop radius must be non-negative")
    adj = _undirected_adjacency(g)
    dist = _bfs_hops(adj, center, g.num_nodes, cutoff=h)
    found = {int(n) for n in np.flatnonzero(dist >= 0)}
    if g.dummy_root is not None:
        found.discard(g.dummy_root)
    return found


@dataclass
class SplitAssignment:
    """Disjoint train/validation/test child->parent pair sets for one seed."""

    train: list[tuple[NodeId, NodeId]]
    validation: list[tuple[NodeId, NodeId]]
    test: list[tuple[NodeId, NodeId]]
    seed: int
    test_frac: float = 0.30
    train_frac: float = 0.85

    def children(self, section: str) -> list[NodeId]:
        return [c for c, _ in getattr(self, section)]


def split_dataset(
    g: KnowledgeGraph,
    test_frac: float = 0.30,
    train_frac: float = 0.85,
    seed: int = 0,
) -> SplitAssignment:
    """Assign every eligible child node to exactly one of train/validation/test.

    Test children are drawn from the leaves only, so a held-out child never
    appears as a parent in any retained pair. Counts: the test set takes
    ``floor(test_frac * |leaves|)`` leaves; of the remaining eligible
    children, the nearest integer to ``train_frac * count`` goes to train
    and the rest to validation. Deterministic for a fixed seed.
    """
    if g.dummy_root is None:
        raise GraphError("split requires the dummy root (call add_dummy_root first)")
    leaves = g.leaves()
    if not leaves:
        raise GraphError("graph has no leaves to hold out")
    if not (0.0 <= test_frac <= 1.0 and 0.0 <= train_frac <= 1.0):
        raise GraphError("split fractions must lie in [0, 1]")

    rng = np.random.default_rng(seed)
    leaf_order = rng.permutation(np.asarray(sorted(leaves), dtype=np.int64))
    n_test = int(test_frac * len(leaves))
    test_children = set(int(n) for n in leaf_order[:n_test])

    remaining = [n for n in g.eligible_children() if n not in test_children]
    rest_order = rng.permutation(np.asarray(sorted(remaining), dtype=np.int64))
    # Nearest-int at this stage keeps the set sizes on the documented scale.
    n_train = int(np.floor(train_frac * len(remaining) + 0.5))
    train_children = set(int(n) for n in rest_order[:n_train])

    def pair(c: NodeId) -> tuple[NodeId, NodeId]:
        p = g.parent[c]
        assert p is not None  # eligible children always have a parent
        return (c, p)

    train = [pair(c) for c in sorted(train_children)]
    test = [pair(c) for c in sorted(test_children)]
    validation = [pair(c) for c in sorted(set(remaining) - train_children)]
    return SplitAssignment(
        train=train,
        validation=validation,
        test=test,
        seed=seed,
        test_frac=test_frac,
        train_frac=train_frac,
    )


def write_split_file(split: SplitAssignment, g: KnowledgeGraph, path: str) -> None:
    """Serialize a split as labeled sections; byte-stable for fixed inputs."""
    lines = [
        f"seed={split.seed}",
        f"test_frac={split.test_frac}",
        f"train_frac={split.train_frac}",
        f"prng={SPLIT_PRNG}",
    ]
    for section in ("train", "validation", "test"):
        lines.append(f"[{section}]")
        for c, p in getattr(split, section):
            lines.append(f"{g.labels[c]}\t{g.labels[p]}")
    data = "\n".join(lines) + "\n"
    _atomic_write(path, data)


def read_split_file(text: str, g: KnowledgeGraph) -> SplitAssignment:
    """Parse a split file back into id pairs against ``g``'s label table."""
    seed = 0
    test_frac, train_frac = 0.30, 0.85
    sections: dict[str, list[tuple[NodeId, NodeId]]] = {"train": [], "validation": [], "test": []}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            if current not in sections:
                raise GraphError(f"line {lineno}: unknown split section {current!r}")
            continue
        if "=" in line and current is None:
            key, value = line.split("=", 1)
            if key == "seed":
                seed = int(value)
            elif key == "test_frac":
                test_frac = float(value)
            elif key == "train_frac":
                train_frac = float(value)
            continue
        if current is None:
            raise GraphError(f"line {lineno}: pair outside any section")
        child_label, parent_label = line.split("\t")
        try:
            pair = (g.label_to_id[child_label], g.label_to_id[parent_label])
        except KeyError as exc:
            raise GraphError(f"line {lineno}: unknown label {exc.args[0]!r}") from exc
        sections[current].append(pair)
    return SplitAssignment(
        train=sections["train"],
        validation=sections["validation"],
        test=sections["test"],
        seed=seed,
        test_frac=test_frac,
        train_frac=train_frac,
    )


def append_edge_line(path: str, child_label: str, parent_label: str) -> None:
    """Append one edge to an edge-list file via write-to-temp-and-rename."""
    with open(path, "r", encoding="utf-8") as fh:
        existing = fh.read()
    if existing and not existing.endswith("\n"):
        existing += "\n"
    data = existing + f"{child_label}\t{parent_label}\n"
    _atomic_write(path, data)


def _atomic_write(path: str, data: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
