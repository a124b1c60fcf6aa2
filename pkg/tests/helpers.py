"""Shared fixture builders for the test suite."""

from __future__ import annotations

import numpy as np

from kgexpand.graph import KnowledgeGraph, add_dummy_root, parse_graph

# Two 3-node subtrees under distinct roots; the smallest graph where
# sibling, cousin, and cross-subtree distances all differ.
TOY_EDGES = """\
x\tr
y\tr
x1\tx
x2\tx
y1\ty
"""


def toy_graph(with_dummy: bool = True) -> KnowledgeGraph:
    g = parse_graph(TOY_EDGES)
    return add_dummy_root(g) if with_dummy else g


def balanced_taxonomy(branching: int = 4, depth: int = 3) -> str:
    """Edge list for a single-root balanced tree, e.g. 4^3 = 64 leaves.

    Labels encode the path from the root ("n0", "n0.2", "n0.2.1", ...), so
    every label is unique and the structure is readable in failures.
    """
    lines = []
    frontier = ["n0"]
    for _ in range(depth):
        nxt = []
        for parent in frontier:
            for i in range(branching):
                child = f"{parent}.{i}"
                lines.append(f"{child}\t{parent}")
                nxt.append(child)
        frontier = nxt
    return "\n".join(lines) + "\n"


def forest_taxonomy(
    n_roots: int = 24, n_internal: int = 1191, n_leaves: int = 9576
) -> str:
    """Edge list for a multi-subgraph taxonomy at the documented scale.

    Internal nodes are attached round-robin under the roots and leaves
    round-robin under the internal nodes, giving n_roots + n_internal +
    n_leaves nodes and n_internal + n_leaves edges.
    """
    lines = []
    roots = [f"r{i}" for i in range(n_roots)]
    internals = [f"m{i}" for i in range(n_internal)]
    for i, label in enumerate(internals):
        lines.append(f"{label}\t{roots[i % n_roots]}")
    for i in range(n_leaves):
        lines.append(f"l{i}\t{internals[i % n_internal]}")
    return "\n".join(lines) + "\n"


def random_tree(n: int, seed: int) -> str:
    """Edge list for a random single-root tree on n nodes.

    Node i > 0 picks its parent uniformly from nodes 0..i-1, which yields
    arbitrary depth profiles across seeds.
    """
    rng = np.random.default_rng(seed)
    lines = []
    for i in range(1, n):
        p = int(rng.integers(0, i))
        lines.append(f"t{i}\tt{p}")
    return "\n".join(lines) + "\n"


def write_vector_file(path: str, labels: list[str], vecs: np.ndarray) -> None:
    """label<TAB>space-separated floats, one entry per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for label, row in zip(labels, vecs):
            fh.write(label + "\t" + " ".join(f"{x:.8f}" for x in row) + "\n")
