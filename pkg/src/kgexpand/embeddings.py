"""Node feature vectors: file loading, phrase pooling, synthetic generation.

Every node carries two copies of its vector: a frozen child copy used when
the node plays the child role in a score, and a parent copy that training
may adjust. Both start equal and unit-normalized.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .graph import KnowledgeGraph

NORM_TOL = 1e-6


class EmbeddingError(ValueError):
    """Raised for malformed vector files or degenerate vectors."""


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace tokens; the one tokenizer used everywhere."""
    return text.lower().split()


def normalize_unit(v: np.ndarray) -> np.ndarray:
    """Scale to unit L2 norm; zero vectors have no direction and are rejected."""
    norm = float(np.linalg.norm(v))
    if norm == 0.0 or not np.isfinite(norm):
        raise EmbeddingError("cannot normalize a zero or non-finite vector")
    return v / norm


@dataclass
class EmbeddingStore:
    """Dual-copy vector table over dense node ids.

    ``child_vec`` is frozen (read-only array); ``parent_vec`` may be
    updated by training. Rows are indexed by NodeId.
    """

    dim: int
    child_vec: np.ndarray  # (n, dim), read-only
    parent_vec: np.ndarray  # (n, dim)

    @classmethod
    def from_matrix(cls, vecs: np.ndarray) -> "EmbeddingStore":
        child = np.array(vecs, dtype=np.float32)
        child.setflags(write=False)
        return cls(dim=int(vecs.shape[1]), child_vec=child, parent_vec=child.copy())

    @property
    def num_nodes(self) -> int:
        return int(self.child_vec.shape[0])

    def child(self, node: int) -> np.ndarray:
        return self.child_vec[node]

    def parent(self, node: int) -> np.ndarray:
        return self.parent_vec[node]

    def check_unit_norms(self) -> None:
        for name, table in (("child", self.child_vec), ("parent", self.parent_vec)):
            norms = np.linalg.norm(table.astype(np.float64), axis=1)
            bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOL)
            if bad.size:
                raise EmbeddingError(
                    f"{name} vector for node {int(bad[0])} has norm {norms[bad[0]]:.8f}"
                )


@dataclass
class WordVectorTable:
    """Plain word -> vector lookup used for phrase pooling."""

    dim: int
    vectors: dict[str, np.ndarray]

    def __contains__(self, word: str) -> bool:
        return word in self.vectors

    def __getitem__(self, word: str) -> np.ndarray:
        return self.vectors[word]


def _parse_vector_lines(text: str, expected_dim: int | None) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    dim = expected_dim
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        if "\t" not in line:
            raise EmbeddingError(f"line {lineno}: expected 'label<TAB>floats'")
        label, nums = line.split("\t", 1)
        label = label.strip()
        if not label:
            raise EmbeddingError(f"line {lineno}: empty label")
        try:
            vec = np.asarray([float(x) for x in nums.split()], dtype=np.float64)
        except ValueError as exc:
            raise EmbeddingError(f"line {lineno}: bad float ({exc})") from exc
        if dim is None:
            dim = vec.size
        if vec.size != dim:
            raise EmbeddingError(
                f"line {lineno}: dimension {vec.size}, expected {dim}"
            )
        if not np.isfinite(vec).all():
            raise EmbeddingError(f"line {lineno}: non-finite value")
        if label in out:
            raise EmbeddingError(f"line {lineno}: duplicate label {label!r}")
        out[label] = vec
    return out


def load_word_vectors(text: str, expected_dim: int | None = None) -> WordVectorTable:
    """Parse a ``word<TAB>floats`` file into a lookup table."""
    vectors = _parse_vector_lines(text, expected_dim)
    if not vectors:
        raise EmbeddingError("word-vector file has no entries")
    dim = next(iter(vectors.values())).size
    return WordVectorTable(dim=int(dim), vectors=vectors)


def load_node_embeddings(
    text: str, expected_dim: int, g: KnowledgeGraph
) -> EmbeddingStore:
    """Build a store from a ``label<TAB>floats`` file covering the graph.

    Every vector is unit-normalized on load. Every graph node must appear,
    except the synthetic root, whose vector defaults to the normalized mean
    of the subgraph roots' vectors when the file omits it.
    """
    raw = _parse_vector_lines(text, expected_dim)
    vecs = np.zeros((g.num_nodes, expected_dim), dtype=np.float64)
    seen = np.zeros(g.num_nodes, dtype=bool)
    for label, vec in raw.items():
        node = g.label_to_id.get(label)
        if node is None:
            raise EmbeddingError(f"file names unknown node {label!r}")
        try:
            vecs[node] = normalize_unit(vec)
        except EmbeddingError as exc:
            raise EmbeddingError(f"node {label!r}: {exc}") from exc
        seen[node] = True
    if g.dummy_root is not None and not seen[g.dummy_root]:
        roots = sorted(g.subgraph_roots)
        if not roots or not seen[list(roots)].all():
            missing = [g.labels[r] for r in roots if not seen[r]]
            raise EmbeddingError(f"missing vectors for subgraph roots {missing!r}")
        vecs[g.dummy_root] = normalize_unit(vecs[roots].mean(axis=0))
        seen[g.dummy_root] = True
    if not seen.all():
        missing = g.labels[int(np.flatnonzero(~seen)[0])]
        raise EmbeddingError(f"no vector for node {missing!r}")
    return EmbeddingStore.from_matrix(vecs)


def _oov_vector(token: str, dim: int) -> np.ndarray:
    """Deterministic pseudo-vector for a word absent from the table."""
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "little")
    rng = np.random.default_rng(seed)
    return normalize_unit(rng.standard_normal(dim))


def phrase_embedding(label: str, table: WordVectorTable) -> np.ndarray:
    """Mean of token vectors, unit-normalized after pooling.

    Unknown tokens map to hash-seeded pseudo-vectors so any non-empty label
    embeds deterministically.
    """
    tokens = tokenize(label)
    if not tokens:
        raise EmbeddingError(f"label {label!r} has no tokens")
    rows = [
        table[t] if t in table else _oov_vector(t, table.dim) for t in tokens
    ]
    return normalize_unit(np.mean(rows, axis=0))


def store_from_phrases(g: KnowledgeGraph, table: WordVectorTable) -> EmbeddingStore:
    """Embed every node label by phrase pooling over the word table.

    The synthetic root gets the normalized mean of the subgraph roots'
    vectors rather than a pooled embedding of its placeholder label.
    """
    vecs = np.zeros((g.num_nodes, table.dim), dtype=np.float64)
    for node in g.node_ids():
        if node == g.dummy_root:
            continue
        vecs[node] = phrase_embedding(g.labels[node], table)
    if g.dummy_root is not None:
        roots = sorted(g.subgraph_roots)
        vecs[g.dummy_root] = normalize_unit(vecs[roots].mean(axis=0))
    return EmbeddingStore.from_matrix(vecs)


def synth_embeddings(
    g: KnowledgeGraph, dim: int, noise: float, seed: int
) -> EmbeddingStore:
    """Deterministic synthetic vectors aligned with the graph structure.

    Every node with children carries a hidden unit "topic" direction.
    Childless nodes draw seeded pseudo-random unit vectors that mix their
    ancestors' topics (nearer ancestors weighted more) with a private
    component, so labels that sit close in the graph get correlated
    vectors, the way sibling categories share vocabulary in text
    embeddings. Every node with children, the synthetic root included,
    gets the normalized mean of its children's vectors plus isotropic
    noise of scale ``noise``, built bottom-up.
    """
    if g.dummy_root is None:
        raise EmbeddingError("synthetic vectors require the augmented graph")
    if dim < 2:
        raise EmbeddingError("dim must be at least 2")
    decay = 0.7  # per-hop attenuation of ancestor topics in childless nodes
    topic: dict[int, np.ndarray] = {}
    for node in g.node_ids():
        if g.children[node] and node != g.dummy_root:
            z = np.random.default_rng([seed, 1, node]).standard_normal(dim)
            topic[node] = normalize_unit(z)
    vecs = np.zeros((g.num_nodes, dim), dtype=np.float64)
    for node in _bottom_up_order(g):
        rng = np.random.default_rng([seed, 0, node])
        kids = g.children[node]
        if not kids:
            base = normalize_unit(rng.standard_normal(dim))
            anc, w = g.parent[node], decay
            while anc is not None and anc in topic:
                base = base + w * topic[anc]
                anc, w = g.parent[anc], w * decay
        else:
            base = vecs[kids].mean(axis=0)
            if noise != 0.0:
                base = base + noise * rng.standard_normal(dim)
        vecs[node] = normalize_unit(base)
    return EmbeddingStore.from_matrix(vecs)


def _bottom_up_order(g: KnowledgeGraph) -> list[int]:
    """Children strictly before parents."""
    depth = [0] * g.num_nodes

    def node_depth(n: int) -> int:
        d = depth[n]
        if d or g.parent[n] is None:
            return d
        d = node_depth(g.parent[n]) + 1
        depth[n] = d
        return d

    for n in g.node_ids():
        node_depth(n)
    return sorted(g.node_ids(), key=lambda n: -depth[n])


def write_node_embeddings(path: str, g: KnowledgeGraph, store: EmbeddingStore) -> None:
    """Serialize child-copy vectors as ``label<TAB>floats`` lines."""
    lines = ["# node embeddings; unit L2 norm applied after phrase pooling"]
    for node in g.node_ids():
        row = store.child_vec[node]
        lines.append(g.labels[node] + "\t" + " ".join(f"{x:.8f}" for x in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
