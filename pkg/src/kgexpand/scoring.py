"""Parent-scoring model: per-node mixtures of shared bilinear transforms.

A node v is scored as a parent of child u by (e_u M_v) . e_v, where M_v is
a node-specific mixture of k shared d x d matrices. The mixture weights
come from a small feedforward net applied to v's trainable parent-copy
vector, so the parameter budget never grows with the graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingStore
from .nets import Mlp, mlp_backward, mlp_forward, mlp_init


class ScoreError(ValueError):
    """Raised for shape mismatches, unknown nodes, or non-finite math."""


@dataclass
class ScoreParams:
    """Shared transforms P (k, d, d) plus the mixture-weight network."""

    k: int
    P: np.ndarray
    weight_net: Mlp

    @property
    def dim(self) -> int:
        return int(self.P.shape[1])

    def param_count(self) -> int:
        return int(self.P.size) + self.weight_net.param_count()

    def named_params(self) -> list[tuple[str, np.ndarray]]:
        return [("P", self.P)] + self.weight_net.named_params()

    def copy(self) -> "ScoreParams":
        return ScoreParams(k=self.k, P=self.P.copy(), weight_net=self.weight_net.copy())


@dataclass
class ParamGradients:
    """Gradients mirroring ScoreParams, plus sparse parent-vector rows."""

    grad_P: np.ndarray
    grad_weight_net: list[tuple[np.ndarray, np.ndarray]]
    grad_parent_vec: dict[int, np.ndarray]


def init_params(d: int, k: int, hidden_sizes: list[int], seed: int) -> ScoreParams:
    """Uniform +-sqrt(6/(fan_in+fan_out)) entries everywhere; fixed by seed."""
    if d <= 0 or k <= 0 or any(h <= 0 for h in hidden_sizes):
        raise ScoreError("sizes must be positive")
    rng = np.random.default_rng(seed)
    bound = np.sqrt(6.0 / (d + d))
    P = rng.uniform(-bound, bound, size=(k, d, d)).astype(np.float32)
    net = mlp_init([d, *hidden_sizes, k], rng, activation="tanh")
    return ScoreParams(k=k, P=P, weight_net=net)


def score_bilinear(e_u: np.ndarray, e_v: np.ndarray, M: np.ndarray) -> float:
    """(e_u M) . e_v for one pair of vectors."""
    e_u = np.asarray(e_u)
    e_v = np.asarray(e_v)
    if M.shape != (e_u.shape[0], e_v.shape[0]):
        raise ScoreError(
            f"transform shape {M.shape} does not match vectors "
            f"({e_u.shape[0]}, {e_v.shape[0]})"
        )
    return float(e_u @ M @ e_v)


def _check_node(store: EmbeddingStore, node: int) -> None:
    if not (0 <= node < store.num_nodes):
        raise ScoreError(f"unknown node id {node}")


def mixture_weights(v: int, theta: ScoreParams, store: EmbeddingStore) -> np.ndarray:
    _check_node(store, v)
    w, _ = mlp_forward(theta.weight_net, store.parent_vec[v])
    return w


def materialize_transform(
    v: int, theta: ScoreParams, store: EmbeddingStore
) -> np.ndarray:
    """M_v = sum_i w_v[i] P_i with w_v from the weight net on e_v."""
    w = mixture_weights(v, theta, store)
    return np.einsum("i,ide->de", w, theta.P)


def score(u: int, v: int, theta: ScoreParams, store: EmbeddingStore) -> float:
    """Parent score of v for child u: child copy of u, parent copy of v."""
    _check_node(store, u)
    _check_node(store, v)
    return score_bilinear(
        store.child_vec[u], store.parent_vec[v], materialize_transform(v, theta, store)
    )


def grad_score(
    u: int,
    v: int,
    theta: ScoreParams,
    store: EmbeddingStore,
    upstream: float = 1.0,
) -> ParamGradients:
    """Gradients of upstream * score(u, v) in every trainable parameter.

    The child copy of u is frozen and receives no gradient. The parent
    copy of v is trainable, so its row appears in grad_parent_vec.
    """
    _check_node(store, u)
    _check_node(store, v)
    e_u = store.child_vec[u]
    e_v = store.parent_vec[v]
    w, cache = mlp_forward(theta.weight_net, e_v)
    # t[i] = e_u^T P_i e_v; score = w . t
    t = np.einsum("d,ide,e->i", e_u, theta.P, e_v)
    if not np.isfinite(t).all():
        raise ScoreError("non-finite value in bilinear products")
    grad_P = upstream * np.einsum("i,d,e->ide", w, e_u, e_v)
    net_grads, grad_in = mlp_backward(theta.weight_net, cache, upstream * t)
    grad_ev = upstream * np.einsum("i,ide,d->e", w, theta.P, e_u) + grad_in[0]
    for name, arr in (("transforms", grad_P), ("weight head", grad_ev)):
        if not np.isfinite(arr).all():
            raise ScoreError(f"non-finite gradient in {name}")
    return ParamGradients(
        grad_P=grad_P,
        grad_weight_net=net_grads,
        grad_parent_vec={v: grad_ev},
    )


def pair_scores(
    child_ids: np.ndarray,
    parent_ids: np.ndarray,
    theta: ScoreParams,
    store: EmbeddingStore,
) -> np.ndarray:
    """Vectorized score(u_j, v_j) over aligned id arrays."""
    E_u = store.child_vec[child_ids]
    E_v = store.parent_vec[parent_ids]
    W, _ = mlp_forward(theta.weight_net, E_v)
    A = np.einsum("jd,ide->jie", E_u, theta.P)
    t = np.einsum("jie,je->ji", A, E_v)
    return np.einsum("ji,ji->j", t, W)


def candidate_scores(
    e_u: np.ndarray,
    candidate_ids: np.ndarray,
    theta: ScoreParams,
    store: EmbeddingStore,
) -> np.ndarray:
    """Scores of one child vector against many candidate parents."""
    E_v = store.parent_vec[candidate_ids]
    W, _ = mlp_forward(theta.weight_net, E_v)
    A = np.einsum("d,ide->ie", np.asarray(e_u), theta.P)
    t = np.einsum("ie,ce->ci", A, E_v)
    return np.einsum("ci,ci->c", t, W)


@dataclass
class BatchGradients:
    """Dense accumulators for one optimizer step."""

    grad_P: np.ndarray
    grad_weight_net: list[tuple[np.ndarray, np.ndarray]]
    grad_parent_vec: np.ndarray  # (n, d), rows for untouched nodes stay zero
    touched: np.ndarray  # sorted unique ids with nonzero rows


def batch_grad(
    child_ids: np.ndarray,
    parent_ids: np.ndarray,
    coefs: np.ndarray,
    theta: ScoreParams,
    store: EmbeddingStore,
) -> BatchGradients:
    """Gradient of sum_j coefs[j] * score(u_j, v_j), accumulated densely.

    One fused pass; equivalent to summing grad_score over the batch up to
    float reassociation.
    """
    E_u = store.child_vec[child_ids]
    E_v = store.parent_vec[parent_ids]
    c = np.asarray(coefs, dtype=E_v.dtype)
    W, cache = mlp_forward(theta.weight_net, E_v)
    A = np.einsum("jd,ide->jie", E_u, theta.P)
    t = np.einsum("jie,je->ji", A, E_v)
    grad_P = np.einsum("j,ji,jd,je->ide", c, W, E_u, E_v)
    net_grads, grad_in = mlp_backward(theta.weight_net, cache, c[:, None] * t)
    grad_rows = np.einsum("j,ji,jie->je", c, W, A) + grad_in
    grad_parent = np.zeros_like(store.parent_vec)
    np.add.at(grad_parent, parent_ids, grad_rows)
    return BatchGradients(
        grad_P=grad_P,
        grad_weight_net=net_grads,
        grad_parent_vec=grad_parent,
        touched=np.unique(parent_ids),
    )
