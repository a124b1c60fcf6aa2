"""Reference rankers: random permutation, word overlap, feedforward classifier.

All three produce rankings through the same pipeline as the main scorer so
every method is measured identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingStore, tokenize
from .graph import DistanceMatrix, KnowledgeGraph, SplitAssignment
from .metrics import RankedPrediction, candidate_set, mrr as _mrr
from .nets import Mlp, mlp_backward, mlp_forward, mlp_init
from .training import Optimizer, TrainConfig, TrainError, sample_negatives


class BaselineError(ValueError):
    """Raised for degenerate baseline inputs."""


def random_rank(
    candidates: np.ndarray,
    seed: int,
    query_id: int = -1,
    true_parent: int | None = None,
) -> RankedPrediction:
    """One seeded uniform permutation of the candidate set."""
    candidates = np.asarray(candidates)
    if candidates.size == 0:
        raise BaselineError("candidate set is empty")
    rng = np.random.default_rng([seed, query_id])
    ranking = rng.permutation(candidates)
    rank = None
    if true_parent is not None:
        where = np.flatnonzero(ranking == true_parent)
        if where.size == 0:
            raise BaselineError(f"true parent {true_parent} not in candidates")
        rank = int(where[0]) + 1
    return RankedPrediction(query=query_id, ranking=ranking, rank_of_true=rank)


def expected_random_mrr(num_candidates: int) -> float:
    """Exact expectation of the MRR percentage under a uniform permutation."""
    if num_candidates < 1:
        raise BaselineError("need at least one candidate")
    return 100.0 / num_candidates * sum(1.0 / r for r in range(1, num_candidates + 1))


def jaccard_score(text_a: str, text_b: str) -> float:
    """Word-set overlap: |A and B| / |A or B| on lowercased tokens."""
    a = set(tokenize(text_a))
    b = set(tokenize(text_b))
    if not a or not b:
        raise BaselineError("texts must contain at least one word")
    return len(a & b) / len(a | b)


def jaccard_rank(
    query_label: str,
    g: KnowledgeGraph,
    candidates: np.ndarray,
    true_parent: int | None = None,
    query_id: int = -1,
) -> RankedPrediction:
    """Rank candidates by word overlap with the query label."""
    from .metrics import order_by_score

    candidates = np.asarray(candidates)
    scores = np.asarray(
        [jaccard_score(query_label, g.labels[int(c)]) for c in candidates]
    )
    ranking = order_by_score(candidates, scores)
    rank = None
    if true_parent is not None:
        rank = int(np.flatnonzero(ranking == true_parent)[0]) + 1
    return RankedPrediction(query=query_id, ranking=ranking, rank_of_true=rank)


@dataclass
class FfnnParams:
    """Sigmoid pair classifier over concatenated child+parent vectors."""

    net: Mlp  # input dim 2d, output dim 1, relu hidden layers

    @property
    def in_dim(self) -> int:
        return self.net.in_dim


def ffnn_init(d: int, hidden_sizes: list[int], seed: int) -> FfnnParams:
    return FfnnParams(net=mlp_init([2 * d, *hidden_sizes, 1], seed, activation="relu"))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def ffnn_score(u: int, v: int, params: FfnnParams, store: EmbeddingStore) -> float:
    """Probability-like parenthood score for one pair."""
    x = np.concatenate([store.child_vec[u], store.parent_vec[v]])
    logit, _ = mlp_forward(params.net, x)
    return float(_sigmoid(np.asarray([logit[0]]))[0])


def ffnn_pair_logits(
    child_ids: np.ndarray,
    parent_ids: np.ndarray,
    params: FfnnParams,
    store: EmbeddingStore,
) -> tuple[np.ndarray, list]:
    x = np.concatenate(
        [store.child_vec[child_ids], store.parent_vec[parent_ids]], axis=1
    )
    logits, cache = mlp_forward(params.net, x)
    return logits[:, 0], cache


def ffnn_candidate_scores(
    e_u: np.ndarray,
    candidate_ids: np.ndarray,
    params: FfnnParams,
    store: EmbeddingStore,
) -> np.ndarray:
    tiled = np.broadcast_to(e_u, (candidate_ids.size, e_u.size))
    x = np.concatenate([tiled, store.parent_vec[candidate_ids]], axis=1)
    logits, _ = mlp_forward(params.net, x)
    return _sigmoid(logits[:, 0])


def ffnn_train(
    g: KnowledgeGraph,
    split: SplitAssignment,
    store: EmbeddingStore,
    dm: DistanceMatrix,
    cfg: TrainConfig,
) -> FfnnParams:
    """Binary cross-entropy training of the pair classifier.

    Positives are the training edges; negatives reuse the same sampled
    non-parent table as the margin trainer, so both methods see identical
    negatives. Early stopping mirrors the margin trainer: best validation
    MRR snapshot, ranked with sigmoid scores.
    """
    cfg.validate()
    if not split.train:
        raise TrainError("training split is empty")
    params = ffnn_init(store.dim, cfg.hidden_sizes, cfg.seed)
    opt = Optimizer(cfg.optimizer, cfg.learning_rate, cfg.weight_decay)
    negatives = sample_negatives(
        g, split, cfg.negatives_per_child, cfg.seed,
        include_validation=cfg.include_validation_negatives,
    )
    children, parents, labels = [], [], []
    for child, parent in split.train:
        neg = negatives[child]
        children.append(np.full(neg.size + 1, child, dtype=np.int64))
        parents.append(np.concatenate([[parent], neg]).astype(np.int64))
        labels.append(
            np.concatenate([[1.0], np.zeros(neg.size)]).astype(np.float32)
        )
    u_all = np.concatenate(children)
    v_all = np.concatenate(parents)
    y_all = np.concatenate(labels)
    n_ex = u_all.size
    candidates = candidate_set(g, split)

    def val_mrr() -> float:
        if not split.validation:
            return -_probe_loss()
        ranks = []
        from .metrics import order_by_score

        for child, parent in split.validation:
            scores = ffnn_candidate_scores(
                store.child_vec[child], candidates, params, store
            )
            ranking = order_by_score(candidates, scores)
            ranks.append(int(np.flatnonzero(ranking == parent)[0]) + 1)
        return _mrr(ranks)

    def _probe_loss() -> float:
        logits, _ = ffnn_pair_logits(u_all, v_all, params, store)
        p = _sigmoid(logits)
        eps = 1e-7
        return float(
            -np.mean(y_all * np.log(p + eps) + (1 - y_all) * np.log(1 - p + eps))
        )

    best = FfnnParams(net=params.net.copy())
    best_val = -np.inf
    since_best = 0
    opt_params = dict(params.net.named_params())
    for epoch in range(1, cfg.max_epochs + 1):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n_ex)
        for start in range(0, n_ex, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            u, v, y = u_all[batch], v_all[batch], y_all[batch]
            logits, cache = ffnn_pair_logits(u, v, params, store)
            p = _sigmoid(logits)
            if not np.isfinite(p).all():
                raise TrainError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            # d(mean BCE)/d logit = (sigmoid - label) / batch
            g_logit = ((p - y) / batch.size).astype(np.float32)
            net_grads, _ = mlp_backward(params.net, cache, g_logit[:, None])
            grads = {}
            for i, (dw, db) in enumerate(net_grads):
                grads[f"net.{i}.W"] = dw
                grads[f"net.{i}.b"] = db
            opt.step(opt_params, grads)
        val = val_mrr()
        if val > best_val:
            best_val = val
            best = FfnnParams(net=params.net.copy())
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    return best


def ffnn_evaluate(
    pairs: list[tuple[int, int]],
    params: FfnnParams,
    store: EmbeddingStore,
    dm: DistanceMatrix,
    candidates: np.ndarray,
):
    """EvalReport for the classifier ranker over the standard pipeline."""
    from .metrics import EvalReport, mnd, mnd_i, order_by_score, r_at_1

    if not pairs:
        raise BaselineError("no query pairs")
    ranks, tops, truths = [], [], []
    for child, parent in pairs:
        scores = ffnn_candidate_scores(
            store.child_vec[child], candidates, params, store
        )
        ranking = order_by_score(candidates, scores)
        ranks.append(int(np.flatnonzero(ranking == parent)[0]) + 1)
        tops.append(int(ranking[0]))
        truths.append(parent)
    return EvalReport(
        mrr=_mrr(ranks),
        r_at_1=r_at_1(ranks),
        mnd=mnd(truths, tops, dm),
        mnd_i=mnd_i(truths, tops, dm),
        m=len(pairs),
        diameter=dm.diameter,
    )


def random_evaluate(
    pairs: list[tuple[int, int]],
    seed: int,
    dm: DistanceMatrix,
    candidates: np.ndarray,
):
    """EvalReport for the random-permutation ranker."""
    from .metrics import EvalReport, mnd, mnd_i, r_at_1

    if not pairs:
        raise BaselineError("no query pairs")
    ranks, tops, truths = [], [], []
    for child, parent in pairs:
        pred = random_rank(candidates, seed, query_id=child, true_parent=parent)
        ranks.append(pred.rank_of_true)
        tops.append(pred.top)
        truths.append(parent)
    return EvalReport(
        mrr=_mrr(ranks),
        r_at_1=r_at_1(ranks),
        mnd=mnd(truths, tops, dm),
        mnd_i=mnd_i(truths, tops, dm),
        m=len(pairs),
        diameter=dm.diameter,
    )
