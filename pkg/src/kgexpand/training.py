"""Margin-ranking training loop with graph-distance margins.

Each training pair (child u, true parent v) must out-score every sampled
non-parent v' by at least the hop distance between v and v'. Violations
are hinged; the loop minimizes their batch mean and keeps the parameter
snapshot with the best validation MRR.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingStore
from .graph import DistanceMatrix, KnowledgeGraph, SplitAssignment
from .metrics import candidate_set, evaluate
from .nets import Mlp
from .scoring import ScoreParams, batch_grad, init_params, pair_scores, score

LOSS_FULL_MAX_NODES = 2000

OPTIMIZER_KINDS = ("sgd", "adam", "adamw")


class TrainError(ValueError):
    """Raised for invalid configs, degenerate splits, or diverged runs."""


@dataclass
class Triplet:
    """One ranking constraint: child, its true parent, one non-parent."""

    child: int
    parent: int
    negative: int


@dataclass
class TrainConfig:
    k: int = 128
    batch_size: int = 8192
    learning_rate: float = 1e-3
    weight_decay: float = 1.0
    optimizer: str = "adamw"  # sgd | adam (coupled decay) | adamw (decoupled)
    hidden_sizes: list[int] = field(default_factory=lambda: [150, 150])
    negatives_per_child: int = 5000
    patience: int = 10
    max_epochs: int = 200
    seed: int = 0
    resample_negatives: bool = False
    include_validation_negatives: bool = False

    def validate(self) -> None:
        if self.optimizer not in OPTIMIZER_KINDS:
            raise TrainError(f"optimizer must be one of {OPTIMIZER_KINDS}")
        positive = {
            "k": self.k,
            "batch_size": self.batch_size,
            "negatives_per_child": self.negatives_per_child,
            "patience": self.patience,
            "max_epochs": self.max_epochs,
        }
        for name, value in positive.items():
            if value <= 0:
                raise TrainError(f"{name} must be positive")
        # learning_rate 0 is allowed: it freezes parameters, which some
        # calibration checks rely on.
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise TrainError("rates must be non-negative")
        if self.patience > self.max_epochs:
            raise TrainError("patience cannot exceed max_epochs")

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "optimizer": self.optimizer,
            "hidden_sizes": list(self.hidden_sizes),
            "negatives_per_child": self.negatives_per_child,
            "patience": self.patience,
            "max_epochs": self.max_epochs,
            "seed": self.seed,
            "resample_negatives": self.resample_negatives,
            "include_validation_negatives": self.include_validation_negatives,
        }


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_mrr: float


@dataclass
class TrainState:
    theta: ScoreParams
    optimizer: "Optimizer"
    epoch: int
    best_val_mrr: float
    best_theta: ScoreParams
    best_parent_vec: np.ndarray
    history: list[EpochStats] = field(default_factory=list)


def margin(v: int, v_neg: int, dm: DistanceMatrix) -> int:
    """Required score gap: hop distance between the two parents."""
    return dm[v, v_neg]


def violation(
    u: int,
    v: int,
    v_neg: int,
    theta: ScoreParams,
    store: EmbeddingStore,
    dm: DistanceMatrix,
) -> float:
    """Hinged margin deficit for one triplet; zero when satisfied."""
    gap = score(u, v_neg, theta, store) - score(u, v, theta, store)
    return max(0.0, gap + margin(v, v_neg, dm))


def loss_full(
    g: KnowledgeGraph,
    train_pairs: list[tuple[int, int]],
    theta: ScoreParams,
    store: EmbeddingStore,
    dm: DistanceMatrix,
) -> float:
    """Exact violation sum over every non-parent of every training child.

    Used by the bound checks; the training loop uses sampled batches. The
    candidate enumeration is all nodes except the child's parent and the
    dummy root, so it grows quadratically and is guarded to small graphs.
    """
    if g.num_nodes > LOSS_FULL_MAX_NODES:
        raise TrainError(
            f"full loss enumerates |V|^2 pairs; {g.num_nodes} nodes exceeds "
            f"{LOSS_FULL_MAX_NODES} (use the sampled training loss instead)"
        )
    from .scoring import candidate_scores  # deferred to keep module top light

    total = 0.0
    nodes = np.asarray([v for v in g.node_ids() if v != g.dummy_root], dtype=np.int64)
    for child, parent in train_pairs:
        cand = nodes[nodes != parent]
        s_all = candidate_scores(store.child_vec[child], cand, theta, store)
        s_all = s_all.astype(np.float64)
        s_true = float(score(child, parent, theta, store))
        gammas = dm.dist[parent, cand].astype(np.float64)
        total += float(np.maximum(0.0, s_all - s_true + gammas).sum())
    return total


def sample_negatives(
    g: KnowledgeGraph,
    split: SplitAssignment,
    m: int,
    seed: int,
    include_validation: bool = False,
) -> dict[int, np.ndarray]:
    """Draw m distinct non-parents per training child, fixed for the run.

    The pool is the training children plus all internal nodes (validation
    children only with the flag), minus the child itself, its parent, and
    the dummy root. Each child's draw depends only on (seed, child).
    """
    pool = set(c for c, _ in split.train)
    pool.update(g.internal_nodes())
    if include_validation:
        pool.update(c for c, _ in split.validation)
    pool.discard(g.dummy_root)
    base = np.asarray(sorted(pool), dtype=np.int64)
    out: dict[int, np.ndarray] = {}
    for child, parent in split.train:
        eligible = base[(base != child) & (base != parent)]
        if m > eligible.size:
            raise TrainError(
                f"child {g.labels[child]!r} has only {eligible.size} eligible "
                f"negatives, cannot sample {m}"
            )
        rng = np.random.default_rng([seed, child])
        if m == eligible.size:
            out[child] = eligible.copy()
        else:
            out[child] = rng.choice(eligible, size=m, replace=False)
    return out


class Optimizer:
    """First-order updates over named parameter arrays, in place.

    kinds: "sgd" (decay folded into the gradient), "adam" (adaptive
    moments, decay folded in), "adamw" (adaptive moments, decay applied
    directly to the weights before the step).
    """

    def __init__(self, kind: str, lr: float, weight_decay: float) -> None:
        if kind not in OPTIMIZER_KINDS:
            raise TrainError(f"unknown optimizer {kind!r}")
        self.kind = kind
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = 0.9
        self.beta2 = 0.999
        self.eps = 1e-8
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, p in params.items():
            g = grads[name].astype(p.dtype)
            if self.kind == "sgd":
                if self.weight_decay:
                    g = g + self.weight_decay * p
                p -= self.lr * g
                continue
            if self.kind == "adam" and self.weight_decay:
                g = g + self.weight_decay * p
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            if self.kind == "adamw" and self.weight_decay:
                p *= 1.0 - self.lr * self.weight_decay
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_tensors(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for name in sorted(self.m):
            out.append((f"opt.m.{name}", self.m[name]))
            out.append((f"opt.v.{name}", self.v[name]))
        return out


def _triplet_arrays(
    pairs: list[tuple[int, int]],
    negatives: dict[int, np.ndarray],
    dm: DistanceMatrix,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    children, parents, negs = [], [], []
    for child, parent in pairs:
        neg = negatives[child]
        children.append(np.full(neg.size, child, dtype=np.int64))
        parents.append(np.full(neg.size, parent, dtype=np.int64))
        negs.append(neg.astype(np.int64))
    u = np.concatenate(children)
    v = np.concatenate(parents)
    w = np.concatenate(negs)
    gammas = dm.dist[v, w].astype(np.float32)
    return u, v, w, gammas


def train(
    g: KnowledgeGraph,
    split: SplitAssignment,
    store: EmbeddingStore,
    dm: DistanceMatrix,
    cfg: TrainConfig,
) -> TrainState:
    """Optimize the scorer and return the best-validation-MRR snapshot.

    Stops when validation MRR has not improved for ``patience`` epochs or
    at ``max_epochs``. With an empty validation split the training loss
    stands in (negated, so lower loss ranks as better).
    """
    cfg.validate()
    if not split.train:
        raise TrainError("training split is empty")
    theta = init_params(store.dim, cfg.k, cfg.hidden_sizes, cfg.seed)
    opt = Optimizer(cfg.optimizer, cfg.learning_rate, cfg.weight_decay)
    candidates = candidate_set(g, split)
    negatives = sample_negatives(
        g, split, cfg.negatives_per_child, cfg.seed,
        include_validation=cfg.include_validation_negatives,
    )
    u_all, v_all, w_all, gamma_all = _triplet_arrays(split.train, negatives, dm)
    n_trip = u_all.size

    def validation_score() -> float:
        if split.validation:
            report = evaluate(split.validation, theta, store, dm, candidates)
            return report.mrr
        return -_epoch_loss_probe()

    def _epoch_loss_probe() -> float:
        s_pos = pair_scores(u_all, v_all, theta, store)
        s_neg = pair_scores(u_all, w_all, theta, store)
        viol = np.maximum(0.0, s_neg - s_pos + gamma_all)
        return float(viol.mean())

    state = TrainState(
        theta=theta,
        optimizer=opt,
        epoch=0,
        best_val_mrr=-np.inf,
        best_theta=theta.copy(),
        best_parent_vec=store.parent_vec.copy(),
    )
    params = dict(theta.named_params())
    params["parent_vec"] = store.parent_vec
    epochs_since_best = 0

    for epoch in range(1, cfg.max_epochs + 1):
        if cfg.resample_negatives and epoch > 1:
            negatives = sample_negatives(
                g, split, cfg.negatives_per_child, cfg.seed + epoch,
                include_validation=cfg.include_validation_negatives,
            )
            u_all, v_all, w_all, gamma_all = _triplet_arrays(
                split.train, negatives, dm
            )
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n_trip)
        loss_sum = 0.0
        for start in range(0, n_trip, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            u, v, w = u_all[batch], v_all[batch], w_all[batch]
            gamma = gamma_all[batch]
            s_pos = pair_scores(u, v, theta, store)
            s_neg = pair_scores(u, w, theta, store)
            viol = s_neg - s_pos + gamma
            active = viol > 0.0  # hinge subgradient at the kink is zero
            batch_loss = float(np.maximum(0.0, viol).mean())
            if not np.isfinite(batch_loss):
                raise TrainError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            loss_sum += batch_loss * batch.size
            if active.any():
                scale = 1.0 / batch.size
                ua, va, wa = u[active], v[active], w[active]
                pair_children = np.concatenate([ua, ua])
                pair_parents = np.concatenate([wa, va])
                coefs = np.concatenate(
                    [np.full(wa.size, scale), np.full(va.size, -scale)]
                ).astype(np.float32)
                bg = batch_grad(pair_children, pair_parents, coefs, theta, store)
                grads = {"P": bg.grad_P, "parent_vec": bg.grad_parent_vec}
                for i, (dw, db) in enumerate(bg.grad_weight_net):
                    grads[f"net.{i}.W"] = dw
                    grads[f"net.{i}.b"] = db
                opt.step(params, grads)
        state.epoch = epoch
        epoch_loss = loss_sum / n_trip
        val = validation_score()
        state.history.append(EpochStats(epoch=epoch, train_loss=epoch_loss, val_mrr=val))
        if val > state.best_val_mrr:
            state.best_val_mrr = val
            state.best_theta = theta.copy()
            state.best_parent_vec = store.parent_vec.copy()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                break
    return state


def best_store(state: TrainState, store: EmbeddingStore) -> EmbeddingStore:
    """Store view whose parent copies come from the best snapshot."""
    return EmbeddingStore(
        dim=store.dim,
        child_vec=store.child_vec,
        parent_vec=state.best_parent_vec,
    )


def checkpoint_tensors(
    theta: ScoreParams, parent_vec: np.ndarray, optimizer: Optimizer | None = None
) -> list[tuple[str, np.ndarray]]:
    tensors = list(theta.named_params())
    tensors.append(("parent_vec", parent_vec))
    if optimizer is not None:
        tensors.extend(optimizer.state_tensors())
    return tensors


def checkpoint_meta(cfg: TrainConfig, dim: int, n_nodes: int) -> dict:
    return {
        "dim": dim,
        "k": cfg.k,
        "hidden_sizes": list(cfg.hidden_sizes),
        "activation": "tanh",
        "seed": cfg.seed,
        "n_nodes": n_nodes,
        "renormalize_parents": False,
        "optimizer": cfg.optimizer,
    }


def theta_from_checkpoint(tensors: dict[str, np.ndarray], meta: dict) -> tuple[ScoreParams, np.ndarray]:
    """Rebuild parameters and parent vectors from a loaded container."""
    hidden = list(meta["hidden_sizes"])
    n_layers = len(hidden) + 1
    weights = [tensors[f"net.{i}.W"] for i in range(n_layers)]
    biases = [tensors[f"net.{i}.b"] for i in range(n_layers)]
    net = Mlp(weights=weights, biases=biases, activation=meta.get("activation", "tanh"))
    theta = ScoreParams(k=int(meta["k"]), P=tensors["P"], weight_net=net)
    return theta, tensors["parent_vec"]
