"""Command-line entry points.

Every verb reads one optional JSON config file; any flag overrides the
config value of the same name. Precedence: flag > config file > default.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys

import numpy as np

from .baselines import BaselineError
from .container import ContainerError, load_checkpoint, save_checkpoint
from .embeddings import (
    EmbeddingError,
    EmbeddingStore,
    load_node_embeddings,
    load_word_vectors,
    phrase_embedding,
    store_from_phrases,
    synth_embeddings,
)
from .graph import (
    GraphError,
    add_dummy_root,
    all_pairs_distances,
    parse_graph,
    read_split_file,
    split_dataset,
    write_split_file,
)
from .metrics import MetricError, candidate_set, evaluate, order_by_score, prop1_check, rank_parents
from .prompts import PromptError, generate_prompts, load_decision_log, session_metrics, write_prompt_file
from .scoring import ScoreError, candidate_scores, init_params
from .service import ServiceState, create_app
from .training import (
    TrainConfig,
    TrainError,
    best_store,
    checkpoint_meta,
    checkpoint_tensors,
    theta_from_checkpoint,
    train,
)

DEFAULTS = {
    "dim": 64,
    "synth_noise": 0.1,
    "synth_seed": 1,
    "seed": 0,
    "test_frac": 0.30,
    "train_frac": 0.85,
    "split_file": "split.txt",
    "checkpoint": "ranker.ckpt",
    "manifest": "manifest.txt",
    "condition": "HF",
    "frac_correct": 0.5,
    "prompt_seed": 0,
    "prompts_file": "prompts.jsonl",
    "delta": 0.05,
    "top_k": 5,
    "host": "127.0.0.1",
    "port": 8000,
    "log_dir": "sessions",
    "budget_ms": 15 * 60 * 1000,
}

_TRAIN_FIELDS = (
    "k", "batch_size", "learning_rate", "weight_decay", "optimizer",
    "hidden_sizes", "negatives_per_child", "patience", "max_epochs",
    "seed", "resample_negatives", "include_validation_negatives",
)

_ERRORS = (
    GraphError, EmbeddingError, ScoreError, TrainError, MetricError,
    PromptError, ContainerError, BaselineError, FileNotFoundError,
)


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _digest(path: str) -> str:
    with open(path, "rb") as fh:
        return "sha256:" + hashlib.sha256(fh.read()).hexdigest()


def _load_graph(cfg: dict):
    if not cfg.get("edges"):
        raise GraphError("no edge-list file configured (--edges)")
    g = add_dummy_root(parse_graph(_read(cfg["edges"])))
    return g, all_pairs_distances(g)


def _load_store(cfg: dict, g) -> tuple[EmbeddingStore, str]:
    """Resolve vectors: node file > word-table pooling > synthetic."""
    if cfg.get("node_vectors"):
        store = load_node_embeddings(_read(cfg["node_vectors"]), cfg["dim"], g)
        return store, _digest(cfg["node_vectors"])
    if cfg.get("word_vectors"):
        table = load_word_vectors(_read(cfg["word_vectors"]))
        return store_from_phrases(g, table), _digest(cfg["word_vectors"])
    desc = f"synth:dim={cfg['dim']},noise={cfg['synth_noise']},seed={cfg['synth_seed']}"
    return synth_embeddings(g, cfg["dim"], cfg["synth_noise"], cfg["synth_seed"]), desc


def _load_split(cfg: dict, g):
    if not cfg.get("split_file"):
        raise GraphError("no split file configured (--split-file)")
    return read_split_file(_read(cfg["split_file"]), g)


def _train_config(cfg: dict) -> TrainConfig:
    kwargs = {f: cfg[f] for f in _TRAIN_FIELDS if f in cfg and cfg[f] is not None}
    return TrainConfig(**kwargs)


def _load_theta(cfg: dict, store: EmbeddingStore):
    ckpt = load_checkpoint(cfg["checkpoint"])
    if ckpt.kind != "ranker":
        raise ContainerError(f"expected a ranker checkpoint, found {ckpt.kind!r}")
    theta, parent_vec = theta_from_checkpoint(ckpt.tensors, ckpt.meta)
    if parent_vec.shape[0] > store.num_nodes:
        raise ContainerError("checkpoint covers more nodes than the current graph")
    merged = store.parent_vec.copy()
    merged[: parent_vec.shape[0]] = parent_vec
    return theta, EmbeddingStore(dim=store.dim, child_vec=store.child_vec, parent_vec=merged)


def _embed_text(text: str, cfg: dict, g, store: EmbeddingStore):
    """Query vector plus the candidate mask for an exact-label match."""
    text = text.strip()
    if not text:
        raise EmbeddingError("empty query text")
    if cfg.get("word_vectors"):
        table = load_word_vectors(_read(cfg["word_vectors"]))
        return phrase_embedding(text, table), None
    node = g.label_to_id.get(text)
    if node is None:
        raise EmbeddingError(f"cannot embed query text {text!r} without word vectors")
    return store.child_vec[node], node


def cmd_split(cfg: dict) -> int:
    g, _ = _load_graph(cfg)
    split = split_dataset(g, cfg["test_frac"], cfg["train_frac"], cfg["seed"])
    write_split_file(split, g, cfg["split_file"])
    print(
        f"wrote {cfg['split_file']}: train={len(split.train)} "
        f"validation={len(split.validation)} test={len(split.test)}"
    )
    return 0


def cmd_train(cfg: dict) -> int:
    g, dm = _load_graph(cfg)
    store, store_digest = _load_store(cfg, g)
    split = _load_split(cfg, g)
    tc = _train_config(cfg)
    state = train(g, split, store, dm, tc)
    meta = checkpoint_meta(tc, store.dim, g.num_nodes)
    best = max(state.history, key=lambda e: e.val_mrr)
    meta["best_val_mrr"] = state.best_val_mrr
    meta["best_epoch"] = best.epoch
    save_checkpoint(
        cfg["checkpoint"], "ranker", meta,
        checkpoint_tensors(state.best_theta, state.best_parent_vec, state.optimizer),
    )
    lines = ["kgx-run-manifest-v1"]
    for field in _TRAIN_FIELDS:
        lines.append(f"config.{field}={getattr(tc, field)}")
    lines.append(f"digest.edges={_digest(cfg['edges'])}")
    lines.append(f"digest.split={_digest(cfg['split_file'])}")
    lines.append(f"digest.vectors={store_digest}")
    lines.append("epoch\ttrain_loss\tval_mrr")
    for e in state.history:
        lines.append(f"{e.epoch}\t{e.train_loss:.10f}\t{e.val_mrr:.10f}")
    lines.append(f"best_epoch={best.epoch}")
    lines.append(f"best_val_mrr={state.best_val_mrr:.10f}")
    with open(cfg["manifest"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(
        f"trained {state.epoch} epochs; best val MRR {state.best_val_mrr:.2f} "
        f"(epoch {best.epoch}); wrote {cfg['checkpoint']} and {cfg['manifest']}"
    )
    return 0


def cmd_eval(cfg: dict) -> int:
    g, dm = _load_graph(cfg)
    store, _ = _load_store(cfg, g)
    split = _load_split(cfg, g)
    theta, store = _load_theta(cfg, store)
    report = evaluate(split.test, theta, store, dm, candidate_set(g, split))
    print(json.dumps(report.as_dict(), indent=2))
    return 0


def cmd_bound(cfg: dict) -> int:
    g, dm = _load_graph(cfg)
    store, _ = _load_store(cfg, g)
    split = _load_split(cfg, g)
    try:
        theta, store = _load_theta(cfg, store)
    except FileNotFoundError:
        tc = _train_config(cfg)
        theta = init_params(store.dim, tc.k, tc.hidden_sizes, tc.seed)
    report = prop1_check(g, split.train, theta, store, dm, delta=cfg["delta"])
    print(json.dumps(report.as_dict(), indent=2))
    return 0 if report.prop1_holds else 1


def cmd_rank(cfg: dict) -> int:
    if not cfg.get("text"):
        raise EmbeddingError("no query text given (--text)")
    g, dm = _load_graph(cfg)
    store, _ = _load_store(cfg, g)
    theta, store = _load_theta(cfg, store)
    qvec, self_node = _embed_text(cfg["text"], cfg, g, store)
    cands = np.asarray([n for n in g.node_ids() if n != g.dummy_root and n != self_node])
    scores = candidate_scores(qvec, cands, theta, store)
    top = order_by_score(cands, scores)[: cfg["top_k"]]
    by_id = dict(zip(cands.tolist(), scores.tolist()))
    print(json.dumps({
        "query": cfg["text"],
        "results": [
            {"id": int(v), "label": g.labels[int(v)], "score": by_id[int(v)]}
            for v in top
        ],
    }, indent=2))
    return 0


def cmd_prompts(cfg: dict) -> int:
    g, dm = _load_graph(cfg)
    split = _load_split(cfg, g)
    predictor = None
    if cfg["condition"] == "MODEL":
        store, _ = _load_store(cfg, g)
        theta, store = _load_theta(cfg, store)
        cands = candidate_set(g, split)

        def predictor(u):
            mask = cands[cands != u]
            return rank_parents(store.child_vec[u], theta, store, mask, query_id=int(u)).top

    prompts = generate_prompts(
        split.test, cfg["condition"], g, dm,
        frac_correct=cfg["frac_correct"], seed=cfg["prompt_seed"],
        error_distance=cfg.get("error_distance"), predictor=predictor,
    )
    write_prompt_file(cfg["prompts_file"], prompts, {
        "condition": cfg["condition"],
        "frac_correct": cfg["frac_correct"],
        "seed": cfg["prompt_seed"],
        "correct_assignment": "exact-floor-seeded",
        "split_digest": _digest(cfg["split_file"]),
    })
    n_correct = sum(p.support_correct for p in prompts)
    print(f"wrote {cfg['prompts_file']}: {len(prompts)} prompts, {n_correct} with correct support")
    return 0


def build_service_state(cfg: dict) -> ServiceState:
    g, dm = _load_graph(cfg)
    store, _ = _load_store(cfg, g)
    theta = None
    test_pairs = []
    try:
        split = _load_split(cfg, g)
        test_pairs = split.test
        cands = candidate_set(g, split)
    except (FileNotFoundError, GraphError):
        split = None
        cands = np.asarray([n for n in g.node_ids() if n != g.dummy_root])
    try:
        theta, store = _load_theta(cfg, store)
    except FileNotFoundError:
        pass
    word_table = None
    if cfg.get("word_vectors"):
        word_table = load_word_vectors(_read(cfg["word_vectors"]))

    state = ServiceState(
        g=g, dm=dm, store=store, candidates=cands, test_pairs=test_pairs,
        log_dir=cfg["log_dir"], theta=theta, word_table=word_table,
        edges_path=cfg["edges"], budget_ms=cfg["budget_ms"],
    )

    def rebuild():
        g2, dm2 = _load_graph(cfg)
        store2, _ = _load_store(cfg, g2)
        if state.theta is not None:
            _, store2 = _load_theta(cfg, store2)
        if split is not None:
            held_out = {c for c, _ in split.test}
        else:
            held_out = set()
        cands2 = np.asarray(
            [n for n in g2.node_ids() if n != g2.dummy_root and n not in held_out]
        )
        return g2, dm2, store2, cands2

    state.rebuild = rebuild
    return state


def cmd_serve(cfg: dict) -> int:
    import uvicorn

    app = create_app(build_service_state(cfg))
    uvicorn.run(app, host=cfg["host"], port=cfg["port"], log_level="warning")
    return 0


def cmd_reindex(cfg: dict) -> int:
    g, dm = _load_graph(cfg)
    if cfg.get("split_file"):
        try:
            _load_split(cfg, g)  # errors if the split names unknown labels
        except FileNotFoundError:
            pass
    print(
        f"reindexed {cfg['edges']}: {g.num_nodes} nodes, {len(g.edges)} edges, "
        f"diameter {dm.diameter}"
    )
    return 0


def cmd_session_metrics(cfg: dict) -> int:
    if not cfg.get("decision_log"):
        raise PromptError("no decision log given (--decision-log)")
    m = session_metrics(load_decision_log(cfg["decision_log"]))
    print(json.dumps(m.as_dict(), indent=2))
    return 0


def _hidden_sizes(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="kgx", description=__doc__)
    sub = top.add_subparsers(dest="verb", required=True)
    bool_act = argparse.BooleanOptionalAction

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--edges", help="edge-list TSV (child<TAB>parent)")
        p.add_argument("--split-file", dest="split_file")
        p.add_argument("--checkpoint")
        p.add_argument("--node-vectors", dest="node_vectors")
        p.add_argument("--word-vectors", dest="word_vectors")
        p.add_argument("--dim", type=int)
        p.add_argument("--synth-noise", dest="synth_noise", type=float)
        p.add_argument("--synth-seed", dest="synth_seed", type=int)
        p.add_argument("--seed", type=int)
        return p

    p = add("split", cmd_split, "hold out leaves and write the split file")
    p.add_argument("--test-frac", dest="test_frac", type=float)
    p.add_argument("--train-frac", dest="train_frac", type=float)

    p = add("train", cmd_train, "train the ranker and write checkpoint + manifest")
    p.add_argument("--manifest")
    p.add_argument("--k", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--optimizer", choices=["sgd", "adam", "adamw"])
    p.add_argument("--hidden-sizes", dest="hidden_sizes", type=_hidden_sizes)
    p.add_argument("--negatives-per-child", dest="negatives_per_child", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--resample-negatives", dest="resample_negatives", action=bool_act)
    p.add_argument(
        "--include-validation-negatives",
        dest="include_validation_negatives", action=bool_act,
    )

    add("eval", cmd_eval, "rank held-out children and print the metric report")

    p = add("bound", cmd_bound, "check the distance-vs-loss guarantee on the train split")
    p.add_argument("--delta", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--hidden-sizes", dest="hidden_sizes", type=_hidden_sizes)

    p = add("rank", cmd_rank, "rank parents for one query text")
    p.add_argument("--text")
    p.add_argument("--top-k", dest="top_k", type=int)

    p = add("prompts", cmd_prompts, "generate a review prompt set")
    p.add_argument("--condition", choices=["HF", "NHF", "MODEL"])
    p.add_argument("--frac-correct", dest="frac_correct", type=float)
    p.add_argument("--prompt-seed", dest="prompt_seed", type=int)
    p.add_argument("--error-distance", dest="error_distance", type=int)
    p.add_argument("--prompts-file", dest="prompts_file")

    p = add("serve", cmd_serve, "run the review/prediction HTTP service")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--log-dir", dest="log_dir")
    p.add_argument("--budget-ms", dest="budget_ms", type=int)

    add("reindex", cmd_reindex, "revalidate the edge list and derived artifacts")

    p = add("session-metrics", cmd_session_metrics, "aggregate a decision log")
    p.add_argument("--decision-log", dest="decision_log")

    return top


def _merge(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        if not isinstance(file_cfg, dict):
            raise GraphError("config file must hold a JSON object")
        cfg.update(file_cfg)
    for key, value in vars(args).items():
        if key in ("config", "verb", "func") or value is None:
            continue
        cfg[key] = value
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(_merge(args))
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
