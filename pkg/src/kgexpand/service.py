"""HTTP service for taxonomy review sessions and ranked parent predictions.

One process serves the tree browser, timed review sessions with controlled
decision support, the trained ranker, and edge-list mutation. Graph
mutation is exclusive: attach and reindex hold the same lock that prompt
issuance uses, so clients never see a half-swapped graph.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .embeddings import EmbeddingError, EmbeddingStore, WordVectorTable, phrase_embedding
from .graph import DistanceMatrix, KnowledgeGraph, NodeId, append_edge_line, neighborhood
from .metrics import order_by_score, rank_parents
from .prompts import (
    CONDITIONS,
    DecisionRecord,
    Prompt,
    PromptError,
    generate_prompts,
    session_metrics,
    write_prompt_file,
)
from .scoring import ScoreParams, candidate_scores

DEFAULT_BUDGET_MS = 15 * 60 * 1000


def _wall_ms() -> int:
    return time.time_ns() // 1_000_000


@dataclass
class _Session:
    session_id: str
    condition: str
    frac_correct: float
    prompts: list[Prompt]
    created_ms: int
    budget_ms: int
    log_path: str
    idx: int = 0
    issued_ms: int | None = None
    answered: set[str] = field(default_factory=set)
    records: list[DecisionRecord] = field(default_factory=list)
    score: int = 0
    correct_count: int = 0
    incorrect_count: int = 0

    def remaining_ms(self, now: int) -> int:
        return max(0, self.created_ms + self.budget_ms - now)

    def status(self, now: int) -> str:
        if self.created_ms + self.budget_ms - now <= 0:
            return "expired"
        if self.idx >= len(self.prompts):
            return "complete"
        return "open"


@dataclass
class ServiceState:
    """Everything the endpoints read or mutate, injectable for tests.

    ``clock_ms`` supplies both decision timestamps and the elapsed/budget
    clock; ``rebuild`` reloads graph, distances, store, and candidate set
    from the edge-list file and is the only way mutations become visible.
    """

    g: KnowledgeGraph
    dm: DistanceMatrix
    store: EmbeddingStore
    candidates: np.ndarray
    test_pairs: list[tuple[NodeId, NodeId]]
    log_dir: str
    theta: ScoreParams | None = None
    word_table: WordVectorTable | None = None
    edges_path: str | None = None
    rebuild: Callable[[], tuple[KnowledgeGraph, DistanceMatrix, EmbeddingStore, np.ndarray]] | None = None
    budget_ms: int = DEFAULT_BUDGET_MS
    clock_ms: Callable[[], int] = _wall_ms
    sessions: dict[str, _Session] = field(default_factory=dict)
    pending: list[str] = field(default_factory=list)
    lock: threading.RLock = field(default_factory=threading.RLock)
    _counter: int = 0

    def next_session_id(self) -> str:
        self._counter += 1
        return f"s{self._counter:04d}"


class SessionBody(BaseModel):
    condition: str
    seed: int = 0
    frac_correct: float = 0.5
    limit: int | None = None


class DecisionBody(BaseModel):
    prompt_id: str
    chosen_id: int


class PredictBody(BaseModel):
    text: str
    k: int = 5


class AttachBody(BaseModel):
    label: str
    parent_id: int


def _fsync_append(path: str, line: str) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def _model_predictor(state: ServiceState) -> Callable[[NodeId], NodeId]:
    def predict(u: NodeId) -> NodeId:
        cands = state.candidates[state.candidates != u]
        ranked = rank_parents(
            state.store.child_vec[u], state.theta, state.store, cands, query_id=int(u)
        )
        return ranked.top

    return predict


def create_app(state: ServiceState) -> FastAPI:
    os.makedirs(state.log_dir, exist_ok=True)
    app = FastAPI(title="kgexpand", docs_url=None, redoc_url=None)
    # the browser client may be served from any origin
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    def node_view(node: NodeId) -> dict:
        return {"id": int(node), "label": state.g.labels[node]}

    def session_or_404(session_id: str) -> _Session:
        sess = state.sessions.get(session_id)
        if sess is None:
            raise HTTPException(404, detail={"message": f"unknown session {session_id!r}"})
        return sess

    def progress(sess: _Session, now: int) -> dict:
        return {
            "remaining_ms": sess.remaining_ms(now),
            "score": sess.score,
            "correct_count": sess.correct_count,
            "incorrect_count": sess.incorrect_count,
            "answered": sess.idx,
            "total": len(sess.prompts),
        }

    @app.get("/graph/tree")
    def graph_tree(root: int | None = None, depth: int = 1) -> dict:
        with state.lock:
            g = state.g
            if depth < 0:
                raise HTTPException(422, detail={"message": "depth must be non-negative"})
            if root is None:
                root = g.dummy_root if g.dummy_root is not None else min(g.subgraph_roots)
            if not g.has_node(root):
                raise HTTPException(404, detail={"message": f"unknown node id {root}"})

            def build(node: NodeId, levels: int) -> dict:
                row = {
                    "id": int(node),
                    "label": g.labels[node],
                    "has_children": bool(g.children[node]),
                }
                if levels > 0 and g.children[node]:
                    row["children"] = [build(c, levels - 1) for c in sorted(g.children[node])]
                return row

            return build(int(root), depth)

    @app.get("/node/{node_id}/neighborhood")
    def node_neighborhood(node_id: int, h: int = 1) -> dict:
        with state.lock:
            if not state.g.has_node(node_id):
                raise HTTPException(404, detail={"message": f"unknown node id {node_id}"})
            if h < 0:
                raise HTTPException(422, detail={"message": "h must be non-negative"})
            found = neighborhood(state.g, node_id, h)
            rows = [
                {**node_view(n), "distance": int(state.dm[node_id, n])}
                for n in found
            ]
            rows.sort(key=lambda r: (r["distance"], r["id"]))
            return {"center": int(node_id), "h": h, "nodes": rows}

    @app.post("/sessions")
    def create_session(body: SessionBody) -> dict:
        with state.lock:
            if body.condition not in CONDITIONS:
                raise HTTPException(
                    422, detail={"message": f"condition must be one of {list(CONDITIONS)}"}
                )
            if not state.test_pairs:
                raise HTTPException(409, detail={"message": "no held-out pairs to review"})
            if body.limit is not None and body.limit < 1:
                raise HTTPException(422, detail={"message": "limit must be at least 1"})
            pairs = state.test_pairs[: body.limit] if body.limit else state.test_pairs
            predictor = None
            if body.condition == "MODEL":
                if state.theta is None:
                    raise HTTPException(409, detail={"message": "no trained checkpoint loaded"})
                predictor = _model_predictor(state)
            try:
                prompts = generate_prompts(
                    pairs,
                    body.condition,
                    state.g,
                    state.dm,
                    frac_correct=body.frac_correct,
                    seed=body.seed,
                    predictor=predictor,
                )
            except PromptError as exc:
                raise HTTPException(409, detail={"message": str(exc)}) from exc
            sid = state.next_session_id()
            now = state.clock_ms()
            sess = _Session(
                session_id=sid,
                condition=body.condition,
                frac_correct=body.frac_correct,
                prompts=prompts,
                created_ms=now,
                budget_ms=state.budget_ms,
                log_path=os.path.join(state.log_dir, f"{sid}.log.jsonl"),
            )
            write_prompt_file(
                os.path.join(state.log_dir, f"{sid}.prompts.jsonl"),
                prompts,
                {
                    "session_id": sid,
                    "condition": body.condition,
                    "seed": body.seed,
                    "frac_correct": body.frac_correct,
                    "correct_assignment": "exact-floor-seeded",
                    "created_ts": now,
                },
            )
            state.sessions[sid] = sess
            return {
                "session_id": sid,
                "condition": body.condition,
                "num_prompts": len(prompts),
                "budget_ms": state.budget_ms,
                "created_ts": now,
            }

    @app.get("/sessions/{session_id}/next")
    def next_prompt(session_id: str) -> dict:
        with state.lock:
            sess = session_or_404(session_id)
            now = state.clock_ms()
            status = sess.status(now)
            if status != "open":
                return {"status": status, **progress(sess, now)}
            prompt = sess.prompts[sess.idx]
            if sess.issued_ms is None:
                sess.issued_ms = now
            path: list[int] = []
            node: NodeId | None = prompt.preselected
            while node is not None and node != state.g.dummy_root:
                path.append(int(node))
                node = state.g.parent[node]
            path.reverse()
            return {
                "status": "prompt",
                "prompt": {
                    "prompt_id": prompt.prompt_id,
                    "condition": prompt.condition,
                    "index": sess.idx + 1,
                    "total": len(sess.prompts),
                    "query": node_view(prompt.query),
                    "preselected": node_view(prompt.preselected),
                    "preselected_path": path,
                },
                **progress(sess, now),
            }

    @app.post("/sessions/{session_id}/decisions")
    def record_decision(session_id: str, body: DecisionBody) -> dict:
        with state.lock:
            sess = session_or_404(session_id)
            now = state.clock_ms()
            if sess.status(now) == "expired":
                raise HTTPException(409, detail={"message": "session expired"})
            if body.prompt_id in sess.answered:
                raise HTTPException(
                    409, detail={"message": f"prompt {body.prompt_id!r} already answered"}
                )
            if sess.idx >= len(sess.prompts):
                raise HTTPException(409, detail={"message": "session complete"})
            current = sess.prompts[sess.idx]
            if body.prompt_id != current.prompt_id:
                raise HTTPException(
                    409, detail={"message": f"prompt {body.prompt_id!r} is not the issued prompt"}
                )
            if sess.issued_ms is None:
                raise HTTPException(
                    409, detail={"message": "prompt not yet issued; fetch it first"}
                )
            if not state.g.has_node(body.chosen_id):
                raise HTTPException(422, detail={"message": f"unknown node id {body.chosen_id}"})
            if body.chosen_id == state.g.dummy_root:
                raise HTTPException(
                    422, detail={"message": "the synthetic root cannot be a parent decision"}
                )
            record = DecisionRecord(
                session_id=sess.session_id,
                prompt_id=current.prompt_id,
                condition=sess.condition,
                preselected_id=int(current.preselected),
                chosen_id=int(body.chosen_id),
                true_parent_id=int(current.true_parent),
                elapsed_ms=now - sess.issued_ms,
                ts=now,
            )
            _fsync_append(sess.log_path, record.as_json_line())
            sess.records.append(record)
            sess.answered.add(current.prompt_id)
            sess.idx += 1
            sess.issued_ms = None
            if record.correct:
                sess.correct_count += 1
                sess.score += 1
            else:
                sess.incorrect_count += 1
                sess.score -= 1
            return {
                "prompt_id": current.prompt_id,
                "correct": record.correct,
                "complied": record.complied,
                **progress(sess, now),
            }

    @app.get("/sessions/{session_id}/metrics")
    def get_metrics(session_id: str) -> dict:
        with state.lock:
            sess = session_or_404(session_id)
            now = state.clock_ms()
            if not sess.records:
                raise HTTPException(409, detail={"message": "no decisions recorded"})
            status = sess.status(now)
            m = session_metrics(sess.records)
            out = {
                "status": status,
                "session_id": sess.session_id,
                "condition": sess.condition,
                "answered": m.answered,
                "total": len(sess.prompts),
                "total_score": m.total_score,
                "mean_time_per_prompt": m.mean_time_per_prompt,
                "accuracy_pct": m.accuracy_pct,
                "compliance_pct": m.compliance_pct,
            }
            if status != "open":
                out["frac_correct"] = sess.frac_correct
                out["correct_assignment"] = "exact-floor-seeded"
                out["by_support"] = {k: v.as_dict() for k, v in m.by_support.items()}
            return out

    @app.post("/predict")
    def predict(body: PredictBody) -> dict:
        with state.lock:
            if state.theta is None:
                raise HTTPException(409, detail={"message": "no trained checkpoint loaded"})
            if body.k < 1:
                raise HTTPException(422, detail={"message": "k must be at least 1"})
            text = body.text.strip()
            if not text:
                raise HTTPException(422, detail={"message": "empty query text"})
            cands = state.candidates
            qvec = None
            if state.word_table is not None:
                try:
                    qvec = phrase_embedding(text, state.word_table)
                except EmbeddingError:
                    qvec = None
            if qvec is None:
                node = state.g.label_to_id.get(text)
                if node is None:
                    raise HTTPException(
                        422, detail={"message": f"cannot embed query text {text!r}"}
                    )
                qvec = state.store.child_vec[node]
                cands = cands[cands != node]
            scores = candidate_scores(qvec, cands, state.theta, state.store)
            order = order_by_score(cands, scores)
            by_id = dict(zip(cands.tolist(), scores.tolist()))
            top = order[: body.k]
            return {
                "query": text,
                "k": body.k,
                "results": [
                    {
                        **node_view(int(v)),
                        "score": float(by_id[int(v)]),
                        "neighborhood": f"/node/{int(v)}/neighborhood?h=1",
                    }
                    for v in top
                ],
            }

    @app.post("/attach")
    def attach(body: AttachBody) -> dict:
        with state.lock:
            if state.edges_path is None:
                raise HTTPException(409, detail={"message": "no edge-list file configured"})
            label = body.label.strip()
            if not label:
                raise HTTPException(422, detail={"message": "empty label"})
            existing = state.g.label_to_id.get(label)
            if existing is not None:
                raise HTTPException(
                    409,
                    detail={
                        "message": f"label {label!r} already names a node",
                        "existing_id": int(existing),
                    },
                )
            if label in state.pending:
                raise HTTPException(
                    409,
                    detail={"message": f"label {label!r} is already pending re-index"},
                )
            if not state.g.has_node(body.parent_id):
                raise HTTPException(404, detail={"message": f"unknown node id {body.parent_id}"})
            if body.parent_id == state.g.dummy_root:
                raise HTTPException(
                    422, detail={"message": "cannot attach under the synthetic root"}
                )
            append_edge_line(state.edges_path, label, state.g.labels[body.parent_id])
            state.pending.append(label)
            return {
                "label": label,
                "parent": node_view(body.parent_id),
                "pending_reindex": True,
                "pending_count": len(state.pending),
            }

    @app.post("/reindex")
    def reindex() -> dict:
        with state.lock:
            if state.rebuild is None:
                raise HTTPException(409, detail={"message": "service has no rebuild hook"})
            g, dm, store, candidates = state.rebuild()
            state.g, state.dm, state.store, state.candidates = g, dm, store, candidates
            cleared = len(state.pending)
            state.pending.clear()
            return {
                "num_nodes": g.num_nodes,
                "num_candidates": int(len(candidates)),
                "pending_cleared": cleared,
            }

    return app
