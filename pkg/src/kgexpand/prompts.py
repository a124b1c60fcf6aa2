"""Curator prompts with controlled decision support, and session metrics.

A prompt asks "where does this node attach?" and pre-selects a parent for
the curator. The preselection is the true parent for an exact seeded
fraction of prompts; for the rest it is drawn from the ring of nodes at a
fixed hop distance from the true parent, so the cost of blindly trusting
the support is controlled by construction. The MODEL condition swaps the
controlled error for a trained ranker's top prediction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .graph import DistanceMatrix, KnowledgeGraph, NodeId, _atomic_write

CONDITIONS = ("HF", "NHF", "MODEL")
ERROR_DISTANCE = {"HF": 1, "NHF": 5}
PROMPT_FORMAT_TAG = "kgx-prompts-v1"


class PromptError(ValueError):
    """Raised when a prompt set cannot be generated as requested."""


@dataclass
class Prompt:
    """One review task; support_correct and true_parent stay server-side."""

    prompt_id: str
    query: NodeId
    true_parent: NodeId
    preselected: NodeId
    condition: str
    support_correct: bool


@dataclass
class DecisionRecord:
    """One logged decision; field names match the on-disk log exactly."""

    session_id: str
    prompt_id: str
    condition: str
    preselected_id: NodeId
    chosen_id: NodeId
    true_parent_id: NodeId
    elapsed_ms: int
    ts: int

    @property
    def correct(self) -> bool:
        return self.chosen_id == self.true_parent_id

    @property
    def complied(self) -> bool:
        return self.chosen_id == self.preselected_id

    @property
    def support_correct(self) -> bool:
        return self.preselected_id == self.true_parent_id

    def as_json_line(self) -> str:
        return json.dumps(
            {
                "session_id": self.session_id,
                "prompt_id": self.prompt_id,
                "condition": self.condition,
                "preselected_id": int(self.preselected_id),
                "chosen_id": int(self.chosen_id),
                "true_parent_id": int(self.true_parent_id),
                "elapsed_ms": int(self.elapsed_ms),
                "ts": int(self.ts),
            },
            sort_keys=True,
            separators=(",", ":"),
        )


@dataclass
class StratumMetrics:
    count: int
    total_score: int
    accuracy_pct: float
    compliance_pct: float
    mean_time_s: float

    def as_dict(self) -> dict:
        return {
            "count": self.count,
            "total_score": self.total_score,
            "accuracy_pct": self.accuracy_pct,
            "compliance_pct": self.compliance_pct,
            "mean_time_s": self.mean_time_s,
        }


@dataclass
class SessionMetrics:
    """Score/accuracy/compliance overall and split by support correctness."""

    total_score: int
    mean_time_per_prompt: float
    accuracy_pct: float
    compliance_pct: float
    answered: int
    by_support: dict[str, StratumMetrics]

    def as_dict(self) -> dict:
        return {
            "total_score": self.total_score,
            "mean_time_per_prompt": self.mean_time_per_prompt,
            "accuracy_pct": self.accuracy_pct,
            "compliance_pct": self.compliance_pct,
            "answered": self.answered,
            "by_support": {k: v.as_dict() for k, v in self.by_support.items()},
        }


def generate_prompts(
    pairs: Sequence[tuple[NodeId, NodeId]],
    condition: str,
    g: KnowledgeGraph,
    dm: DistanceMatrix,
    frac_correct: float = 0.5,
    seed: int = 0,
    error_distance: int | None = None,
    predictor: Callable[[NodeId], NodeId] | None = None,
) -> list[Prompt]:
    """Build a shuffled prompt set over held-out child/parent pairs.

    HF and NHF preselect the true parent for exactly
    floor(frac_correct * N) prompts; every other preselection sits at
    exactly ``error_distance`` hops (1 for HF, 5 for NHF) from the true
    parent. MODEL preselects ``predictor(query)`` and ignores the fraction.
    """
    if condition not in CONDITIONS:
        raise PromptError(f"unknown condition {condition!r}")
    if not 0.0 <= frac_correct <= 1.0:
        raise PromptError("frac_correct must be within [0, 1]")
    rng = np.random.default_rng([seed])
    n = len(pairs)
    prompts: list[Prompt] = []
    if condition == "MODEL":
        if predictor is None:
            raise PromptError("MODEL condition needs a predictor")
        for child, parent in pairs:
            pred = int(predictor(child))
            prompts.append(
                Prompt("", child, parent, pred, condition, pred == parent)
            )
    else:
        h = ERROR_DISTANCE[condition] if error_distance is None else error_distance
        if h < 1:
            raise PromptError("error distance must be at least 1 hop")
        n_correct = int(np.floor(frac_correct * n))
        correct_rows = set(
            int(i) for i in rng.choice(n, size=n_correct, replace=False)
        )
        for row, (child, parent) in enumerate(pairs):
            if row in correct_rows:
                prompts.append(Prompt("", child, parent, parent, condition, True))
                continue
            ring = set(int(v) for v in dm.ring(parent, h))
            ring.discard(int(parent))
            ring.discard(int(child))
            if g.dummy_root is not None:
                ring.discard(g.dummy_root)
            if not ring:
                raise PromptError(
                    f"no node at exactly {h} hops from {g.labels[parent]!r}; "
                    "cannot build an incorrect preselection"
                )
            options = sorted(ring)
            pick = options[int(rng.integers(len(options)))]
            prompts.append(Prompt("", child, parent, pick, condition, False))
    order = rng.permutation(n)
    shuffled = [prompts[int(i)] for i in order]
    for i, p in enumerate(shuffled):
        p.prompt_id = f"p{i:04d}"
    return shuffled


def session_metrics(records: Sequence[DecisionRecord]) -> SessionMetrics:
    """Aggregate a decision log, overall and per support-correctness stratum."""
    if not records:
        raise PromptError("no decisions recorded")

    def agg(rs: Sequence[DecisionRecord]) -> StratumMetrics:
        n_correct = sum(r.correct for r in rs)
        n_complied = sum(r.complied for r in rs)
        return StratumMetrics(
            count=len(rs),
            total_score=n_correct - (len(rs) - n_correct),
            accuracy_pct=100.0 * n_correct / len(rs),
            compliance_pct=100.0 * n_complied / len(rs),
            mean_time_s=float(np.mean([r.elapsed_ms for r in rs])) / 1000.0,
        )

    overall = agg(records)
    by_support = {}
    for key, flag in (("support_correct", True), ("support_incorrect", False)):
        sub = [r for r in records if r.support_correct is flag]
        if sub:
            by_support[key] = agg(sub)
    return SessionMetrics(
        total_score=overall.total_score,
        mean_time_per_prompt=overall.mean_time_s,
        accuracy_pct=overall.accuracy_pct,
        compliance_pct=overall.compliance_pct,
        answered=overall.count,
        by_support=by_support,
    )


def write_prompt_file(path: str, prompts: Sequence[Prompt], meta: dict) -> None:
    """Server-side prompt set serialization; byte-stable for a given input."""
    header = dict(meta)
    header["format"] = PROMPT_FORMAT_TAG
    header["count"] = len(prompts)
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    for p in prompts:
        lines.append(
            json.dumps(
                {
                    "prompt_id": p.prompt_id,
                    "query": int(p.query),
                    "true_parent": int(p.true_parent),
                    "preselected": int(p.preselected),
                    "condition": p.condition,
                    "support_correct": p.support_correct,
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        )
    _atomic_write(path, "\n".join(lines) + "\n")


def read_prompt_file(path: str) -> tuple[dict, list[Prompt]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    if not lines:
        raise PromptError("empty prompt file")
    header = json.loads(lines[0])
    if header.get("format") != PROMPT_FORMAT_TAG:
        raise PromptError("not a prompt file (missing format tag)")
    prompts = []
    for ln in lines[1:]:
        row = json.loads(ln)
        prompts.append(
            Prompt(
                prompt_id=row["prompt_id"],
                query=int(row["query"]),
                true_parent=int(row["true_parent"]),
                preselected=int(row["preselected"]),
                condition=row["condition"],
                support_correct=bool(row["support_correct"]),
            )
        )
    return header, prompts


def load_decision_log(path: str) -> list[DecisionRecord]:
    """Parse a line-delimited decision log back into records."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln in fh.read().splitlines():
            if not ln:
                continue
            row = json.loads(ln)
            records.append(
                DecisionRecord(
                    session_id=row["session_id"],
                    prompt_id=row["prompt_id"],
                    condition=row["condition"],
                    preselected_id=int(row["preselected_id"]),
                    chosen_id=int(row["chosen_id"]),
                    true_parent_id=int(row["true_parent_id"]),
                    elapsed_ms=int(row["elapsed_ms"]),
                    ts=int(row["ts"]),
                )
            )
    return records
