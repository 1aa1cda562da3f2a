"""Exact top-k cosine retrieval over feature banks.

Banks are scanned exhaustively: every row is scored, scores are sorted
descending with ties broken by ascending entry id, and the first k hits
are returned. No approximate index, so results are reproducible and
equal to a brute-force oracle by construction.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyBank, EmptySubgoalList, MissingEntry, ZeroVector
from .feature_bank import FeatureBank


@dataclass(frozen=True)
class RetrievalHit:
    entry_id: str
    rank: int  # 1-based
    score: float


@dataclass(frozen=True)
class ViewKnowledge:
    """Per-sub-view retrieval results for one panorama."""

    node_id: str
    per_view: tuple[tuple[RetrievalHit, ...], ...]

    def to_json_obj(self) -> dict:
        return {
            "node_id": self.node_id,
            "views": [
                [{"id": h.entry_id, "rank": h.rank, "score": h.score} for h in hits]
                for hits in self.per_view
            ],
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_json_obj(), separators=(",", ":"))


def normalize(v: np.ndarray) -> np.ndarray:
    """Scale v to unit Euclidean length. Raises ZeroVector below 1e-12."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise DimensionMismatch("cannot normalize an empty vector")
    norm = float(np.linalg.norm(v))
    if norm < 1e-12:
        raise ZeroVector(f"vector norm {norm} below 1e-12")
    return v / norm


def _unit_rows(bank: FeatureBank) -> np.ndarray:
    rows = bank.matrix.astype(np.float64)
    if bank.manifest.normalized:
        return rows
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    np.maximum(norms, 1e-12, out=norms)
    return rows / norms


def cosine_topk(query: np.ndarray, bank: FeatureBank, k: int) -> list[RetrievalHit]:
    """Top-k rows of `bank` by cosine similarity to `query`.

    Equivalent to scoring every row, sorting by (-score, entry_id) and
    truncating to min(k, count).
    """
    if bank.manifest.count == 0:
        raise EmptyBank(f"bank {bank.manifest.name!r} has no entries")
    if k < 1:
        raise DimensionMismatch(f"k must be >= 1, got {k}")
    query = np.asarray(query, dtype=np.float64).reshape(-1)
    if query.shape[0] != bank.manifest.dim:
        raise DimensionMismatch(
            f"query dim {query.shape[0]} != bank dim {bank.manifest.dim}"
        )
    q = normalize(query)
    scores = _unit_rows(bank) @ q
    ids = np.asarray(bank.ids)
    order = np.lexsort((ids, -scores))[: min(k, len(ids))]
    return [
        RetrievalHit(entry_id=str(ids[j]), rank=r + 1, score=float(scores[j]))
        for r, j in enumerate(order)
    ]


def retrieve_view_knowledge(
    panorama: Sequence[np.ndarray],
    text_bank: FeatureBank,
    k: int = 5,
    node_id: str = "",
) -> ViewKnowledge:
    """Run cosine_topk for each directional view of a panorama."""
    per_view = tuple(tuple(cosine_topk(view, text_bank, k)) for view in panorama)
    return ViewKnowledge(node_id=node_id, per_view=per_view)


def index_image_knowledge(
    instruction_id: str,
    subgoal_ids: Sequence[str],
    image_bank: FeatureBank,
) -> np.ndarray:
    """Stack the bank features of an instruction's subgoals, in subgoal order."""
    if len(subgoal_ids) == 0:
        raise EmptySubgoalList(f"instruction {instruction_id!r} has no subgoal ids")
    index = image_bank.index_by_id
    rows = []
    for sid in subgoal_ids:
        if sid not in index:
            raise MissingEntry(
                f"instruction {instruction_id!r}: subgoal id {sid!r} not in bank "
                f"{image_bank.manifest.name!r}"
            )
        rows.append(image_bank.entries[index[sid]].feature)
    return np.vstack(rows)


def gather_hit_features(
    hits_per_view: Sequence[Sequence[RetrievalHit]],
    bank: FeatureBank,
) -> np.ndarray:
    """Concatenate the bank rows referenced by retrieval hits, view-major."""
    index = bank.index_by_id
    rows = [bank.entries[index[h.entry_id]].feature for hits in hits_per_view for h in hits]
    if not rows:
        raise EmptyBank("no retrieval hits to gather")
    return np.vstack(rows)


def view_knowledge_jsonl(records: Sequence[ViewKnowledge]) -> str:
    return "".join(vk.to_json_line() + "\n" for vk in records)
