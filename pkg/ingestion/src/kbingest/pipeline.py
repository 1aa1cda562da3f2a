"""Embedding and bank assembly.

embed_and_pack turns captions or images into a validated feature bank:
each item is embedded by the configured backend, unit-normalized and
written in the navigation engine's bank format together with a
provenance sidecar. A cache directory makes the run resumable: item
embeddings are content-addressed by item id, and cached items are never
sent to the backend again.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .backends import Backends
from .bankio import BankEntry, append_provenance, write_bank
from .errors import DimensionDrift


def _cache_file(cache_dir: Path, item_id: str) -> Path:
    return cache_dir / (hashlib.sha256(item_id.encode("utf-8")).hexdigest() + ".json")


def _normalize(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows.astype(np.float64), axis=1, keepdims=True)
    np.maximum(norms, 1e-12, out=norms)
    return (rows / norms).astype(np.float32)


def embed_and_pack(items: Sequence[tuple[str, str | bytes]], modality: str,
                   backends: Backends, out: str | Path,
                   cache_dir: str | Path | None = None,
                   bank_name: str | None = None) -> Path:
    """Embed (item_id, payload) pairs and write the bank to `out`.

    `modality` is "text" (payloads are captions) or "image" (payloads are
    encoded image bytes). Returns the bank path; a provenance sidecar is
    written next to it as `<out>.provenance.jsonl`.
    """
    if modality not in ("text", "image"):
        raise ValueError(f"modality must be 'text' or 'image', got {modality!r}")
    out = Path(out)
    cache_dir = Path(cache_dir) if cache_dir is not None else None
    if cache_dir is not None:
        cache_dir.mkdir(parents=True, exist_ok=True)
    expected_dim = backends.config.embed_dim

    vectors: dict[str, np.ndarray] = {}
    pending: list[tuple[str, str | bytes]] = []
    for item_id, payload in items:
        cached = _cache_file(cache_dir, item_id) if cache_dir is not None else None
        if cached is not None and cached.exists():
            vec = np.asarray(json.loads(cached.read_text())["vector"], dtype=np.float32)
            vectors[item_id] = vec
        else:
            pending.append((item_id, payload))

    batch = max(1, backends.config.batch_size)
    new_records = []
    for start in range(0, len(pending), batch):
        chunk = pending[start:start + batch]
        payloads = [p for _, p in chunk]
        if modality == "text":
            rows = backends.embed.embed_texts(payloads)  # type: ignore[arg-type]
        else:
            rows = backends.embed.embed_images(payloads)  # type: ignore[arg-type]
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float32))
        if rows.shape[1] != expected_dim:
            raise DimensionDrift(
                f"backend returned width {rows.shape[1]}, expected {expected_dim}"
            )
        rows = _normalize(rows)
        for (item_id, _), vec in zip(chunk, rows):
            vectors[item_id] = vec
            if cache_dir is not None:
                _cache_file(cache_dir, item_id).write_text(
                    json.dumps({"id": item_id, "vector": [float(x) for x in vec]})
                )
            new_records.append({
                "entry_id": item_id,
                "prompt": None,
                "backend": backends.embed.name,
                "parameters": {"modality": modality, "dim": expected_dim},
            })

    entries = []
    for item_id, payload in items:
        source_text = payload if modality == "text" else None
        source_ref = item_id if modality == "image" else None
        entries.append(BankEntry(entry_id=item_id, vector=vectors[item_id],
                                 source_text=source_text, source_ref=source_ref))
    write_bank(out, name=bank_name or f"{modality}-knowledge", modality=modality,
               entries=entries, normalized=True)
    if new_records:
        append_provenance(out.with_suffix(out.suffix + ".provenance.jsonl"),
                          new_records)
    return out
