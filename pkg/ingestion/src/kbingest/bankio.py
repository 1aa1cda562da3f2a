"""Writer for the navigation engine's binary feature-bank format.

The format is the integration contract with the navigation engine, so it
is implemented here against its published layout rather than imported:

    magic "BTKB" | version u16-le | manifest_len u32-le | manifest JSON
    (keys: name, modality, dim, count, normalized, dtype, created_by)
    | payload count*dim f32-le row-major | id_len u32-le | ids one per
    line | optional source section: JSON-lines with source_text/source_ref

Also provides the provenance sidecar writer: JSON-lines records carrying
the exact prompt and parameters behind every produced entry.
"""
from __future__ import annotations

import json
import os
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

MAGIC = b"BTKB"
VERSION = 1
DTYPE = "f32-le"


@dataclass(frozen=True)
class BankEntry:
    entry_id: str
    vector: np.ndarray
    source_text: str | None = None
    source_ref: str | None = None


def write_bank(path: str | Path, *, name: str, modality: str,
               entries: list[BankEntry], normalized: bool,
               created_by: str = "kbingest") -> None:
    if entries:
        dim = int(np.asarray(entries[0].vector).reshape(-1).shape[0])
    else:
        raise ValueError("refusing to write an empty knowledge bank")
    manifest = {
        "name": name,
        "modality": modality,
        "dim": dim,
        "count": len(entries),
        "normalized": normalized,
        "dtype": DTYPE,
        "created_by": created_by,
    }
    mbytes = json.dumps(manifest, separators=(",", ":"), ensure_ascii=False).encode("utf-8")

    rows = np.vstack([np.asarray(e.vector, dtype=np.float32).reshape(1, -1)
                      for e in entries])
    if rows.shape != (len(entries), dim):
        raise ValueError("entries disagree on embedding width")

    out = bytearray()
    out += MAGIC
    out += VERSION.to_bytes(2, "little")
    out += len(mbytes).to_bytes(4, "little")
    out += mbytes
    out += rows.astype("<f4", copy=False).tobytes()
    id_blob = "".join(e.entry_id + "\n" for e in entries).encode("utf-8")
    out += len(id_blob).to_bytes(4, "little")
    out += id_blob
    if any(e.source_text is not None or e.source_ref is not None for e in entries):
        lines = [
            json.dumps({"source_text": e.source_text, "source_ref": e.source_ref},
                       separators=(",", ":"), ensure_ascii=False)
            for e in entries
        ]
        out += ("\n".join(lines) + "\n").encode("utf-8")

    _atomic_write(Path(path), bytes(out))


def append_provenance(path: str | Path, records: Iterable[dict]) -> None:
    """Append JSON-lines provenance records, stamping each with the time."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as fh:
        for rec in records:
            rec = dict(rec)
            rec.setdefault("timestamp", time.time())
            fh.write(json.dumps(rec, separators=(",", ":"), ensure_ascii=False) + "\n")


def read_provenance(path: str | Path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines if line.strip()]


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
