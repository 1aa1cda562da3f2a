"""Named-tensor container: JSON manifest + contiguous f32-le payload.

Same framing discipline as the feature-bank format: a fixed magic, a
little-endian version, a length-prefixed JSON manifest listing tensor
names and shapes, then all tensor data concatenated row-major as 32-bit
little-endian floats in manifest order. Used for parameter bundles and
augmentation traces.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import BadMagic, IoFailure, ManifestMismatch, TruncatedPayload, VersionUnsupported

MAGIC = b"BTKT"
VERSION = 1


def save_tensors(path: str | Path, tensors: Mapping[str, np.ndarray],
                 meta: dict | None = None) -> None:
    """Write tensors to `path`. Byte output is deterministic for equal inputs."""
    entries = []
    blobs = []
    for name, arr in tensors.items():
        a = np.ascontiguousarray(np.asarray(arr, dtype=np.float64)).astype("<f4")
        entries.append({"name": name, "shape": list(a.shape)})
        blobs.append(a.tobytes())
    manifest: dict = {"tensors": entries}
    if meta is not None:
        manifest["meta"] = meta
    mbytes = json.dumps(manifest, separators=(",", ":"), ensure_ascii=False).encode("utf-8")

    out = bytearray()
    out += MAGIC
    out += VERSION.to_bytes(2, "little")
    out += len(mbytes).to_bytes(4, "little")
    out += mbytes
    for blob in blobs:
        out += blob
    atomic_write(Path(path), bytes(out))


def load_tensors(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a container; returns (name -> float32 array, meta dict)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if len(raw) < 10:
        raise TruncatedPayload(f"{path}: file shorter than header")
    if raw[:4] != MAGIC:
        raise BadMagic(f"{path}: expected {MAGIC!r}, found {raw[:4]!r}")
    version = int.from_bytes(raw[4:6], "little")
    if version != VERSION:
        raise VersionUnsupported(f"{path}: version {version}")
    mlen = int.from_bytes(raw[6:10], "little")
    if len(raw) < 10 + mlen:
        raise TruncatedPayload(f"{path}: manifest runs past end of file")
    try:
        manifest = json.loads(raw[10:10 + mlen].decode("utf-8"))
        entries = manifest["tensors"]
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise ManifestMismatch(f"{path}: bad manifest: {exc}") from exc

    tensors: dict[str, np.ndarray] = {}
    offset = 10 + mlen
    for entry in entries:
        shape = tuple(int(s) for s in entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        blob = raw[offset:offset + nbytes]
        if len(blob) < nbytes:
            raise TruncatedPayload(f"{path}: tensor {entry['name']!r} truncated")
        tensors[entry["name"]] = np.frombuffer(blob, dtype="<f4").reshape(shape).copy()
        offset += nbytes
    return tensors, manifest.get("meta", {})


def atomic_write(path: Path, data: bytes) -> None:
    """Write via a temp file + rename so failures leave no partial output."""
    try:
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
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
