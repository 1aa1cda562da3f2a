"""Binary feature banks: the on-disk home of every embedding collection.

A bank is an immutable, ordered list of embedding rows plus a manifest.
On disk (all integers little-endian):

    magic "BTKB" | version u16 | manifest_len u32 | manifest UTF-8 JSON
    | payload count*dim f32 row-major | id_len u32 | ids, one per line
    | optional source section: JSON-lines, one object per entry

The payload is contiguous so it can be memory-mapped; ids and sources
live in separate text sections. Saving the same bank twice produces
byte-identical files.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    DuplicateId,
    IoFailure,
    ManifestMismatch,
    NonFiniteFeature,
    TruncatedPayload,
    VersionUnsupported,
)
from .tensor_store import atomic_write

MAGIC = b"BTKB"
VERSION = 1
DTYPE = "f32-le"
MODALITIES = ("text", "image", "view")
# unit-norm slack for float32 rows
NORM_TOL = 1e-4


@dataclass(frozen=True)
class BankManifest:
    name: str
    modality: str
    dim: int
    count: int
    normalized: bool
    dtype: str = DTYPE
    created_by: str = ""

    def __post_init__(self) -> None:
        if self.modality not in MODALITIES:
            raise ManifestMismatch(f"unknown modality {self.modality!r}")
        if self.dim < 1:
            raise ManifestMismatch(f"dim must be >= 1, got {self.dim}")
        if self.count < 0:
            raise ManifestMismatch(f"count must be >= 0, got {self.count}")
        if self.dtype != DTYPE:
            raise ManifestMismatch(f"dtype must be {DTYPE!r}, got {self.dtype!r}")

    def to_json_bytes(self) -> bytes:
        obj = {
            "name": self.name,
            "modality": self.modality,
            "dim": self.dim,
            "count": self.count,
            "normalized": self.normalized,
            "dtype": self.dtype,
            "created_by": self.created_by,
        }
        return json.dumps(obj, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


@dataclass(frozen=True)
class KnowledgeEntry:
    """One embedding row with its provenance strings."""

    id: str
    feature: np.ndarray
    source_text: str | None = None
    source_ref: str | None = None

    def __post_init__(self) -> None:
        feat = np.asarray(self.feature, dtype=np.float32).reshape(-1)
        object.__setattr__(self, "feature", feat)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeEntry):
            return NotImplemented
        return (
            self.id == other.id
            and self.source_text == other.source_text
            and self.source_ref == other.source_ref
            and self.feature.shape == other.feature.shape
            and bool(np.all(self.feature.view(np.uint32) == other.feature.view(np.uint32)))
        )


@dataclass(frozen=True)
class FeatureBank:
    manifest: BankManifest
    entries: tuple[KnowledgeEntry, ...] = field(default_factory=tuple)

    @cached_property
    def matrix(self) -> np.ndarray:
        """count x dim float32 matrix of all rows, in bank order."""
        if not self.entries:
            return np.zeros((0, self.manifest.dim), dtype=np.float32)
        return np.vstack([e.feature for e in self.entries])

    @cached_property
    def ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.entries)

    @cached_property
    def index_by_id(self) -> dict[str, int]:
        return {e.id: i for i, e in enumerate(self.entries)}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureBank):
            return NotImplemented
        return self.manifest == other.manifest and self.entries == other.entries


@dataclass(frozen=True)
class ValidationFinding:
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[ValidationFinding, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.findings

    def to_json_obj(self) -> dict:
        return {
            "ok": self.ok,
            "findings": [{"code": f.code, "message": f.message} for f in self.findings],
        }


def create_bank(entries: Iterable[KnowledgeEntry], manifest: BankManifest) -> FeatureBank:
    """Build a bank, rejecting dim mismatches, duplicate ids and non-finite rows.

    The manifest's count is set to the number of entries.
    """
    entries = tuple(entries)
    seen: set[str] = set()
    for e in entries:
        if e.feature.shape != (manifest.dim,):
            raise DimensionMismatch(
                f"entry {e.id!r} has dim {e.feature.shape}, bank dim is {manifest.dim}"
            )
        if "\n" in e.id or "\r" in e.id:
            # ids live in a line-delimited section on disk
            raise ManifestMismatch(f"entry id {e.id!r} contains a line break")
        if e.id in seen:
            raise DuplicateId(f"duplicate entry id {e.id!r}")
        seen.add(e.id)
        if not np.all(np.isfinite(e.feature)):
            raise NonFiniteFeature(f"entry {e.id!r} contains NaN or Inf")
    manifest = dataclasses.replace(manifest, count=len(entries))
    return FeatureBank(manifest=manifest, entries=entries)


def save_bank(bank: FeatureBank, path: str | Path) -> None:
    """Persist a bank in the binary layout above. Deterministic byte output."""
    m = bank.manifest
    mbytes = m.to_json_bytes()
    payload = bank.matrix.astype("<f4", copy=False).tobytes()
    id_blob = "".join(e.id + "\n" for e in bank.entries).encode("utf-8")

    out = bytearray()
    out += MAGIC
    out += VERSION.to_bytes(2, "little")
    out += len(mbytes).to_bytes(4, "little")
    out += mbytes
    out += payload
    out += len(id_blob).to_bytes(4, "little")
    out += id_blob

    if any(e.source_text is not None or e.source_ref is not None for e in bank.entries):
        lines = [
            json.dumps(
                {"source_text": e.source_text, "source_ref": e.source_ref},
                separators=(",", ":"),
                ensure_ascii=False,
            )
            for e in bank.entries
        ]
        out += ("\n".join(lines) + "\n").encode("utf-8")

    atomic_write(Path(path), bytes(out))


def load_bank(path: str | Path) -> FeatureBank:
    """Inverse of save_bank: load(save(b)) reproduces b bit-exactly."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc

    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagic(f"{path}: expected magic {MAGIC!r}")
    if len(raw) < 10:
        raise TruncatedPayload(f"{path}: header truncated")
    version = int.from_bytes(raw[4:6], "little")
    if version != VERSION:
        raise VersionUnsupported(f"{path}: format version {version}")
    mlen = int.from_bytes(raw[6:10], "little")
    if len(raw) < 10 + mlen:
        raise TruncatedPayload(f"{path}: manifest truncated")
    try:
        mobj = json.loads(raw[10:10 + mlen].decode("utf-8"))
        manifest = BankManifest(
            name=mobj["name"],
            modality=mobj["modality"],
            dim=int(mobj["dim"]),
            count=int(mobj["count"]),
            normalized=bool(mobj["normalized"]),
            dtype=mobj["dtype"],
            created_by=mobj["created_by"],
        )
    except ManifestMismatch:
        raise
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise ManifestMismatch(f"{path}: bad manifest: {exc}") from exc

    offset = 10 + mlen
    payload_len = manifest.count * manifest.dim * 4
    payload = raw[offset:offset + payload_len]
    if len(payload) < payload_len:
        raise TruncatedPayload(
            f"{path}: payload has {len(payload)} bytes, expected {payload_len}"
        )
    offset += payload_len
    if len(raw) < offset + 4:
        raise TruncatedPayload(f"{path}: id section length missing")
    id_len = int.from_bytes(raw[offset:offset + 4], "little")
    offset += 4
    id_blob = raw[offset:offset + id_len]
    if len(id_blob) < id_len:
        raise TruncatedPayload(f"{path}: id section truncated")
    offset += id_len
    ids = id_blob.decode("utf-8").splitlines()
    if len(ids) != manifest.count:
        raise ManifestMismatch(
            f"{path}: {len(ids)} ids for manifest count {manifest.count}"
        )

    sources: list[tuple[str | None, str | None]]
    rest = raw[offset:]
    if rest:
        lines = rest.decode("utf-8").splitlines()
        if len(lines) != manifest.count:
            raise ManifestMismatch(
                f"{path}: {len(lines)} source lines for count {manifest.count}"
            )
        sources = []
        for line in lines:
            try:
                obj = json.loads(line)
            except ValueError as exc:
                raise ManifestMismatch(f"{path}: bad source line: {exc}") from exc
            sources.append((obj.get("source_text"), obj.get("source_ref")))
    else:
        sources = [(None, None)] * manifest.count

    rows = np.frombuffer(payload, dtype="<f4").reshape(manifest.count, manifest.dim)
    entries = tuple(
        KnowledgeEntry(id=i, feature=rows[j].copy(), source_text=s, source_ref=r)
        for j, (i, (s, r)) in enumerate(zip(ids, sources))
    )
    return FeatureBank(manifest=manifest, entries=entries)


def map_payload(path: str | Path) -> tuple[BankManifest, np.ndarray]:
    """Memory-map a saved bank's payload as a read-only count x dim matrix."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            head = fh.read(10)
            if len(head) < 10 or head[:4] != MAGIC:
                raise BadMagic(f"{path}: expected magic {MAGIC!r}")
            if int.from_bytes(head[4:6], "little") != VERSION:
                raise VersionUnsupported(str(path))
            mlen = int.from_bytes(head[6:10], "little")
            mraw = fh.read(mlen)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if len(mraw) < mlen:
        raise TruncatedPayload(f"{path}: manifest truncated")
    mobj = json.loads(mraw.decode("utf-8"))
    manifest = BankManifest(
        name=mobj["name"], modality=mobj["modality"], dim=int(mobj["dim"]),
        count=int(mobj["count"]), normalized=bool(mobj["normalized"]),
        dtype=mobj["dtype"], created_by=mobj["created_by"],
    )
    if path.stat().st_size < 10 + mlen + manifest.count * manifest.dim * 4:
        raise TruncatedPayload(f"{path}: payload truncated")
    mm = np.memmap(path, dtype="<f4", mode="r", offset=10 + mlen,
                   shape=(manifest.count, manifest.dim))
    return manifest, mm


def validate_bank(bank: FeatureBank) -> ValidationReport:
    """Check every bank invariant; each violation becomes a report finding."""
    findings: list[ValidationFinding] = []
    m = bank.manifest
    if m.count != len(bank.entries):
        findings.append(ValidationFinding(
            "count-mismatch",
            f"manifest count {m.count} != {len(bank.entries)} entries",
        ))
    seen: set[str] = set()
    for i, e in enumerate(bank.entries):
        if e.feature.shape != (m.dim,):
            findings.append(ValidationFinding(
                "dim-mismatch", f"entry {e.id!r} has width {e.feature.shape[0]}"
            ))
            continue
        if not np.all(np.isfinite(e.feature)):
            findings.append(ValidationFinding(
                "non-finite", f"entry {e.id!r} contains NaN or Inf"
            ))
        elif m.normalized:
            norm = float(np.linalg.norm(e.feature.astype(np.float64)))
            if not math.isclose(norm, 1.0, rel_tol=0.0, abs_tol=NORM_TOL):
                findings.append(ValidationFinding(
                    "norm", f"entry {e.id!r} has norm {norm:.6f}, expected 1 +/- {NORM_TOL}"
                ))
        if e.id in seen:
            findings.append(ValidationFinding("duplicate-id", f"entry id {e.id!r} repeats"))
        seen.add(e.id)
    return ValidationReport(findings=tuple(findings))


def synth_bank(seed: int, count: int, dim: int, modality: str = "text") -> FeatureBank:
    """Deterministic synthetic bank: seeded gaussian rows, unit-normalized."""
    if count < 0:
        raise ManifestMismatch(f"count must be >= 0, got {count}")
    if modality not in MODALITIES:
        raise ManifestMismatch(f"unknown modality {modality!r}")
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, MODALITIES.index(modality)])
    rows = rng.standard_normal((count, dim))
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    np.maximum(norms, 1e-12, out=norms)
    rows = (rows / norms).astype(np.float32)
    entries = tuple(
        KnowledgeEntry(id=f"{modality}-{i:08d}", feature=rows[i]) for i in range(count)
    )
    manifest = BankManifest(
        name=f"synth-{modality}-{seed}",
        modality=modality,
        dim=dim,
        count=count,
        normalized=True,
        created_by="synth_bank",
    )
    return FeatureBank(manifest=manifest, entries=entries)
