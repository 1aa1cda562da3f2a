"""Goal-aware instruction augmentation.

Subgoal phrases are embedded as semantic anchors, the instruction attends
over them, and a sigmoid gate blends attended and original features into
the enhanced instruction matrix. The text encoder here is a deterministic
desk-scale stand-in (seeded hash embeddings plus sinusoidal position
codes); externally produced instruction features can be supplied through
the same L x dim interface.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor_store
from .errors import DimensionMismatch, EmptyInstruction, EmptyPhrase
from .fusion_math import (
    Arrays,
    GateParams,
    GradBundle,
    MhaParams,
    gate_fuse_backward,
    gate_fuse_cache,
    mha_backward,
    mha_forward_cache,
)

DEFAULT_DIM = 768


@dataclass(frozen=True)
class Subgoal:
    phrase: str
    embedding: np.ndarray  # tokens x dim
    bank_id: str | None = None


@dataclass(frozen=True)
class InstructionRecord:
    id: str
    tokens: tuple[str, ...]
    features: np.ndarray  # L x dim
    subgoals: tuple[Subgoal, ...] = field(default_factory=tuple)

    @property
    def subgoal_matrix(self) -> np.ndarray:
        """Row-wise concatenation of all subgoal token embeddings."""
        mats = [sg.embedding for sg in self.subgoals]
        if not mats:
            raise EmptyPhrase(f"instruction {self.id!r} has no subgoals")
        return np.vstack(mats)

    def subgoal_bank_ids(self) -> list[str]:
        return [sg.bank_id for sg in self.subgoals if sg.bank_id is not None]


@dataclass(frozen=True)
class GaaParams:
    mha: MhaParams
    gate: GateParams  # w_a multiplies the original features, w_b the attended ones


def tokenize(text: str) -> list[str]:
    # whitespace split + lowercase, nothing more
    return text.lower().split()


def _token_vector(token: str, dim: int) -> np.ndarray:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    return rng.standard_normal(dim)


def _position_code(index: int, dim: int) -> np.ndarray:
    pos = np.zeros(dim)
    j = np.arange(0, dim, 2)
    angle = index / np.power(10000.0, j / dim)
    pos[0::2] = np.sin(angle)
    pos[1::2] = np.cos(angle)[: dim // 2]
    return pos


def encode_instruction(tokens: Sequence[str], dim: int = DEFAULT_DIM) -> np.ndarray:
    """Deterministic instruction features: hash embedding + position code,
    each row unit-normalized."""
    tokens = list(tokens)
    if not tokens:
        raise EmptyInstruction("instruction has no tokens")
    rows = np.empty((len(tokens), dim))
    for i, tok in enumerate(tokens):
        row = _token_vector(tok, dim) + _position_code(i, dim)
        rows[i] = row / np.linalg.norm(row)
    return rows


def embed_subgoals(phrases: Sequence[str], dim: int = DEFAULT_DIM) -> list[np.ndarray]:
    """Per-phrase token embeddings, no position codes (subgoals are
    order-free anchors)."""
    out = []
    for phrase in phrases:
        toks = tokenize(phrase)
        if not toks:
            raise EmptyPhrase(f"subgoal phrase {phrase!r} has no tokens")
        mat = np.empty((len(toks), dim))
        for i, tok in enumerate(toks):
            v = _token_vector(tok, dim)
            mat[i] = v / np.linalg.norm(v)
        out.append(mat)
    return out


def make_instruction(instr_id: str, text: str, subgoal_phrases: Sequence[str],
                     dim: int = DEFAULT_DIM,
                     bank_ids: Sequence[str] | None = None) -> InstructionRecord:
    """Build a full record from raw text using the stand-in encoder."""
    tokens = tokenize(text)
    features = encode_instruction(tokens, dim)
    embeddings = embed_subgoals(subgoal_phrases, dim)
    if bank_ids is None:
        bank_ids = [None] * len(subgoal_phrases)  # type: ignore[list-item]
    subgoals = tuple(
        Subgoal(phrase=p, embedding=e, bank_id=b)
        for p, e, b in zip(subgoal_phrases, embeddings, bank_ids)
    )
    return InstructionRecord(id=instr_id, tokens=tuple(tokens),
                             features=features, subgoals=subgoals)


def gaa_forward(t: np.ndarray, subgoal_rows: np.ndarray,
                params: GaaParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Enhance instruction features with subgoal attention.

    Returns (fused, gate, attended): the instruction attends over subgoal
    token rows, then gate = sigmoid(t @ w_a + attended @ w_b + bias) blends
    fused = gate * attended + (1 - gate) * t.
    """
    t = np.asarray(t, dtype=np.float64)
    subgoal_rows = np.asarray(subgoal_rows, dtype=np.float64)
    if subgoal_rows.ndim != 2 or subgoal_rows.shape[0] < 1:
        raise DimensionMismatch("subgoal matrix must have at least one row")
    attended, _ = mha_forward_cache(t, subgoal_rows, params.mha)
    fused, gate, _ = gate_fuse_cache(attended, t, params.gate, gate_weights="enhanced")
    return fused, gate, attended


def gaa_backward(t: np.ndarray, subgoal_rows: np.ndarray,
                 params: GaaParams) -> dict[str, np.ndarray]:
    """Gradients of sum(fused) wrt every parameter and both inputs."""
    t = np.asarray(t, dtype=np.float64)
    subgoal_rows = np.asarray(subgoal_rows, dtype=np.float64)
    attended, mha_cache = mha_forward_cache(t, subgoal_rows, params.mha)
    fused, _, gate_cache = gate_fuse_cache(attended, t, params.gate, "enhanced")

    g = gate_fuse_backward(gate_cache, np.ones_like(fused))
    m = mha_backward(mha_cache, g["enhanced"])
    return {
        "t": g["original"] + m["q_src"],
        "subgoals": m["kv_src"],
        "w_q": m["w_q"], "w_k": m["w_k"], "w_v": m["w_v"], "w_o": m["w_o"],
        "w_g": g["w_a"], "w_c": g["w_b"], "b_i": g["bias"],
    }


def gaa_bundle(seed: int, length: int = 4, subgoal_rows: int = 3,
               dim: int = 8, heads: int = 2) -> GradBundle:
    """Seeded random instance of the full augmentor for grad_check."""
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 303])
    point = {
        "t": rng.standard_normal((length, dim)),
        "subgoals": rng.standard_normal((subgoal_rows, dim)),
        "w_q": rng.standard_normal((dim, dim)) / np.sqrt(dim),
        "w_k": rng.standard_normal((dim, dim)) / np.sqrt(dim),
        "w_v": rng.standard_normal((dim, dim)) / np.sqrt(dim),
        "w_o": rng.standard_normal((dim, dim)) / np.sqrt(dim),
        "w_g": rng.standard_normal((dim, dim)) / np.sqrt(dim),
        "w_c": rng.standard_normal((dim, dim)) / np.sqrt(dim),
        "b_i": rng.standard_normal(dim),
    }

    def params_of(p: Arrays) -> GaaParams:
        return GaaParams(
            mha=MhaParams(heads=heads, w_q=p["w_q"], w_k=p["w_k"],
                          w_v=p["w_v"], w_o=p["w_o"]),
            gate=GateParams(w_a=p["w_g"], w_b=p["w_c"], bias=p["b_i"]),
        )

    def forward(p: Arrays) -> np.ndarray:
        fused, _, _ = gaa_forward(p["t"], p["subgoals"], params_of(p))
        return fused

    def backward(p: Arrays) -> dict[str, np.ndarray]:
        return gaa_backward(p["t"], p["subgoals"], params_of(p))

    return point, forward, backward


# --- record persistence ------------------------------------------------------

def save_instruction(record: InstructionRecord, json_path: str | Path) -> None:
    """JSON for the text fields, named-tensor sidecar for the matrices."""
    json_path = Path(json_path)
    tensors: dict[str, np.ndarray] = {"features": record.features}
    for i, sg in enumerate(record.subgoals):
        tensors[f"subgoal.{i}.embedding"] = sg.embedding
    tensor_store.save_tensors(_tensor_path(json_path), tensors)
    obj = {
        "id": record.id,
        "tokens": list(record.tokens),
        "subgoals": [
            {"phrase": sg.phrase, "bank_id": sg.bank_id} for sg in record.subgoals
        ],
    }
    tensor_store.atomic_write(
        json_path, json.dumps(obj, indent=2, ensure_ascii=False).encode("utf-8")
    )


def load_instruction(json_path: str | Path) -> InstructionRecord:
    json_path = Path(json_path)
    obj = json.loads(json_path.read_text(encoding="utf-8"))
    tensors, _ = tensor_store.load_tensors(_tensor_path(json_path))
    subgoals = tuple(
        Subgoal(phrase=sg["phrase"],
                embedding=tensors[f"subgoal.{i}.embedding"].astype(np.float64),
                bank_id=sg.get("bank_id"))
        for i, sg in enumerate(obj["subgoals"])
    )
    return InstructionRecord(id=obj["id"], tokens=tuple(obj["tokens"]),
                             features=tensors["features"].astype(np.float64),
                             subgoals=subgoals)


def _tensor_path(json_path: Path) -> Path:
    return json_path.with_name(json_path.name + ".tensors")
