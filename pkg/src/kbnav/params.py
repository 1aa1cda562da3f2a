"""Pipeline parameter bundles and their container (de)serialization.

A full run needs three sub-bundles: the instruction augmentor, the
knowledge augmentor applied instruction-side (image knowledge) and the
one applied vision-side (textual knowledge). The two knowledge-side
bundles are independent instances; nothing is shared.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor_store
from .fusion_math import GateParams, MhaParams
from .goal_aware import GaaParams
from .knowledge_aug import KaParams


@dataclass(frozen=True)
class PipelineParams:
    gaa: GaaParams
    ka_instruction: KaParams
    ka_view: KaParams


def neutral_pipeline_params(dim: int, heads: int = 1,
                            text_dim: int | None = None,
                            view_dim: int | None = None) -> PipelineParams:
    """Identity projections and zero gates: every fusion is a plain midpoint.

    Keeps all widths equal to `dim` so the dual-scale scorer can compare
    instruction and view features directly; useful as the default for
    simulation and as a transparent baseline.
    """
    text_dim = text_dim or dim
    view_dim = view_dim or dim
    if text_dim != dim or view_dim != dim:
        raise ValueError("neutral params require a single shared width")
    eye = np.eye(dim)
    zero = np.zeros((dim, dim))
    mha = MhaParams(heads=heads, w_q=eye, w_k=eye, w_v=eye, w_o=eye)
    gate = GateParams(w_a=zero, w_b=zero, bias=np.zeros(dim))
    ka = KaParams(w_k=eye, w_t=eye, mha=mha, gate=gate)
    return PipelineParams(gaa=GaaParams(mha=mha, gate=gate),
                          ka_instruction=ka, ka_view=ka)


def random_pipeline_params(seed: int, dim: int, heads: int = 2,
                           text_dim: int | None = None,
                           view_dim: int | None = None,
                           instr_dim: int | None = None,
                           image_dim: int | None = None) -> PipelineParams:
    """Seeded gaussian parameters at 1/sqrt(dim) scale, for traces and tests.

    `dim` is the shared projected width of both knowledge augmentors;
    the *_dim arguments size the input-side projections.
    """
    text_dim = text_dim or dim
    view_dim = view_dim or dim
    instr_dim = instr_dim or dim
    image_dim = image_dim or dim
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 505])

    def mat(rows: int, cols: int) -> np.ndarray:
        return rng.standard_normal((rows, cols)) / np.sqrt(cols)

    def mha(d: int) -> MhaParams:
        return MhaParams(heads=heads, w_q=mat(d, d), w_k=mat(d, d),
                         w_v=mat(d, d), w_o=mat(d, d))

    def gate(d: int) -> GateParams:
        return GateParams(w_a=mat(d, d), w_b=mat(d, d), bias=rng.standard_normal(d))

    gaa = GaaParams(mha=mha(instr_dim), gate=gate(instr_dim))
    ka_instruction = KaParams(w_k=mat(image_dim, dim), w_t=mat(instr_dim, dim),
                              mha=mha(dim), gate=gate(dim))
    ka_view = KaParams(w_k=mat(text_dim, dim), w_t=mat(view_dim, dim),
                       mha=mha(dim), gate=gate(dim))
    return PipelineParams(gaa=gaa, ka_instruction=ka_instruction, ka_view=ka_view)


def save_pipeline_params(path: str | Path, params: PipelineParams) -> None:
    tensors: dict[str, np.ndarray] = {}
    for prefix, mha, gate in (
        ("gaa", params.gaa.mha, params.gaa.gate),
        ("ka_instruction", params.ka_instruction.mha, params.ka_instruction.gate),
        ("ka_view", params.ka_view.mha, params.ka_view.gate),
    ):
        tensors[f"{prefix}.mha.w_q"] = mha.w_q
        tensors[f"{prefix}.mha.w_k"] = mha.w_k
        tensors[f"{prefix}.mha.w_v"] = mha.w_v
        tensors[f"{prefix}.mha.w_o"] = mha.w_o
        tensors[f"{prefix}.gate.w_a"] = gate.w_a
        tensors[f"{prefix}.gate.w_b"] = gate.w_b
        tensors[f"{prefix}.gate.bias"] = gate.bias
    tensors["ka_instruction.w_k"] = params.ka_instruction.w_k
    tensors["ka_instruction.w_t"] = params.ka_instruction.w_t
    tensors["ka_view.w_k"] = params.ka_view.w_k
    tensors["ka_view.w_t"] = params.ka_view.w_t
    meta = {
        "gaa.heads": params.gaa.mha.heads,
        "ka_instruction.heads": params.ka_instruction.mha.heads,
        "ka_view.heads": params.ka_view.mha.heads,
    }
    tensor_store.save_tensors(path, tensors, meta=meta)


def load_pipeline_params(path: str | Path) -> PipelineParams:
    tensors, meta = tensor_store.load_tensors(path)
    t = {k: v.astype(np.float64) for k, v in tensors.items()}

    def mha(prefix: str) -> MhaParams:
        return MhaParams(heads=int(meta[f"{prefix}.heads"]),
                         w_q=t[f"{prefix}.mha.w_q"], w_k=t[f"{prefix}.mha.w_k"],
                         w_v=t[f"{prefix}.mha.w_v"], w_o=t[f"{prefix}.mha.w_o"])

    def gate(prefix: str) -> GateParams:
        return GateParams(w_a=t[f"{prefix}.gate.w_a"], w_b=t[f"{prefix}.gate.w_b"],
                          bias=t[f"{prefix}.gate.bias"])

    gaa = GaaParams(mha=mha("gaa"), gate=gate("gaa"))
    ka_i = KaParams(w_k=t["ka_instruction.w_k"], w_t=t["ka_instruction.w_t"],
                    mha=mha("ka_instruction"), gate=gate("ka_instruction"))
    ka_v = KaParams(w_k=t["ka_view.w_k"], w_t=t["ka_view.w_t"],
                    mha=mha("ka_view"), gate=gate("ka_view"))
    return PipelineParams(gaa=gaa, ka_instruction=ka_i, ka_view=ka_v)
