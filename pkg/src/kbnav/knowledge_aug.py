"""Reusable knowledge-fusion module.

Pipeline: project knowledge rows and target rows into a shared width d,
score every (knowledge, target) pair into a scaled correlation matrix,
condense the knowledge by a per-target softmax over the knowledge axis,
let the target attend over the condensed rows, and blend attended and
projected-target features through a sigmoid gate. The same code path
serves both directions: image knowledge into instruction features, and
textual knowledge into per-view visual features.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyKnowledge
from .fusion_math import (
    Arrays,
    GateParams,
    GradBundle,
    MhaParams,
    gate_fuse_backward,
    gate_fuse_cache,
    mha_backward,
    mha_forward_cache,
    softmax_backward,
    softmax_rows,
)


@dataclass(frozen=True)
class KaParams:
    """w_k: knowledge-dim x d, w_t: target-dim x d; gate.w_a multiplies the
    projected target, gate.w_b the attended features."""

    w_k: np.ndarray
    w_t: np.ndarray
    mha: MhaParams
    gate: GateParams

    def __post_init__(self) -> None:
        w_k = np.asarray(self.w_k, dtype=np.float64)
        w_t = np.asarray(self.w_t, dtype=np.float64)
        if w_k.ndim != 2 or w_t.ndim != 2:
            raise DimensionMismatch("projection weights must be matrices")
        if w_k.shape[1] != w_t.shape[1]:
            raise DimensionMismatch(
                f"projected widths differ: {w_k.shape[1]} vs {w_t.shape[1]}"
            )
        if w_k.shape[1] != self.mha.model_dim:
            raise DimensionMismatch(
                f"projected width {w_k.shape[1]} != attention width {self.mha.model_dim}"
            )
        object.__setattr__(self, "w_k", w_k)
        object.__setattr__(self, "w_t", w_t)

    @property
    def fused_dim(self) -> int:
        return self.w_k.shape[1]


@dataclass(frozen=True)
class KnowledgeContext:
    """p knowledge rows plus the n target rows they should enhance."""

    k_feats: np.ndarray  # p x knowledge-dim
    target: np.ndarray   # n x target-dim

    def __post_init__(self) -> None:
        k = np.atleast_2d(np.asarray(self.k_feats, dtype=np.float64))
        x = np.atleast_2d(np.asarray(self.target, dtype=np.float64))
        object.__setattr__(self, "k_feats", k)
        object.__setattr__(self, "target", x)


@dataclass
class KaTrace:
    """Named intermediates of one forward pass, for debugging and tests."""

    mat: np.ndarray        # p x n correlation
    attn: np.ndarray       # p x n column softmax
    condensed: np.ndarray  # n x d
    target_proj: np.ndarray  # n x d
    enhanced: np.ndarray   # n x d attention output
    gate: np.ndarray       # n x d
    fused: np.ndarray      # n x d

    def named_tensors(self) -> dict[str, np.ndarray]:
        return {
            "mat": self.mat, "attn": self.attn, "condensed": self.condensed,
            "target_proj": self.target_proj, "enhanced": self.enhanced,
            "gate": self.gate, "fused": self.fused,
        }


def correlation_matrix(ctx: KnowledgeContext, params: KaParams) -> np.ndarray:
    """Scaled pairwise scores: (K w_k)(X w_t)^T / sqrt(d)."""
    _check_ctx(ctx, params)
    k_proj = ctx.k_feats @ params.w_k
    x_proj = ctx.target @ params.w_t
    return k_proj @ x_proj.T / np.sqrt(params.fused_dim)


def condense_knowledge(mat: np.ndarray, projected_k: np.ndarray) -> np.ndarray:
    """Per-target weighted sum of projected knowledge rows.

    Each column of `mat` is softmax-normalized across the p knowledge
    entries, then used to average the rows of projected_k, giving one
    condensed row per target row.
    """
    mat = np.asarray(mat, dtype=np.float64)
    projected_k = np.asarray(projected_k, dtype=np.float64)
    if mat.ndim != 2 or projected_k.ndim != 2 or mat.shape[0] != projected_k.shape[0]:
        raise DimensionMismatch(
            f"mat rows {mat.shape} must match knowledge rows {projected_k.shape}"
        )
    attn = softmax_rows(mat, axis="cols")
    return attn.T @ projected_k


def ka_forward_trace(ctx: KnowledgeContext, params: KaParams) -> KaTrace:
    _check_ctx(ctx, params)
    k_proj = ctx.k_feats @ params.w_k                       # (p, d)
    x_proj = ctx.target @ params.w_t                        # (n, d)
    mat = k_proj @ x_proj.T / np.sqrt(params.fused_dim)     # (p, n)
    attn = softmax_rows(mat, axis="cols")
    condensed = attn.T @ k_proj                             # (n, d)
    enhanced, _ = mha_forward_cache(x_proj, condensed, params.mha)
    fused, gate, _ = gate_fuse_cache(enhanced, x_proj, params.gate,
                                     gate_weights="original")
    return KaTrace(mat=mat, attn=attn, condensed=condensed, target_proj=x_proj,
                   enhanced=enhanced, gate=gate, fused=fused)


def ka_forward(ctx: KnowledgeContext, params: KaParams) -> tuple[np.ndarray, np.ndarray]:
    """Returns (augmented target, gate), both n x d."""
    trace = ka_forward_trace(ctx, params)
    return trace.fused, trace.gate


def ka_backward(ctx: KnowledgeContext, params: KaParams) -> dict[str, np.ndarray]:
    """Gradients of sum(augmented target) wrt all parameters and inputs."""
    _check_ctx(ctx, params)
    k_proj = ctx.k_feats @ params.w_k
    x_proj = ctx.target @ params.w_t
    scale = 1.0 / np.sqrt(params.fused_dim)
    mat = k_proj @ x_proj.T * scale
    attn = softmax_rows(mat, axis="cols")
    condensed = attn.T @ k_proj
    enhanced, mha_cache = mha_forward_cache(x_proj, condensed, params.mha)
    fused, gate, gate_cache = gate_fuse_cache(enhanced, x_proj, params.gate, "original")

    g = gate_fuse_backward(gate_cache, np.ones_like(fused))
    d_x_proj = g["original"]
    m = mha_backward(mha_cache, g["enhanced"])
    d_x_proj = d_x_proj + m["q_src"]
    d_condensed = m["kv_src"]

    # condensed = attn.T @ k_proj
    d_attn = k_proj @ d_condensed.T          # (p, n)
    d_k_proj = attn @ d_condensed            # (p, d)

    # column softmax
    d_mat = softmax_backward(attn, d_attn, axis="cols")

    # mat = k_proj @ x_proj.T * scale
    d_k_proj = d_k_proj + d_mat @ x_proj * scale
    d_x_proj = d_x_proj + d_mat.T @ k_proj * scale

    return {
        "k_feats": d_k_proj @ params.w_k.T,
        "target": d_x_proj @ params.w_t.T,
        "w_k": ctx.k_feats.T @ d_k_proj,
        "w_t": ctx.target.T @ d_x_proj,
        "w_q": m["w_q"], "w_k_attn": m["w_k"], "w_v": m["w_v"], "w_o": m["w_o"],
        "w_1": g["w_b"], "w_2": g["w_a"], "b": g["bias"],
    }


def ka_bundle(seed: int, p: int = 3, n: int = 4, dim: int = 8, heads: int = 2,
              knowledge_dim: int | None = None,
              target_dim: int | None = None) -> GradBundle:
    """Seeded random knowledge-augmentor instance for grad_check."""
    knowledge_dim = knowledge_dim or dim
    target_dim = target_dim or dim
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 404])
    point = {
        "k_feats": rng.standard_normal((p, knowledge_dim)),
        "target": rng.standard_normal((n, target_dim)),
        "w_k": rng.standard_normal((knowledge_dim, dim)) / np.sqrt(dim),
        "w_t": rng.standard_normal((target_dim, dim)) / np.sqrt(dim),
        "w_q": rng.standard_normal((dim, dim)) / np.sqrt(dim),
        "w_k_attn": rng.standard_normal((dim, dim)) / np.sqrt(dim),
        "w_v": rng.standard_normal((dim, dim)) / np.sqrt(dim),
        "w_o": rng.standard_normal((dim, dim)) / np.sqrt(dim),
        "w_1": rng.standard_normal((dim, dim)) / np.sqrt(dim),
        "w_2": rng.standard_normal((dim, dim)) / np.sqrt(dim),
        "b": rng.standard_normal(dim),
    }

    def params_of(pt: Arrays) -> KaParams:
        return KaParams(
            w_k=pt["w_k"], w_t=pt["w_t"],
            mha=MhaParams(heads=heads, w_q=pt["w_q"], w_k=pt["w_k_attn"],
                          w_v=pt["w_v"], w_o=pt["w_o"]),
            gate=GateParams(w_a=pt["w_2"], w_b=pt["w_1"], bias=pt["b"]),
        )

    def forward(pt: Arrays) -> np.ndarray:
        fused, _ = ka_forward(KnowledgeContext(pt["k_feats"], pt["target"]), params_of(pt))
        return fused

    def backward(pt: Arrays) -> dict[str, np.ndarray]:
        return ka_backward(KnowledgeContext(pt["k_feats"], pt["target"]), params_of(pt))

    return point, forward, backward


def _check_ctx(ctx: KnowledgeContext, params: KaParams) -> None:
    if ctx.k_feats.shape[0] < 1:
        raise EmptyKnowledge("knowledge context requires at least one knowledge row")
    if ctx.target.shape[0] < 1:
        raise DimensionMismatch("knowledge context requires at least one target row")
    if ctx.k_feats.shape[1] != params.w_k.shape[0]:
        raise DimensionMismatch(
            f"knowledge width {ctx.k_feats.shape[1]} != w_k rows {params.w_k.shape[0]}"
        )
    if ctx.target.shape[1] != params.w_t.shape[0]:
        raise DimensionMismatch(
            f"target width {ctx.target.shape[1]} != w_t rows {params.w_t.shape[0]}"
        )
