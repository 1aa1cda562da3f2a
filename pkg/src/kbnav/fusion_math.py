"""Shared numerical kernels: row/column softmax, multi-head attention and
sigmoid-gate fusion, each with an analytic backward pass, plus a central
finite-difference harness that verifies the gradients.

Conventions: row-vector layout (inputs are n x d, weights right-multiply),
all internal arithmetic in float64, losses are the plain sum of the
operator output so the upstream gradient is a matrix of ones.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import DimensionMismatch, NonFiniteGradient, NonFiniteInput

Arrays = Mapping[str, np.ndarray]


# ---------------------------------------------------------------------------
# parameter bundles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MhaParams:
    """Projection weights for multi-head attention; all matrices are d x d."""

    heads: int
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray

    def __post_init__(self) -> None:
        d = self.w_q.shape[0]
        for name in ("w_q", "w_k", "w_v", "w_o"):
            w = np.asarray(getattr(self, name), dtype=np.float64)
            if w.shape != (d, d):
                raise DimensionMismatch(f"{name} must be {d}x{d}, got {w.shape}")
            if not np.all(np.isfinite(w)):
                raise NonFiniteInput(f"{name} contains NaN or Inf")
            object.__setattr__(self, name, w)
        if self.heads < 1 or d % self.heads != 0:
            raise DimensionMismatch(f"model dim {d} not divisible by {self.heads} heads")

    @property
    def model_dim(self) -> int:
        return self.w_q.shape[0]


@dataclass(frozen=True)
class GateParams:
    """Weights of a sigmoid fusion gate: gate = sigmoid(orig@w_a + enh@w_b + bias)."""

    w_a: np.ndarray
    w_b: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        d = self.w_a.shape[0]
        for name, shape in (("w_a", (d, d)), ("w_b", (d, d)), ("bias", (d,))):
            w = np.asarray(getattr(self, name), dtype=np.float64)
            if w.shape != shape:
                raise DimensionMismatch(f"{name} must have shape {shape}, got {w.shape}")
            if not np.all(np.isfinite(w)):
                raise NonFiniteInput(f"{name} contains NaN or Inf")
            object.__setattr__(self, name, w)


# ---------------------------------------------------------------------------
# softmax
# ---------------------------------------------------------------------------

def softmax_rows(m: np.ndarray, axis: str = "rows") -> np.ndarray:
    """Numerically stabilized softmax along rows or cols of a matrix."""
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise NonFiniteInput("softmax input contains NaN or Inf")
    if axis not in ("rows", "cols"):
        raise DimensionMismatch(f"axis must be 'rows' or 'cols', got {axis!r}")
    ax = 1 if axis == "rows" else 0
    shifted = m - m.max(axis=ax, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=ax, keepdims=True)


def softmax_backward(a: np.ndarray, d_a: np.ndarray, axis: str = "rows") -> np.ndarray:
    """Gradient through softmax given its output a and upstream d_a."""
    ax = 1 if axis == "rows" else 0
    inner = (a * d_a).sum(axis=ax, keepdims=True)
    return a * (d_a - inner)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------------------
# multi-head attention
# ---------------------------------------------------------------------------

@dataclass
class MhaCache:
    """Forward intermediates kept for the backward pass.

    q, k, v    : (h, n, d_h) per-head projections
    attn       : (h, n_q, n_k) softmax weights
    out_concat : (n_q, d) concatenated head outputs before w_o
    """

    q_src: np.ndarray
    kv_src: np.ndarray
    params: MhaParams
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    attn: np.ndarray
    out_concat: np.ndarray


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    n, d = x.shape
    return x.reshape(n, heads, d // heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    h, n, dh = x.shape
    return x.transpose(1, 0, 2).reshape(n, h * dh)


def mha_forward_cache(q_src: np.ndarray, kv_src: np.ndarray,
                      params: MhaParams) -> tuple[np.ndarray, MhaCache]:
    q_src = np.asarray(q_src, dtype=np.float64)
    kv_src = np.asarray(kv_src, dtype=np.float64)
    d = params.model_dim
    if q_src.ndim != 2 or q_src.shape[1] != d:
        raise DimensionMismatch(f"query source must be n x {d}, got {q_src.shape}")
    if kv_src.ndim != 2 or kv_src.shape[1] != d:
        raise DimensionMismatch(f"key/value source must be m x {d}, got {kv_src.shape}")
    if kv_src.shape[0] < 1:
        raise DimensionMismatch("attention needs at least one key/value row")

    h = params.heads
    dh = d // h
    scale = 1.0 / np.sqrt(dh)

    q = _split_heads(q_src @ params.w_q, h)      # (h, n_q, d_h)
    k = _split_heads(kv_src @ params.w_k, h)     # (h, n_k, d_h)
    v = _split_heads(kv_src @ params.w_v, h)     # (h, n_k, d_h)

    scores = (q @ k.transpose(0, 2, 1)) * scale  # (h, n_q, n_k)
    shifted = scores - scores.max(axis=2, keepdims=True)
    e = np.exp(shifted)
    attn = e / e.sum(axis=2, keepdims=True)      # rows sum to 1 per head

    out_concat = _merge_heads(attn @ v)          # (n_q, d)
    out = out_concat @ params.w_o
    cache = MhaCache(q_src=q_src, kv_src=kv_src, params=params,
                     q=q, k=k, v=v, attn=attn, out_concat=out_concat)
    return out, cache


def mha_forward(q_src: np.ndarray, kv_src: np.ndarray, params: MhaParams) -> np.ndarray:
    """Scaled dot-product attention per head, heads concatenated, then w_o.

    No residual connection and no layer norm: blending with the original
    signal is the job of the explicit sigmoid gates downstream.
    """
    out, _ = mha_forward_cache(q_src, kv_src, params)
    return out


def mha_backward(cache: MhaCache, d_out: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss wrt all MHA weights and both inputs."""
    p = cache.params
    h = p.heads
    d = p.model_dim
    dh = d // h
    scale = 1.0 / np.sqrt(dh)

    # final projection
    d_w_o = cache.out_concat.T @ d_out
    d_concat = d_out @ p.w_o.T
    d_o = _split_heads(d_concat, h)                       # (h, n_q, d_h)

    # attention application
    d_attn = d_o @ cache.v.transpose(0, 2, 1)             # (h, n_q, n_k)
    d_v = cache.attn.transpose(0, 2, 1) @ d_o             # (h, n_k, d_h)

    # softmax (rowwise within each head)
    inner = (cache.attn * d_attn).sum(axis=2, keepdims=True)
    d_scores = cache.attn * (d_attn - inner)              # (h, n_q, n_k)

    # scores -> q, k
    d_q = (d_scores @ cache.k) * scale                    # (h, n_q, d_h)
    d_k = (d_scores.transpose(0, 2, 1) @ cache.q) * scale # (h, n_k, d_h)

    d_q_full = _merge_heads(d_q)
    d_k_full = _merge_heads(d_k)
    d_v_full = _merge_heads(d_v)

    d_w_q = cache.q_src.T @ d_q_full
    d_w_k = cache.kv_src.T @ d_k_full
    d_w_v = cache.kv_src.T @ d_v_full
    d_q_src = d_q_full @ p.w_q.T
    d_kv_src = d_k_full @ p.w_k.T + d_v_full @ p.w_v.T

    return {
        "w_q": d_w_q, "w_k": d_w_k, "w_v": d_w_v, "w_o": d_w_o,
        "q_src": d_q_src, "kv_src": d_kv_src,
    }


# ---------------------------------------------------------------------------
# sigmoid gate fusion
# ---------------------------------------------------------------------------

@dataclass
class GateCache:
    enhanced: np.ndarray
    original: np.ndarray
    params: GateParams
    gate: np.ndarray
    gate_weights: str


def gate_fuse_cache(enhanced: np.ndarray, original: np.ndarray, params: GateParams,
                    gate_weights: str = "enhanced") -> tuple[np.ndarray, np.ndarray, GateCache]:
    enhanced = np.asarray(enhanced, dtype=np.float64)
    original = np.asarray(original, dtype=np.float64)
    if enhanced.shape != original.shape:
        raise DimensionMismatch(
            f"operand shapes differ: {enhanced.shape} vs {original.shape}"
        )
    d = params.w_a.shape[0]
    if enhanced.ndim != 2 or enhanced.shape[1] != d:
        raise DimensionMismatch(f"operands must be n x {d}, got {enhanced.shape}")
    if gate_weights not in ("enhanced", "original"):
        raise DimensionMismatch("gate_weights must be 'enhanced' or 'original'")

    z = original @ params.w_a + enhanced @ params.w_b + params.bias
    gate = _sigmoid(z)
    first, second = (enhanced, original) if gate_weights == "enhanced" else (original, enhanced)
    fused = gate * first + (1.0 - gate) * second
    return fused, gate, GateCache(enhanced=enhanced, original=original, params=params,
                                  gate=gate, gate_weights=gate_weights)


def gate_fuse(enhanced: np.ndarray, original: np.ndarray, params: GateParams,
              gate_weights: str = "enhanced") -> tuple[np.ndarray, np.ndarray]:
    """Convex per-element blend of two operands under a learned sigmoid gate.

    gate = sigmoid(original @ w_a + enhanced @ w_b + bias). `gate_weights`
    names the operand the gate multiplies; the other gets (1 - gate). The
    instruction-side augmentor weights the enhanced features, the
    knowledge augmentor weights the original ones.
    """
    fused, gate, _ = gate_fuse_cache(enhanced, original, params, gate_weights)
    return fused, gate


def gate_fuse_backward(cache: GateCache, d_fused: np.ndarray) -> dict[str, np.ndarray]:
    g = cache.gate
    p = cache.params
    if cache.gate_weights == "enhanced":
        first, second = cache.enhanced, cache.original
    else:
        first, second = cache.original, cache.enhanced

    d_first = d_fused * g
    d_second = d_fused * (1.0 - g)
    d_gate = d_fused * (first - second)
    d_z = d_gate * g * (1.0 - g)

    d_enhanced = d_z @ p.w_b.T
    d_original = d_z @ p.w_a.T
    if cache.gate_weights == "enhanced":
        d_enhanced += d_first
        d_original += d_second
    else:
        d_original += d_first
        d_enhanced += d_second

    return {
        "w_a": cache.original.T @ d_z,
        "w_b": cache.enhanced.T @ d_z,
        "bias": d_z.sum(axis=0),
        "enhanced": d_enhanced,
        "original": d_original,
    }


# ---------------------------------------------------------------------------
# finite-difference gradient check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GradReport:
    passed: bool
    max_rel_err: float
    tol: float
    step: float
    worst: str
    per_array: dict[str, float]

    def to_json_obj(self) -> dict:
        return {
            "passed": self.passed,
            "max_rel_err": self.max_rel_err,
            "tol": self.tol,
            "step": self.step,
            "worst": self.worst,
            "per_array": self.per_array,
        }


def grad_check(
    forward: Callable[[Arrays], np.ndarray],
    backward: Callable[[Arrays], Arrays],
    point: Arrays,
    tol: float,
    step: float = 1e-4,
) -> GradReport:
    """Compare analytic gradients of sum(forward(point)) against central
    finite differences, elementwise over every array in `point`.

    Relative error uses denominator max(|analytic|, |numeric|, 1e-3) so
    near-zero gradients are judged on an absolute scale.
    """
    point = {k: np.asarray(v, dtype=np.float64).copy() for k, v in point.items()}
    analytic = backward(point)
    per_array: dict[str, float] = {}
    worst = ""
    max_err = 0.0
    for name in sorted(point):
        x = point[name]
        grad = np.asarray(analytic[name], dtype=np.float64)
        if grad.shape != x.shape:
            raise DimensionMismatch(
                f"gradient for {name!r} has shape {grad.shape}, expected {x.shape}"
            )
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradient(f"analytic gradient for {name!r} is non-finite")
        numeric = np.empty_like(x)
        flat = x.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(forward(point).sum())
            flat[i] = orig - step
            f_minus = float(forward(point).sum())
            flat[i] = orig
            num_flat[i] = (f_plus - f_minus) / (2.0 * step)
        if not np.all(np.isfinite(numeric)):
            raise NonFiniteGradient(f"numeric gradient for {name!r} is non-finite")
        denom = np.maximum(np.maximum(np.abs(grad), np.abs(numeric)), 1e-3)
        rel = np.abs(grad - numeric) / denom
        err = float(rel.max()) if rel.size else 0.0
        per_array[name] = err
        if not worst or err > max_err:
            worst = name
            max_err = err
    return GradReport(passed=max_err <= tol, max_rel_err=max_err, tol=tol,
                      step=step, worst=worst, per_array=per_array)


# --- seeded gradcheck bundles for the two kernels ---------------------------

GradBundle = tuple[dict[str, np.ndarray],
                   Callable[[Arrays], np.ndarray],
                   Callable[[Arrays], Arrays]]


def mha_bundle(seed: int, n_q: int = 4, n_k: int = 3, dim: int = 8,
               heads: int = 2) -> GradBundle:
    """Seeded random MHA instance packaged for grad_check."""
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 101])
    point = {
        "q_src": rng.standard_normal((n_q, dim)),
        "kv_src": rng.standard_normal((n_k, dim)),
        "w_q": rng.standard_normal((dim, dim)) / np.sqrt(dim),
        "w_k": rng.standard_normal((dim, dim)) / np.sqrt(dim),
        "w_v": rng.standard_normal((dim, dim)) / np.sqrt(dim),
        "w_o": rng.standard_normal((dim, dim)) / np.sqrt(dim),
    }

    def params_of(p: Arrays) -> MhaParams:
        return MhaParams(heads=heads, w_q=p["w_q"], w_k=p["w_k"],
                         w_v=p["w_v"], w_o=p["w_o"])

    def forward(p: Arrays) -> np.ndarray:
        return mha_forward(p["q_src"], p["kv_src"], params_of(p))

    def backward(p: Arrays) -> dict[str, np.ndarray]:
        out, cache = mha_forward_cache(p["q_src"], p["kv_src"], params_of(p))
        return mha_backward(cache, np.ones_like(out))

    return point, forward, backward


def gate_bundle(seed: int, n: int = 4, dim: int = 6,
                gate_weights: str = "enhanced") -> GradBundle:
    """Seeded random gate-fusion instance packaged for grad_check."""
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 202])
    point = {
        "enhanced": rng.standard_normal((n, dim)),
        "original": rng.standard_normal((n, dim)),
        "w_a": rng.standard_normal((dim, dim)) / np.sqrt(dim),
        "w_b": rng.standard_normal((dim, dim)) / np.sqrt(dim),
        "bias": rng.standard_normal(dim),
    }

    def forward(p: Arrays) -> np.ndarray:
        params = GateParams(w_a=p["w_a"], w_b=p["w_b"], bias=p["bias"])
        fused, _ = gate_fuse(p["enhanced"], p["original"], params, gate_weights)
        return fused

    def backward(p: Arrays) -> dict[str, np.ndarray]:
        params = GateParams(w_a=p["w_a"], w_b=p["w_b"], bias=p["bias"])
        fused, _, cache = gate_fuse_cache(p["enhanced"], p["original"], params, gate_weights)
        return gate_fuse_backward(cache, np.ones_like(fused))

    return point, forward, backward
