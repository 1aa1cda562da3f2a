import numpy as np
import pytest

from kbnav.errors import DimensionMismatch, EmptyKnowledge
from kbnav.fusion_math import GateParams, MhaParams, grad_check, softmax_rows
from kbnav.knowledge_aug import (
    KaParams,
    KnowledgeContext,
    condense_knowledge,
    correlation_matrix,
    ka_backward,
    ka_bundle,
    ka_forward,
    ka_forward_trace,
)


def identity_ka(dim, bias=0.0, heads=1):
    eye = np.eye(dim)
    return KaParams(
        w_k=eye, w_t=eye,
        mha=MhaParams(heads=heads, w_q=eye, w_k=eye, w_v=eye, w_o=eye),
        gate=GateParams(w_a=np.zeros((dim, dim)), w_b=np.zeros((dim, dim)),
                        bias=np.full(dim, bias)),
    )


def params_from_point(point, heads=2):
    return KaParams(
        w_k=point["w_k"], w_t=point["w_t"],
        mha=MhaParams(heads=heads, w_q=point["w_q"], w_k=point["w_k_attn"],
                      w_v=point["w_v"], w_o=point["w_o"]),
        gate=GateParams(w_a=point["w_2"], w_b=point["w_1"], bias=point["b"]),
    )


def test_correlation_scalar_example():
    ctx = KnowledgeContext(np.array([[2.0], [3.0]]), np.array([[1.0], [4.0]]))
    mat = correlation_matrix(ctx, identity_ka(1))
    assert np.allclose(mat, [[2.0, 8.0], [3.0, 12.0]], atol=1e-12)


def test_correlation_sqrt_scaling_d4():
    k = np.zeros((1, 4)); k[0, 0] = 1.0
    x = np.zeros((1, 4)); x[0, 0] = 1.0
    mat = correlation_matrix(KnowledgeContext(k, x), identity_ka(4))
    assert mat[0, 0] == 0.5


def test_correlation_orthogonal_rows():
    k = np.array([[1.0, 0.0, 0.0, 0.0]])
    x = np.array([[0.0, 1.0, 0.0, 0.0]])
    mat = correlation_matrix(KnowledgeContext(k, x), identity_ka(4))
    assert mat[0, 0] == 0.0


def test_condense_single_knowledge_row():
    pk = np.array([[1.0, 2.0, 3.0]])
    mat = np.array([[0.3, -2.0, 5.0]])  # p=1, n=3
    out = condense_knowledge(mat, pk)
    assert out.shape == (3, 3)
    assert np.allclose(out, np.tile(pk, (3, 1)), atol=1e-12)


def test_condense_uniform_column_averages():
    pk = np.array([[1.0, 0.0], [0.0, 1.0]])
    mat = np.array([[4.0], [4.0]])  # equal entries in the single column
    out = condense_knowledge(mat, pk)
    assert np.allclose(out, [[0.5, 0.5]], atol=1e-12)


def oracle_condense(mat, pk):
    """Per-column softmax + explicit weighted-sum loop."""
    p, n = mat.shape
    out = np.zeros((n, pk.shape[1]))
    for t in range(n):
        col = mat[:, t]
        e = np.exp(col - col.max())
        w = e / e.sum()
        for i in range(p):
            out[t] += w[i] * pk[i]
    return out


def test_condense_matches_loop_oracle():
    rng = np.random.default_rng(31)
    mat = rng.standard_normal((5, 4))
    pk = rng.standard_normal((5, 8))
    assert np.allclose(condense_knowledge(mat, pk), oracle_condense(mat, pk), atol=1e-6)


def test_condense_column_shift_invariance():
    rng = np.random.default_rng(32)
    mat = rng.standard_normal((6, 3))
    pk = rng.standard_normal((6, 4))
    shifted = mat.copy()
    shifted[:, 1] += 7.5
    a = condense_knowledge(mat, pk)
    b = condense_knowledge(shifted, pk)
    assert np.allclose(a[1], b[1], atol=1e-6)
    assert np.allclose(softmax_rows(mat, "cols")[:, 1],
                       softmax_rows(shifted, "cols")[:, 1], atol=1e-6)


def test_ka_zero_gate_midpoint():
    dim = 8
    rng = np.random.default_rng(33)
    ctx = KnowledgeContext(rng.standard_normal((3, dim)), rng.standard_normal((4, dim)))
    trace = ka_forward_trace(ctx, identity_ka(dim))
    assert np.allclose(trace.gate, 0.5, atol=1e-12)
    assert np.allclose(trace.fused, (trace.target_proj + trace.enhanced) / 2, atol=1e-12)


def test_ka_single_knowledge_row():
    dim = 8
    rng = np.random.default_rng(34)
    k = rng.standard_normal((1, dim))
    x = rng.standard_normal((4, dim))
    trace = ka_forward_trace(KnowledgeContext(k, x), identity_ka(dim))
    assert np.allclose(trace.enhanced, np.tile(k, (4, 1)), atol=1e-10)
    # fused interpolates the single knowledge row with the projected target
    assert np.allclose(trace.fused, (x + np.tile(k, (4, 1))) / 2, atol=1e-10)


def test_ka_gradients_match_finite_differences():
    point, fwd, bwd = ka_bundle(13)
    report = grad_check(fwd, bwd, point, tol=1e-4)
    assert report.passed, report.per_array


def test_ka_bounded_elementwise():
    point, _, _ = ka_bundle(14)
    params = params_from_point(point)
    trace = ka_forward_trace(KnowledgeContext(point["k_feats"], point["target"]), params)
    lo = np.minimum(trace.target_proj, trace.enhanced)
    hi = np.maximum(trace.target_proj, trace.enhanced)
    assert np.all(trace.fused >= lo - 1e-12)
    assert np.all(trace.fused <= hi + 1e-12)


def test_ka_knowledge_permutation_equivariance():
    point, _, _ = ka_bundle(15, p=6, n=4)
    params = params_from_point(point)
    rng = np.random.default_rng(35)
    perm = rng.permutation(6)
    a, ga = ka_forward(KnowledgeContext(point["k_feats"], point["target"]), params)
    b, gb = ka_forward(KnowledgeContext(point["k_feats"][perm], point["target"]), params)
    assert np.allclose(a, b, atol=1e-6)
    assert np.allclose(ga, gb, atol=1e-6)


def test_ka_dual_application_shapes():
    # identical code path, two parameterizations: image knowledge into
    # instruction rows and textual knowledge into 36 view rows
    rng = np.random.default_rng(36)
    instr_params = KaParams(
        w_k=rng.standard_normal((12, 8)), w_t=rng.standard_normal((16, 8)),
        mha=MhaParams(heads=2, w_q=rng.standard_normal((8, 8)),
                      w_k=rng.standard_normal((8, 8)),
                      w_v=rng.standard_normal((8, 8)),
                      w_o=rng.standard_normal((8, 8))),
        gate=GateParams(w_a=rng.standard_normal((8, 8)),
                        w_b=rng.standard_normal((8, 8)),
                        bias=rng.standard_normal(8)),
    )
    t_aug, _ = ka_forward(
        KnowledgeContext(rng.standard_normal((4, 12)), rng.standard_normal((10, 16))),
        instr_params)
    assert t_aug.shape == (10, 8)
    view_params = KaParams(
        w_k=rng.standard_normal((20, 8)), w_t=rng.standard_normal((24, 8)),
        mha=instr_params.mha, gate=instr_params.gate)
    r_aug, _ = ka_forward(
        KnowledgeContext(rng.standard_normal((180, 20)), rng.standard_normal((36, 24))),
        view_params)
    assert r_aug.shape == (36, 8)


def test_ka_empty_knowledge():
    with pytest.raises(EmptyKnowledge):
        ka_forward(KnowledgeContext(np.zeros((0, 4)), np.ones((2, 4))), identity_ka(4))


def test_ka_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        ka_forward(KnowledgeContext(np.ones((2, 5)), np.ones((2, 4))), identity_ka(4))


def test_ka_backward_keys_cover_point():
    point, _, _ = ka_bundle(16)
    grads = ka_backward(KnowledgeContext(point["k_feats"], point["target"]),
                        params_from_point(point))
    assert set(grads) == set(point)
