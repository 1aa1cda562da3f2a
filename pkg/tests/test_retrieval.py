import numpy as np
import pytest

from _helpers import brute_force_topk
from kbnav.errors import (
    DimensionMismatch,
    EmptyBank,
    EmptySubgoalList,
    MissingEntry,
    ZeroVector,
)
from kbnav.feature_bank import BankManifest, KnowledgeEntry, create_bank, synth_bank
from kbnav.retrieval import (
    cosine_topk,
    index_image_knowledge,
    normalize,
    retrieve_view_knowledge,
)


def small_bank(rows, normalized=False, modality="text"):
    es = [KnowledgeEntry(id=f"e{i}", feature=np.asarray(r, dtype=np.float32))
          for i, r in enumerate(rows)]
    m = BankManifest(name="small", modality=modality, dim=len(rows[0]), count=0,
                     normalized=normalized, created_by="test")
    return create_bank(es, m)


def test_normalize_345():
    out = normalize(np.array([3.0, 4.0]))
    assert np.allclose(out, [0.6, 0.8], atol=1e-12)


def test_normalize_idempotent():
    v = normalize(np.array([1.0, 2.0, 2.0]))
    again = normalize(v)
    assert np.linalg.norm(again - v) <= 1e-6
    assert abs(np.linalg.norm(again) - 1.0) <= 1e-6


def test_normalize_zero():
    with pytest.raises(ZeroVector):
        normalize(np.zeros(3))


def test_topk_hand_example():
    bank = small_bank([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]])
    hits = cosine_topk(np.array([1.0, 0.0]), bank, k=2)
    assert [(h.entry_id, h.rank) for h in hits] == [("e0", 1), ("e2", 2)]
    # rows are stored as float32, so hand values hold to f32 precision
    assert hits[0].score == pytest.approx(1.0, abs=1e-6)
    assert hits[1].score == pytest.approx(0.6, abs=1e-6)


def test_topk_truncates():
    bank = small_bank([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]])
    hits = cosine_topk(np.array([1.0, 0.0]), bank, k=10)
    assert len(hits) == 3


def test_topk_tie_broken_by_id():
    bank = small_bank([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    hits = cosine_topk(np.array([1.0, 0.0]), bank, k=2)
    assert [h.entry_id for h in hits] == ["e0", "e1"]


def test_topk_matches_brute_force_oracle():
    bank = synth_bank(seed=11, count=2000, dim=24, modality="text")
    rng = np.random.default_rng(12)
    ids = list(bank.ids)
    for _ in range(20):
        q = rng.standard_normal(24)
        hits = cosine_topk(q, bank, k=7)
        oracle = brute_force_topk(q, bank.matrix, ids, 7, rows_normalized=True)
        assert [(h.entry_id, h.rank) for h in hits] == \
               [(sid, r + 1) for r, (sid, _) in enumerate(oracle)]
        for h, (_, s) in zip(hits, oracle):
            assert h.score == pytest.approx(s, abs=1e-12)


def test_topk_unnormalized_bank_matches_oracle():
    rng = np.random.default_rng(5)
    rows = rng.standard_normal((50, 8)) * rng.uniform(0.1, 10.0, (50, 1))
    bank = small_bank(list(rows), normalized=False)
    q = rng.standard_normal(8)
    hits = cosine_topk(q, bank, k=5)
    oracle = brute_force_topk(q, bank.matrix, list(bank.ids), 5)
    assert [h.entry_id for h in hits] == [sid for sid, _ in oracle]


def test_topk_scores_in_unit_range():
    bank = synth_bank(seed=3, count=500, dim=16, modality="text")
    rng = np.random.default_rng(4)
    for _ in range(10):
        hits = cosine_topk(rng.standard_normal(16), bank, k=500)
        assert all(-1.0 - 1e-6 <= h.score <= 1.0 + 1e-6 for h in hits)


def test_topk_errors():
    bank = small_bank([[1.0, 0.0]])
    with pytest.raises(DimensionMismatch):
        cosine_topk(np.array([1.0, 0.0, 0.0]), bank, k=1)
    empty = create_bank([], BankManifest(name="e", modality="text", dim=2, count=0,
                                         normalized=False, created_by="test"))
    with pytest.raises(EmptyBank):
        cosine_topk(np.array([1.0, 0.0]), empty, k=1)


def test_view_knowledge_shape():
    bank = synth_bank(seed=1, count=50, dim=8, modality="text")
    views = [np.random.default_rng(i).standard_normal(8) for i in range(36)]
    vk = retrieve_view_knowledge(views, bank, k=5, node_id="n0")
    assert len(vk.per_view) == 36
    assert sum(len(h) for h in vk.per_view) == 180


def test_view_knowledge_truncates():
    bank = small_bank([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
    views = [np.array([1.0, float(i)]) for i in range(36)]
    vk = retrieve_view_knowledge(views, bank, k=5)
    assert sum(len(h) for h in vk.per_view) == 36 * 3


def test_view_knowledge_matches_per_view_topk():
    bank = synth_bank(seed=2, count=30, dim=8, modality="text")
    rng = np.random.default_rng(9)
    views = [rng.standard_normal(8) for _ in range(36)]
    vk = retrieve_view_knowledge(views, bank, k=4)
    for i, view in enumerate(views):
        assert list(vk.per_view[i]) == cosine_topk(view, bank, k=4)


def test_view_knowledge_pure():
    bank = synth_bank(seed=2, count=30, dim=8, modality="text")
    views = [np.full(8, float(i + 1)) for i in range(36)]
    a = retrieve_view_knowledge(views, bank, k=3, node_id="x")
    b = retrieve_view_knowledge(views, bank, k=3, node_id="x")
    assert a == b


def test_index_image_knowledge_order():
    bank = synth_bank(seed=6, count=10, dim=8, modality="image")
    ids = [bank.entries[i].id for i in (3, 0, 7, 5)]
    mat = index_image_knowledge("instr-1", ids, bank)
    assert mat.shape == (4, 8)
    for row, sid in zip(mat, ids):
        assert np.array_equal(row, bank.entries[bank.index_by_id[sid]].feature)


def test_index_image_knowledge_missing():
    bank = synth_bank(seed=6, count=10, dim=8, modality="image")
    with pytest.raises(MissingEntry):
        index_image_knowledge("instr-1", ["nope"], bank)


def test_index_image_knowledge_empty():
    bank = synth_bank(seed=6, count=10, dim=8, modality="image")
    with pytest.raises(EmptySubgoalList):
        index_image_knowledge("instr-1", [], bank)
