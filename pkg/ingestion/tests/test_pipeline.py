import numpy as np
import pytest

from kbingest.backends import BackendConfig, Backends, StubEmbedBackend, connect
from kbingest.errors import DimensionDrift
from kbingest.pipeline import embed_and_pack


@pytest.fixture()
def backends():
    return connect(BackendConfig(embed_dim=64, batch_size=8))


def captions(n):
    return [(f"cap-{i:04d}", f"a tidy room number {i} with a lamp") for i in range(n)]


def test_embed_and_pack_writes_bank(backends, tmp_path):
    out = embed_and_pack(captions(20), "text", backends, tmp_path / "text.btkb")
    raw = out.read_bytes()
    assert raw[:4] == b"BTKB"
    assert out.with_suffix(out.suffix + ".provenance.jsonl").exists()


def test_rows_unit_normalized(backends, tmp_path):
    out = embed_and_pack(captions(5), "text", backends, tmp_path / "t.btkb")
    raw = out.read_bytes()
    mlen = int.from_bytes(raw[6:10], "little")
    import json

    manifest = json.loads(raw[10:10 + mlen])
    assert manifest["normalized"] is True
    count, dim = manifest["count"], manifest["dim"]
    rows = np.frombuffer(raw[10 + mlen:10 + mlen + count * dim * 4],
                         dtype="<f4").reshape(count, dim)
    assert np.allclose(np.linalg.norm(rows.astype(np.float64), axis=1), 1.0, atol=1e-4)


def test_dimension_drift(backends, tmp_path):
    drifted = Backends(phrase=backends.phrase, caption=backends.caption,
                       image=backends.image, embed=StubEmbedBackend(dim=96),
                       config=backends.config)  # config still expects 64
    with pytest.raises(DimensionDrift):
        embed_and_pack(captions(3), "text", drifted, tmp_path / "d.btkb")


def test_resumable_embedding(backends, tmp_path):
    cache = tmp_path / "cache"
    items = captions(30)
    embed_and_pack(items[:18], "text", backends, tmp_path / "part.btkb",
                   cache_dir=cache)
    served = backends.embed.calls
    assert served == 18
    out = embed_and_pack(items, "text", backends, tmp_path / "full.btkb",
                         cache_dir=cache)
    assert backends.embed.calls == 30  # only the 12 new items hit the backend
    raw = out.read_bytes()
    assert raw[:4] == b"BTKB"


def test_resume_produces_identical_bank(backends, tmp_path):
    items = captions(12)
    cold = embed_and_pack(items, "text", backends, tmp_path / "cold.btkb")
    cache = tmp_path / "cache2"
    embed_and_pack(items[:7], "text", backends, tmp_path / "warm1.btkb",
                   cache_dir=cache)
    warm = embed_and_pack(items, "text", backends, tmp_path / "warm2.btkb",
                          cache_dir=cache)
    assert cold.read_bytes() == warm.read_bytes()


def test_image_modality_sources(backends, tmp_path):
    items = [("img-0", b"\x89PNGfakebytes0"), ("img-1", b"\x89PNGfakebytes1")]
    out = embed_and_pack(items, "image", backends, tmp_path / "img.btkb")
    text = out.read_bytes()
    assert b'"source_ref":"img-0"' in text
