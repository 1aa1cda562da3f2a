import pytest

from kbingest.backends import BackendConfig, connect
from kbingest.captions import caption_panoramas
from kbingest.errors import EmptyCaption


@pytest.fixture(scope="module")
def backends():
    return connect(BackendConfig())


def fake_views(n):
    return [f"view-{i}".encode() * 10 for i in range(n)]


def test_one_caption_per_view(backends):
    captions = caption_panoramas(fake_views(36), backends)
    assert len(captions) == 36
    assert all(isinstance(c, str) and c for c in captions)


def test_captions_deterministic(backends):
    a = caption_panoramas(fake_views(5), backends)
    b = caption_panoramas(fake_views(5), backends)
    assert a == b


def test_duplicate_views_keep_duplicate_captions(backends):
    views = [b"same-bytes" * 8] * 3
    captions = caption_panoramas(views, backends)
    assert captions[0] == captions[1] == captions[2]


def test_empty_caption_raises(backends):
    class EmptyBackend:
        name = "stub:empty"

        def ping(self):
            pass

        def caption(self, image, prompt):
            return "   "

    from kbingest.backends import Backends

    broken = Backends(phrase=backends.phrase, caption=EmptyBackend(),
                      image=backends.image, embed=backends.embed,
                      config=backends.config)
    with pytest.raises(EmptyCaption):
        caption_panoramas(fake_views(2), broken)


def test_caption_provenance_logged(backends, tmp_path):
    from kbingest.bankio import read_provenance

    log = tmp_path / "captions.jsonl"
    caption_panoramas(fake_views(3), backends, provenance_path=log)
    records = read_provenance(log)
    assert len(records) == 3
    assert all(r["prompt"] == "a photo of" for r in records)
