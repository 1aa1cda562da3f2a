"""Model backends behind thin clients.

Each of the four roles (phrase extraction, captioning, text-to-image,
embedding) is addressed by an identifier in the config: an `http://` or
`https://` URL for a hosted service, or `stub:<name>` for the built-in
deterministic stand-ins used in tests and offline development. Every
backend must answer a ping at connect time or the pipeline refuses to
run.
"""
from __future__ import annotations

import base64
import hashlib
import io
from dataclasses import dataclass

import httpx
import numpy as np
from PIL import Image

from .errors import BackendTimeout, BackendUnavailable, GenerationFailure


@dataclass(frozen=True)
class BackendConfig:
    phrase_model: str = "stub:phrase"
    caption_model: str = "stub:caption"
    image_model: str = "stub:image"
    embed_model: str = "stub:embed"
    timeout_s: float = 30.0
    max_retries: int = 2
    batch_size: int = 16
    embed_dim: int = 512


# ---------------------------------------------------------------------------
# HTTP transport
# ---------------------------------------------------------------------------

class _HttpClient:
    """Tiny JSON-over-HTTP client with bounded retries."""

    def __init__(self, base_url: str, timeout_s: float, max_retries: int,
                 transport: httpx.BaseTransport | None = None):
        self.base_url = base_url.rstrip("/")
        self.max_retries = max_retries
        self._client = httpx.Client(timeout=timeout_s, transport=transport)

    def ping(self) -> None:
        try:
            resp = self._client.get(self.base_url + "/health")
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"{self.base_url}: {exc}") from exc

    def post(self, path: str, payload: dict) -> dict:
        last: Exception | None = None
        for _ in range(self.max_retries + 1):
            try:
                resp = self._client.post(self.base_url + path, json=payload)
                resp.raise_for_status()
                return resp.json()
            except (httpx.TimeoutException, httpx.ConnectError) as exc:
                last = exc
            except httpx.HTTPError as exc:
                raise BackendTimeout(f"{self.base_url}{path}: {exc}") from exc
        raise BackendTimeout(f"{self.base_url}{path}: retries exhausted: {last}")


class HttpPhraseBackend:
    name = "http-phrase"

    def __init__(self, client: _HttpClient):
        self._client = client
        self.name = f"http-phrase:{client.base_url}"

    def ping(self) -> None:
        self._client.ping()

    def complete(self, message: str) -> str:
        return self._client.post("/complete", {"prompt": message})["text"]


class HttpCaptionBackend:
    def __init__(self, client: _HttpClient):
        self._client = client
        self.name = f"http-caption:{client.base_url}"

    def ping(self) -> None:
        self._client.ping()

    def caption(self, image: bytes, prompt: str) -> str:
        payload = {"image_b64": base64.b64encode(image).decode("ascii"),
                   "prompt": prompt}
        return self._client.post("/caption", payload)["caption"]


class HttpImageBackend:
    def __init__(self, client: _HttpClient):
        self._client = client
        self.name = f"http-image:{client.base_url}"

    def ping(self) -> None:
        self._client.ping()

    def generate(self, prompt: str, params: dict) -> bytes:
        payload = {"prompt": prompt, **params}
        out = self._client.post("/generate", payload)
        return base64.b64decode(out["image_b64"])


class HttpEmbedBackend:
    def __init__(self, client: _HttpClient):
        self._client = client
        self.name = f"http-embed:{client.base_url}"

    def ping(self) -> None:
        self._client.ping()

    def embed_texts(self, texts: list[str]) -> np.ndarray:
        out = self._client.post("/embed/text", {"texts": list(texts)})
        return np.asarray(out["vectors"], dtype=np.float32)

    def embed_images(self, images: list[bytes]) -> np.ndarray:
        payload = {"images_b64": [base64.b64encode(b).decode("ascii") for b in images]}
        out = self._client.post("/embed/image", payload)
        return np.asarray(out["vectors"], dtype=np.float32)


# ---------------------------------------------------------------------------
# deterministic stubs
# ---------------------------------------------------------------------------

_PHRASE_STOPWORDS = {
    "and", "then", "there", "here", "it", "that", "this", "again", "me",
    "left", "right", "straight", "ahead", "forward", "around", "up", "down",
    "into", "onto", "through", "past", "at", "on", "in", "of", "to", "by", "from",
    "with", "until", "before", "after", "near", "beside", "towards", "toward",
    "is", "are", "you", "your", "once", "when", "where", "next",
    "walk", "go", "turn", "stop", "enter", "exit", "head", "leave", "follow",
    "continue", "wait", "take", "move", "bring", "fetch", "find", "reach",
    "climb", "cross", "pass",
}


def _phrase_spans(instruction: str) -> list[str]:
    """Noun-phrase stand-in: article-introduced word runs (up to 3 words)."""
    tokens = [t.strip(".,;!?") for t in instruction.lower().split()]
    phrases = []
    i = 0
    while i < len(tokens):
        if tokens[i] in ("the", "a", "an"):
            run = []
            j = i + 1
            while j < len(tokens) and len(run) < 3:
                t = tokens[j]
                if not t or t in ("the", "a", "an") or t in _PHRASE_STOPWORDS:
                    break
                run.append(t)
                j += 1
            if run:
                phrases.append(" ".join(run))
            i = j
        else:
            i += 1
    return phrases


class StubPhraseBackend:
    """Article-phrase extractor that answers in the numbered-list format."""

    name = "stub:phrase"

    def ping(self) -> None:
        pass

    def complete(self, message: str) -> str:
        instruction = message.split("\n", 1)[1] if "\n" in message else ""
        phrases = _phrase_spans(instruction)
        if not phrases:
            return "no noun phrases found"
        return "\n".join(f"{i + 1}. {p}." for i, p in enumerate(phrases))


_ROOMS = ("bathroom", "kitchen", "hallway", "bedroom", "living room", "office",
          "dining room", "laundry room")
_THINGS = ("two sinks", "a shower", "a wooden table", "a red chair", "a sofa",
           "a large window", "bookshelves", "a mirror", "potted plants",
           "a ceiling fan")
_ADJS = ("bright", "spacious", "narrow", "modern", "tidy", "dim", "carpeted")


class StubCaptionBackend:
    """Caption from a hash of the image bytes; deterministic per image."""

    name = "stub:caption"

    def ping(self) -> None:
        pass

    def caption(self, image: bytes, prompt: str) -> str:
        h = hashlib.blake2b(image, digest_size=8).digest()
        adj = _ADJS[h[0] % len(_ADJS)]
        room = _ROOMS[h[1] % len(_ROOMS)]
        a = _THINGS[h[2] % len(_THINGS)]
        b = _THINGS[h[3] % len(_THINGS)]
        return f"a {adj} {room} with {a} and {b}"


class StubImageBackend:
    """Seeded noise image at the requested resolution, encoded as PNG."""

    name = "stub:image"

    def ping(self) -> None:
        pass

    def generate(self, prompt: str, params: dict) -> bytes:
        digest = hashlib.blake2b(prompt.encode("utf-8"), digest_size=8).digest()
        seed = [int.from_bytes(digest, "little"), int(params.get("seed", 0))]
        rng = np.random.default_rng(seed)
        w = int(params.get("width", 1024))
        h = int(params.get("height", 1024))
        if w < 1 or h < 1:
            raise GenerationFailure(f"bad resolution {w}x{h}")
        pixels = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
        buf = io.BytesIO()
        Image.fromarray(pixels, mode="RGB").save(buf, format="PNG")
        return buf.getvalue()


class StubEmbedBackend:
    """Hash-seeded gaussian embeddings, one stream per item."""

    def __init__(self, dim: int = 512):
        self.dim = dim
        self.name = f"stub:embed-{dim}"
        self.calls = 0  # embed requests served, visible for resumability tests

    def ping(self) -> None:
        pass

    def _vector(self, data: bytes) -> np.ndarray:
        digest = hashlib.blake2b(data, digest_size=8).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        return rng.standard_normal(self.dim).astype(np.float32)

    def embed_texts(self, texts: list[str]) -> np.ndarray:
        self.calls += len(texts)
        return np.vstack([self._vector(t.encode("utf-8")) for t in texts]) \
            if texts else np.zeros((0, self.dim), dtype=np.float32)

    def embed_images(self, images: list[bytes]) -> np.ndarray:
        self.calls += len(images)
        return np.vstack([self._vector(b) for b in images]) \
            if images else np.zeros((0, self.dim), dtype=np.float32)


# ---------------------------------------------------------------------------
# connection
# ---------------------------------------------------------------------------

@dataclass
class Backends:
    phrase: object
    caption: object
    image: object
    embed: object
    config: BackendConfig


def _make(identifier: str, role: str, cfg: BackendConfig,
          transport: httpx.BaseTransport | None):
    if identifier.startswith(("http://", "https://")):
        client = _HttpClient(identifier, cfg.timeout_s, cfg.max_retries, transport)
        return {
            "phrase": HttpPhraseBackend,
            "caption": HttpCaptionBackend,
            "image": HttpImageBackend,
            "embed": HttpEmbedBackend,
        }[role](client)
    if identifier.startswith("stub:"):
        if role == "phrase":
            return StubPhraseBackend()
        if role == "caption":
            return StubCaptionBackend()
        if role == "image":
            return StubImageBackend()
        return StubEmbedBackend(dim=cfg.embed_dim)
    raise BackendUnavailable(f"unrecognized backend identifier {identifier!r}")


def connect(cfg: BackendConfig,
            transport: httpx.BaseTransport | None = None) -> Backends:
    """Instantiate and ping all four backends; refuse to run otherwise."""
    backends = Backends(
        phrase=_make(cfg.phrase_model, "phrase", cfg, transport),
        caption=_make(cfg.caption_model, "caption", cfg, transport),
        image=_make(cfg.image_model, "image", cfg, transport),
        embed=_make(cfg.embed_model, "embed", cfg, transport),
        config=cfg,
    )
    for b in (backends.phrase, backends.caption, backends.image, backends.embed):
        b.ping()
    return backends
