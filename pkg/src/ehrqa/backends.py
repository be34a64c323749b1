"""Model access: chat completions, embeddings, and pair scores.

Three providers share one duck-typed surface (``chat``, ``embed``,
``pair_score`` / ``pair_score_batch``, plus a stable ``backend_id``):

* ``MockBackend``: fully deterministic, for tests and offline runs. Chat is
  table-driven with an ``echo:`` escape hatch; embeddings hash lowercased
  tokens into a 64-dim vector; pair scores are query-token overlap ratios.
* ``HttpBackend``: an OpenAI-compatible local server (``/chat/completions``,
  ``/embeddings``) plus an optional sentence-scoring service (``/score``)
  for pair scores.
* ``CachedBackend``: wraps either with a content-addressed on-disk cache so
  reruns replay byte-identical responses with zero network calls.

Decoding defaults are temperature 0.7 / top-p 0.9, overridable per call.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import requests

from .errors import BackendError, CapabilityError, EmptyOutputError, TransportError

log = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.7
DEFAULT_TOP_P = 0.9
DEFAULT_MAX_TOKENS = 512

MOCK_EMBED_DIM = 64
_MOCK_HASH_KEY = b"ehrqa-mock-v1"  # fixed seed for the hash embedding

# Default instruction prepended to query-side texts before embedding, per the
# usual retrieval-model convention. Config can override or blank it.
DEFAULT_QUERY_PREFIX = (
    "Instruct: Given a clinical question, retrieve note sentences that answer it\nQuery: "
)


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant
    content: str


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[ChatMessage, ...]
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P
    max_tokens: int = DEFAULT_MAX_TOKENS
    seed: Optional[int] = None  # variation nonce; forwarded to the server

    def __post_init__(self):
        if not self.messages:
            raise BackendError("chat request with no messages")
        for m in self.messages:
            if m.role not in ("system", "user", "assistant"):
                raise BackendError(f"unknown message role '{m.role}'")
        if self.temperature < 0:
            raise BackendError(f"temperature must be >= 0, got {self.temperature}")
        if not 0 < self.top_p <= 1:
            raise BackendError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.max_tokens <= 0:
            raise BackendError(f"max_tokens must be positive, got {self.max_tokens}")

    def payload(self) -> dict:
        """Canonical JSON-serializable form (cache key material)."""
        p = {
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
        }
        if self.seed is not None:
            p["seed"] = self.seed
        return p

    def last_user_content(self) -> str:
        for m in reversed(self.messages):
            if m.role == "user":
                return m.content
        return ""

    def full_text(self) -> str:
        return "\n".join(m.content for m in self.messages)


def chat_request(
    user: str,
    system: Optional[str] = None,
    *,
    temperature: float = DEFAULT_TEMPERATURE,
    top_p: float = DEFAULT_TOP_P,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    seed: Optional[int] = None,
) -> ChatRequest:
    msgs = []
    if system is not None:
        msgs.append(ChatMessage("system", system))
    msgs.append(ChatMessage("user", user))
    return ChatRequest(
        tuple(msgs), temperature=temperature, top_p=top_p, max_tokens=max_tokens, seed=seed
    )


@dataclass(eq=False)
class EmbeddingVector:
    """A unit-norm embedding tagged with the role it was encoded under."""

    values: np.ndarray
    role: str  # query | document

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise BackendError("embedding contains non-finite components")
        norm = float(np.linalg.norm(self.values))
        if abs(norm - 1.0) > 1e-6:
            raise BackendError(f"embedding is not unit-norm (|v|={norm:.8f})")


def _unit(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    norm = np.linalg.norm(values)
    if norm == 0:
        # Degenerate (e.g. empty text under the mock); pin to a fixed axis.
        values = np.zeros_like(values)
        values[0] = 1.0
        return values
    return values / norm


def cosine(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """Cosine similarity of two embeddings; symmetric, in [-1, 1]."""
    a, b = u.values, v.values
    if a.shape != b.shape:
        raise BackendError(f"embedding dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


def _role_prefix(role: str, query_prefix: str, document_prefix: str) -> str:
    if role == "query":
        return query_prefix
    if role == "document":
        return document_prefix
    raise BackendError(f"unknown embedding role '{role}'")


class MockBackend:
    """Deterministic in-process backend; a pure function of its inputs.

    Chat resolution order: ``responder`` callable (if set and returns a
    string) > first matching (substring, response) rule over the full
    conversation text > ``echo:`` prefix on the last user message > the
    default response. A None default raises EmptyOutputError.

    Embeddings hash each lowercased whitespace token into one of 64 buckets
    with a +/-1 sign (keyed BLAKE2 digest, fixed key) and normalize the sum.
    Pair score = |query tokens ∩ candidate tokens| / |query tokens|.
    """

    def __init__(
        self,
        chat_rules: Optional[Sequence[tuple[str, str]]] = None,
        default_response: Optional[str] = None,
        responder: Optional[Callable[[ChatRequest], Optional[str]]] = None,
        query_prefix: str = "",
        document_prefix: str = "",
        embed_dim: int = MOCK_EMBED_DIM,
        supports_pair_scores: bool = True,
        backend_id: Optional[str] = None,
    ):
        self.chat_rules = [(str(k), str(v)) for k, v in (chat_rules or [])]
        self.default_response = default_response
        self.responder = responder
        self.query_prefix = query_prefix
        self.document_prefix = document_prefix
        self.embed_dim = embed_dim
        self.supports_pair_scores = supports_pair_scores
        if backend_id is None:
            digest = hashlib.sha256(
                json.dumps(
                    [self.chat_rules, default_response, query_prefix, document_prefix, embed_dim],
                    sort_keys=True,
                ).encode()
            ).hexdigest()[:12]
            backend_id = f"mock:{digest}"
        self.backend_id = backend_id

    def chat(self, request: ChatRequest) -> str:
        text = None
        if self.responder is not None:
            text = self.responder(request)
        if text is None:
            haystack = request.full_text()
            for needle, response in self.chat_rules:
                if needle in haystack:
                    text = response
                    break
        if text is None:
            last = request.last_user_content()
            if last.startswith("echo:"):
                text = last[len("echo:"):].strip()
        if text is None:
            text = self.default_response
        if not text:
            raise EmptyOutputError("mock backend produced an empty completion")
        return text

    def _embed_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.embed_dim, dtype=np.float64)
        for token in text.lower().split():
            digest = hashlib.blake2b(token.encode("utf-8"), key=_MOCK_HASH_KEY, digest_size=8)
            raw = int.from_bytes(digest.digest(), "big")
            idx = raw % self.embed_dim
            sign = 1.0 if (raw >> 32) % 2 == 0 else -1.0
            vec[idx] += sign
        return _unit(vec)

    def embed(self, texts: Sequence[str], role: str) -> list[EmbeddingVector]:
        if not texts:
            raise BackendError("embed called with no texts")
        prefix = _role_prefix(role, self.query_prefix, self.document_prefix)
        return [EmbeddingVector(self._embed_one(prefix + t), role) for t in texts]

    def pair_score(self, query: str, candidate: str) -> float:
        if not self.supports_pair_scores:
            raise CapabilityError("this backend does not support pair scoring")
        q = set(query.lower().split())
        if not q:
            return 0.0
        c = set(candidate.lower().split())
        return len(q & c) / len(q)

    def pair_score_batch(self, query: str, candidates: Sequence[str]) -> list[float]:
        return [self.pair_score(query, c) for c in candidates]


class HttpBackend:
    """Client for an OpenAI-compatible local inference server.

    ``base_url`` serves ``/chat/completions`` and ``/embeddings``; the
    optional ``score_url`` serves ``POST /score`` (the sentence-scoring
    service contract) and backs ``pair_score`` with its ``p_relevant``
    output. Failures retry with exponential backoff (3 attempts) and then
    raise TransportError.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        embed_model: Optional[str] = None,
        score_url: Optional[str] = None,
        query_prefix: str = DEFAULT_QUERY_PREFIX,
        document_prefix: str = "",
        retries: int = 3,
        backoff_seconds: float = 0.5,
        timeout: float = 120.0,
        session: Optional[requests.Session] = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.embed_model = embed_model or model
        self.score_url = score_url.rstrip("/") if score_url else None
        self.query_prefix = query_prefix
        self.document_prefix = document_prefix
        self.retries = retries
        self.backoff_seconds = backoff_seconds
        self.timeout = timeout
        self.session = session or requests.Session()
        digest = hashlib.sha256(
            json.dumps(
                [self.base_url, model, self.embed_model, self.score_url,
                 query_prefix, document_prefix],
                sort_keys=True,
            ).encode()
        ).hexdigest()[:12]
        self.backend_id = f"http:{model}:{digest}"

    def _post(self, url: str, payload: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(1, self.retries + 1):
            try:
                resp = self.session.post(url, json=payload, timeout=self.timeout)
                if resp.status_code >= 500:
                    raise requests.RequestException(f"server error {resp.status_code}")
                resp.raise_for_status()
                return resp.json()
            except (requests.RequestException, ValueError) as e:
                last_error = e
                if attempt < self.retries:
                    time.sleep(self.backoff_seconds * (2 ** (attempt - 1)))
        raise TransportError(
            f"POST {url} failed after {self.retries} attempts: {last_error}",
            attempts=self.retries,
        )

    def chat(self, request: ChatRequest) -> str:
        payload = {"model": self.model, **request.payload()}
        data = self._post(f"{self.base_url}/chat/completions", payload)
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise BackendError(f"malformed chat response: {json.dumps(data)[:200]}")
        if not text:
            raise EmptyOutputError("endpoint returned an empty completion")
        return text

    def embed(self, texts: Sequence[str], role: str) -> list[EmbeddingVector]:
        if not texts:
            raise BackendError("embed called with no texts")
        prefix = _role_prefix(role, self.query_prefix, self.document_prefix)
        payload = {"model": self.embed_model, "input": [prefix + t for t in texts]}
        data = self._post(f"{self.base_url}/embeddings", payload)
        try:
            rows = sorted(data["data"], key=lambda r: r["index"])
            vectors = [np.asarray(r["embedding"], dtype=np.float64) for r in rows]
        except (KeyError, TypeError):
            raise BackendError(f"malformed embeddings response: {json.dumps(data)[:200]}")
        if len(vectors) != len(texts):
            raise BackendError(
                f"expected {len(texts)} embeddings, got {len(vectors)}"
            )
        dims = {v.shape for v in vectors}
        if len(dims) > 1:
            raise BackendError(f"embedding dimension mismatch within batch: {dims}")
        return [EmbeddingVector(_unit(v), role) for v in vectors]

    def pair_score(self, query: str, candidate: str) -> float:
        return self.pair_score_batch(query, [candidate])[0]

    def pair_score_batch(self, query: str, candidates: Sequence[str]) -> list[float]:
        if self.score_url is None:
            raise CapabilityError(
                "pair scoring needs a score_url pointing at a sentence-scoring service"
            )
        data = self._post(
            f"{self.score_url}/score", {"query": query, "sentences": list(candidates)}
        )
        try:
            return [float(row["p_relevant"]) for row in data]
        except (KeyError, TypeError):
            raise BackendError(f"malformed score response: {json.dumps(data)[:200]}")


def cache_key(backend_id: str, kind: str, payload: dict) -> str:
    """Content hash identifying one backend request."""
    blob = json.dumps(
        {"backend_id": backend_id, "kind": kind, "payload": payload},
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0  # == calls forwarded to the wrapped backend

    @property
    def hit_ratio(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0


class ResponseCache:
    """One JSON file per request hash under ``directory``; never expires."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> Optional[dict]:
        path = self._path(key)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, key: str, record: dict) -> None:
        path = self._path(key)
        tmp = path.with_suffix(".tmp")
        with self._lock:
            tmp.write_text(
                json.dumps(record, indent=2, ensure_ascii=False, sort_keys=True),
                encoding="utf-8",
            )
            tmp.replace(path)


class CachedBackend:
    """Content-addressed cache wrapper; same surface as the wrapped backend.

    Embeddings and pair scores are cached per text/pair so overlapping
    batches reuse earlier work. ``stats.misses`` counts actual calls into
    the wrapped backend, which is what run manifests report as backend
    calls.
    """

    def __init__(self, backend, cache: ResponseCache | str | Path):
        self.backend = backend
        self.cache = cache if isinstance(cache, ResponseCache) else ResponseCache(cache)
        self.backend_id = backend.backend_id
        self.stats = CacheStats()

    def chat(self, request: ChatRequest) -> str:
        payload = request.payload()
        key = cache_key(self.backend_id, "chat", payload)
        record = self.cache.get(key)
        if record is not None:
            self.stats.hits += 1
            return record["response"]
        text = self.backend.chat(request)
        self.stats.misses += 1
        self.cache.put(
            key,
            {"backend_id": self.backend_id, "kind": "chat", "request": payload, "response": text},
        )
        return text

    def embed(self, texts: Sequence[str], role: str) -> list[EmbeddingVector]:
        results: list[Optional[EmbeddingVector]] = []
        missing: list[tuple[int, str]] = []
        for i, text in enumerate(texts):
            key = cache_key(self.backend_id, "embed", {"text": text, "role": role})
            record = self.cache.get(key)
            if record is not None:
                self.stats.hits += 1
                results.append(EmbeddingVector(np.asarray(record["response"]), role))
            else:
                results.append(None)
                missing.append((i, text))
        if missing:
            fresh = self.backend.embed([t for _, t in missing], role)
            self.stats.misses += len(missing)
            for (i, text), vec in zip(missing, fresh):
                key = cache_key(self.backend_id, "embed", {"text": text, "role": role})
                self.cache.put(
                    key,
                    {
                        "backend_id": self.backend_id,
                        "kind": "embed",
                        "request": {"text": text, "role": role},
                        "response": vec.values.tolist(),
                    },
                )
                results[i] = vec
        return results  # type: ignore[return-value]

    def pair_score(self, query: str, candidate: str) -> float:
        return self.pair_score_batch(query, [candidate])[0]

    def pair_score_batch(self, query: str, candidates: Sequence[str]) -> list[float]:
        results: list[Optional[float]] = []
        missing: list[tuple[int, str]] = []
        for i, cand in enumerate(candidates):
            key = cache_key(self.backend_id, "pair", {"query": query, "candidate": cand})
            record = self.cache.get(key)
            if record is not None:
                self.stats.hits += 1
                results.append(float(record["response"]))
            else:
                results.append(None)
                missing.append((i, cand))
        if missing:
            fresh = self.backend.pair_score_batch(query, [c for _, c in missing])
            self.stats.misses += len(missing)
            for (i, cand), score in zip(missing, fresh):
                key = cache_key(self.backend_id, "pair", {"query": query, "candidate": cand})
                self.cache.put(
                    key,
                    {
                        "backend_id": self.backend_id,
                        "kind": "pair",
                        "request": {"query": query, "candidate": cand},
                        "response": float(score),
                    },
                )
                results[i] = float(score)
        return results  # type: ignore[return-value]
