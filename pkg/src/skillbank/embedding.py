"""Text embedders used to build and match retrieval keys.

The built-in :class:`HashEmbedder` needs no model files or network access.
:class:`RemoteEmbedder` talks to an HTTP service exposing ``POST /embed``.
"""

from __future__ import annotations

import hashlib
import time
from typing import Protocol, Sequence

import httpx
import numpy as np

from .errors import DimensionMismatch, RemoteUnavailable

KEY_SEPARATOR = "||"


class Embedder(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]: ...


def _canonical_empty(dimension: int) -> np.ndarray:
    v = np.zeros(dimension)
    v[0] = 1.0
    return v


class HashEmbedder:
    """Signed feature hashing over whitespace tokens, L2-normalized.

    Each token lands in one of ``dimension`` buckets and adds +1 or -1 there;
    bucket and sign come from independent slices of a BLAKE2b digest, so the
    output is stable across processes and Python versions.
    """

    def __init__(self, dimension: int = 64, salt: str = ""):
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        self.dimension = int(dimension)
        self._salt = salt.encode("utf-8")
        self._buckets: dict[str, tuple[int, float]] = {}

    def _bucket(self, token: str) -> tuple[int, float]:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=16, key=self._salt).digest()
        index = int.from_bytes(digest[:8], "little") % self.dimension
        sign = 1.0 if digest[8] & 1 else -1.0
        return index, sign

    def embed(self, text: str) -> np.ndarray:
        v = np.zeros(self.dimension)
        for token in text.split():
            hit = self._buckets.get(token)
            if hit is None:
                # memo of the pure token hash, bounded to keep memory flat
                hit = self._bucket(token)
                if len(self._buckets) < 100_000:
                    self._buckets[token] = hit
            index, sign = hit
            v[index] += sign
        norm = np.linalg.norm(v)
        # empty input, or every token cancelled out
        if norm == 0.0:
            return _canonical_empty(self.dimension)
        return v / norm

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


class RemoteEmbedder:
    """Client for an embedding service: ``POST /embed {"texts": [...]}``.

    Responses are ``{"vectors": [[...], ...]}``. Vectors are re-normalized
    locally; any transport or shape failure raises :class:`RemoteUnavailable`.
    """

    batch_size = 64

    def __init__(
        self,
        base_url: str,
        dimension: int,
        timeout: float = 10.0,
        retries: int = 2,
        backoff: float = 0.5,
        client: httpx.Client | None = None,
    ):
        self.dimension = int(dimension)
        self.retries = int(retries)
        self.backoff = backoff
        self._client = client or httpx.Client(base_url=base_url, timeout=timeout)

    def _post(self, texts: list[str]) -> list[list[float]]:
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                response = self._client.post("/embed", json={"texts": texts})
                response.raise_for_status()
                vectors = response.json()["vectors"]
                if len(vectors) != len(texts):
                    raise ValueError(f"got {len(vectors)} vectors for {len(texts)} texts")
                return vectors
            except (httpx.HTTPError, KeyError, TypeError, ValueError) as exc:
                last_error = exc
                if attempt < self.retries and self.backoff > 0:
                    time.sleep(self.backoff * (2**attempt))
        raise RemoteUnavailable(f"embedding service failed: {last_error}") from last_error

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        texts = list(texts)
        for start in range(0, len(texts), self.batch_size):
            for raw in self._post(texts[start : start + self.batch_size]):
                v = np.asarray(raw, dtype=float)
                if v.shape != (self.dimension,):
                    raise RemoteUnavailable(
                        f"service returned dimension {v.shape}, expected {self.dimension}"
                    )
                norm = np.linalg.norm(v)
                out.append(v / norm if norm > 0 else _canonical_empty(self.dimension))
        return out

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two unit vectors (their dot product), clipped to [-1, 1]."""
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


def key_text(task_text: str, observation_text: str | None) -> str:
    if observation_text is None:
        return task_text
    return f"{task_text} {KEY_SEPARATOR} {observation_text}"


def embed_key(embedder: Embedder, task_text: str, observation_text: str | None = None) -> np.ndarray:
    return embedder.embed(key_text(task_text, observation_text))
