"""Embedding backends.

The default mock embedder is a deterministic hashed bag-of-words: it keeps
the whole pipeline runnable offline while preserving the geometry that
matters (texts sharing vocabulary land close, disjoint vocabularies land
far apart). The HTTP backend fronts a real embedding service.
"""

from __future__ import annotations

import hashlib
import re
from typing import Protocol, Sequence

import httpx
import numpy as np

from .errors import EmbeddingUnavailable

DEFAULT_DIM = 384

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


class EmbeddingBackend(Protocol):
    dim: int

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]: ...


class MockEmbedder:
    """Hash each token into one of ``dim`` buckets, count, L2-normalize.

    Bucketing uses a keyed stable hash (blake2b), never Python's salted
    ``hash()``: identical text must embed identically across processes.
    """

    def __init__(self, dim: int = DEFAULT_DIM) -> None:
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self._embed_one(t) for t in texts]

    def _embed_one(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        # A token-free text (pure punctuation) still gets a stable non-zero
        # vector via the empty-string sentinel token.
        tokens = _TOKEN_RE.findall(text.lower()) or [""]
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in tokens:
            vec[self._bucket(token)] += 1.0
        return vec / np.linalg.norm(vec)

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.dim


class HttpEmbedder:
    """POST ``{"texts": [...]}`` to an embedding service, expect ``{"vectors": [...]}``."""

    def __init__(self, endpoint: str, dim: int, timeout: float = 10.0, client: httpx.Client | None = None) -> None:
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.endpoint = endpoint
        self.dim = dim
        self._timeout = timeout
        self._client = client or httpx.Client(timeout=timeout)

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        for text in texts:
            if not text:
                raise ValueError("cannot embed empty text")
        try:
            resp = self._client.post(self.endpoint, json={"texts": list(texts)})
            resp.raise_for_status()
            vectors = resp.json()["vectors"]
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise EmbeddingUnavailable(f"embedding service failed: {exc}") from exc
        if len(vectors) != len(texts):
            raise EmbeddingUnavailable("embedding service returned wrong batch size")
        out: list[np.ndarray] = []
        for vec in vectors:
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (self.dim,):
                raise EmbeddingUnavailable(
                    f"embedding service returned shape {arr.shape}, expected ({self.dim},)"
                )
            out.append(arr)
        return out
