"""Unit-normalized query embeddings behind a pluggable provider interface.

Two providers are shipped: a deterministic offline hashing provider (feature
hashing of content-token n-grams, no network, stable across platforms) and a
remote provider speaking a minimal JSON embeddings contract so any encoder
service can be plugged in.
"""

from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import httpx

from agentsim.corpus import load_default_stopwords, tokenize
from agentsim.errors import DimensionMismatch, EmptyText, ProviderUnavailable

DEFAULT_HASHING_DIM = 256


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.values)

    def __post_init__(self) -> None:
        if len(self.values) < 2:
            raise ValueError("embedding dim must be >= 2")
        norm = math.sqrt(sum(v * v for v in self.values))
        if not math.isfinite(norm) or abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding is not unit-normalized (norm={norm!r})")


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Dot product of two unit vectors, clamped into [-1, 1]."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"dims differ: {a.dim} vs {b.dim}")
    dot = sum(x * y for x, y in zip(a.values, b.values))
    return max(-1.0, min(1.0, dot))


def cosine_distance(a: EmbeddingVector, b: EmbeddingVector) -> float:
    return 1.0 - cosine_similarity(a, b)


@dataclass(frozen=True)
class EmbeddingProviderConfig:
    kind: str = "hashing"  # hashing | remote
    dim: int = DEFAULT_HASHING_DIM
    endpoint_url: str = ""
    model_name: str = ""
    timeout: float = 30.0
    max_concurrency: int = 4
    batch_size: int = 32


def _normalize(values: list[float]) -> tuple[float, ...]:
    norm = math.sqrt(sum(v * v for v in values))
    if norm == 0.0 or not math.isfinite(norm):
        raise ProviderUnavailable("provider returned a zero or non-finite vector")
    return tuple(v / norm for v in values)


class HashingEmbeddingProvider:
    """Deterministic feature hashing of content-token unigrams and bigrams.

    Pure function of the input text: no network, no global state. Feature
    buckets and signs come from BLAKE2b digests, so vectors are identical
    across runs and platforms.
    """

    def __init__(self, dim: int = DEFAULT_HASHING_DIM, stopwords: frozenset[str] | None = None):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.stopwords = stopwords if stopwords is not None else load_default_stopwords()

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        return [self._embed_one(t) for t in texts]

    def _embed_one(self, text: str) -> EmbeddingVector:
        toks = tokenize(text, self.stopwords)
        # Stopword-only texts fall back to the full token list so that any
        # non-empty tokenizable text still embeds.
        base = toks.content_tokens or toks.tokens
        if not base:
            raise EmptyText(f"text {text!r} has no tokens to embed")
        features = list(base)
        features.extend(f"{a} {b}" for a, b in zip(base, base[1:]))

        buckets = [0.0] * self.dim
        for feat in features:
            digest = hashlib.blake2b(feat.encode("utf-8"), digest_size=8).digest()
            value = int.from_bytes(digest, "big")
            sign = 1.0 if value & 1 else -1.0
            buckets[(value >> 1) % self.dim] += sign
        return EmbeddingVector(values=_normalize(buckets))


class RemoteEmbeddingProvider:
    """Client for a remote embeddings service.

    Wire contract: POST ``{"model": name, "input": [texts]}`` to the endpoint;
    the response carries ``{"data": [{"embedding": [...]}, ...]}`` in input
    order. Requests are retried up to 3 times with exponential backoff, and at
    most ``max_concurrency`` batches are in flight at once.
    """

    MAX_ATTEMPTS = 3

    def __init__(
        self,
        endpoint_url: str,
        model_name: str,
        dim: int,
        timeout: float = 30.0,
        max_concurrency: int = 4,
        batch_size: int = 32,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ):
        if not endpoint_url:
            raise ValueError("remote provider requires endpoint_url")
        self.endpoint_url = endpoint_url
        self.model_name = model_name
        self.dim = dim
        self.timeout = timeout
        self.max_concurrency = max(1, max_concurrency)
        self.batch_size = max(1, batch_size)
        self._sleep = sleep
        # httpx.Client is thread-safe; batches may be posted concurrently.
        self._client = httpx.Client(transport=transport, timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        batches = [
            texts[i : i + self.batch_size] for i in range(0, len(texts), self.batch_size)
        ]
        if len(batches) == 1:
            return self._embed_batch(batches[0])
        with ThreadPoolExecutor(max_workers=self.max_concurrency) as pool:
            results = list(pool.map(self._embed_batch, batches))
        return [vec for batch in results for vec in batch]

    def _embed_batch(self, texts: list[str]) -> list[EmbeddingVector]:
        payload = {"model": self.model_name, "input": list(texts)}
        last_error: Exception | None = None
        for attempt in range(self.MAX_ATTEMPTS):
            try:
                response = self._client.post(self.endpoint_url, json=payload)
                response.raise_for_status()
                return self._parse(response.json(), expected=len(texts))
            except (httpx.HTTPError, ValueError, KeyError) as exc:
                last_error = exc
                if attempt < self.MAX_ATTEMPTS - 1:
                    self._sleep(0.5 * (2**attempt))
        raise ProviderUnavailable(
            f"embeddings request failed after {self.MAX_ATTEMPTS} attempts: {last_error}"
        )

    def _parse(self, body: dict, expected: int) -> list[EmbeddingVector]:
        data = body["data"]
        if len(data) != expected:
            raise ProviderUnavailable(
                f"provider returned {len(data)} vectors for {expected} inputs"
            )
        out = []
        for entry in data:
            values = [float(v) for v in entry["embedding"]]
            if len(values) != self.dim:
                raise ProviderUnavailable(
                    f"provider returned dim {len(values)}, expected {self.dim}"
                )
            out.append(EmbeddingVector(values=_normalize(values)))
        return out


EmbeddingProvider = HashingEmbeddingProvider | RemoteEmbeddingProvider


def make_provider(config: EmbeddingProviderConfig, **kwargs) -> EmbeddingProvider:
    if config.kind == "hashing":
        return HashingEmbeddingProvider(dim=config.dim)
    if config.kind == "remote":
        return RemoteEmbeddingProvider(
            endpoint_url=config.endpoint_url,
            model_name=config.model_name,
            dim=config.dim,
            timeout=config.timeout,
            max_concurrency=config.max_concurrency,
            batch_size=config.batch_size,
            **kwargs,
        )
    raise ValueError(f"unknown embedding provider kind {config.kind!r}")


def embed(provider: EmbeddingProvider, texts: list[str]) -> list[EmbeddingVector]:
    """Embed ``texts`` in order, one unit vector per text."""
    if not texts:
        raise EmptyText("texts must be non-empty")
    for t in texts:
        if not t:
            raise EmptyText("cannot embed an empty text")
    return provider.embed(list(texts))
