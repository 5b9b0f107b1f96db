"""Chunking, embeddings, cosine similarity and budgeted top-k selection.

Shared by the ``retrieve`` triage function and by both retrieval baselines.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping, Protocol, Sequence

import httpx
import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyIndex,
    NetworkError,
    ProviderError,
    ZeroVector,
)

DEFAULT_CHUNK_SIZE = 100
DEFAULT_BUDGET = 3000
# Similarities equal to this many decimals are treated as ties (then ordered by id).
SIMILARITY_DECIMALS = 12

TokenCounter = Callable[[str], int]


def count_tokens(text: str) -> int:
    """Heuristic token count: ``ceil(words * 4 / 3)``.

    Stands in for a subword tokenizer; pass an exact counter wherever a
    ``counter`` argument is accepted.
    """
    words = len(text.split())
    return (4 * words + 2) // 3


def truncate_to_budget(text: str, budget: int, counter: TokenCounter = count_tokens) -> str:
    """Longest whitespace-word prefix of ``text`` whose token count fits ``budget``."""
    words = text.split()
    lo, hi = 0, len(words)
    # counters are monotone in prefix length, so binary search the cut
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if counter(" ".join(words[:mid])) <= budget:
            lo = mid
        else:
            hi = mid - 1
    return " ".join(words[:lo])


@dataclass(frozen=True)
class Chunk:
    id: int
    text: str
    word_count: int
    source: tuple[int, int] | None = None  # (first page, last page) when known


def chunk_text(
    text: str,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    pages: Sequence[int] | None = None,
) -> list[Chunk]:
    """Split ``text`` into sequential, non-overlapping pieces of ``chunk_size`` words.

    ``pages`` optionally gives the page number of every whitespace word and is
    used to fill in each chunk's page span.
    """
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    words = text.split()
    if pages is not None and len(pages) != len(words):
        raise ValueError("pages must align one-to-one with words")
    chunks = []
    for n, start in enumerate(range(0, len(words), chunk_size)):
        piece = words[start:start + chunk_size]
        source = None
        if pages is not None:
            span = pages[start:start + chunk_size]
            source = (min(span), max(span))
        chunks.append(Chunk(id=n, text=" ".join(piece), word_count=len(piece), source=source))
    return chunks


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    va = np.asarray(a, dtype=float)
    vb = np.asarray(b, dtype=float)
    if va.shape != vb.shape:
        raise DimensionMismatch(f"dimensions differ: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    value = float(np.dot(va, vb)) / (na * nb)
    return max(-1.0, min(1.0, value))


@dataclass(frozen=True)
class Fragment:
    source_label: str
    text: str


@dataclass(frozen=True)
class RetrievedContext:
    """Labelled text fragments plus their total token count."""

    fragments: tuple[Fragment, ...]
    token_count: int

    @classmethod
    def of(cls, fragments: Sequence[Fragment], counter: TokenCounter = count_tokens) -> RetrievedContext:
        frags = tuple(fragments)
        return cls(frags, sum(counter(f.text) for f in frags))

    @property
    def labels(self) -> list[str]:
        return [f.source_label for f in self.fragments]

    def render(self) -> str:
        """Text handed to the model as a function result."""
        return "\n\n".join(f"[{f.source_label}]\n{f.text}" for f in self.fragments)

    def plain_text(self) -> str:
        return "\n\n".join(f.text for f in self.fragments)


# --- embedding providers --------------------------------------------------

class EmbeddingProvider(Protocol):
    provider_id: str

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]: ...


_WORD = re.compile(r"\w+")


def _bucket(word: str, dim: int) -> int:
    digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


class HashingEmbedder:
    """Offline deterministic embedder: hashed term frequencies, L2-normalised.

    Words are lowercased ``\\w+`` runs; each lands in bucket
    ``blake2b-64(word) mod dim``. Depends only on the multiset of words.
    """

    def __init__(self, dim: int = 256):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.provider_id = f"hashing-tf-{dim}"

    def counts(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for word in _WORD.findall(text.lower()):
            vec[_bucket(word, self.dim)] += 1.0
        return vec

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            vec = self.counts(text)
            norm = np.linalg.norm(vec)
            out.append(vec / norm if norm else vec)
        return out


class RemoteEmbedder:
    """Client for an embeddings endpoint speaking the common ``/embeddings`` shape."""

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        model: str = "text-embedding-ada-002",
        timeout: float = 60.0,
        client: httpx.Client | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.provider_id = f"remote:{model}"
        self._client = client or httpx.Client(timeout=timeout)

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._client.post(
                f"{self.endpoint}/embeddings",
                json={"input": list(texts), "model": self.model},
                headers=headers,
            )
        except httpx.HTTPError as exc:
            raise NetworkError(str(exc)) from exc
        if resp.status_code != 200:
            raise ProviderError(f"embedding service returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()["data"]
            ordered = sorted(data, key=lambda d: d["index"])
            vectors = [np.asarray(d["embedding"], dtype=float) for d in ordered]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProviderError(f"malformed embedding response: {exc}") from exc
        if len(vectors) != len(texts):
            raise ProviderError(f"expected {len(texts)} embeddings, got {len(vectors)}")
        if len({v.shape for v in vectors}) > 1:
            raise ProviderError("embedding dimensions differ within one response")
        return vectors


def embed(provider: EmbeddingProvider, texts: Sequence[str]) -> list[np.ndarray]:
    if not texts:
        raise ValueError("texts must be non-empty")
    vectors = provider.embed(list(texts))
    if len(vectors) != len(texts):
        raise ProviderError(f"expected {len(texts)} embeddings, got {len(vectors)}")
    for v in vectors:
        if not np.all(np.isfinite(v)):
            raise ProviderError("embedding contains non-finite values")
    return vectors


# --- vector index & selection ---------------------------------------------

@dataclass(frozen=True)
class VectorIndex:
    ids: tuple[Hashable, ...]
    matrix: np.ndarray = field(repr=False)
    provider_id: str

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("vector index ids must be unique")
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.ids):
            raise DimensionMismatch("matrix rows must match ids")
        if np.any(np.linalg.norm(self.matrix, axis=1) == 0.0):
            raise ZeroVector("vector index contains a zero vector")
        self.matrix.setflags(write=False)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def build(cls, provider: EmbeddingProvider, items: Mapping[Hashable, str]) -> VectorIndex:
        if not items:
            raise EmptyIndex("nothing to index")
        ids = tuple(items)
        vectors = embed(provider, [items[i] for i in ids])
        return cls(ids=ids, matrix=np.vstack(vectors), provider_id=provider.provider_id)

    def similarities(self, query_vec: Sequence[float]) -> np.ndarray:
        q = np.asarray(query_vec, dtype=float)
        if q.shape != (self.dimension,):
            raise DimensionMismatch(f"query has shape {q.shape}, index dimension {self.dimension}")
        qn = np.linalg.norm(q)
        if qn == 0.0:
            raise ZeroVector("query vector is zero")
        sims = self.matrix @ q / (np.linalg.norm(self.matrix, axis=1) * qn)
        return np.clip(sims, -1.0, 1.0)

    def ranked(self, query_vec: Sequence[float]) -> list[tuple[Hashable, float]]:
        """All ids by descending similarity, ties broken by ascending id."""
        sims = self.similarities(query_vec)
        pairs = list(zip(self.ids, sims.tolist()))
        pairs.sort(key=lambda p: (-round(p[1], SIMILARITY_DECIMALS), p[0]))
        return pairs


def top_k_within_budget(
    query_vec: Sequence[float],
    index: VectorIndex,
    texts: Mapping[Hashable, str],
    budget: int,
    counter: TokenCounter = count_tokens,
    label: Callable[[Hashable], str] = lambda i: f"chunk {i}",
):
    """Fill ``budget`` tokens with whole entries in similarity order.

    Stops at the first entry that no longer fits. When even the best entry
    is too large it is returned truncated, so the context is never empty.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    if len(index) == 0:
        raise EmptyIndex("vector index is empty")
    fragments = []
    used = 0
    for n, (entry_id, _sim) in enumerate(index.ranked(query_vec)):
        text = texts[entry_id]
        tokens = counter(text)
        if used + tokens <= budget:
            fragments.append(Fragment(label(entry_id), text))
            used += tokens
            continue
        if n == 0:
            fragments.append(Fragment(label(entry_id), truncate_to_budget(text, budget, counter)))
        break
    return RetrievedContext.of(fragments, counter)
