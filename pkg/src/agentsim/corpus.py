"""Document store with an inverted lexical index and BM25 retrieval.

The corpus is immutable once built: ``build_index`` computes the postings,
document lengths, and collection statistics up front, and ``retrieve`` only
reads them. That makes a corpus safe to share across any number of threads.
"""

from __future__ import annotations

import gzip
import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

from agentsim.errors import DuplicateDocId, EmptyCorpus, EmptyQuery

# Maximal runs of Unicode letters/digits ("\w" minus the underscore).
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


def load_default_stopwords() -> frozenset[str]:
    """Load the pinned English stopword list shipped with the package."""
    text = resources.files("agentsim.data").joinpath("stopwords_en.txt").read_text("utf-8")
    return frozenset(
        line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")
    )


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if not self.text:
            raise ValueError(f"document {self.doc_id!r} has empty text")


@dataclass(frozen=True)
class TokenList:
    """Lowercased tokens of a text plus the subset that is not a stopword."""

    tokens: tuple[str, ...]
    content_tokens: tuple[str, ...]


@dataclass(frozen=True)
class RetrievalResult:
    """Top-k lexical hits for a query, sorted by score descending.

    Ties are broken by ascending doc_id so results are fully deterministic.
    """

    query: str
    hits: tuple[tuple[str, float], ...]
    depth: int

    @property
    def doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.hits]


def tokenize(text: str, stopwords: frozenset[str] | set[str]) -> TokenList:
    """Split ``text`` into lowercase letter/digit runs.

    ``content_tokens`` drops exact stopword matches while preserving order.
    Empty text yields empty lists.
    """
    tokens = tuple(_TOKEN_RE.findall(text.lower()))
    content = tuple(t for t in tokens if t not in stopwords)
    return TokenList(tokens=tokens, content_tokens=content)


class Corpus:
    """Documents plus an inverted index; read-only after construction."""

    def __init__(
        self,
        documents: list[Document],
        index: dict[str, list[tuple[str, int]]],
        doc_lengths: dict[str, int],
        stopwords: frozenset[str],
        k1: float,
        b: float,
    ) -> None:
        self.documents = tuple(documents)
        self.index = index
        self.doc_lengths = doc_lengths
        self.avg_doc_length = (
            sum(doc_lengths.values()) / len(doc_lengths) if doc_lengths else 0.0
        )
        self.stopwords = stopwords
        self.k1 = k1
        self.b = b
        self._by_id = {d.doc_id: d for d in documents}

    def __len__(self) -> int:
        return len(self.documents)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    def get(self, doc_id: str) -> Document:
        return self._by_id[doc_id]

    @property
    def doc_ids(self) -> list[str]:
        return [d.doc_id for d in self.documents]


def build_index(
    documents: list[Document],
    stopwords: frozenset[str] | None = None,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
) -> Corpus:
    """Build an immutable corpus over ``documents``.

    Every content token of every document is indexed; document length is the
    content-token count. Raises ``EmptyCorpus`` for zero documents and
    ``DuplicateDocId`` when two documents share an id.
    """
    if not documents:
        raise EmptyCorpus("cannot build an index over zero documents")
    stop = stopwords if stopwords is not None else load_default_stopwords()

    seen: set[str] = set()
    index: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    for doc in documents:
        if doc.doc_id in seen:
            raise DuplicateDocId(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        content = tokenize(doc.text, stop).content_tokens
        doc_lengths[doc.doc_id] = len(content)
        counts: dict[str, int] = {}
        for tok in content:
            counts[tok] = counts.get(tok, 0) + 1
        for tok, tf in counts.items():
            index.setdefault(tok, []).append((doc.doc_id, tf))

    # Postings sorted by doc_id for deterministic iteration.
    for postings in index.values():
        postings.sort(key=lambda item: item[0])
    return Corpus(documents, index, doc_lengths, stop, k1, b)


def _idf(n_docs: int, df: int) -> float:
    # Non-negative BM25 idf variant: ln(1 + (N - df + 0.5) / (df + 0.5)).
    return math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))


def retrieve(corpus: Corpus, query: str, depth: int) -> RetrievalResult:
    """BM25 top-``depth`` retrieval for ``query``.

    Each occurrence of a query content token contributes
    ``idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))``.
    Documents containing no query content token are excluded. Raises
    ``EmptyQuery`` when the query has no content tokens.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    terms = tokenize(query, corpus.stopwords).content_tokens
    if not terms:
        raise EmptyQuery(f"query {query!r} has no content tokens")

    n = len(corpus)
    scores: dict[str, float] = {}
    for term in terms:
        postings = corpus.index.get(term)
        if not postings:
            continue
        idf = _idf(n, len(postings))
        for doc_id, tf in postings:
            dl = corpus.doc_lengths[doc_id]
            norm = 1.0 - corpus.b + corpus.b * (dl / corpus.avg_doc_length)
            contribution = idf * tf * (corpus.k1 + 1.0) / (tf + corpus.k1 * norm)
            scores[doc_id] = scores.get(doc_id, 0.0) + contribution

    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    hits = tuple((doc_id, score) for doc_id, score in ranked[:depth])
    return RetrievalResult(query=query, hits=hits, depth=depth)


def load_documents_jsonl(path: str | Path) -> list[Document]:
    """Read documents from JSONL (``id``, ``text``, optional ``meta``).

    Files ending in ``.gz`` are transparently decompressed.
    """
    path = Path(path)
    opener = gzip.open if path.name.endswith(".gz") else open
    docs: list[Document] = []
    with opener(path, "rt", encoding="utf-8") as fh:  # type: ignore[operator]
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            docs.append(
                Document(
                    doc_id=str(obj["id"]),
                    text=obj["text"],
                    meta=dict(obj.get("meta") or {}),
                )
            )
    return docs


def write_documents_jsonl(documents: Iterable[Document], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    opener = gzip.open if path.name.endswith(".gz") else open
    with opener(path, "wt", encoding="utf-8") as fh:  # type: ignore[operator]
        for doc in documents:
            record: dict[str, object] = {"id": doc.doc_id, "text": doc.text}
            if doc.meta:
                record["meta"] = doc.meta
            fh.write(json.dumps(record, ensure_ascii=True) + "\n")
