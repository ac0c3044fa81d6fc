"""Corpus ingestion, token-window chunking and BM25 retrieval."""

from __future__ import annotations

import math
import re
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from ontokg.errors import OntoKGError, PreconditionError

DEFAULT_CHUNK_SIZE = 2500
DEFAULT_OVERLAP = 100
DEFAULT_K = 4

CORPUS_SUFFIXES = (".txt", ".md")


class CorpusError(OntoKGError):
    pass


class EmptyDocumentError(CorpusError):
    pass


class DuplicateDocumentError(CorpusError):
    pass


class Tokenizer(Protocol):
    def spans(self, text: str) -> list[tuple[int, int]]:
        """Character offsets ``(start, end)`` of each token, in order."""
        ...


class WhitespaceTokenizer:
    """Tokens are maximal runs of non-whitespace characters."""

    _token = re.compile(r"\S+")

    def spans(self, text: str) -> list[tuple[int, int]]:
        return [m.span() for m in self._token.finditer(text)]


DEFAULT_TOKENIZER = WhitespaceTokenizer()


def count_tokens(text: str, tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> int:
    return len(tokenizer.spans(text))


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    body: str
    source_path: str


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    index: int
    token_start: int
    token_end: int
    text: str

    def to_record(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "index": self.index,
            "token_start": self.token_start,
            "token_end": self.token_end,
        }


@dataclass(frozen=True)
class RetrievalHit:
    chunk: Chunk
    score: float


def slugify(name: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")
    if not slug:
        raise CorpusError(f"cannot derive a document id from {name!r}")
    return slug


def _title_of(body: str, fallback: str) -> str:
    for line in body.splitlines():
        line = line.strip().lstrip("#").strip()
        if line:
            return line
    return fallback


def ingest_document(path: str | Path) -> Document:
    path = Path(path)
    try:
        body = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    if not body.strip():
        raise EmptyDocumentError(f"document {path} is empty")
    doc_id = slugify(path.stem)
    return Document(doc_id=doc_id, title=_title_of(body, path.stem), body=body, source_path=str(path))


def ingest_paths(paths: Iterable[str | Path]) -> list[Document]:
    docs: list[Document] = []
    seen: dict[str, str] = {}
    for path in paths:
        doc = ingest_document(path)
        if doc.doc_id in seen:
            raise DuplicateDocumentError(
                f"document id {doc.doc_id!r} derived from both {seen[doc.doc_id]} and {doc.source_path}"
            )
        seen[doc.doc_id] = doc.source_path
        docs.append(doc)
    return docs


def ingest_corpus(directory: str | Path) -> list[Document]:
    """Every ``.txt``/``.md`` file in ``directory``, in file-name order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise CorpusError(f"corpus directory {directory} does not exist")
    paths = sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in CORPUS_SUFFIXES)
    if not paths:
        raise CorpusError(f"no .txt or .md files in {directory}")
    return ingest_paths(paths)


def token_windows(n_tokens: int, chunk_size: int, overlap: int) -> list[tuple[int, int]]:
    if chunk_size < 1 or overlap < 0 or overlap >= chunk_size:
        raise PreconditionError(f"need 0 <= overlap < chunk_size, got chunk_size={chunk_size}, overlap={overlap}")
    if n_tokens == 0:
        return []
    stride = chunk_size - overlap
    windows = []
    start = 0
    while True:
        end = min(start + chunk_size, n_tokens)
        windows.append((start, end))
        if end == n_tokens:
            return windows
        start += stride


def chunk_document(
    doc: Document,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    overlap: int = DEFAULT_OVERLAP,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
) -> list[Chunk]:
    spans = tokenizer.spans(doc.body)
    chunks = []
    for index, (start, end) in enumerate(token_windows(len(spans), chunk_size, overlap)):
        text = doc.body[spans[start][0] : spans[end - 1][1]]
        chunks.append(Chunk(doc.doc_id, index, start, end, text))
    return chunks


_TERM = re.compile(r"\w+")


def index_terms(text: str) -> list[str]:
    """Lower-cased word terms used for lexical scoring."""
    return _TERM.findall(text.lower())


class RetrievalIndex:
    """Okapi BM25 over chunks, with an inverted index for candidate scoring.

    Corpus statistics (document frequencies, average length) are global even
    when a query is restricted to one document.
    """

    def __init__(self, chunks: Sequence[Chunk], k1: float = 1.5, b: float = 0.75):
        if not chunks:
            raise CorpusError("cannot index an empty corpus")
        self.chunks: tuple[Chunk, ...] = tuple(chunks)
        self.k1 = k1
        self.b = b
        self.lengths: tuple[int, ...] = tuple(len(index_terms(c.text)) for c in self.chunks)
        self.avg_length = sum(self.lengths) / len(self.chunks)
        postings: dict[str, list[tuple[int, int]]] = {}
        for i, chunk in enumerate(self.chunks):
            for term, tf in sorted(Counter(index_terms(chunk.text)).items()):
                postings.setdefault(term, []).append((i, tf))
        self.postings = {term: tuple(p) for term, p in sorted(postings.items())}
        self.doc_freq = {term: len(p) for term, p in self.postings.items()}

    def __len__(self) -> int:
        return len(self.chunks)

    def idf(self, term: str) -> float:
        df = self.doc_freq.get(term, 0)
        n = len(self.chunks)
        return math.log((n - df + 0.5) / (df + 0.5) + 1.0)

    def statistics(self) -> dict:
        return {
            "chunks": len(self.chunks),
            "avg_length": self.avg_length,
            "doc_freq": dict(self.doc_freq),
        }

    def chunk_table(self) -> list[dict]:
        return [c.to_record() for c in self.chunks]

    def scores(self, query: str) -> list[float]:
        scores = [0.0] * len(self.chunks)
        for term, qtf in sorted(Counter(index_terms(query)).items()):
            postings = self.postings.get(term)
            if not postings:
                continue
            idf = self.idf(term)
            for i, tf in postings:
                norm = self.k1 * (1.0 - self.b + self.b * self.lengths[i] / self.avg_length)
                scores[i] += qtf * idf * tf * (self.k1 + 1.0) / (tf + norm)
        return scores


def index_corpus(
    docs: Sequence[Document],
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    overlap: int = DEFAULT_OVERLAP,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
) -> RetrievalIndex:
    if not docs:
        raise CorpusError("cannot index an empty corpus")
    chunks = [c for doc in docs for c in chunk_document(doc, chunk_size, overlap, tokenizer)]
    return RetrievalIndex(chunks)


def retrieve(index: RetrievalIndex, query: str, k: int = DEFAULT_K, doc_filter: str | None = None) -> list[RetrievalHit]:
    """Top-``k`` chunks by BM25 score; ties ordered by (doc_id, index)."""
    if k < 1:
        raise PreconditionError(f"k must be >= 1, got {k}")
    scores = index.scores(query)
    candidates = [
        (i, scores[i]) for i, c in enumerate(index.chunks) if doc_filter is None or c.doc_id == doc_filter
    ]
    candidates.sort(key=lambda item: (-item[1], index.chunks[item[0]].doc_id, index.chunks[item[0]].index))
    return [RetrievalHit(index.chunks[i], score) for i, score in candidates[:k]]
