"""Retrieval-augmented answering of competency questions, one document at a time."""

from __future__ import annotations

import re
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

from ontokg import prompts
from ontokg.corpus import DEFAULT_K, RetrievalIndex, retrieve
from ontokg.cq import REVIEWED_STATUSES, CompetencyQuestion
from ontokg.errors import PreconditionError
from ontokg.llm import Backend, ChatRequest, GenerationParams, default_params

DEFAULT_DONT_KNOW_PATTERNS = (r"\bdon'?t know\b", r"\bdo not know\b")

# Leading lines that carry no content of their own.
BOILERPLATE_PATTERNS = (
    r"^\s*(?:answer|helpful answer|response)\s*:+\s*$",
    r"^\s*(?:sure|certainly|of course|okay|ok)\b[^.!?]*[.!:]?\s*$",
    r"^\s*(?:here is|here's|here are)\b.*:\s*$",
    r"^\s*based on the (?:provided |given )?context\s*[,:]?\s*$",
)
_BOILERPLATE = [re.compile(p, re.IGNORECASE) for p in BOILERPLATE_PATTERNS]
_ANSWER_PREFIX = re.compile(r"^\s*(?:answer|helpful answer)\s*:+\s*", re.IGNORECASE)
_SENTENCE_BOUNDARY = re.compile(r"(?<=[.?!])\s+")


@dataclass(frozen=True)
class CQAnswer:
    cq_id: str
    doc_id: str
    raw_text: str
    clean_text: str
    context_chunks: tuple[tuple[str, int], ...]
    answered: bool

    def __post_init__(self) -> None:
        object.__setattr__(self, "context_chunks", tuple(tuple(c) for c in self.context_chunks))
        if any(doc != self.doc_id for doc, _ in self.context_chunks):
            raise ValueError("context chunks must come from the answer's document")

    def to_dict(self) -> dict[str, Any]:
        return {
            "cq_id": self.cq_id,
            "doc_id": self.doc_id,
            "raw_text": self.raw_text,
            "clean_text": self.clean_text,
            "context_chunks": [list(c) for c in self.context_chunks],
            "answered": self.answered,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> CQAnswer:
        return cls(
            data["cq_id"],
            data["doc_id"],
            data["raw_text"],
            data["clean_text"],
            tuple((d, i) for d, i in data["context_chunks"]),
            data["answered"],
        )


def split_sentences(line: str) -> list[str]:
    return [s for s in _SENTENCE_BOUNDARY.split(line.strip()) if s]


def _sentence_key(sentence: str) -> str:
    return " ".join(sentence.split()).casefold()


def postprocess_answer(raw: str) -> str:
    """Drop leading boilerplate lines and repeated sentences, collapse blank runs.

    Deduplication can turn a line into boilerplate ("Sure thing. Sure thing."),
    so the pass repeats until nothing changes. Each pass only removes text.
    """
    text = _clean_pass(raw)
    while (again := _clean_pass(text)) != text:
        text = again
    return text


def _clean_pass(raw: str) -> str:
    lines = [line.rstrip() for line in raw.replace("\r\n", "\n").split("\n")]
    while lines:
        if not lines[0].strip() or any(p.match(lines[0]) for p in _BOILERPLATE):
            lines.pop(0)
        elif _ANSWER_PREFIX.match(lines[0]):
            lines[0] = _ANSWER_PREFIX.sub("", lines[0], count=1)
        else:
            break

    seen: set[str] = set()
    out: list[str] = []
    for line in lines:
        if not line.strip():
            if out and out[-1] != "":
                out.append("")
            continue
        kept = []
        for sentence in split_sentences(line):
            key = _sentence_key(sentence)
            if key in seen:
                continue
            seen.add(key)
            kept.append(sentence)
        if kept:
            indent = line[: len(line) - len(line.lstrip())]
            out.append(indent + " ".join(kept))
    while out and out[-1] == "":
        out.pop()
    return "\n".join(out)


@dataclass
class AnswerSettings:
    k: int = DEFAULT_K
    prompt_version: str = "v1"
    dont_know_patterns: Sequence[str] = DEFAULT_DONT_KNOW_PATTERNS
    params: GenerationParams = field(default_factory=default_params)

    def is_dont_know(self, text: str) -> bool:
        return any(re.search(p, text, re.IGNORECASE) for p in self.dont_know_patterns)


def build_answer_prompt(context_texts: Sequence[str], question: str, prompt_version: str = "v1") -> str:
    context = "\n\n".join(f"[{i}] {text}" for i, text in enumerate(context_texts, 1))
    return prompts.render(f"answer_{prompt_version}", context=context, question=question)


def answer_cq(
    backend: Backend,
    index: RetrievalIndex,
    cq: CompetencyQuestion,
    doc_id: str,
    settings: AnswerSettings | None = None,
) -> CQAnswer:
    settings = settings or AnswerSettings()
    if cq.status not in REVIEWED_STATUSES:
        raise PreconditionError(f"{cq.cq_id} has not been approved in review")
    if not any(c.doc_id == doc_id for c in index.chunks):
        raise PreconditionError(f"document {doc_id!r} is not indexed")
    hits = retrieve(index, cq.text, settings.k, doc_filter=doc_id)
    request = ChatRequest(
        user_text=build_answer_prompt([h.chunk.text for h in hits], cq.text, settings.prompt_version),
        params=settings.params,
        stage_tag="cq_answer",
    )
    raw = backend.complete(request).text
    clean = postprocess_answer(raw)
    return CQAnswer(
        cq_id=cq.cq_id,
        doc_id=doc_id,
        raw_text=raw,
        clean_text=clean,
        context_chunks=tuple((h.chunk.doc_id, h.chunk.index) for h in hits),
        answered=bool(clean.strip()) and not settings.is_dont_know(clean),
    )
