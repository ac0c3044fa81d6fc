"""Competency question generation and the file-based expert review checkpoint."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ontokg import prompts
from ontokg.errors import CheckpointError, ParseError
from ontokg.llm import Backend, ChatRequest, GenerationParams, default_params

STATUSES = ("generated", "edited", "added", "approved")
REVIEWED_STATUSES = frozenset({"edited", "added", "approved"})

REVIEW_HEADER = (
    "# Competency question review. One question per line: id<TAB>status<TAB>text.\n"
    "# Edit the text in place, delete lines to drop questions, and append new\n"
    "# questions as: new<TAB>added<TAB>question text\n"
)

DEFAULT_DOMAIN_PROMPT = (
    "provenance of the results of deep learning pipelines described in scholarly publications "
    "(data, preprocessing, model, training, hyperparameters, software, hardware, evaluation)"
)


class CqGenerationParseError(ParseError):
    pass


class CqImportError(ParseError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class EmptyReviewError(CqImportError):
    pass


@dataclass(frozen=True)
class CompetencyQuestion:
    cq_id: str
    text: str
    status: str = "generated"
    provenance: str = "llm"

    def __post_init__(self) -> None:
        if self.status not in STATUSES:
            raise ValueError(f"unknown CQ status {self.status!r}")
        if self.provenance not in ("llm", "human"):
            raise ValueError(f"unknown CQ provenance {self.provenance!r}")


@dataclass(frozen=True)
class CqSet:
    questions: tuple[CompetencyQuestion, ...] = ()
    review_round: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "questions", tuple(self.questions))
        expected = [f"CQ{i}" for i in range(1, len(self.questions) + 1)]
        if [q.cq_id for q in self.questions] != expected:
            raise ValueError("CQ ids must be dense and ordered: CQ1..CQn")

    def __len__(self) -> int:
        return len(self.questions)

    def __iter__(self):
        return iter(self.questions)

    def by_id(self, cq_id: str) -> CompetencyQuestion:
        for q in self.questions:
            if q.cq_id == cq_id:
                return q
        raise KeyError(cq_id)

    def approved(self) -> list[CompetencyQuestion]:
        return [q for q in self.questions if q.status in REVIEWED_STATUSES]

    def to_dict(self) -> dict[str, Any]:
        return {
            "review_round": self.review_round,
            "questions": [
                {"cq_id": q.cq_id, "text": q.text, "status": q.status, "provenance": q.provenance}
                for q in self.questions
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> CqSet:
        return cls(tuple(CompetencyQuestion(**q) for q in data["questions"]), data["review_round"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> CqSet:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def require_reviewed(cqs: CqSet) -> None:
    if cqs.review_round < 1:
        raise CheckpointError("competency questions have not been through expert review")


_LIST_MARKER = re.compile(r"^\s*(?:(?:CQ\s*)?\d+\s*[.):-]|[-*•]|CQ\s*\d+\s*:)\s*", re.IGNORECASE)


def parse_question_list(text: str) -> list[str]:
    """Question lines from a numbered or bulleted list, de-duplicated case-insensitively."""
    seen = set()
    questions = []
    for line in text.splitlines():
        line = _LIST_MARKER.sub("", line, count=1).strip().strip("*").strip()
        if not line.endswith("?"):
            continue
        key = " ".join(line.split()).casefold()
        if key in seen:
            continue
        seen.add(key)
        questions.append(line)
    return questions


def generate_cqs(
    backend: Backend, domain_prompt: str = DEFAULT_DOMAIN_PROMPT, params: GenerationParams | None = None
) -> CqSet:
    request = ChatRequest(
        user_text=prompts.render("cq_generation", domain=domain_prompt),
        params=params or default_params(),
        stage_tag="cq_gen",
    )
    raw = backend.complete(request).text
    texts = parse_question_list(raw)
    if not texts:
        raise CqGenerationParseError("no competency questions found in the model response", raw=raw)
    return CqSet(tuple(CompetencyQuestion(f"CQ{i}", t) for i, t in enumerate(texts, 1)))


def export_for_review(cqs: CqSet, path: str | Path) -> Path:
    path = Path(path)
    lines = [REVIEW_HEADER]
    for q in cqs:
        text = " ".join(q.text.split())
        lines.append(f"{q.cq_id}\t{q.status}\t{text}\n")
    try:
        path.write_text("".join(lines), encoding="utf-8")
    except OSError as exc:
        raise CqImportError(f"cannot write review file {path}: {exc}") from exc
    return path


def import_reviewed(path: str | Path, exported: CqSet) -> CqSet:
    """Read a review file back, comparing each line with the set it was exported from.

    Unchanged questions that were only generated become ``approved``; unchanged
    questions that already carry a review status keep it, so re-exporting an
    imported set is a fixed point. Changed text becomes ``edited`` and new lines
    ``added``, both with human provenance. Ids are renumbered in file order.
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"review file {path} does not exist")
    originals = {q.cq_id: q for q in exported}
    seen_ids: set[str] = set()
    reviewed: list[tuple[str, str, str]] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise CqImportError(f"expected 3 tab-separated fields, found {len(fields)}", lineno)
        cq_id, status, text = (f.strip() for f in fields)
        text = " ".join(text.split())
        if not text:
            raise CqImportError("empty question text", lineno)
        if status == "added" and cq_id not in originals:
            reviewed.append(("added", "human", text))
            continue
        if cq_id not in originals:
            raise CqImportError(f"unknown question id {cq_id!r}; new questions use status 'added'", lineno)
        if cq_id in seen_ids:
            raise CqImportError(f"question id {cq_id} appears twice", lineno)
        seen_ids.add(cq_id)
        original = originals[cq_id]
        if text != " ".join(original.text.split()):
            reviewed.append(("edited", "human", text))
        elif original.status in REVIEWED_STATUSES:
            reviewed.append((original.status, original.provenance, text))
        else:
            reviewed.append(("approved", original.provenance, text))
    if not reviewed:
        raise EmptyReviewError("no competency questions survived review")
    questions = tuple(
        CompetencyQuestion(f"CQ{i}", text, status, provenance) for i, (status, provenance, text) in enumerate(reviewed, 1)
    )
    return CqSet(questions, exported.review_round + 1)
