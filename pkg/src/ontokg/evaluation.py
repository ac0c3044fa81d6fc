"""LLM-as-judge scoring of answers and KG individuals, plus report arithmetic."""

from __future__ import annotations

import enum
import re
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any

from ontokg import prompts
from ontokg.answering import CQAnswer
from ontokg.errors import CheckpointError, OntoKGError, ParseError
from ontokg.kg import KgIndividual
from ontokg.llm import Backend, ChatRequest, GenerationParams, default_params
from ontokg.ontology import decamelize

RIGHT_THRESHOLD = 6
WRONG_BELOW = 3
NO_KG_CELL = "x"


class Label(str, enum.Enum):
    WRONG = "Wrong"
    PARTIAL = "Partial"
    RIGHT = "Right"

    @property
    def rank(self) -> int:
        return _RANK[self]

    @classmethod
    def parse(cls, text: str) -> Label:
        for label in cls:
            if label.value.lower() == text.strip().lower():
                return label
        raise ValueError(f"unknown label {text!r}; expected Right, Wrong or Partial")


_RANK = {Label.WRONG: 0, Label.PARTIAL: 1, Label.RIGHT: 2}


class VerdictParseError(ParseError):
    pass


class VerificationParseError(ParseError):
    pass


class GroundTruthError(ParseError):
    pass


class AlignmentError(OntoKGError):
    def __init__(self, message: str, keys: Iterable[tuple[str, str]]):
        self.keys = sorted(keys)
        super().__init__(f"{message}: {', '.join(f'{c}/{d}' for c, d in self.keys)}")


def classify(score: int) -> Label:
    if isinstance(score, bool) or not isinstance(score, int) or not 0 <= score <= 10:
        raise ValueError(f"score must be an integer in 0..10, got {score!r}")
    if score >= RIGHT_THRESHOLD:
        return Label.RIGHT
    if score < WRONG_BELOW:
        return Label.WRONG
    return Label.PARTIAL


@dataclass(frozen=True)
class GroundTruth:
    cq_id: str
    doc_id: str
    text: str
    human_label: Label


def load_ground_truth(path: str | Path) -> list[GroundTruth]:
    """Read ``cq_id<TAB>doc_id<TAB>label<TAB>text`` lines; ``#`` lines are comments."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"ground-truth file {path} does not exist")
    records: list[GroundTruth] = []
    seen: set[tuple[str, str]] = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t", 3)
        if len(fields) != 4:
            raise GroundTruthError(f"{path}:{lineno}: expected 4 tab-separated fields")
        cq_id, doc_id, label, text = (f.strip() for f in fields)
        try:
            human_label = Label.parse(label)
        except ValueError as exc:
            raise GroundTruthError(f"{path}:{lineno}: {exc}") from None
        if (cq_id, doc_id) in seen:
            raise GroundTruthError(f"{path}:{lineno}: duplicate record for {cq_id}/{doc_id}")
        seen.add((cq_id, doc_id))
        records.append(GroundTruth(cq_id, doc_id, text, human_label))
    return records


@dataclass(frozen=True)
class JudgeVerdict:
    score: int
    explanation: str
    label: Label

    def __post_init__(self) -> None:
        if classify(self.score) != self.label:
            raise ValueError(f"label {self.label} does not match score {self.score}")

    def to_dict(self) -> dict[str, Any]:
        return {"score": self.score, "label": self.label.value, "explanation": self.explanation}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> JudgeVerdict:
        return cls(data["score"], data["explanation"], Label.parse(data["label"]))


_SCORE = re.compile(r"^\W*score\W*:\s*(.*?)\s*$", re.IGNORECASE | re.MULTILINE)
_EXPLANATION = re.compile(r"^\W*explanation\W*:\s*(.*)", re.IGNORECASE | re.MULTILINE | re.DOTALL)
_RESPONSE = re.compile(r"^\W*response\W*:\s*(.*?)\s*$", re.IGNORECASE | re.MULTILINE)


def parse_verdict(raw: str) -> JudgeVerdict:
    m = _SCORE.search(raw)
    if m is None:
        raise VerdictParseError("judge response has no 'score:' line", raw=raw)
    value = re.match(r"[*_`\s]*(-?\d+)(?:\s*/\s*10)?\W*$", m.group(1))
    if value is None:
        raise VerdictParseError(f"judge score {m.group(1)!r} is not an integer", raw=raw)
    score = int(value.group(1))
    if not 0 <= score <= 10:
        raise VerdictParseError(f"judge score {score} is outside 0..10", raw=raw)
    e = _EXPLANATION.search(raw)
    explanation = e.group(1).strip() if e else ""
    return JudgeVerdict(score, explanation, classify(score))


def judge_answer(
    backend: Backend,
    ground_truth: GroundTruth,
    answer: CQAnswer,
    question: str,
    params: GenerationParams | None = None,
) -> JudgeVerdict:
    if (answer.cq_id, answer.doc_id) != (ground_truth.cq_id, ground_truth.doc_id):
        raise ValueError(
            f"answer {answer.cq_id}/{answer.doc_id} does not match ground truth {ground_truth.cq_id}/{ground_truth.doc_id}"
        )
    request = ChatRequest(
        user_text=prompts.render(
            "judge_answer", ground_truth=ground_truth.text, prediction=answer.clean_text, question=question
        ),
        params=params or default_params(),
        stage_tag="judge_answer",
    )
    return parse_verdict(backend.complete(request).text)


def individual_strings(individual: KgIndividual) -> str:
    """What the judge looks for: the label, or the class name if there is none."""
    if individual.label:
        return individual.label
    return decamelize(individual.class_iri.local_name())


def parse_verification(raw: str) -> bool:
    m = _RESPONSE.search(raw)
    if m is None:
        raise VerificationParseError("judge response has no 'Response:' line", raw=raw)
    word = m.group(1).strip().strip(".*`'\"").lower()
    if word == "true":
        return True
    if word == "false":
        return False
    raise VerificationParseError(f"judge response {m.group(1)!r} is neither True nor False", raw=raw)


def verify_individual(
    backend: Backend, individual: KgIndividual, answer: CQAnswer, params: GenerationParams | None = None
) -> bool:
    request = ChatRequest(
        user_text=prompts.render("judge_kg", strings=individual_strings(individual), match_text=answer.clean_text),
        params=params or default_params(),
        stage_tag="judge_kg",
    )
    return parse_verification(backend.complete(request).text)


@dataclass(frozen=True)
class DisagreementReport:
    count: int
    total: int
    confusion: Mapping[str, Mapping[str, int]]
    unevaluated: tuple[tuple[str, str], ...] = ()

    def summary_line(self) -> str:
        return f"{self.count} disagreements out of {self.total}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "count": self.count,
            "total": self.total,
            "confusion": {h: dict(row) for h, row in self.confusion.items()},
            "unevaluated": [list(k) for k in self.unevaluated],
            "summary": self.summary_line(),
        }


def disagreement_report(
    ground: Iterable[GroundTruth], verdicts: Mapping[tuple[str, str], JudgeVerdict | None]
) -> DisagreementReport:
    """Compare human labels with judge labels, keyed by ``(cq_id, doc_id)``.

    A ``None`` verdict marks a pair the judge could not score; it is left out
    of the total and listed in ``unevaluated``. ``confusion[human][judge]``
    counts the evaluated pairs.
    """
    ground = list(ground)
    by_key = {(g.cq_id, g.doc_id): g for g in ground}
    unmatched = set(by_key) ^ set(verdicts)
    if unmatched:
        raise AlignmentError("ground truth and verdicts cover different pairs", unmatched)
    confusion = {h.value: {j.value: 0 for j in Label} for h in Label}
    count = total = 0
    unevaluated = []
    for key in sorted(by_key):
        verdict = verdicts[key]
        if verdict is None:
            unevaluated.append(key)
            continue
        human = by_key[key].human_label
        confusion[human.value][verdict.label.value] += 1
        total += 1
        if human != verdict.label:
            count += 1
    return DisagreementReport(count, total, confusion, tuple(unevaluated))


def alignment_percentage(matched: int, total: int) -> Decimal:
    """``matched / total * 100`` rounded half-up to two decimals."""
    if total < 1:
        raise ValueError("alignment percentage needs at least one individual")
    if not 0 <= matched <= total:
        raise ValueError(f"matched ({matched}) must lie in 0..total ({total})")
    return (Decimal(matched) * 100 / Decimal(total)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)


@dataclass(frozen=True)
class DocumentAlignment:
    doc_id: str
    status: str
    matched: int = 0
    total: int = 0
    unevaluated: int = 0

    @property
    def percent(self) -> Decimal | None:
        if self.status != "ok" or self.total == 0:
            return None
        return alignment_percentage(self.matched, self.total)

    def cell(self) -> str:
        percent = self.percent
        return NO_KG_CELL if percent is None else f"{percent:.2f}"

    def to_dict(self) -> dict[str, Any]:
        percent = self.percent
        return {
            "doc_id": self.doc_id,
            "status": self.status,
            "matched": self.matched,
            "total": self.total,
            "unevaluated": self.unevaluated,
            "percent": None if percent is None else f"{percent:.2f}",
            "cell": self.cell(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> DocumentAlignment:
        return cls(data["doc_id"], data["status"], data["matched"], data["total"], data["unevaluated"])


def pooled_alignment(rows: Iterable[DocumentAlignment]) -> tuple[int, int, Decimal | None]:
    """Sum matched and total over documents that have a KG; "x" rows are skipped."""
    matched = total = 0
    for row in rows:
        if row.percent is None:
            continue
        matched += row.matched
        total += row.total
    return matched, total, alignment_percentage(matched, total) if total else None


@dataclass
class EvaluationReport:
    verdicts: dict[tuple[str, str], JudgeVerdict | None] = field(default_factory=dict)
    disagreement: DisagreementReport | None = None
    alignment: dict[str, DocumentAlignment] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdicts": [
                {"cq_id": c, "doc_id": d, "verdict": None if v is None else v.to_dict()}
                for (c, d), v in sorted(self.verdicts.items())
            ],
            "disagreement": self.disagreement.to_dict() if self.disagreement else None,
            "alignment": [self.alignment[d].to_dict() for d in sorted(self.alignment)],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> EvaluationReport:
        verdicts = {
            (v["cq_id"], v["doc_id"]): None if v["verdict"] is None else JudgeVerdict.from_dict(v["verdict"])
            for v in data["verdicts"]
        }
        dis = data["disagreement"]
        disagreement = None
        if dis is not None:
            disagreement = DisagreementReport(
                dis["count"], dis["total"], dis["confusion"], tuple(tuple(k) for k in dis["unevaluated"])
            )
        alignment = {a["doc_id"]: DocumentAlignment.from_dict(a) for a in data["alignment"]}
        return cls(verdicts, disagreement, alignment)
