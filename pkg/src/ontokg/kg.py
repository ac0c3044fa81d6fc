"""Per-document knowledge graph population, validation and CQ linking."""

from __future__ import annotations

import re
from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

from ontokg import prompts
from ontokg.answering import CQAnswer
from ontokg.cq import CqSet
from ontokg.errors import PreconditionError
from ontokg.llm import Backend, ChatRequest, GenerationParams, default_params
from ontokg.ontology import OntologySpec, decamelize
from ontokg.rdf import Iri, Literal, NoMeaningfulGraphError, RdfGraph, Triple, repair_rdf_text, serialize_turtle
from ontokg.rdf.model import (
    OWL_NAMED_INDIVIDUAL,
    OWL_THING,
    RDF_TYPE,
    RDFS,
    RDFS_COMMENT,
    RDFS_LABEL,
)
from ontokg.rdf.repair import RepairReport

STATUS_OK = "ok"
STATUS_NO_MEANINGFUL_KG = "no_meaningful_kg"

NOT_SPECIFIED = re.compile(r"^\s*not\s+specified\W*$", re.IGNORECASE)

ANNOTATION_PREDICATES = frozenset({RDF_TYPE, RDFS_LABEL, RDFS_COMMENT, Iri(RDFS + "seeAlso")})
_NEUTRAL_TYPES = frozenset({OWL_NAMED_INDIVIDUAL, OWL_THING})

VIOLATION_KINDS = ("undeclared_class", "undeclared_property", "multi_typed", "unspecified", "duplicate_value", "unlabeled")


@dataclass(frozen=True)
class KgIndividual:
    iri: Iri
    class_iri: Iri
    label: str | None
    source_doc: str

    def to_dict(self) -> dict[str, Any]:
        return {"iri": self.iri.value, "class_iri": self.class_iri.value, "label": self.label, "source_doc": self.source_doc}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> KgIndividual:
        return cls(Iri(data["iri"]), Iri(data["class_iri"]), data["label"], data["source_doc"])


@dataclass(frozen=True)
class KgBuildResult:
    doc_id: str
    graph: RdfGraph
    individuals: tuple[KgIndividual, ...]
    status: str
    repair: RepairReport
    raw_text: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "individuals", tuple(self.individuals))
        if (self.status == STATUS_NO_MEANINGFUL_KG) != (not self.individuals):
            raise ValueError("status must be no_meaningful_kg exactly when there are no typed individuals")

    def status_dict(self) -> dict[str, Any]:
        return {
            "doc_id": self.doc_id,
            "status": self.status,
            "individuals": [i.to_dict() for i in self.individuals],
        }


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: str
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    def of_kind(self, kind: str) -> list[Violation]:
        return [v for v in self.violations if v.kind == kind]

    def counts(self) -> dict[str, int]:
        return {kind: len(self.of_kind(kind)) for kind in VIOLATION_KINDS}

    def to_dict(self) -> dict[str, Any]:
        return {
            "counts": self.counts(),
            "violations": [{"kind": v.kind, "subject": v.subject, "detail": v.detail} for v in self.violations],
        }


@dataclass(frozen=True)
class IndividualLink:
    individual_iri: Iri
    cq_ids: tuple[str, ...]
    match_basis: str

    def to_dict(self) -> dict[str, Any]:
        return {"individual_iri": self.individual_iri.value, "cq_ids": list(self.cq_ids), "match_basis": self.match_basis}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> IndividualLink:
        return cls(Iri(data["individual_iri"]), tuple(data["cq_ids"]), data["match_basis"])


def build_kg_prompt(cqs: CqSet, answers: Sequence[CQAnswer], ontology: OntologySpec, prompt_version: str = "v1") -> str:
    blocks = []
    for answer in answers:
        question = cqs.by_id(answer.cq_id).text
        blocks.append(f"{answer.cq_id}: {question}\nAnswer: {answer.clean_text}")
    return prompts.render(
        f"kg_{prompt_version}",
        qa_pairs="\n\n".join(blocks),
        ontology=serialize_turtle(ontology.graph).rstrip("\n"),
        base_prefix=ontology.base_prefix,
    )


def _first_label(graph: RdfGraph, subject: Iri) -> str | None:
    labels = [o.lexical for o in graph.objects(subject, RDFS_LABEL) if isinstance(o, Literal)]
    return labels[0] if labels else None


def enumerate_individuals(graph: RdfGraph, ontology: OntologySpec, doc_id: str) -> tuple[RdfGraph, list[KgIndividual]]:
    """Find individuals typed by ontology classes and renumber them as ``<Class>_<n>``.

    Conforming IRIs keep their number; the rest take the next free numbers of
    their class in IRI order, keeping labels and links. An individual with
    several ontology types is numbered under the first one by IRI.
    """
    classes = set(ontology.all_classes())
    primary: dict[Iri, Iri] = {}
    for t in graph.triples:
        if t.predicate == RDF_TYPE and t.object in classes:
            if t.subject not in primary or t.object.value < primary[t.subject].value:
                primary[t.subject] = t.object

    base = ontology.base_iri
    taken = {t.subject for t in graph.triples} | {t.object for t in graph.triples if isinstance(t.object, Iri)}
    renames: dict[Iri, Iri] = {}
    pending: dict[Iri, list[Iri]] = defaultdict(list)
    for subject in sorted(primary, key=lambda s: s.value):
        cls = primary[subject]
        m = re.fullmatch(re.escape(base + cls.local_name()) + r"_([1-9]\d*)", subject.value)
        if not m:
            pending[cls].append(subject)
    for cls in sorted(pending, key=lambda c: c.value):
        n = 0
        for subject in pending[cls]:
            while True:
                n += 1
                candidate = Iri(f"{base}{cls.local_name()}_{n}")
                if candidate not in taken:
                    break
            taken.add(candidate)
            renames[subject] = candidate

    if renames:
        graph = graph.with_triples(
            Triple(
                renames.get(t.subject, t.subject),
                t.predicate,
                renames.get(t.object, t.object) if isinstance(t.object, Iri) else t.object,
            )
            for t in graph.triples
        )
    individuals = [
        KgIndividual(renames.get(s, s), cls, _first_label(graph, renames.get(s, s)), doc_id) for s, cls in primary.items()
    ]
    individuals.sort(key=lambda i: (i.class_iri.value, i.iri.value))
    return graph, individuals


def build_kg(
    backend: Backend,
    cqs: CqSet,
    answers: Sequence[CQAnswer],
    ontology: OntologySpec,
    doc_id: str,
    prompt_version: str = "v1",
    params: GenerationParams | None = None,
) -> KgBuildResult:
    if not answers:
        raise PreconditionError(f"no CQ answers for document {doc_id!r}")
    if any(a.doc_id != doc_id for a in answers):
        raise PreconditionError(f"answers passed to build_kg must all belong to {doc_id!r}")
    request = ChatRequest(
        user_text=build_kg_prompt(cqs, answers, ontology, prompt_version),
        params=params or default_params(),
        stage_tag="kg_build",
    )
    raw = backend.complete(request).text
    try:
        graph, repair = repair_rdf_text(raw, ontology.graph.prefixes)
    except NoMeaningfulGraphError as exc:
        return KgBuildResult(doc_id, RdfGraph(frozenset(), ontology.graph.prefixes), (), STATUS_NO_MEANINGFUL_KG, exc.report, raw)
    graph, individuals = enumerate_individuals(graph, ontology, doc_id)
    status = STATUS_OK if individuals else STATUS_NO_MEANINGFUL_KG
    return KgBuildResult(doc_id, graph, tuple(individuals), status, repair, raw)


def validate_kg(result: KgBuildResult, ontology: OntologySpec) -> ValidationReport:
    if result.status != STATUS_OK:
        raise PreconditionError("only a KG with status ok can be validated")
    graph = result.graph
    classes = set(ontology.all_classes())
    properties = set(ontology.properties())
    violations: list[Violation] = []

    for t in graph.sorted_triples():
        if t.predicate == RDF_TYPE:
            if t.object not in classes and t.object not in _NEUTRAL_TYPES:
                violations.append(Violation("undeclared_class", t.subject.value, f"typed as {t.object}"))
        elif t.predicate not in properties and t.predicate not in ANNOTATION_PREDICATES:
            violations.append(Violation("undeclared_property", t.subject.value, f"uses {t.predicate}"))

    for ind in result.individuals:
        types = [o for o in graph.objects(ind.iri, RDF_TYPE) if o in classes]
        if len(types) > 1:
            violations.append(Violation("multi_typed", ind.iri.value, ", ".join(str(c) for c in types)))
        if ind.label is not None and NOT_SPECIFIED.match(ind.label):
            violations.append(Violation("unspecified", ind.iri.value, f"label {ind.label!r}"))
        if ind.label is None:
            links_out = any(t.predicate in properties for t in graph.triples if t.subject == ind.iri)
            if not links_out:
                violations.append(Violation("unlabeled", ind.iri.value, "no rdfs:label and no outgoing relation"))

    groups: dict[tuple[Iri, str], list[Iri]] = defaultdict(list)
    for ind in result.individuals:
        if ind.label is not None:
            groups[(ind.class_iri, " ".join(ind.label.split()))].append(ind.iri)
    for (cls, label), members in sorted(groups.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
        if len(members) > 1:
            names = ", ".join(m.value for m in sorted(members))
            violations.append(Violation("duplicate_value", members[0].value, f"{len(members)} x {cls.local_name()} labelled {label!r}: {names}"))
    return ValidationReport(tuple(violations))


def link_individuals(result: KgBuildResult, ontology: OntologySpec, cqs: CqSet) -> list[IndividualLink]:
    """Tie each individual to every CQ whose text mentions its class name."""
    if result.status != STATUS_OK:
        raise PreconditionError("only a KG with status ok can be linked")
    questions = [(q.cq_id, " ".join(q.text.split()).lower()) for q in cqs.approved()]
    links = []
    for ind in result.individuals:
        phrase = decamelize(ind.class_iri.local_name())
        cq_ids = tuple(cq_id for cq_id, text in questions if phrase and phrase in text)
        links.append(IndividualLink(ind.iri, cq_ids, phrase))
    return links
