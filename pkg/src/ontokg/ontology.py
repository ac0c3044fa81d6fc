"""Two-step ontology construction: concept extraction, then a drafted and normalized TBox."""

from __future__ import annotations

import json
import logging
import re
from collections.abc import Iterable
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

from ontokg import prompts
from ontokg.cq import CqSet, require_reviewed
from ontokg.errors import ConfigError, ParseError, PreconditionError
from ontokg.llm import Backend, ChatRequest, GenerationParams, default_params
from ontokg.rdf import Iri, Literal, NoMeaningfulGraphError, RdfGraph, Triple, parse_turtle, repair_rdf_text
from ontokg.rdf.model import (
    OWL,
    OWL_CLASS,
    OWL_OBJECT_PROPERTY,
    OWL_ONTOLOGY,
    PROV,
    RDF,
    RDF_TYPE,
    RDFS,
    RDFS_COMMENT,
    RDFS_DOMAIN,
    RDFS_LABEL,
    RDFS_RANGE,
    RDFS_SUBCLASS_OF,
    XSD,
)
from ontokg.rdf.repair import RepairReport

logger = logging.getLogger(__name__)

DEFAULT_BASE_IRI = "https://w3id.org/dlprov/"
DEFAULT_BASE_PREFIX = "dlprov"

RDFS_SUBPROPERTY_OF = Iri(RDFS + "subPropertyOf")

_ACTIVITY_SUFFIXES = ("Process", "Pipeline", "Step", "Training")
_AGENT_SUFFIXES = ("Author", "Annotator")


class ExtractionParseError(ParseError):
    pass


# naming


def split_words(name: str) -> list[str]:
    """Split on separators and case boundaries, keeping each word's casing."""
    words = []
    for part in re.split(r"[\W_]+", name):
        words.extend(re.findall(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|\d+", part))
    return words


def decamelize(name: str) -> str:
    """``"DataFormat"`` -> ``"data format"``."""
    return " ".join(w.lower() for w in split_words(name))


def to_upper_camel(name: str) -> str:
    return "".join(p[0].upper() + p[1:] for p in re.split(r"[\W_]+", name) if p)


def to_lower_camel(name: str) -> str:
    upper = to_upper_camel(name)
    return upper[:1].lower() + upper[1:]


def _dedupe(names: Iterable[str]) -> tuple[str, ...]:
    return tuple(dict.fromkeys(n for n in names if n))


@dataclass(frozen=True)
class ConceptSet:
    concepts: tuple[str, ...] = ()
    relations: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "concepts", tuple(self.concepts))
        object.__setattr__(self, "relations", tuple(self.relations))
        for name in self.concepts + self.relations:
            if not name or any(ch.isspace() for ch in name):
                raise ValueError(f"invalid concept or relation name {name!r}")
        if len(set(self.concepts)) != len(self.concepts) or len(set(self.relations)) != len(self.relations):
            raise ValueError("concept and relation names must be unique")
        if set(self.concepts) & set(self.relations):
            raise ValueError("a name cannot be both a concept and a relation")

    @classmethod
    def from_names(cls, concepts: Iterable[str], relations: Iterable[str]) -> ConceptSet:
        concept_names = _dedupe(map(to_upper_camel, concepts))
        relation_names = tuple(r for r in _dedupe(map(to_lower_camel, relations)) if r not in concept_names)
        return cls(concept_names, relation_names)

    def to_dict(self) -> dict[str, list[str]]:
        return {"concepts": list(self.concepts), "relations": list(self.relations)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ConceptSet:
        return cls(tuple(data["concepts"]), tuple(data["relations"]))


# step one


_LABELED = re.compile(r"^[\W_]*(concepts|relations|relationships)[\W_]*:(.*)$", re.IGNORECASE)


def parse_concept_response(raw: str) -> ConceptSet:
    found: dict[str, str] = {}
    for line in raw.splitlines():
        m = _LABELED.match(line.strip())
        if m:
            key = "concepts" if m.group(1).lower() == "concepts" else "relations"
            found[key] = m.group(2)
    missing = [k for k in ("concepts", "relations") if k not in found]
    if missing:
        raise ExtractionParseError(f"response lacks a {' and '.join(missing)} line", raw=raw)

    def items(value: str) -> list[str]:
        return [item.strip().strip(".*`'\"").strip() for item in value.split(",")]

    return ConceptSet.from_names(items(found["concepts"]), items(found["relations"]))


def extract_concept_set(backend: Backend, cqs: CqSet, params: GenerationParams | None = None) -> ConceptSet:
    require_reviewed(cqs)
    questions = "\n".join(f"{q.cq_id}: {q.text}" for q in cqs.approved())
    request = ChatRequest(
        user_text=prompts.render("concept_extraction", questions=questions),
        params=params or default_params(),
        stage_tag="concept_extract",
    )
    return parse_concept_response(backend.complete(request).text)


# foundation


def load_foundation(path: str | Path | None = None) -> RdfGraph:
    if path is None:
        text = resources.files("ontokg").joinpath("data/prov_o_subset.ttl").read_text(encoding="utf-8")
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read foundation ontology {path}: {exc}") from exc
    graph = parse_turtle(text)
    if not graph.subjects(RDF_TYPE, OWL_CLASS):
        raise ConfigError("foundation ontology declares no owl:Class")
    return graph


def foundation_classes(foundation: RdfGraph) -> list[Iri]:
    return foundation.subjects(RDF_TYPE, OWL_CLASS)


def describe_foundation(foundation: RdfGraph) -> str:
    lines = []
    for cls in foundation_classes(foundation):
        comments = foundation.objects(cls, RDFS_COMMENT)
        note = f": {comments[0]}" if comments else ""
        lines.append(f"<{cls.value}>{note}")
    return "\n".join(lines)


def root_for(name: str, foundation: RdfGraph) -> Iri:
    """Foundation class a new class hangs under when the draft gives none."""
    if name.endswith(_ACTIVITY_SUFFIXES):
        candidate = Iri(PROV + "Activity")
    elif name.endswith(_AGENT_SUFFIXES):
        candidate = Iri(PROV + "Agent")
    else:
        candidate = Iri(PROV + "Entity")
    roots = foundation_classes(foundation)
    return candidate if candidate in roots else roots[0]


# step two


def draft_ontology(
    backend: Backend,
    concept_set: ConceptSet,
    base_iri: str = DEFAULT_BASE_IRI,
    foundation: RdfGraph | None = None,
    params: GenerationParams | None = None,
    base_prefix: str = DEFAULT_BASE_PREFIX,
) -> str:
    if not concept_set.concepts:
        raise PreconditionError("cannot draft an ontology from an empty concept set")
    request = ChatRequest(
        user_text=prompts.render(
            "ontology_draft",
            base_iri=base_iri,
            base_prefix=base_prefix,
            foundation=describe_foundation(foundation or load_foundation()),
            concepts=", ".join(concept_set.concepts),
            relations=", ".join(concept_set.relations),
        ),
        params=params or default_params(),
        stage_tag="ontology_build",
    )
    return backend.complete(request).text


@dataclass(frozen=True)
class OntologySpec:
    graph: RdfGraph
    base_iri: str
    foundation: RdfGraph
    class_count: int
    property_count: int
    axiom_count: int
    base_prefix: str = DEFAULT_BASE_PREFIX
    synthesized: tuple[str, ...] = ()
    dropped_triples: int = 0
    warnings: tuple[str, ...] = ()
    repair: RepairReport | None = None

    def classes(self) -> list[Iri]:
        """Classes declared in the base namespace."""
        return [c for c in self.graph.subjects(RDF_TYPE, OWL_CLASS) if c.value.startswith(self.base_iri)]

    def properties(self) -> list[Iri]:
        return [p for p in self.graph.subjects(RDF_TYPE, OWL_OBJECT_PROPERTY) if p.value.startswith(self.base_iri)]

    def all_classes(self) -> list[Iri]:
        return self.graph.subjects(RDF_TYPE, OWL_CLASS)

    def superclasses(self, cls: Iri) -> list[Iri]:
        return [o for o in self.graph.objects(cls, RDFS_SUBCLASS_OF) if isinstance(o, Iri)]

    def sidecar(self) -> dict[str, Any]:
        return {
            "base_iri": self.base_iri,
            "base_prefix": self.base_prefix,
            "class_count": self.class_count,
            "property_count": self.property_count,
            "axiom_count": self.axiom_count,
            "axiom_count_convention": "rdf triples, foundation included",
            "synthesized": list(self.synthesized),
            "dropped_triples": self.dropped_triples,
            "warnings": list(self.warnings),
        }

    @classmethod
    def load(cls, ttl_path: str | Path, sidecar_path: str | Path, foundation: RdfGraph) -> OntologySpec:
        meta = json.loads(Path(sidecar_path).read_text(encoding="utf-8"))
        graph = parse_turtle(Path(ttl_path).read_text(encoding="utf-8"))
        return cls(
            graph=graph,
            base_iri=meta["base_iri"],
            foundation=foundation,
            class_count=meta["class_count"],
            property_count=meta["property_count"],
            axiom_count=meta["axiom_count"],
            base_prefix=meta["base_prefix"],
            synthesized=tuple(meta["synthesized"]),
            dropped_triples=meta["dropped_triples"],
            warnings=tuple(meta["warnings"]),
        )


def _label_for(name: str, is_class: bool) -> str:
    words = split_words(name)
    if is_class:
        return " ".join(words)
    return " ".join(w if w.isupper() and len(w) > 1 else w.lower() for w in words)


def _reaches_root(cls: Iri, edges: dict[Iri, set[Iri]], roots: set[Iri]) -> bool:
    stack, seen = [cls], set()
    while stack:
        node = stack.pop()
        for parent in edges.get(node, ()):
            if parent in roots:
                return True
            if parent not in seen:
                seen.add(parent)
                stack.append(parent)
    return False


def normalize_ontology(
    raw: str,
    concept_set: ConceptSet,
    base_iri: str = DEFAULT_BASE_IRI,
    foundation: RdfGraph | None = None,
    base_prefix: str = DEFAULT_BASE_PREFIX,
) -> OntologySpec:
    """Turn a model draft into an ontology that declares exactly ``concept_set``.

    Only triples that describe a concept class, a relation property or the
    ontology header survive from the draft. Missing declarations are
    synthesized, every class is linked to a foundation class, and relations
    named ``has<Concept>`` get that concept as range when they have none.
    """
    foundation = foundation if foundation is not None else load_foundation()
    roots = set(foundation_classes(foundation))
    warnings: list[str] = []

    repair: RepairReport | None
    try:
        draft, repair = repair_rdf_text(raw, {base_prefix: base_iri})
    except NoMeaningfulGraphError as exc:
        draft, repair = RdfGraph(), exc.report
        warnings.append("draft contained no usable triples; ontology synthesized from the concept set")
        logger.warning(warnings[-1])

    class_iris = {name: Iri(base_iri + name) for name in concept_set.concepts}
    prop_iris = {name: Iri(base_iri + name) for name in concept_set.relations}
    classes = set(class_iris.values())
    props = set(prop_iris.values())
    header = Iri(base_iri)

    def canonical(term):
        if not isinstance(term, Iri) or not term.value.startswith(base_iri) or term == header:
            return term
        local = term.value[len(base_iri) :]
        if local in class_iris:
            return class_iris[local]
        if local in prop_iris:
            return prop_iris[local]
        if to_upper_camel(local) in class_iris:
            return class_iris[to_upper_camel(local)]
        if to_lower_camel(local) in prop_iris:
            return prop_iris[to_lower_camel(local)]
        return term

    class_targets = classes | roots
    kept: set[Triple] = set()
    dropped = 0
    for t in draft.triples:
        s, p, o = canonical(t.subject), t.predicate, canonical(t.object)
        keep = False
        if p in (RDFS_LABEL, RDFS_COMMENT):
            keep = isinstance(o, Literal) and (s in classes or s in props or s == header)
        elif s in classes:
            keep = (p == RDF_TYPE and o == OWL_CLASS) or (p == RDFS_SUBCLASS_OF and o in class_targets and o != s)
        elif s in props:
            keep = (
                (p == RDF_TYPE and o == OWL_OBJECT_PROPERTY)
                or (p in (RDFS_DOMAIN, RDFS_RANGE) and o in class_targets)
                or (p == RDFS_SUBPROPERTY_OF and o in props and o != s)
            )
        elif s == header:
            keep = p == RDF_TYPE and o == OWL_ONTOLOGY
        if keep:
            kept.add(Triple(s, p, o))
        else:
            dropped += 1

    declared = {t.subject for t in kept if t.predicate == RDF_TYPE}
    synthesized = [n for n, iri in class_iris.items() if iri not in declared]
    synthesized += [n for n, iri in prop_iris.items() if iri not in declared]
    if synthesized:
        warnings.append(f"synthesized {len(synthesized)} declaration(s) missing from the draft")

    kept.add(Triple(header, RDF_TYPE, OWL_ONTOLOGY))
    labelled = {t.subject for t in kept if t.predicate == RDFS_LABEL}
    for name, iri in class_iris.items():
        kept.add(Triple(iri, RDF_TYPE, OWL_CLASS))
        if iri not in labelled:
            kept.add(Triple(iri, RDFS_LABEL, Literal(_label_for(name, True))))
    for name, iri in prop_iris.items():
        kept.add(Triple(iri, RDF_TYPE, OWL_OBJECT_PROPERTY))
        if iri not in labelled:
            kept.add(Triple(iri, RDFS_LABEL, Literal(_label_for(name, False))))

    edges: dict[Iri, set[Iri]] = {}
    for t in kept:
        if t.predicate == RDFS_SUBCLASS_OF:
            edges.setdefault(t.subject, set()).add(t.object)
    for name in sorted(class_iris):
        iri = class_iris[name]
        if not _reaches_root(iri, edges, roots):
            root = root_for(name, foundation)
            kept.add(Triple(iri, RDFS_SUBCLASS_OF, root))
            edges.setdefault(iri, set()).add(root)

    ranged = {t.subject for t in kept if t.predicate == RDFS_RANGE}
    for name, iri in prop_iris.items():
        m = re.fullmatch(r"has([A-Z]\w*)", name)
        if m and m.group(1) in class_iris and iri not in ranged:
            kept.add(Triple(iri, RDFS_RANGE, class_iris[m.group(1)]))

    prefixes = {
        base_prefix: base_iri,
        "owl": OWL,
        "prov": PROV,
        "rdf": RDF,
        "rdfs": RDFS,
        "xsd": XSD,
        **foundation.prefixes,
    }
    graph = RdfGraph(frozenset(kept) | foundation.triples, prefixes)
    return OntologySpec(
        graph=graph,
        base_iri=base_iri,
        foundation=foundation,
        class_count=len(class_iris),
        property_count=len(prop_iris),
        axiom_count=len(graph),
        base_prefix=base_prefix,
        synthesized=tuple(synthesized),
        dropped_triples=dropped,
        warnings=tuple(warnings),
        repair=repair,
    )
