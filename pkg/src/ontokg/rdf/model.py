"""Immutable RDF terms, triples and graphs."""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import NamedTuple, Union

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
OWL = "http://www.w3.org/2002/07/owl#"
XSD = "http://www.w3.org/2001/XMLSchema#"
PROV = "http://www.w3.org/ns/prov#"
DLPROV = "https://w3id.org/dlprov/"

# Namespaces the repair layer may inject when a prefix is used but undeclared.
# Bump the version whenever the table changes; repair output depends on it.
KNOWN_NAMESPACES_VERSION = 1
KNOWN_NAMESPACES: Mapping[str, str] = MappingProxyType(
    {"rdf": RDF, "rdfs": RDFS, "owl": OWL, "xsd": XSD, "prov": PROV, "dlprov": DLPROV}
)

_IRI_FORBIDDEN = frozenset('<>"{}|^`\\')


@dataclass(frozen=True, order=True)
class Iri:
    value: str

    def __post_init__(self) -> None:
        if not self.value or any(ch.isspace() or ch in _IRI_FORBIDDEN for ch in self.value):
            raise ValueError(f"invalid IRI {self.value!r}")

    def __str__(self) -> str:
        return self.value

    def local_name(self) -> str:
        """Text after the last ``#`` or ``/``."""
        cut = max(self.value.rfind("#"), self.value.rfind("/"))
        return self.value[cut + 1 :]


@dataclass(frozen=True)
class Literal:
    lexical: str
    lang: str | None = None
    datatype: Iri | None = None

    def __post_init__(self) -> None:
        if self.lang is not None and self.datatype is not None:
            raise ValueError("a literal cannot carry both a language tag and a datatype")

    def __str__(self) -> str:
        return self.lexical


Term = Union[Iri, Literal]


class Triple(NamedTuple):
    subject: Iri
    predicate: Iri
    object: Term


RDF_TYPE = Iri(RDF + "type")
RDFS_LABEL = Iri(RDFS + "label")
RDFS_COMMENT = Iri(RDFS + "comment")
RDFS_SUBCLASS_OF = Iri(RDFS + "subClassOf")
RDFS_DOMAIN = Iri(RDFS + "domain")
RDFS_RANGE = Iri(RDFS + "range")
OWL_CLASS = Iri(OWL + "Class")
OWL_OBJECT_PROPERTY = Iri(OWL + "ObjectProperty")
OWL_ONTOLOGY = Iri(OWL + "Ontology")
OWL_NAMED_INDIVIDUAL = Iri(OWL + "NamedIndividual")
OWL_THING = Iri(OWL + "Thing")


def term_sort_key(term: Term) -> tuple:
    if isinstance(term, Iri):
        return (0, term.value, "", "")
    return (1, term.lexical, term.lang or "", term.datatype.value if term.datatype else "")


def triple_sort_key(triple: Triple) -> tuple:
    return (triple.subject.value, triple.predicate.value, term_sort_key(triple.object))


@dataclass(frozen=True)
class RdfGraph:
    """A set of triples plus the prefix map used to read or write them.

    Equality compares both triples and prefixes; use ``same_triples`` to
    compare content only.
    """

    triples: frozenset[Triple] = frozenset()
    prefixes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "triples", frozenset(self.triples))
        object.__setattr__(self, "prefixes", MappingProxyType(dict(sorted(self.prefixes.items()))))
        for t in self.triples:
            if not isinstance(t.subject, Iri) or not isinstance(t.predicate, Iri):
                raise ValueError(f"subject and predicate must be IRIs: {t!r}")
            if not isinstance(t.object, (Iri, Literal)):
                raise ValueError(f"object must be an IRI or literal: {t!r}")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RdfGraph):
            return NotImplemented
        return self.triples == other.triples and dict(self.prefixes) == dict(other.prefixes)

    def __hash__(self) -> int:
        return hash((self.triples, tuple(self.prefixes.items())))

    def __len__(self) -> int:
        return len(self.triples)

    def __iter__(self):
        return iter(self.sorted_triples())

    def sorted_triples(self) -> list[Triple]:
        return sorted(self.triples, key=triple_sort_key)

    def same_triples(self, other: RdfGraph) -> bool:
        return self.triples == other.triples

    def with_triples(self, triples: Iterable[Triple]) -> RdfGraph:
        return RdfGraph(frozenset(triples), self.prefixes)

    def with_prefixes(self, prefixes: Mapping[str, str]) -> RdfGraph:
        return RdfGraph(self.triples, prefixes)

    def subjects(self, predicate: Iri | None = None, obj: Term | None = None) -> list[Iri]:
        return sorted({t.subject for t in triples_matching(self, None, predicate, obj)})

    def objects(self, subject: Iri | None = None, predicate: Iri | None = None) -> list[Term]:
        return sorted({t.object for t in triples_matching(self, subject, predicate, None)}, key=term_sort_key)


def triples_matching(
    graph: RdfGraph,
    subject: Iri | None = None,
    predicate: Iri | None = None,
    object: Term | None = None,
) -> list[Triple]:
    """Triples agreeing with every bound position, sorted by (s, p, o)."""
    found = [
        t
        for t in graph.triples
        if (subject is None or t.subject == subject)
        and (predicate is None or t.predicate == predicate)
        and (object is None or t.object == object)
    ]
    found.sort(key=triple_sort_key)
    return found
