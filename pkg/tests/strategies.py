"""Hypothesis strategies shared by the property and acceptance tests."""

from __future__ import annotations

from hypothesis import strategies as st

from ontokg.ontology import ConceptSet
from ontokg.rdf import Iri, Literal, RdfGraph, Triple
from ontokg.rdf.model import DLPROV, OWL, PROV, RDF, RDFS, XSD

NAMESPACES = {
    "dlprov": DLPROV,
    "prov": PROV,
    "rdf": RDF,
    "rdfs": RDFS,
    "owl": OWL,
    "xsd": XSD,
    "ex": "http://example.org/a/b#",
}
ASCII_LOCAL = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-."
# anything an IRI may hold; some of these force the <...> form on output
WIDE_LOCAL = ASCII_LOCAL + "éß中:/?#&=%~"


def iris(alphabet: str = WIDE_LOCAL) -> st.SearchStrategy[Iri]:
    return st.builds(
        lambda ns, local: Iri(ns + local),
        st.sampled_from(sorted(NAMESPACES.values()) + ["urn:x-test:", "http://other.example/"]),
        st.text(alphabet, min_size=1, max_size=12),
    )


def literals(ascii_only: bool = False) -> st.SearchStrategy[Literal]:
    text = st.text(st.characters(max_codepoint=0x7E if ascii_only else 0x2FFF, exclude_categories=("Cs",)), max_size=20)
    lang = st.from_regex(r"[a-z]{2}(-[a-z0-9]{2,4})?", fullmatch=True)
    # rdflib rewrites the lexical form of ill-typed xsd:integer, so the oracle run avoids it
    choices = [Iri(XSD + "string"), Iri("http://example.org/a/b#kind")]
    datatype = st.sampled_from(choices if ascii_only else choices + [Iri(XSD + "integer")])
    return st.one_of(
        st.builds(Literal, text),
        st.builds(lambda t, l: Literal(t, lang=l), text, lang),
        st.builds(lambda t, d: Literal(t, datatype=d), text, datatype),
    )


def graphs(ascii_only: bool = False, max_size: int = 25) -> st.SearchStrategy[RdfGraph]:
    alphabet = ASCII_LOCAL if ascii_only else WIDE_LOCAL
    triple = st.builds(
        Triple,
        iris(alphabet),
        iris(alphabet),
        st.one_of(iris(alphabet), literals(ascii_only)),
    )
    prefixes = st.dictionaries(st.sampled_from(sorted(NAMESPACES)), st.just(None)).map(
        lambda chosen: {k: NAMESPACES[k] for k in chosen}
    )
    return st.builds(lambda ts, ps: RdfGraph(frozenset(ts), ps), st.lists(triple, max_size=max_size), prefixes)


_WORDS = ["data", "format", "model", "training", "step", "metric", "set", "layer", "author", "loss", "process", "rate"]


def _camel(words: list[str]) -> str:
    return "".join(w.capitalize() for w in words)


def concept_sets(max_concepts: int = 12, max_relations: int = 8) -> st.SearchStrategy[ConceptSet]:
    name = st.lists(st.sampled_from(_WORDS), min_size=1, max_size=3).map(_camel)
    concepts = st.lists(name, min_size=1, max_size=max_concepts, unique=True)

    def with_relations(cs: list[str]):
        rel = st.one_of(
            st.sampled_from(cs).map(lambda c: "has" + c),
            name.map(lambda n: "uses" + n),
        )
        return st.lists(rel, max_size=max_relations, unique=True).map(lambda rs: ConceptSet(tuple(cs), tuple(rs)))

    return concepts.flatmap(with_relations)


@st.composite
def drafts(draw, cs: ConceptSet) -> str:
    """Model-like drafts: some declarations, random hierarchy (cycles allowed), junk."""
    lines = ["@prefix dlprov: <https://w3id.org/dlprov/> .", "@prefix prov: <http://www.w3.org/ns/prov#> ."]
    for c in cs.concepts:
        if draw(st.booleans()):
            lines.append(f"dlprov:{c} a <http://www.w3.org/2002/07/owl#Class> .")
        if draw(st.booleans()):
            parent = draw(st.sampled_from([f"dlprov:{x}" for x in cs.concepts] + ["prov:Entity", "dlprov:Unknown"]))
            lines.append(f"dlprov:{c} <http://www.w3.org/2000/01/rdf-schema#subClassOf> {parent} .")
    for r in cs.relations:
        if draw(st.booleans()):
            lines.append(f"dlprov:{r} a <http://www.w3.org/2002/07/owl#ObjectProperty> .")
    if draw(st.booleans()):
        lines.append("dlprov:Junk dlprov:junk 'x' .")
    text = "\n".join(lines) + "\n"
    return draw(st.sampled_from([text, f"```turtle\n{text}```", f"Draft below.\n{text}Done.", "nothing here"]))
