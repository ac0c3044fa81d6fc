from ontokg.rdf.model import (
    KNOWN_NAMESPACES,
    Iri,
    Literal,
    RdfGraph,
    Term,
    Triple,
    triples_matching,
)
from ontokg.rdf.repair import NoMeaningfulGraphError, RepairAction, RepairReport, repair_rdf_text
from ontokg.rdf.turtle import TurtleError, TurtleSyntaxError, UndefinedPrefixError, parse_turtle, serialize_turtle

__all__ = [
    "KNOWN_NAMESPACES",
    "Iri",
    "Literal",
    "NoMeaningfulGraphError",
    "RdfGraph",
    "RepairAction",
    "RepairReport",
    "Term",
    "Triple",
    "TurtleError",
    "TurtleSyntaxError",
    "UndefinedPrefixError",
    "parse_turtle",
    "repair_rdf_text",
    "serialize_turtle",
    "triples_matching",
]
