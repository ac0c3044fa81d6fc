from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from strategies import concept_sets, drafts

from ontokg.cq import CompetencyQuestion, CqSet
from ontokg.errors import CheckpointError, ConfigError, PreconditionError
from ontokg.ontology import (
    DEFAULT_BASE_IRI,
    ConceptSet,
    ExtractionParseError,
    OntologySpec,
    decamelize,
    draft_ontology,
    extract_concept_set,
    load_foundation,
    normalize_ontology,
    parse_concept_response,
    split_words,
    to_lower_camel,
    to_upper_camel,
)
from ontokg.rdf import Iri, Literal, serialize_turtle
from ontokg.rdf.model import (
    OWL_CLASS,
    OWL_OBJECT_PROPERTY,
    PROV,
    RDF_TYPE,
    RDFS_LABEL,
    RDFS_RANGE,
    RDFS_SUBCLASS_OF,
)

BASE = DEFAULT_BASE_IRI
FOUNDATION = load_foundation()


@pytest.mark.parametrize(
    "name, words, spaced",
    [
        ("DataFormat", ["Data", "Format"], "data format"),
        ("CNNModel", ["CNN", "Model"], "cnn model"),
        ("batch_size", ["batch", "size"], "batch size"),
        ("ResNet50Layer", ["Res", "Net", "50", "Layer"], "res net 50 layer"),
    ],
)
def test_word_splitting(name, words, spaced):
    assert split_words(name) == words
    assert decamelize(name) == spaced


def test_camel_case_conversions():
    assert to_upper_camel("data format") == "DataFormat"
    assert to_upper_camel("pre-processing step") == "PreProcessingStep"
    assert to_lower_camel("Has Data Format") == "hasDataFormat"


def test_parse_concept_response():
    raw = (
        "Sure, here they are.\n"
        "**Concepts:** data format, Model Architecture, `Dataset`, DataFormat.\n"
        "- Relationships: has data format, usesDataset\n"
    )
    cs = parse_concept_response(raw)
    assert cs.concepts == ("DataFormat", "ModelArchitecture", "Dataset")
    assert cs.relations == ("hasDataFormat", "usesDataset")


def test_parse_concept_response_needs_both_lines():
    with pytest.raises(ExtractionParseError):
        parse_concept_response("Concepts: A, B")


def test_concept_set_validation():
    with pytest.raises(ValueError):
        ConceptSet(("Data Format",), ())
    with pytest.raises(ValueError):
        ConceptSet(("A", "A"), ())
    with pytest.raises(ValueError):
        ConceptSet(("a",), ("a",))
    assert ConceptSet.from_dict(ConceptSet(("A",), ("hasA",)).to_dict()) == ConceptSet(("A",), ("hasA",))


def test_extraction_requires_reviewed_questions(fake_backend):
    backend = fake_backend({"concept_extract": "Concepts: Dataset\nRelations: hasDataset"})
    generated = CqSet((CompetencyQuestion("CQ1", "What dataset?"),))
    with pytest.raises(CheckpointError):
        extract_concept_set(backend, generated)
    reviewed = CqSet((CompetencyQuestion("CQ1", "What dataset?", "approved"),), review_round=1)
    assert extract_concept_set(backend, reviewed).concepts == ("Dataset",)
    assert "CQ1: What dataset?" in backend.requests[0].user_text


def test_draft_prompt_mentions_foundation_and_concepts(fake_backend):
    backend = fake_backend({"ontology_build": "draft"})
    assert draft_ontology(backend, ConceptSet(("DataFormat",), ("hasDataFormat",))) == "draft"
    prompt = backend.requests[0].user_text
    assert PROV + "Entity" in prompt and "DataFormat" in prompt and BASE in prompt
    with pytest.raises(PreconditionError):
        draft_ontology(backend, ConceptSet())


def test_foundation_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_foundation(tmp_path / "none.ttl")
    (tmp_path / "f.ttl").write_text("<urn:a> <urn:b> <urn:c> .\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_foundation(tmp_path / "f.ttl")


DRAFT = """Here is the ontology.
```turtle
@prefix dlprov: <https://w3id.org/dlprov/> .
@prefix prov: <http://www.w3.org/ns/prov#> .
@prefix owl: <http://www.w3.org/2002/07/owl#> .
@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .
dlprov:data_format a owl:Class ; rdfs:subClassOf prov:Entity ; rdfs:label "Data format" .
dlprov:Stray a owl:Class .
dlprov:TrainingProcess rdfs:subClassOf dlprov:TrainingProcess .
dlprov:HasDataFormat a owl:ObjectProperty ; rdfs:domain dlprov:TrainingProcess .
```
"""


def test_normalization_of_a_messy_draft():
    cs = ConceptSet(("DataFormat", "TrainingProcess", "ModelAuthor"), ("hasDataFormat",))
    spec = normalize_ontology(DRAFT, cs)
    g = spec.graph
    assert set(spec.classes()) == {Iri(BASE + c) for c in cs.concepts}
    assert spec.properties() == [Iri(BASE + "hasDataFormat")]
    assert g.objects(Iri(BASE + "DataFormat"), RDFS_LABEL) == [Literal("Data format")]
    assert g.objects(Iri(BASE + "TrainingProcess"), RDFS_SUBCLASS_OF) == [Iri(PROV + "Activity")]
    assert g.objects(Iri(BASE + "ModelAuthor"), RDFS_SUBCLASS_OF) == [Iri(PROV + "Agent")]
    assert g.objects(Iri(BASE + "hasDataFormat"), RDFS_RANGE) == [Iri(BASE + "DataFormat")]
    assert spec.synthesized == ("TrainingProcess", "ModelAuthor")
    assert spec.dropped_triples == 2
    assert (spec.class_count, spec.property_count, spec.axiom_count) == (3, 1, len(g))


def test_unusable_draft_is_synthesized():
    spec = normalize_ontology("I could not produce an ontology.", ConceptSet(("Dataset",), ()))
    assert spec.classes() == [Iri(BASE + "Dataset")]
    assert spec.warnings and spec.synthesized == ("Dataset",)


def test_sidecar_load_round_trip(tmp_path):
    spec = normalize_ontology(DRAFT, ConceptSet(("DataFormat",), ("hasDataFormat",)))
    (tmp_path / "o.ttl").write_text(serialize_turtle(spec.graph), encoding="utf-8")
    (tmp_path / "o.json").write_text(json.dumps(spec.sidecar()), encoding="utf-8")
    loaded = OntologySpec.load(tmp_path / "o.ttl", tmp_path / "o.json", FOUNDATION)
    assert loaded.graph.same_triples(spec.graph)
    assert loaded.sidecar() == spec.sidecar()


def _reaches_prov(graph, cls: Iri) -> bool:
    seen, stack = set(), [cls]
    while stack:
        node = stack.pop()
        for parent in graph.objects(node, RDFS_SUBCLASS_OF):
            if parent.value.startswith(PROV):
                return True
            if parent not in seen:
                seen.add(parent)
                stack.append(parent)
    return False


@settings(max_examples=200, deadline=None)
@given(concept_sets().flatmap(lambda cs: st.tuples(st.just(cs), drafts(cs))))
def test_normalization_properties(case):
    cs, raw = case
    spec = normalize_ontology(raw, cs, foundation=FOUNDATION)
    g = spec.graph
    declared_classes = {s for s in g.subjects(RDF_TYPE, OWL_CLASS) if s.value.startswith(BASE)}
    declared_props = {s for s in g.subjects(RDF_TYPE, OWL_OBJECT_PROPERTY) if s.value.startswith(BASE)}
    assert declared_classes == {Iri(BASE + c) for c in cs.concepts}
    assert declared_props == {Iri(BASE + r) for r in cs.relations}
    assert all(_reaches_prov(g, c) for c in declared_classes)
    again = normalize_ontology(serialize_turtle(g), cs, foundation=FOUNDATION)
    assert again.graph == g
