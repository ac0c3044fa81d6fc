from __future__ import annotations

import pytest
from conftest import LISTING1

from ontokg.answering import CQAnswer
from ontokg.cq import CompetencyQuestion, CqSet
from ontokg.errors import PreconditionError
from ontokg.kg import (
    STATUS_NO_MEANINGFUL_KG,
    STATUS_OK,
    KgBuildResult,
    build_kg,
    build_kg_prompt,
    enumerate_individuals,
    link_individuals,
    validate_kg,
)
from ontokg.ontology import DEFAULT_BASE_IRI, ConceptSet, normalize_ontology
from ontokg.rdf import Iri, parse_turtle

BASE = DEFAULT_BASE_IRI
ONTOLOGY = normalize_ontology("", ConceptSet(("DeepLearningPipeline", "DataFormat", "Dataset"), ("hasDataFormat",)))
CQS = CqSet(
    (
        CompetencyQuestion("CQ1", "Which data format was used?", "approved"),
        CompetencyQuestion("CQ2", "Which dataset was used?", "approved"),
        CompetencyQuestion("CQ3", "What deep learning pipeline and data format?", "edited", "human"),
    ),
    review_round=1,
)
ANSWERS = [CQAnswer("CQ1", "doc", "raw", "Spectrograms and images.", (("doc", 0),), True)]


def _build(reply: str, fake_backend, version: str = "v1"):
    backend = fake_backend({"kg_build": reply})
    return build_kg(backend, CQS, ANSWERS, ONTOLOGY, "doc", prompt_version=version), backend


def test_listing1_builds_three_individuals(fake_backend):
    result, _ = _build(LISTING1, fake_backend)
    assert result.status == STATUS_OK
    assert len(result.graph) == 7
    assert [(i.iri.local_name(), i.label) for i in result.individuals] == [
        ("DataFormat_1", "Audio Spectrogram"),
        ("DataFormat_2", "Image data"),
        ("DeepLearningPipeline_1", None),
    ]
    assert validate_kg(result, ONTOLOGY).violations == ()


def test_prompt_carries_answers_and_ontology(fake_backend):
    _, backend = _build(LISTING1, fake_backend, "v2")
    prompt = backend.requests[0].user_text
    assert "CQ1: Which data format was used?\nAnswer: Spectrograms and images." in prompt
    assert "dlprov:DataFormat a owl:Class" in prompt
    assert prompt != build_kg_prompt(CQS, ANSWERS, ONTOLOGY, "v1")


def test_prose_reply_has_no_meaningful_kg(fake_backend):
    result, _ = _build("The publication does not describe a pipeline.", fake_backend)
    assert result.status == STATUS_NO_MEANINGFUL_KG
    assert result.individuals == () and len(result.graph) == 0
    with pytest.raises(PreconditionError):
        validate_kg(result, ONTOLOGY)
    with pytest.raises(PreconditionError):
        link_individuals(result, ONTOLOGY, CQS)


def test_graph_without_ontology_individuals_is_not_meaningful(fake_backend):
    result, _ = _build("dlprov:x rdfs:label 'only a label' .", fake_backend)
    assert result.status == STATUS_NO_MEANINGFUL_KG


def test_renumbering_keeps_conforming_ids_and_links():
    text = (
        "dlprov:pipe a dlprov:DeepLearningPipeline ; dlprov:hasDataFormat dlprov:fmtB, dlprov:DataFormat_2 .\n"
        "dlprov:DataFormat_2 a dlprov:DataFormat ; rdfs:label 'kept' .\n"
        "dlprov:fmtB a dlprov:DataFormat ; rdfs:label 'renamed' .\n"
        "dlprov:DataFormat_0 a dlprov:DataFormat .\n"
    )
    graph, individuals = enumerate_individuals(parse_turtle(text, ONTOLOGY.graph.prefixes), ONTOLOGY, "doc")
    names = {i.iri.local_name(): i.label for i in individuals}
    assert names == {"DataFormat_1": None, "DataFormat_2": "kept", "DataFormat_3": "renamed", "DeepLearningPipeline_1": None}
    links = graph.objects(Iri(BASE + "DeepLearningPipeline_1"), Iri(BASE + "hasDataFormat"))
    assert sorted(i.local_name() for i in links) == ["DataFormat_2", "DataFormat_3"]


def test_validation_flags_each_kind(fake_backend):
    reply = (
        "dlprov:DataFormat_1 a dlprov:DataFormat, dlprov:Dataset ; rdfs:label 'Not Specified' .\n"
        "dlprov:DataFormat_2 a dlprov:DataFormat ; rdfs:label 'images' .\n"
        "dlprov:DataFormat_3 a dlprov:DataFormat ; rdfs:label ' images ' .\n"
        "dlprov:DataFormat_4 a dlprov:DataFormat .\n"
        "dlprov:Thing_1 a dlprov:Widget ; dlprov:madeUp dlprov:DataFormat_2 .\n"
    )
    result, _ = _build(reply, fake_backend)
    counts = validate_kg(result, ONTOLOGY).counts()
    assert counts == {
        "undeclared_class": 1,
        "undeclared_property": 1,
        "multi_typed": 1,
        "unspecified": 1,
        "duplicate_value": 1,
        "unlabeled": 1,
    }


def test_links_follow_class_names_in_questions(fake_backend):
    result, _ = _build(LISTING1, fake_backend)
    links = {l.individual_iri.local_name(): l.cq_ids for l in link_individuals(result, ONTOLOGY, CQS)}
    assert links == {"DataFormat_1": ("CQ1", "CQ3"), "DataFormat_2": ("CQ1", "CQ3"), "DeepLearningPipeline_1": ("CQ3",)}


def test_build_preconditions_and_status_invariant(fake_backend):
    backend = fake_backend({"kg_build": LISTING1})
    with pytest.raises(PreconditionError):
        build_kg(backend, CQS, [], ONTOLOGY, "doc")
    with pytest.raises(PreconditionError):
        build_kg(backend, CQS, ANSWERS, ONTOLOGY, "other")
    result, _ = _build(LISTING1, fake_backend)
    with pytest.raises(ValueError):
        KgBuildResult("doc", result.graph, (), STATUS_OK, result.repair)
