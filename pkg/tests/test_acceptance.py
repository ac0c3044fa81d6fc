"""The ten acceptance criteria, each timed against its budget and reported on one line."""

from __future__ import annotations

import csv
import json
import random
import re
import time
from contextlib import contextmanager
from decimal import Decimal

from conftest import ACCEPTANCE_LINES, COMBINATIONS, LISTING1, run_cli, run_fixture_pipeline, tree_snapshot, write_config
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from strategies import concept_sets, drafts, graphs

from ontokg.answering import CQAnswer
from ontokg.corpus import DEFAULT_CHUNK_SIZE, DEFAULT_OVERLAP, Document, chunk_document
from ontokg.cq import CompetencyQuestion, CqSet
from ontokg.evaluation import DocumentAlignment, GroundTruth, JudgeVerdict, Label, alignment_percentage, classify, disagreement_report
from ontokg.kg import STATUS_NO_MEANINGFUL_KG, build_kg
from ontokg.ontology import DEFAULT_BASE_IRI, ConceptSet, load_foundation, normalize_ontology
from ontokg.rdf import KNOWN_NAMESPACES, Iri, NoMeaningfulGraphError, parse_turtle, repair_rdf_text, serialize_turtle
from ontokg.rdf.model import OWL_CLASS, OWL_OBJECT_PROPERTY, PROV, RDF_TYPE, RDFS_LABEL, RDFS_SUBCLASS_OF



def cases(n: int) -> settings:
    return settings(max_examples=n, deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])


@contextmanager
def criterion(number: int, title: str, budget: float):
    start = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        elapsed = time.perf_counter() - start
        ACCEPTANCE_LINES.append(f"criterion {number}: FAIL {title} ({elapsed:.2f}s): {type(exc).__name__}")
        raise
    elapsed = time.perf_counter() - start
    if elapsed >= budget:
        ACCEPTANCE_LINES.append(f"criterion {number}: FAIL {title} ({elapsed:.2f}s, budget {budget:g}s)")
        raise AssertionError(f"criterion {number} took {elapsed:.2f}s, budget {budget:g}s")
    ACCEPTANCE_LINES.append(f"criterion {number}: PASS {title} ({elapsed:.2f}s)")


def test_criterion_01_threshold_classification():
    with criterion(1, "classify over 0..10 gives Wrong x3, Partial x3, Right x5", 1):
        labels = [classify(score) for score in range(11)]
        assert labels[:3] == [Label.WRONG] * 3
        assert labels[3:6] == [Label.PARTIAL] * 3
        assert labels[6:] == [Label.RIGHT] * 5


def test_criterion_02_chunker_conformance():
    @cases(1000)
    @given(st.integers(100, 20_000), st.integers(0, 2**32 - 1))
    def check(n_tokens, seed):
        seps = (" ", "\n", "  ", "\t")
        body = "".join(f"w{i}{seps[(seed >> (i % 32)) & 3]}" for i in range(n_tokens))
        chunks = chunk_document(Document("d", "d", body, "d.txt"))
        assert chunks[0].token_start == 0 and chunks[-1].token_end == n_tokens
        for chunk in chunks:
            assert 0 < chunk.token_end - chunk.token_start <= DEFAULT_CHUNK_SIZE
            assert chunk.text.split() == [f"w{i}" for i in range(chunk.token_start, chunk.token_end)]
        for a, b in zip(chunks, chunks[1:]):
            assert a.token_end - b.token_start == DEFAULT_OVERLAP

    with criterion(2, "1000 random documents: full coverage, overlap 100, chunks <= 2500", 10):
        assert (DEFAULT_CHUNK_SIZE, DEFAULT_OVERLAP) == (2500, 100)
        check()


def test_criterion_03_listing1_fixture():
    with criterion(3, "Listing 1 parses to 7 triples, 3 typed individuals, 2 labels", 1):
        graph = parse_turtle(LISTING1, KNOWN_NAMESPACES)
        assert len(graph) == 7
        assert len({t.subject for t in graph if t.predicate == RDF_TYPE}) == 3
        assert sorted(str(t.object) for t in graph if t.predicate == RDFS_LABEL) == ["Audio Spectrogram", "Image data"]


def test_criterion_04_turtle_round_trip(replayed_workspace):
    @cases(500)
    @given(graphs())
    def check(graph):
        assert parse_turtle(serialize_turtle(graph), strict=True).same_triples(graph)

    with criterion(4, "parse(serialize(g)) == g on 500 random graphs and every fixture-run .ttl", 10):
        check()
        artifacts = sorted((replayed_workspace / "runs").rglob("*.ttl"))
        assert len(artifacts) >= 4 * 4 + 1
        for path in artifacts:
            text = path.read_text(encoding="utf-8")
            graph = parse_turtle(text, strict=True)
            assert parse_turtle(serialize_turtle(graph), strict=True).same_triples(graph)
            assert serialize_turtle(graph) == text


def test_criterion_05_repair_robustness(fake_backend):
    with criterion(5, "fenced, prose-wrapped and prefix-stripped Listing 1 repair to one graph; prose gives x", 1):
        prefixed = "".join(f"@prefix {p}: <{ns}> .\n" for p, ns in sorted(KNOWN_NAMESPACES.items())) + LISTING1
        variants = {
            "fenced": "```turtle\n" + prefixed + "```",
            "prose": "Here is the knowledge graph:\n" + prefixed + "\nI hope this helps.",
            "prefix_stripped": LISTING1,
            "all_three": "Sure.\n```\n" + LISTING1 + "```\nDone.",
        }
        graphs_out = {name: repair_rdf_text(text)[0] for name, text in variants.items()}
        reference = graphs_out["fenced"]
        assert len(reference) == 7
        assert all(g.same_triples(reference) for g in graphs_out.values())

        prose = "The publication gives no details about its data formats or models."
        try:
            repair_rdf_text(prose)
        except NoMeaningfulGraphError:
            pass
        else:
            raise AssertionError("pure prose produced a graph")
        ontology = normalize_ontology("", ConceptSet(("DataFormat",), ()))
        cqs = CqSet((CompetencyQuestion("CQ1", "Which data format?", "approved"),), 1)
        answers = [CQAnswer("CQ1", "d", "", "unknown", (), False)]
        result = build_kg(fake_backend({"kg_build": prose}), cqs, answers, ontology, "d")
        assert result.status == STATUS_NO_MEANINGFUL_KG
        assert DocumentAlignment("d", result.status).cell() == "x"


def _reaches_prov(graph, cls: Iri) -> bool:
    seen, stack = set(), [cls]
    while stack:
        for parent in graph.objects(stack.pop(), RDFS_SUBCLASS_OF):
            if parent.value.startswith(PROV):
                return True
            if parent not in seen:
                seen.add(parent)
                stack.append(parent)
    return False


def test_criterion_06_ontology_normalization():
    foundation = load_foundation()
    base = DEFAULT_BASE_IRI

    @cases(200)
    @given(concept_sets().flatmap(lambda cs: st.tuples(st.just(cs), drafts(cs))))
    def check(case):
        cs, raw = case
        g = normalize_ontology(raw, cs, foundation=foundation).graph
        classes = {s for s in g.subjects(RDF_TYPE, OWL_CLASS) if s.value.startswith(base)}
        props = {s for s in g.subjects(RDF_TYPE, OWL_OBJECT_PROPERTY) if s.value.startswith(base)}
        assert classes == {Iri(base + c) for c in cs.concepts}
        assert props == {Iri(base + r) for r in cs.relations}
        assert all(_reaches_prov(g, c) for c in classes)
        assert normalize_ontology(serialize_turtle(g), cs, foundation=foundation).graph == g

    with criterion(6, "200 random concept sets: exact declarations, PROV-O roots, idempotent", 10):
        check()


def test_criterion_07_evaluation_arithmetic():
    with criterion(7, "alignment_percentage(142, 203) = 69.95; planted fixture gives (42, 200)", 1):
        assert alignment_percentage(142, 203) == Decimal("69.95")
        labels = list(Label)
        scores = {Label.WRONG: 0, Label.PARTIAL: 4, Label.RIGHT: 9}
        planted = set(random.Random(2024).sample(range(200), 42))
        ground, verdicts = [], {}
        for i in range(200):
            key = (f"CQ{i % 40 + 1}", f"doc{i // 40}")
            human = labels[i % 3]
            judge = labels[(i + 1) % 3] if i in planted else human
            ground.append(GroundTruth(*key, "truth", human))
            verdicts[key] = JudgeVerdict(scores[judge], "", judge)
        report = disagreement_report(ground, verdicts)
        assert (report.count, report.total) == (42, 200)


def test_criterion_08_end_to_end_determinism(recorded_fixtures, tmp_path):
    with criterion(8, "two replay runs over the 5-document corpus are byte-identical; report has numbers and x", 60):
        before = sorted(p.name for p in recorded_fixtures.iterdir())
        backend = {"kind": "openai", "mode": "replay", "fixtures": str(recorded_fixtures)}
        run_fixture_pipeline(tmp_path / "one", backend)
        run_fixture_pipeline(tmp_path / "two", backend)
        first, second = tree_snapshot(tmp_path / "one"), tree_snapshot(tmp_path / "two")
        assert first.keys() == second.keys() and len(first) > 50
        assert [k for k in first if first[k] != second[k]] == []
        assert sorted(p.name for p in recorded_fixtures.iterdir()) == before

        with open(tmp_path / "one" / "report" / "alignment.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 1 + 5 and len(rows[0]) == 1 + len(COMBINATIONS)
        cells = [c for row in rows[1:] for c in row[1:]]
        assert any(re.fullmatch(r"\d{1,3}\.\d{2}", c) for c in cells)
        assert "x" in cells


def test_criterion_09_checkpoint_enforcement(tmp_path):
    with criterion(9, "no passing stage 2 without a review file or stage 6 without ground truth (exit 4)", 5):
        root = tmp_path / "review"
        root.mkdir()
        config = write_config(root, kind="scripted")
        assert run_cli(root, "ingest", "--run", "r", "--config", str(config)) == 0
        assert run_cli(root, "gencq", "--run", "r") == 0
        assert run_cli(root, "ontology", "--run", "r") == 4
        assert run_cli(root, "review-import", "--run", "r", "--file", str(root / "missing.tsv")) == 4

        root = tmp_path / "truth"
        root.mkdir()
        config = root / "config.json"
        config.write_text(json.dumps({"corpus_dir": "package:fixture_corpus", "backend": {"kind": "scripted"}}))
        assert run_cli(root, "ingest", "--run", "r", "--config", str(config)) == 0
        for verb in ("gencq", "review-import", "ontology", "answer", "buildkg"):
            assert run_cli(root, verb, "--run", "r") == 0
        assert run_cli(root, "evaluate", "--run", "r") == 4
        assert run_cli(root, "evaluate", "--run", "r", "--ground-truth", str(root / "missing.tsv")) == 4


# Published live-model outcomes. Reproducing them needs the original model's
# sampling, so they are printed next to the fixture run and never compared.
LIVE_REFERENCE = {"competency questions": 40, "ontology classes": 45, "ontology relations": 41, "ontology axioms": 365}
LIVE_TABLE = [
    ["24.32", "x", "x", "9.42"],
    ["85.71", "x", "x", "68.06"],
    ["73.21", "64.41", "59.26", "64.29"],
    ["91.53", "81.48", "82.76", "77.55"],
    ["66.67", "x", "67.51", "61.67"],
]
CELL = re.compile(r"\d{1,3}\.\d{2}|x")


def _sanity(name: str, ours: int, reference: int) -> str:
    ratio = ours / reference
    verdict = "same order of magnitude" if 0.1 <= ratio <= 10 else "different order of magnitude"
    return f"  {name}: fixture {ours}, live reference {reference} ({verdict}; not compared)"


def test_criterion_10_live_outcomes_not_reproducible(replayed_workspace, capsys):
    with criterion(10, "live-model outcomes reported as format fixtures and sanity lines only", 5):
        run_dir = replayed_workspace / "runs" / "pv1-av1"
        cqs = json.loads(sorted((run_dir / "gencq").glob("cqs_round*.json"))[-1].read_text())
        sidecar = json.loads((run_dir / "ontology" / "ontology.json").read_text())
        ours = {
            "competency questions": len(cqs["questions"]),
            "ontology classes": sidecar["class_count"],
            "ontology relations": sidecar["property_count"],
            "ontology axioms": sidecar["axiom_count"],
        }
        lines = [_sanity(name, ours[name], ref) for name, ref in LIVE_REFERENCE.items()]

        # format fixture: the live table's cells have the same shape as ours
        assert all(CELL.fullmatch(c) for row in LIVE_TABLE for c in row)
        with open(replayed_workspace / "report" / "alignment.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert len(rows[1:]) == len(LIVE_TABLE) and all(len(r) - 1 == len(LIVE_TABLE[0]) for r in rows[1:])
        assert all(CELL.fullmatch(c) for row in rows[1:] for c in row[1:])
        live_x = sum(row.count("x") for row in LIVE_TABLE)
        ours_x = sum(row[1:].count("x") for row in rows[1:])
        lines.append(f"  table cells marked x: fixture {ours_x} of 20, live reference {live_x} of 20 (not compared)")
        with capsys.disabled():
            print("\n" + "\n".join(lines))
    ACCEPTANCE_LINES.extend(f"criterion 10: {line.strip()}" for line in lines)
