from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ontokg.cq import (
    CompetencyQuestion,
    CqGenerationParseError,
    CqImportError,
    CqSet,
    EmptyReviewError,
    export_for_review,
    generate_cqs,
    import_reviewed,
    parse_question_list,
    require_reviewed,
)
from ontokg.errors import CheckpointError

RAW = """Here are the competency questions:

1. What datasets were used?
2) Which model architecture was trained?
- What preprocessing steps were applied?
* **Which software framework was used?**
CQ5: What hardware was used?
3. what   datasets were USED?
This line is not a question.
"""


def _set(*texts: str) -> CqSet:
    return CqSet(tuple(CompetencyQuestion(f"CQ{i}", t) for i, t in enumerate(texts, 1)))


def test_parse_question_list_markers_and_duplicates():
    assert parse_question_list(RAW) == [
        "What datasets were used?",
        "Which model architecture was trained?",
        "What preprocessing steps were applied?",
        "Which software framework was used?",
        "What hardware was used?",
    ]


def test_generate_cqs_numbers_questions(fake_backend):
    backend = fake_backend({"cq_gen": RAW})
    cqs = generate_cqs(backend, domain_prompt="bird song analysis")
    assert [q.cq_id for q in cqs] == ["CQ1", "CQ2", "CQ3", "CQ4", "CQ5"]
    assert all(q.status == "generated" and q.provenance == "llm" for q in cqs)
    assert "bird song analysis" in backend.requests[0].user_text
    assert backend.requests[0].stage_tag == "cq_gen"


def test_generate_cqs_without_questions(fake_backend):
    with pytest.raises(CqGenerationParseError):
        generate_cqs(fake_backend({"cq_gen": "I cannot help with that."}))


def test_unreviewed_set_fails_the_checkpoint():
    with pytest.raises(CheckpointError):
        require_reviewed(_set("What?"))


def test_review_edits_deletions_and_additions(tmp_path):
    exported = _set("What datasets were used?", "Which optimizer?", "What loss?")
    path = export_for_review(exported, tmp_path / "review.tsv")
    lines = path.read_text(encoding="utf-8").splitlines()
    header = [l for l in lines if l.startswith("#")]
    body = [l for l in lines if not l.startswith("#")]
    body[1] = "CQ2\tgenerated\tWhich optimizer was used for training?"
    del body[2]
    body.append("new\tadded\tWhat batch size was used?")
    path.write_text("\n".join(header + body) + "\n", encoding="utf-8")

    reviewed = import_reviewed(path, exported)
    assert reviewed.review_round == 1
    assert [(q.cq_id, q.status, q.provenance, q.text) for q in reviewed] == [
        ("CQ1", "approved", "llm", "What datasets were used?"),
        ("CQ2", "edited", "human", "Which optimizer was used for training?"),
        ("CQ3", "added", "human", "What batch size was used?"),
    ]
    require_reviewed(reviewed)


questions = st.lists(
    st.text(st.characters(blacklist_categories=("Cc", "Cs", "Zl", "Zp")), min_size=1, max_size=30)
    .map(lambda s: " ".join(s.split()))
    .filter(bool),
    min_size=1,
    max_size=8,
)


@given(questions)
def test_review_round_trip_is_a_fixed_point(tmp_path_factory, texts):
    path = tmp_path_factory.mktemp("review") / "r.tsv"
    first = import_reviewed(export_for_review(_set(*texts), path), _set(*texts))
    second = import_reviewed(export_for_review(first, path), first)
    assert second.questions == first.questions
    assert second.review_round == first.review_round + 1


@pytest.mark.parametrize(
    "body, error",
    [
        ("CQ1\tgenerated\n", CqImportError),
        ("CQ9\tgenerated\tWhat?\n", CqImportError),
        ("CQ1\tgenerated\tWhat?\nCQ1\tgenerated\tWhat?\n", CqImportError),
        ("CQ1\tgenerated\t   \n", CqImportError),
        ("# everything deleted\n", EmptyReviewError),
    ],
)
def test_malformed_review_files(tmp_path, body, error):
    path = tmp_path / "r.tsv"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(error):
        import_reviewed(path, _set("What?"))


def test_import_error_carries_line_number(tmp_path):
    path = tmp_path / "r.tsv"
    path.write_text("# header\nCQ1\tgenerated\tWhat?\nbroken line\n", encoding="utf-8")
    with pytest.raises(CqImportError) as err:
        import_reviewed(path, _set("What?"))
    assert err.value.line == 3


def test_missing_review_file_is_a_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        import_reviewed(tmp_path / "absent.tsv", _set("What?"))


def test_cq_set_invariants_and_json(tmp_path):
    with pytest.raises(ValueError):
        CqSet((CompetencyQuestion("CQ2", "x"),))
    with pytest.raises(ValueError):
        CompetencyQuestion("CQ1", "x", status="maybe")
    cqs = _set("A?", "B?")
    cqs.save(tmp_path / "c.json")
    assert CqSet.load(tmp_path / "c.json") == cqs
    assert cqs.by_id("CQ2").text == "B?"
