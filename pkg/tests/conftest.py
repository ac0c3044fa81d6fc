from __future__ import annotations

import json
from collections.abc import Callable
from pathlib import Path

import pytest

from ontokg.llm import Backend, ChatRequest, ChatResponse, fingerprint
from ontokg.pipeline import cli

FIXTURES = Path(__file__).parent / "fixtures"
LISTING1 = (FIXTURES / "listing1.ttl").read_text(encoding="utf-8")
GROUND_TRUTH = "package:fixture_ground_truth.tsv"
COMBINATIONS = (("v1", "v1"), ("v1", "v2"), ("v2", "v1"), ("v2", "v2"))


class FakeBackend(Backend):
    """Answers by stage tag with a fixed string or a function of the prompt."""

    backend_id = "fake"

    def __init__(self, replies: dict[str, str | Callable[[str], str]]):
        self.replies = replies
        self.requests: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.requests.append(request)
        reply = self.replies[request.stage_tag]
        text = reply(request.user_text) if callable(reply) else reply
        return ChatResponse(text, self.backend_id, fingerprint(request))


@pytest.fixture
def fake_backend():
    return FakeBackend


def write_config(root: Path, **backend) -> Path:
    config = {
        "corpus_dir": "package:fixture_corpus",
        "chunk_size": 80,
        "chunk_overlap": 20,
        "retrieval_k": 3,
        "ground_truth": GROUND_TRUTH,
        "backend": backend,
    }
    path = root / "config.json"
    path.write_text(json.dumps(config, indent=2), encoding="utf-8")
    return path


def run_cli(root: Path, *args: str) -> int:
    return cli.main(["--root", str(root), *args])


def run_fixture_pipeline(root: Path, backend: dict) -> list[str]:
    """All four prompt/answer combinations over the bundled corpus, then the report."""
    root.mkdir(parents=True, exist_ok=True)
    config = write_config(root, **backend)
    runs = []
    for pv, av in COMBINATIONS:
        run_id = f"p{pv}-a{av}"
        if not runs:
            assert run_cli(root, "ingest", "--run", run_id, "--config", str(config)) == 0
            assert run_cli(root, "gencq", "--run", run_id) == 0
            assert run_cli(root, "review-import", "--run", run_id) == 0
            assert run_cli(root, "ontology", "--run", run_id) == 0
        else:
            share = ["--share-from", runs[0]]
            assert run_cli(root, "ingest", "--run", run_id, "--config", str(config), "--prompt-version", pv, "--answer-version", av, *share) == 0
        for verb in ("answer", "buildkg", "evaluate"):
            assert run_cli(root, verb, "--run", run_id) == 0
        runs.append(run_id)
    assert run_cli(root, "report", "--runs", *runs, "--out", "report") == 0
    return runs


def tree_snapshot(root: Path) -> dict[str, bytes]:
    """Every file under ``runs/`` and ``report/``; manifests lose their timestamps."""
    files = {}
    for base in ("runs", "report"):
        for path in sorted((root / base).rglob("*")):
            if not path.is_file():
                continue
            data = path.read_bytes()
            if path.name == "manifest.json":
                manifest = json.loads(data)
                manifest.pop("timestamps")
                data = json.dumps(manifest, sort_keys=True).encode()
            files[path.relative_to(root).as_posix()] = data
    return files


@pytest.fixture(scope="session")
def recorded_fixtures(tmp_path_factory) -> Path:
    """Replay fixtures recorded once per session from the scripted offline model."""
    root = tmp_path_factory.mktemp("record")
    run_fixture_pipeline(root, {"kind": "scripted", "mode": "record", "fixtures": "fixtures"})
    return root / "fixtures"


@pytest.fixture(scope="session")
def replayed_workspace(tmp_path_factory, recorded_fixtures) -> Path:
    root = tmp_path_factory.mktemp("replay")
    run_fixture_pipeline(root, {"kind": "openai", "mode": "replay", "fixtures": str(recorded_fixtures)})
    return root


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
