"""Stage execution over a run directory.

Every stage reads its inputs from files written by earlier stages and writes
its outputs under ``runs/<run_id>/``; nothing is handed over in memory. The
layout is::

    config.json                       config snapshot, fixed at creation
    manifest.json                     statuses, artifact lists, timestamps
    ingest/{documents,chunks,index}.json
    gencq/cqs_round<N>.json, review.tsv, review_round<N>.tsv
    ontology/{concepts.json,draft.txt,ontology.ttl,ontology.json,repair.json}
    answers/<answer_version>/<doc_id>.json
    kg/<doc_id>/<prompt_version>/<answer_version>/{raw.txt,repair.json,status.json,graph.ttl,validation.json,links.json}
    inputs/ground_truth.tsv           human ground truth, kept across re-runs
    evaluate/{verdicts,verifications,report}.json
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import shutil
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, TypeVar

from ontokg.answering import AnswerSettings, CQAnswer, answer_cq
from ontokg.corpus import Chunk, RetrievalIndex, chunk_document, count_tokens, ingest_corpus
from ontokg.cq import CqSet, export_for_review, generate_cqs, import_reviewed
from ontokg.errors import CheckpointError, ConfigError, OntoKGError, OrderingError
from ontokg.evaluation import (
    AlignmentError,
    DocumentAlignment,
    EvaluationReport,
    GroundTruth,
    JudgeVerdict,
    VerdictParseError,
    VerificationParseError,
    disagreement_report,
    judge_answer,
    load_ground_truth,
    verify_individual,
)
from ontokg.kg import (
    STATUS_OK,
    IndividualLink,
    KgIndividual,
    build_kg,
    link_individuals,
    validate_kg,
)
from ontokg.llm import Backend
from ontokg.ontology import OntologySpec, draft_ontology, extract_concept_set, load_foundation, normalize_ontology
from ontokg.pipeline.backends import make_backend
from ontokg.pipeline.config import PipelineConfig, relativize_paths, resolve_path
from ontokg.pipeline.manifest import (
    CONFIG_NAME,
    CorruptManifestError,
    STAGES,
    RunManifest,
    StageState,
    dump_json,
    now_iso,
    write_atomic,
)
from ontokg.rdf import serialize_turtle

logger = logging.getLogger(__name__)

RUNS_DIR = "runs"
STAGE_DIRS = {
    "ingest": "ingest",
    "gencq": "gencq",
    "ontology": "ontology",
    "answer": "answers",
    "buildkg": "kg",
    "evaluate": "evaluate",
}
SHARED_STAGES = ("ingest", "gencq", "ontology")
# Settings that must agree between runs sharing corpus and ontology artifacts.
SHARED_SETTINGS = ("corpus_dir", "chunk_size", "chunk_overlap", "base_iri", "base_prefix", "foundation", "domain_prompt")
GROUND_TRUTH_COPY = "inputs/ground_truth.tsv"

_RUN_ID = re.compile(r"[A-Za-z0-9][A-Za-z0-9._-]*")
_ROUND_FILE = re.compile(r"cqs_round(\d+)\.json")

T = TypeVar("T")
R = TypeVar("R")


class RunNotFoundError(OntoKGError):
    pass


def _json(path: Path) -> Any:
    return json.loads(path.read_text(encoding="utf-8"))


class Run:
    def __init__(self, root: str | Path, run_id: str):
        if not _RUN_ID.fullmatch(run_id):
            raise ConfigError(f"invalid run id {run_id!r}")
        self.root = Path(root)
        self.run_id = run_id
        self.dir = self.root / RUNS_DIR / run_id
        self._config: PipelineConfig | None = None
        self._manifest: RunManifest | None = None

    def exists(self) -> bool:
        return (self.dir / CONFIG_NAME).is_file()

    @property
    def config(self) -> PipelineConfig:
        if self._config is None:
            self._config = PipelineConfig.from_dict(_json(self.dir / CONFIG_NAME))
        return self._config

    @property
    def manifest(self) -> RunManifest:
        if self._manifest is None:
            self._manifest = RunManifest.load(self.dir)
        return self._manifest

    def save_manifest(self) -> None:
        self.manifest.save(self.dir)

    def path(self, relative: str) -> Path:
        return self.dir / relative

    def resolve(self, value: str) -> Path:
        return resolve_path(value, self.root)

    def backend(self) -> Backend:
        return make_backend(self.config.backend, self.root, self.config.concurrency)

    def kg_dir(self, doc_id: str) -> Path:
        return self.dir / "kg" / doc_id / self.config.prompt_version / self.config.answer_version

    def answers_path(self, doc_id: str) -> Path:
        return self.dir / "answers" / self.config.answer_version / f"{doc_id}.json"

    # artifact readers

    def documents(self) -> list[dict[str, Any]]:
        return _json(self.path("ingest/documents.json"))

    def doc_ids(self) -> list[str]:
        return [d["doc_id"] for d in self.documents()]

    def index(self) -> RetrievalIndex:
        records = _json(self.path("ingest/chunks.json"))
        return RetrievalIndex(
            [Chunk(r["doc_id"], r["index"], r["token_start"], r["token_end"], r["text"]) for r in records]
        )

    def cq_rounds(self) -> list[int]:
        gencq = self.path("gencq")
        if not gencq.is_dir():
            return []
        return sorted(int(m.group(1)) for p in gencq.iterdir() if (m := _ROUND_FILE.fullmatch(p.name)))

    def cqs(self) -> CqSet:
        rounds = self.cq_rounds()
        if not rounds:
            raise OrderingError("no competency questions have been generated for this run")
        return CqSet.load(self.path(f"gencq/cqs_round{rounds[-1]}.json"))

    def foundation(self):
        return load_foundation(self.resolve(self.config.foundation) if self.config.foundation else None)

    def ontology(self) -> OntologySpec:
        return OntologySpec.load(self.path("ontology/ontology.ttl"), self.path("ontology/ontology.json"), self.foundation())

    def answers(self, doc_id: str) -> list[CQAnswer]:
        return [CQAnswer.from_dict(a) for a in _json(self.answers_path(doc_id))]


def _parallel(func: Callable[[T], R], items: Sequence[T], workers: int) -> list[R]:
    """``map`` with bounded threads; results keep the input order."""
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


# run creation


def create_run(
    root: str | Path, run_id: str, config: PipelineConfig, share_from: str | None = None
) -> Run:
    """Create ``runs/<run_id>`` with a config snapshot, or reopen it if the snapshot matches."""
    run = Run(root, run_id)
    snapshot = relativize_paths(config, root).to_dict()
    if run.exists():
        if _json(run.dir / CONFIG_NAME) != json.loads(json.dumps(snapshot)):
            raise ConfigError(f"run {run_id} already exists with a different configuration; the snapshot is immutable")
        if share_from is not None:
            raise ConfigError("--share-from only applies when a run is created")
        return run

    source = None
    if share_from is not None:
        source = open_run(root, share_from)
        for name in SHARED_SETTINGS:
            if getattr(source.config, name) != snapshot[name]:
                raise ConfigError(f"cannot share artifacts from {share_from}: {name} differs")
        if source.config.backend.params() != config.backend.params():
            raise ConfigError(f"cannot share artifacts from {share_from}: generation parameters differ")
        for stage in SHARED_STAGES:
            if source.manifest.status(stage) != "done":
                raise OrderingError(f"cannot share {stage} from {share_from}: stage is {source.manifest.status(stage)}")

    run.dir.mkdir(parents=True, exist_ok=True)
    dump_json(run.dir / CONFIG_NAME, snapshot)
    manifest = RunManifest(run_id, config.prompt_version, config.answer_version)
    manifest.timestamps["created"] = now_iso()
    if source is not None:
        for stage in SHARED_STAGES:
            shutil.copytree(source.path(STAGE_DIRS[stage]), run.path(STAGE_DIRS[stage]))
            manifest.stages[stage] = StageState("done", _stage_files(run, stage))
    run._manifest = manifest
    run.save_manifest()
    return run


def open_run(root: str | Path, run_id: str) -> Run:
    run = Run(root, run_id)
    if not run.exists():
        raise RunNotFoundError(f"run {run_id} does not exist under {Path(root) / RUNS_DIR}")
    return run


# ordering


def check_order(manifest: RunManifest, stage: str) -> None:
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}")
    for prior in STAGES[: STAGES.index(stage)]:
        status = manifest.status(prior)
        if status == "awaiting_review":
            raise CheckpointError(f"stage {prior} is awaiting review; import the reviewed questions before {stage}")
        if status != "done":
            raise OrderingError(f"stage {stage} needs {prior} to be done first (it is {status})")


def _stage_files(run: Run, stage: str) -> list[str]:
    base = run.path(STAGE_DIRS[stage])
    if not base.is_dir():
        return []
    return sorted(
        p.relative_to(run.dir).as_posix() for p in base.rglob("*") if p.is_file() and not p.name.startswith(".tmp-")
    )


def _reset(run: Run, stages: Sequence[str]) -> None:
    for stage in stages:
        shutil.rmtree(run.path(STAGE_DIRS[stage]), ignore_errors=True)
        run.manifest.stages[stage] = StageState()
        for key in (f"{stage}_started", f"{stage}_finished"):
            run.manifest.timestamps.pop(key, None)


# stages


def _ingest(run: Run, backend: Backend | None, **_: Any) -> None:
    cfg = run.config
    docs = ingest_corpus(run.resolve(cfg.corpus_dir))
    chunks = [c for doc in docs for c in chunk_document(doc, cfg.chunk_size, cfg.chunk_overlap)]
    documents = [
        {
            "doc_id": d.doc_id,
            "title": d.title,
            "source": Path(d.source_path).name,
            "tokens": count_tokens(d.body),
            "sha256": hashlib.sha256(d.body.encode("utf-8")).hexdigest(),
        }
        for d in docs
    ]
    dump_json(run.path("ingest/documents.json"), documents)
    dump_json(run.path("ingest/chunks.json"), [{**c.to_record(), "text": c.text} for c in chunks])
    index = RetrievalIndex(chunks)
    stats = index.statistics()
    stats["avg_length"] = round(stats["avg_length"], 6)
    dump_json(run.path("ingest/index.json"), {**stats, "chunk_size": cfg.chunk_size, "chunk_overlap": cfg.chunk_overlap})


def _gencq(run: Run, backend: Backend, **_: Any) -> None:
    cqs = generate_cqs(backend, run.config.domain_prompt, run.config.backend.params())
    cqs.save(run.path("gencq/cqs_round0.json"))
    export_for_review(cqs, run.path("gencq/review.tsv"))


def _ontology(run: Run, backend: Backend, **_: Any) -> None:
    cfg = run.config
    params = cfg.backend.params()
    foundation = run.foundation()
    concepts = extract_concept_set(backend, run.cqs(), params)
    dump_json(run.path("ontology/concepts.json"), concepts.to_dict())
    raw = draft_ontology(backend, concepts, cfg.base_iri, foundation, params, cfg.base_prefix)
    write_atomic(run.path("ontology/draft.txt"), raw)
    spec = normalize_ontology(raw, concepts, cfg.base_iri, foundation, cfg.base_prefix)
    write_atomic(run.path("ontology/ontology.ttl"), serialize_turtle(spec.graph))
    dump_json(run.path("ontology/repair.json"), spec.repair.to_dict() if spec.repair else None)
    dump_json(run.path("ontology/ontology.json"), spec.sidecar())


def _answer(run: Run, backend: Backend, **_: Any) -> None:
    cfg = run.config
    index = run.index()
    cqs = run.cqs().approved()
    settings = AnswerSettings(cfg.retrieval_k, cfg.answer_version, cfg.dont_know_patterns, cfg.backend.params())
    for doc_id in run.doc_ids():
        answers = _parallel(lambda cq: answer_cq(backend, index, cq, doc_id, settings), cqs, cfg.concurrency)
        dump_json(run.answers_path(doc_id), [a.to_dict() for a in answers])


def _buildkg(run: Run, backend: Backend, **_: Any) -> None:
    cfg = run.config
    cqs = run.cqs()
    ontology = run.ontology()

    def one(doc_id: str) -> None:
        result = build_kg(backend, cqs, run.answers(doc_id), ontology, doc_id, cfg.prompt_version, cfg.backend.params())
        out = run.kg_dir(doc_id)
        write_atomic(out / "raw.txt", result.raw_text)
        dump_json(out / "repair.json", result.repair.to_dict())
        if result.status == STATUS_OK:
            write_atomic(out / "graph.ttl", serialize_turtle(result.graph))
            dump_json(out / "validation.json", validate_kg(result, ontology).to_dict())
            dump_json(out / "links.json", [link.to_dict() for link in link_individuals(result, ontology, cqs)])
        # written last: its presence marks the document as done
        dump_json(out / "status.json", result.status_dict())

    _parallel(one, run.doc_ids(), cfg.concurrency)


def _ground_truth_text(run: Run, ground_truth: str | Path | None) -> str:
    """An explicit file wins, then the copy kept from an earlier evaluation, then the config entry."""
    if ground_truth is not None:
        if not Path(ground_truth).is_file():
            raise CheckpointError(f"ground-truth file {ground_truth} does not exist")
        return Path(ground_truth).read_text(encoding="utf-8")
    candidates = [run.path(GROUND_TRUTH_COPY)]
    if run.config.ground_truth:
        candidates.append(run.resolve(run.config.ground_truth))
    for path in candidates:
        if path.is_file():
            return path.read_text(encoding="utf-8")
    raise CheckpointError(
        "evaluation needs a human ground-truth file: pass --ground-truth or set ground_truth in the config"
    )


def _evaluate(run: Run, backend: Backend, ground_truth_records: list[GroundTruth], **_: Any) -> None:
    cfg = run.config
    params = cfg.backend.params()
    cqs = run.cqs()
    doc_ids = run.doc_ids()
    answers = {(a.cq_id, a.doc_id): a for doc_id in doc_ids for a in run.answers(doc_id)}
    missing = [(g.cq_id, g.doc_id) for g in ground_truth_records if (g.cq_id, g.doc_id) not in answers]
    if missing:
        raise AlignmentError("ground truth refers to pairs without a generated answer", missing)

    def judge(g: GroundTruth) -> tuple[JudgeVerdict | None, str | None]:
        try:
            return judge_answer(backend, g, answers[(g.cq_id, g.doc_id)], cqs.by_id(g.cq_id).text, params), None
        except VerdictParseError as exc:
            return None, str(exc)

    judged = _parallel(judge, ground_truth_records, cfg.concurrency)
    verdicts = {(g.cq_id, g.doc_id): v for g, (v, _) in zip(ground_truth_records, judged)}
    verdict_rows = [
        {
            "cq_id": g.cq_id,
            "doc_id": g.doc_id,
            "human_label": g.human_label.value,
            "verdict": v.to_dict() if v else None,
            "error": err,
        }
        for g, (v, err) in sorted(zip(ground_truth_records, judged), key=lambda item: (item[0].cq_id, item[0].doc_id))
    ]

    alignment: dict[str, DocumentAlignment] = {}
    verification_rows: list[dict[str, Any]] = []
    for doc_id in doc_ids:
        kg_dir = run.kg_dir(doc_id)
        status = _json(kg_dir / "status.json")
        if status["status"] != STATUS_OK:
            alignment[doc_id] = DocumentAlignment(doc_id, status["status"])
            continue
        individuals = [KgIndividual.from_dict(i) for i in status["individuals"]]
        links = {link.individual_iri: link for link in map(IndividualLink.from_dict, _json(kg_dir / "links.json"))}
        pairs = [
            (ind, cq_id)
            for ind in individuals
            for cq_id in (links[ind.iri].cq_ids if ind.iri in links else ())
            if (cq_id, doc_id) in answers
        ]

        def verify(pair: tuple[KgIndividual, str]) -> bool | None:
            ind, cq_id = pair
            try:
                return verify_individual(backend, ind, answers[(cq_id, doc_id)], params)
            except VerificationParseError:
                return None

        results: dict[str, dict[str, bool | None]] = {ind.iri.value: {} for ind in individuals}
        for (ind, cq_id), verdict in zip(pairs, _parallel(verify, pairs, cfg.concurrency)):
            results[ind.iri.value][cq_id] = verdict
        matched = total = unevaluated = 0
        for ind in individuals:
            per_cq = results[ind.iri.value]
            if not per_cq and cfg.exclude_unlinked:
                outcome = "excluded"
            elif any(v is True for v in per_cq.values()):
                outcome = "matched"
            elif per_cq and all(v is None for v in per_cq.values()):
                outcome = "unevaluated"
            else:
                outcome = "unmatched"
            matched += outcome == "matched"
            total += outcome in ("matched", "unmatched")
            unevaluated += outcome == "unevaluated"
            verification_rows.append(
                {
                    "doc_id": doc_id,
                    "individual": ind.iri.value,
                    "label": ind.label,
                    "results": per_cq,
                    "outcome": outcome,
                }
            )
        alignment[doc_id] = DocumentAlignment(doc_id, status["status"], matched, total, unevaluated)

    report = EvaluationReport(verdicts, disagreement_report(ground_truth_records, verdicts), alignment)
    dump_json(run.path("evaluate/verdicts.json"), verdict_rows)
    dump_json(run.path("evaluate/verifications.json"), verification_rows)
    dump_json(run.path("evaluate/report.json"), report.to_dict())


STAGE_FUNCS: dict[str, Callable[..., None]] = {
    "ingest": _ingest,
    "gencq": _gencq,
    "ontology": _ontology,
    "answer": _answer,
    "buildkg": _buildkg,
    "evaluate": _evaluate,
}


def run_stage(run: Run, stage: str, backend: Backend | None = None, *, ground_truth: str | Path | None = None) -> RunManifest:
    """Run one stage; re-running a done stage resets every stage after it."""
    manifest = run.manifest
    check_order(manifest, stage)
    extra: dict[str, Any] = {}
    if stage == "evaluate":
        # the checkpoint is checked before anything is touched
        text = _ground_truth_text(run, ground_truth)
        write_atomic(run.path(GROUND_TRUTH_COPY), text)
        extra["ground_truth_records"] = load_ground_truth(run.path(GROUND_TRUTH_COPY))
    if backend is None and stage != "ingest":
        backend = run.backend()

    position = STAGES.index(stage)
    _reset(run, STAGES[position:])
    run.path(STAGE_DIRS[stage]).mkdir(parents=True)
    manifest.timestamps[f"{stage}_started"] = now_iso()
    run.save_manifest()
    try:
        STAGE_FUNCS[stage](run, backend, **extra)
    except Exception as exc:
        manifest.stages[stage] = StageState("failed", _stage_files(run, stage), f"{type(exc).__name__}: {exc}")
        run.save_manifest()
        raise
    manifest.stages[stage] = StageState(
        "awaiting_review" if stage == "gencq" else "done", _stage_files(run, stage)
    )
    manifest.timestamps[f"{stage}_finished"] = now_iso()
    run.save_manifest()
    return manifest


# human review checkpoint


def review_export(run: Run, out: str | Path | None = None) -> Path:
    if run.manifest.status("gencq") not in ("awaiting_review", "done"):
        raise OrderingError("there are no generated competency questions to export yet")
    path = Path(out) if out is not None else run.path("gencq/review.tsv")
    return export_for_review(run.cqs(), path)


def review_import(run: Run, path: str | Path | None = None) -> RunManifest:
    """Import a reviewed file; this is the only way past the stage-2 checkpoint."""
    manifest = run.manifest
    if manifest.status("ingest") != "done" or manifest.status("gencq") not in ("awaiting_review", "done"):
        raise OrderingError("run gencq before importing a review")
    source = Path(path) if path is not None else run.path("gencq/review.tsv")
    if not source.is_file():
        raise CheckpointError(f"review file {source} does not exist")
    reviewed = import_reviewed(source, run.cqs())
    text = source.read_text(encoding="utf-8")
    _reset(run, STAGES[STAGES.index("ontology") :])
    reviewed.save(run.path(f"gencq/cqs_round{reviewed.review_round}.json"))
    write_atomic(run.path(f"gencq/review_round{reviewed.review_round}.tsv"), text)
    manifest.stages["gencq"] = StageState("done", _stage_files(run, "gencq"))
    manifest.timestamps["gencq_reviewed"] = now_iso()
    run.save_manifest()
    return manifest


# resume


def _stage_complete(run: Run, stage: str) -> str:
    """``done``, ``awaiting_review`` or ``pending`` judged from files alone."""
    p = run.path
    if stage == "ingest":
        ok = all(p(f"ingest/{n}.json").is_file() for n in ("documents", "chunks", "index"))
    elif stage == "gencq":
        rounds = run.cq_rounds()
        if 0 not in rounds:
            return "pending"
        return "done" if any(r >= 1 for r in rounds) else "awaiting_review"
    elif stage == "ontology":
        ok = all(p(f"ontology/{n}").is_file() for n in ("concepts.json", "ontology.ttl", "ontology.json"))
    elif stage == "answer":
        ok = all(run.answers_path(d).is_file() for d in run.doc_ids())
    elif stage == "buildkg":
        ok = all((run.kg_dir(d) / "status.json").is_file() for d in run.doc_ids())
    else:
        ok = p("evaluate/report.json").is_file()
    return "done" if ok else "pending"


def resume(root: str | Path, run_id: str) -> RunManifest:
    """Rebuild the manifest from the artifacts on disk.

    A stage counts as done only if its files are complete and every earlier
    stage is done, so deleting a stage's files makes it and all later stages
    runnable again. Calling this twice gives the same manifest. An unreadable
    manifest is replaced, losing only its timestamps and failure diagnostics.
    """
    run = open_run(root, run_id)
    try:
        old = run.manifest
    except CorruptManifestError as exc:
        logger.warning("%s; rebuilding it from the artifacts", exc)
        old = RunManifest(run_id, run.config.prompt_version, run.config.answer_version)
    rebuilt = RunManifest(run_id, run.config.prompt_version, run.config.answer_version)
    blocked = False
    for stage in STAGES:
        status = "pending" if blocked else _stage_complete(run, stage)
        previous = old.stages[stage]
        if status == "pending" and previous.status == "failed" and not blocked:
            rebuilt.stages[stage] = StageState("failed", _stage_files(run, stage), previous.diagnostic)
        elif status == "pending":
            rebuilt.stages[stage] = StageState()
        else:
            rebuilt.stages[stage] = StageState(status, _stage_files(run, stage))
            for key in (f"{stage}_started", f"{stage}_finished", f"{stage}_reviewed"):
                if key in old.timestamps:
                    rebuilt.timestamps[key] = old.timestamps[key]
        blocked = blocked or status != "done"
    if "created" in old.timestamps:
        rebuilt.timestamps["created"] = old.timestamps["created"]
    run._manifest = rebuilt
    run.save_manifest()
    return rebuilt


def continue_run(run: Run, backend: Backend | None = None, ground_truth: str | Path | None = None) -> RunManifest:
    """Run every runnable stage in order, stopping at a human checkpoint."""
    while (stage := run.manifest.next_runnable()) is not None:
        run_stage(run, stage, backend, ground_truth=ground_truth)
    if run.manifest.status("gencq") == "awaiting_review":
        raise CheckpointError("competency questions are awaiting review; run review-import to continue")
    return run.manifest
