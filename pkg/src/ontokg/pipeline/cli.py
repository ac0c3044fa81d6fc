"""``ontokg`` command line: one verb per stage plus review, report and resume.

Exit codes: 0 success, 1 other errors, 3 stage ordering, 4 human checkpoint,
5 backend, 6 parse, 7 configuration.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ontokg import __version__
from ontokg.errors import OntoKGError
from ontokg.pipeline import stages
from ontokg.pipeline.backends import make_backend
from ontokg.pipeline.config import load_config
from ontokg.pipeline.report import emit_report

EXIT_OK = 0
EXIT_INTERRUPTED = 130

logger = logging.getLogger("ontokg")


def _add_run(p: argparse.ArgumentParser) -> None:
    p.add_argument("--run", required=True, help="run id; artifacts go to <root>/runs/<run>/")


def _add_backend_overrides(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("backend overrides (this invocation only)")
    g.add_argument("--backend-mode", choices=("live", "record", "replay"))
    g.add_argument("--fixtures", help="replay fixture directory")
    g.add_argument("--base-url", help="OpenAI-compatible server URL")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ontokg", description=__doc__.splitlines()[0])
    parser.add_argument("--root", default=".", help="workspace holding the runs/ directory (default: .)")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("ingest", help="create a run (if needed) and chunk and index the corpus")
    _add_run(p)
    p.add_argument("--config", help="JSON config; required when the run does not exist yet")
    p.add_argument("--prompt-version", choices=("v1", "v2"))
    p.add_argument("--answer-version", choices=("v1", "v2"))
    p.add_argument("--ground-truth", help="ground-truth TSV recorded in the config snapshot")
    p.add_argument("--share-from", metavar="RUN", help="copy ingest, gencq and ontology artifacts from another run")

    for verb, text in (
        ("gencq", "generate competency questions and export them for review"),
        ("ontology", "extract concepts and build the ontology"),
        ("answer", "answer every CQ for every document"),
        ("buildkg", "build one knowledge graph per document"),
    ):
        p = sub.add_parser(verb, help=text)
        _add_run(p)
        _add_backend_overrides(p)

    p = sub.add_parser("review-export", help="write the current CQ set as a review file")
    _add_run(p)
    p.add_argument("--out", help="review file path (default: runs/<run>/gencq/review.tsv)")

    p = sub.add_parser("review-import", help="import a reviewed CQ file; required before the ontology stage")
    _add_run(p)
    p.add_argument("--file", help="reviewed file (default: runs/<run>/gencq/review.tsv)")

    p = sub.add_parser("evaluate", help="judge answers and verify KG individuals; needs a ground-truth file")
    _add_run(p)
    p.add_argument("--ground-truth", help="human ground-truth TSV: cq_id, doc_id, label, text")
    _add_backend_overrides(p)

    p = sub.add_parser("report", help="cross-run CSV/markdown report with figures")
    p.add_argument("--runs", nargs="+", required=True, metavar="RUN")
    p.add_argument("--out", default="report", help="output directory, relative to --root (default: report)")

    p = sub.add_parser("resume", help="rebuild a run's manifest from its artifacts")
    _add_run(p)
    p.add_argument("--execute", action="store_true", help="then run every remaining stage up to the next checkpoint")
    p.add_argument("--ground-truth")
    _add_backend_overrides(p)
    return parser


def _backend(run: stages.Run, args: argparse.Namespace):
    overrides = {}
    if getattr(args, "backend_mode", None):
        overrides["mode"] = args.backend_mode
    if getattr(args, "fixtures", None):
        overrides["fixtures"] = str(Path(args.fixtures).resolve())
    if getattr(args, "base_url", None):
        overrides["base_url"] = args.base_url
    config = replace(run.config.backend, **overrides)
    return make_backend(config, run.root, run.config.concurrency)


def _print_manifest(manifest) -> None:
    for stage in stages.STAGES:
        print(f"{stage:<9} {manifest.status(stage)}")
    nxt = manifest.next_runnable()
    print(f"next: {nxt or '-'}")


def _ingest(args: argparse.Namespace) -> None:
    run = stages.Run(args.root, args.run)
    if args.config is None:
        if not run.exists():
            raise OntoKGError(f"run {args.run} does not exist; pass --config to create it")
    else:
        config = load_config(args.config).with_overrides(
            prompt_version=args.prompt_version,
            answer_version=args.answer_version,
            ground_truth=str(Path(args.ground_truth).resolve()) if args.ground_truth else None,
        )
        run = stages.create_run(args.root, args.run, config, args.share_from)
    if args.share_from is not None:
        print(f"shared ingest, gencq and ontology from {args.share_from}")
    else:
        stages.run_stage(run, "ingest")
    _print_manifest(run.manifest)


def _stage(args: argparse.Namespace) -> None:
    run = stages.open_run(args.root, args.run)
    stage = args.verb
    stages.run_stage(run, stage, _backend(run, args), ground_truth=getattr(args, "ground_truth", None))
    if stage == "gencq":
        print(f"competency questions written to {run.path('gencq/review.tsv')}")
        print("edit that file, then run review-import to continue")
    _print_manifest(run.manifest)


def _review_export(args: argparse.Namespace) -> None:
    run = stages.open_run(args.root, args.run)
    print(stages.review_export(run, args.out))


def _review_import(args: argparse.Namespace) -> None:
    run = stages.open_run(args.root, args.run)
    stages.review_import(run, args.file)
    print(f"imported {len(run.cqs())} reviewed competency questions")
    _print_manifest(run.manifest)


def _report(args: argparse.Namespace) -> None:
    out = Path(args.out)
    if not out.is_absolute():
        out = Path(args.root) / out
    for path in emit_report(args.root, args.runs, out):
        print(path)


def _resume(args: argparse.Namespace) -> None:
    manifest = stages.resume(args.root, args.run)
    if args.execute:
        run = stages.open_run(args.root, args.run)
        manifest = stages.continue_run(run, _backend(run, args), args.ground_truth)
    _print_manifest(manifest)


HANDLERS = {
    "ingest": _ingest,
    "gencq": _stage,
    "ontology": _stage,
    "answer": _stage,
    "buildkg": _stage,
    "evaluate": _stage,
    "review-export": _review_export,
    "review-import": _review_import,
    "report": _report,
    "resume": _resume,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        HANDLERS[args.verb](args)
    except OntoKGError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return EXIT_INTERRUPTED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
