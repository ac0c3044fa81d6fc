"""Per-run manifest: stage statuses, artifact lists and the only timestamps in a run."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from ontokg.errors import OntoKGError

STAGES = ("ingest", "gencq", "ontology", "answer", "buildkg", "evaluate")
STATUSES = ("pending", "done", "failed", "awaiting_review")

MANIFEST_NAME = "manifest.json"
CONFIG_NAME = "config.json"


class CorruptManifestError(OntoKGError):
    def __init__(self, path: Path, reason: str):
        super().__init__(f"corrupt manifest {path}: {reason}")
        self.path = path


def now_iso() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(path: Path, data: Any) -> None:
    write_atomic(path, json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


@dataclass
class StageState:
    status: str = "pending"
    artifacts: list[str] = field(default_factory=list)
    diagnostic: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"status": self.status, "artifacts": sorted(self.artifacts), "diagnostic": self.diagnostic}


@dataclass
class RunManifest:
    run_id: str
    prompt_version: str
    answer_version: str
    stages: dict[str, StageState] = field(default_factory=lambda: {s: StageState() for s in STAGES})
    timestamps: dict[str, str] = field(default_factory=dict)

    def status(self, stage: str) -> str:
        return self.stages[stage].status

    def next_runnable(self) -> str | None:
        """First stage that is not done, if every stage before it is done."""
        for stage in STAGES:
            state = self.stages[stage].status
            if state == "done":
                continue
            if state == "awaiting_review":
                return None
            return stage
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "prompt_version": self.prompt_version,
            "answer_version": self.answer_version,
            "stages": {s: self.stages[s].to_dict() for s in STAGES},
            "timestamps": dict(sorted(self.timestamps.items())),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunManifest:
        stages = {}
        for s in STAGES:
            raw = data["stages"][s]
            if raw["status"] not in STATUSES:
                raise ValueError(f"unknown status {raw['status']!r} for stage {s}")
            stages[s] = StageState(raw["status"], list(raw["artifacts"]), raw.get("diagnostic"))
        return cls(data["run_id"], data["prompt_version"], data["answer_version"], stages, dict(data["timestamps"]))

    def save(self, run_dir: Path) -> None:
        dump_json(run_dir / MANIFEST_NAME, self.to_dict())

    @classmethod
    def load(cls, run_dir: Path) -> RunManifest:
        path = run_dir / MANIFEST_NAME
        try:
            return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except FileNotFoundError:
            raise CorruptManifestError(path, "file is missing") from None
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CorruptManifestError(path, str(exc)) from None
