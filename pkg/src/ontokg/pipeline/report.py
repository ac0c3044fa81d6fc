"""Cross-run report: a documents x (prompt, answer) version matrix plus figures."""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Sequence
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ontokg.errors import OntoKGError  # noqa: E402
from ontokg.evaluation import NO_KG_CELL, DocumentAlignment, EvaluationReport, Label, pooled_alignment  # noqa: E402
from ontokg.pipeline.manifest import write_atomic  # noqa: E402
from ontokg.pipeline.stages import Run, open_run  # noqa: E402

# Figures carry no software version or date so repeated reports are byte-identical.
PNG_METADATA = {"Software": None}
MISSING_CELL = ""


class MissingEvaluationError(OntoKGError):
    def __init__(self, run_ids: Sequence[str]):
        self.run_ids = list(run_ids)
        super().__init__(f"evaluation is not done for run(s): {', '.join(self.run_ids)}")


@dataclass(frozen=True)
class ReportColumn:
    run_id: str
    prompt_version: str
    answer_version: str
    evaluation: EvaluationReport

    @property
    def title(self) -> str:
        return f"prompt {self.prompt_version} / answers {self.answer_version}"


@dataclass(frozen=True)
class CrossRunReport:
    columns: tuple[ReportColumn, ...]
    doc_ids: tuple[str, ...]

    def headers(self) -> list[str]:
        titles = [c.title for c in self.columns]
        # two runs with the same combination are told apart by run id
        return [f"{t} ({c.run_id})" if titles.count(t) > 1 else t for t, c in zip(titles, self.columns)]

    def cell(self, doc_id: str, column: ReportColumn) -> str:
        row = column.evaluation.alignment.get(doc_id)
        return MISSING_CELL if row is None else row.cell()

    def matrix(self) -> list[list[str]]:
        return [[self.cell(d, c) for c in self.columns] for d in self.doc_ids]

    def pooled(self, column: ReportColumn) -> tuple[int, int, Decimal | None]:
        return pooled_alignment(column.evaluation.alignment.values())

    def summary_lines(self) -> list[str]:
        lines = []
        for header, column in zip(self.headers(), self.columns):
            dis = column.evaluation.disagreement
            if dis is not None:
                lines.append(f"{header}: {dis.summary_line()}")
            matched, total, percent = self.pooled(column)
            if percent is None:
                lines.append(f"{header}: no evaluable KG individuals")
            else:
                lines.append(f"{header}: {matched} of {total} KG individuals in line with CQ answers ({percent:.2f}%)")
        return lines

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["document", *self.headers()])
        for doc_id, row in zip(self.doc_ids, self.matrix()):
            writer.writerow([doc_id, *row])
        return buf.getvalue()

    def to_markdown(self) -> str:
        headers = ["document", *self.headers()]
        lines = [
            "| " + " | ".join(headers) + " |",
            "|" + "|".join(["---"] + ["---:"] * len(self.columns)) + "|",
        ]
        for doc_id, row in zip(self.doc_ids, self.matrix()):
            lines.append("| " + " | ".join([doc_id, *row]) + " |")
        lines += [
            "",
            "Cells give the percentage of KG individuals in line with the CQ answers; "
            f'"{NO_KG_CELL}" marks a document for which no meaningful KG was generated.',
            "",
        ]
        lines += [f"- {line}" for line in self.summary_lines()]
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        columns = []
        for header, column in zip(self.headers(), self.columns):
            matched, total, percent = self.pooled(column)
            dis = column.evaluation.disagreement
            columns.append(
                {
                    "header": header,
                    "run_id": column.run_id,
                    "prompt_version": column.prompt_version,
                    "answer_version": column.answer_version,
                    "pooled_matched": matched,
                    "pooled_total": total,
                    "pooled_percent": None if percent is None else f"{percent:.2f}",
                    "disagreement": None if dis is None else dis.to_dict(),
                }
            )
        return {"documents": list(self.doc_ids), "columns": columns, "matrix": self.matrix()}


def collect(root: str | Path, run_ids: Sequence[str]) -> CrossRunReport:
    if not run_ids:
        raise OntoKGError("report needs at least one run")
    runs: list[Run] = [open_run(root, r) for r in run_ids]
    missing = [r.run_id for r in runs if r.manifest.status("evaluate") != "done" or not r.path("evaluate/report.json").is_file()]
    if missing:
        raise MissingEvaluationError(missing)
    columns = []
    for run in runs:
        data = json.loads(run.path("evaluate/report.json").read_text(encoding="utf-8"))
        columns.append(ReportColumn(run.run_id, run.config.prompt_version, run.config.answer_version, EvaluationReport.from_dict(data)))
    columns.sort(key=lambda c: (c.prompt_version, c.answer_version, c.run_id))
    doc_ids = sorted({d for c in columns for d in c.evaluation.alignment})
    return CrossRunReport(tuple(columns), tuple(doc_ids))


def _alignment_figure(report: CrossRunReport, path: Path) -> None:
    values = np.full((len(report.doc_ids), len(report.columns)), np.nan)
    for i, doc_id in enumerate(report.doc_ids):
        for j, column in enumerate(report.columns):
            row: DocumentAlignment | None = column.evaluation.alignment.get(doc_id)
            if row is not None and row.percent is not None:
                values[i, j] = float(row.percent)
    fig, ax = plt.subplots(figsize=(2.0 + 1.6 * len(report.columns), 1.2 + 0.5 * len(report.doc_ids)))
    cmap = matplotlib.colormaps["viridis"].copy()
    cmap.set_bad("#d9d9d9")
    image = ax.imshow(np.ma.masked_invalid(values), cmap=cmap, vmin=0, vmax=100, aspect="auto")
    for i, doc_id in enumerate(report.doc_ids):
        for j, column in enumerate(report.columns):
            text = report.cell(doc_id, column)
            dark = not np.isnan(values[i, j]) and values[i, j] < 60
            ax.text(j, i, text, ha="center", va="center", color="white" if dark else "black", fontsize=8)
    ax.set_xticks(range(len(report.columns)), [c.title.replace(" / ", "\n") for c in report.columns], fontsize=8)
    ax.set_yticks(range(len(report.doc_ids)), report.doc_ids, fontsize=8)
    fig.colorbar(image, ax=ax, label="% individuals in line with answers")
    fig.tight_layout()
    fig.savefig(path, format="png", dpi=100, metadata=PNG_METADATA)
    plt.close(fig)


def _confusion_figure(report: CrossRunReport, path: Path) -> None:
    labels = [label.value for label in Label]
    columns = [c for c in report.columns if c.evaluation.disagreement is not None]
    fig, axes = plt.subplots(1, max(1, len(columns)), figsize=(0.5 + 3.0 * max(1, len(columns)), 3.2), squeeze=False)
    for ax, column in zip(axes[0], columns):
        confusion = column.evaluation.disagreement.confusion
        matrix = np.array([[confusion[h][j] for j in labels] for h in labels])
        ax.imshow(matrix, cmap="Blues")
        for i in range(3):
            for j in range(3):
                ax.text(j, i, str(matrix[i, j]), ha="center", va="center", fontsize=9)
        ax.set_xticks(range(3), labels, fontsize=8)
        ax.set_yticks(range(3), labels, fontsize=8)
        ax.set_xlabel("judge")
        ax.set_ylabel("human")
        ax.set_title(column.title, fontsize=8)
    if not columns:
        axes[0][0].axis("off")
    fig.tight_layout()
    fig.savefig(path, format="png", dpi=100, metadata=PNG_METADATA)
    plt.close(fig)


def emit_report(root: str | Path, run_ids: Sequence[str], out_dir: str | Path) -> list[Path]:
    """Write ``alignment.csv``, ``alignment.md``, ``summary.json`` and two PNG figures."""
    report = collect(root, run_ids)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in (
        ("alignment.csv", report.to_csv()),
        ("alignment.md", report.to_markdown()),
        ("summary.json", json.dumps(report.summary(), indent=2, sort_keys=True) + "\n"),
    ):
        write_atomic(out / name, text)
        written.append(out / name)
    _alignment_figure(report, out / "alignment.png")
    _confusion_figure(report, out / "confusion.png")
    written += [out / "alignment.png", out / "confusion.png"]
    return written
