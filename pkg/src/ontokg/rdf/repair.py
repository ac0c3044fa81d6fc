"""Recover a Turtle graph from model output that is not clean Turtle.

Repairs run in a fixed order: strip markdown fences, strip leading and
trailing prose lines, declare known prefixes that are used but undeclared,
then drop statements that still fail to parse. Valid Turtle passes through
with no actions.
"""

from __future__ import annotations

import re
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any

from ontokg.errors import ParseError
from ontokg.rdf.model import KNOWN_NAMESPACES, RdfGraph
from ontokg.rdf.turtle import PN_PREFIX, TurtleError, parse_turtle

ACTION_KINDS = ("stripped_fence", "stripped_prose", "injected_prefix", "dropped_statement")


@dataclass(frozen=True)
class RepairAction:
    kind: str
    detail: str

    def __post_init__(self) -> None:
        if self.kind not in ACTION_KINDS:
            raise ValueError(f"unknown repair action {self.kind!r}")


@dataclass(frozen=True)
class RepairReport:
    actions: tuple[RepairAction, ...] = ()
    recovered_text: str = ""

    def kinds(self) -> list[str]:
        return [a.kind for a in self.actions]

    def to_dict(self) -> dict[str, Any]:
        return {
            "actions": [{"kind": a.kind, "detail": a.detail} for a in self.actions],
            "recovered_text": self.recovered_text,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> RepairReport:
        return cls(
            tuple(RepairAction(a["kind"], a["detail"]) for a in data["actions"]),
            data["recovered_text"],
        )


class NoMeaningfulGraphError(ParseError):
    """No triple survived repair."""

    def __init__(self, report: RepairReport, raw: str):
        super().__init__("no meaningful graph could be recovered from the text", raw=raw)
        self.report = report


_FENCE = re.compile(r"^\s*(```|~~~)")
_KNOWN_PREFIX_LINE = re.compile(r"^\s*(?:@prefix|@base|PREFIX\s|BASE\s)", re.IGNORECASE)
_TURTLE_START = re.compile(
    rf"""^\s*(?:
        \#|<|"|'|[.;,]
        |(?:{PN_PREFIX})?:[\w:]
        |a\s|[+-]?\.?\d|true\b|false\b
    )""",
    re.VERBOSE,
)
_BARE_PNAME = re.compile(rf"^\s*({PN_PREFIX})?:(?:\s|$)")
_DECLARED = re.compile(rf"(?:@prefix|\bPREFIX)\s+((?:{PN_PREFIX})?):", re.IGNORECASE)
_USED = re.compile(rf"(?<![\w.:\-@<])((?:{PN_PREFIX})?):(?=[\w:]|\s|$|[;,.])")
_IRIREF = re.compile(r"<[^<>\"{}|^`\\\s]*>")


def _strip_fences(text: str) -> tuple[str, RepairAction | None]:
    lines = text.split("\n")
    fences = [i for i, line in enumerate(lines) if _FENCE.match(line)]
    if not fences:
        return text, None
    kept: list[str] = []
    blocks = 0
    for n in range(0, len(fences), 2):
        start = fences[n] + 1
        end = fences[n + 1] if n + 1 < len(fences) else len(lines)
        kept.extend(lines[start:end])
        blocks += 1
    detail = f"extracted {blocks} fenced block{'s' if blocks != 1 else ''}"
    return "\n".join(kept), RepairAction("stripped_fence", detail)


def _looks_like_turtle(line: str, known: set[str]) -> bool:
    if not line.strip():
        return True
    if _KNOWN_PREFIX_LINE.match(line):
        return True
    m = _BARE_PNAME.match(line)
    if m:
        return (m.group(1) or "") in known
    return bool(_TURTLE_START.match(line))


def _strip_prose(text: str, known: set[str]) -> tuple[str, list[RepairAction]]:
    lines = text.split("\n")
    actions = []
    start = 0
    while start < len(lines) and not (lines[start].strip() and _looks_like_turtle(lines[start], known)):
        start += 1
    leading = [line for line in lines[:start] if line.strip()]
    if leading:
        actions.append(RepairAction("stripped_prose", f"dropped {len(leading)} leading line(s): {leading[0][:80]!r}"))
    end = len(lines)
    while end > start and not (lines[end - 1].strip() and _looks_like_turtle(lines[end - 1], known)):
        end -= 1
    trailing = [line for line in lines[end:] if line.strip()]
    if trailing:
        actions.append(
            RepairAction("stripped_prose", f"dropped {len(trailing)} trailing line(s): {trailing[0][:80]!r}")
        )
    return "\n".join(lines[start:end]), actions


def _code_regions(text: str) -> str:
    """``text`` with string literals, IRIs and comments blanked out."""
    out = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in "\"'":
            long_q = text[i : i + 3] == ch * 3
            q = ch * 3 if long_q else ch
            j = i + len(q)
            while j < n:
                if text[j] == "\\":
                    j += 2
                    continue
                if text.startswith(q, j):
                    j += len(q)
                    break
                if not long_q and text[j] == "\n":
                    break
                j += 1
            out.append(" " * (min(j, n) - i))
            i = min(j, n)
        elif ch == "<" and (m := _IRIREF.match(text, i)):
            out.append(" " * (m.end() - i))
            i = m.end()
        elif ch == "#":
            j = text.find("\n", i)
            j = n if j < 0 else j
            out.append(" " * (j - i))
            i = j
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _inject_prefixes(text: str, base_prefixes: Mapping[str, str]) -> tuple[str, list[RepairAction]]:
    code = _code_regions(text)
    declared = {m.group(1) for m in _DECLARED.finditer(code)}
    used = {m.group(1) for m in _USED.finditer(code)}
    missing = sorted(p for p in used - declared if p not in base_prefixes and p in KNOWN_NAMESPACES)
    if not missing:
        return text, []
    header = "".join(f"@prefix {p}: <{KNOWN_NAMESPACES[p]}> .\n" for p in missing)
    actions = [RepairAction("injected_prefix", f"{p}: <{KNOWN_NAMESPACES[p]}>") for p in missing]
    return header + text, actions


def split_statements(text: str) -> list[tuple[int, str]]:
    """Split text at top-level ``.`` terminators; returns (start offset, chunk).

    Concatenating the chunks gives back ``text``.
    """
    code = _code_regions(text)
    chunks = []
    start = 0
    n = len(code)
    for i, ch in enumerate(code):
        if ch != ".":
            continue
        nxt = code[i + 1] if i + 1 < n else ""
        if nxt == "" or nxt.isspace() or text[i + 1 : i + 2] == "#":
            chunks.append((start, text[start : i + 1]))
            start = i + 1
    if start < n:
        chunks.append((start, text[start:]))
    return chunks


def _line_of(text: str, offset: int) -> int:
    stripped = len(text[offset:]) - len(text[offset:].lstrip())
    return text.count("\n", 0, offset + stripped) + 1


def repair_rdf_text(raw: str, base_prefixes: Mapping[str, str] | None = None) -> tuple[RdfGraph, RepairReport]:
    """Recover the parseable part of ``raw``.

    Raises :class:`NoMeaningfulGraphError` when no triple survives.
    """
    base = dict(base_prefixes or {})
    try:
        graph = parse_turtle(raw, base)
    except TurtleError:
        pass
    else:
        report = RepairReport((), raw)
        if not graph.triples:
            raise NoMeaningfulGraphError(report, raw)
        return graph, report

    actions: list[RepairAction] = []
    text, fence_action = _strip_fences(raw)
    if fence_action:
        actions.append(fence_action)
    known = set(base) | set(KNOWN_NAMESPACES) | {m.group(1) for m in _DECLARED.finditer(text)}
    text, prose_actions = _strip_prose(text, known)
    actions.extend(prose_actions)
    text, prefix_actions = _inject_prefixes(text, base)
    actions.extend(prefix_actions)

    prefixes = dict(base)
    kept = []
    for offset, chunk in split_statements(text):
        if not chunk.strip():
            continue
        try:
            parsed = parse_turtle(chunk, prefixes)
        except TurtleError as exc:
            first = chunk.strip().splitlines()[0][:80]
            actions.append(RepairAction("dropped_statement", f"line {_line_of(text, offset)}: {exc} in {first!r}"))
            continue
        prefixes = dict(parsed.prefixes)
        kept.append(chunk)

    recovered = "".join(kept).strip("\n")
    recovered = recovered + "\n" if recovered else ""
    report = RepairReport(tuple(actions), recovered)
    graph = parse_turtle(recovered, base)
    if not graph.triples:
        raise NoMeaningfulGraphError(report, raw)
    return graph, report
