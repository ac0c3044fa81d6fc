"""A flat-statement subset of Turtle: parser and deterministic serializer.

Supported: ``@prefix``/``PREFIX``, ``@base``/``BASE``, IRIs, prefixed names,
``a``, ``;`` and ``,`` lists, short and long string literals with language
tags or datatypes, numeric and boolean literals, comments. Blank nodes,
property lists and collections are rejected.

One tolerance beyond the grammar: a ``;`` that is directly followed by a
complete ``subject predicate object`` sequence is read as a statement
terminator. Well-formed Turtle never has three terms in a row after ``;``,
so this changes the meaning of no valid document; it accepts the common
LLM slip of ending a subject block with ``;`` instead of ``.``.
"""

from __future__ import annotations

import bisect
import re
from collections.abc import Mapping
from dataclasses import dataclass
from urllib.parse import urljoin

from ontokg.errors import ParseError
from ontokg.rdf.model import (
    RDF_TYPE,
    XSD,
    Iri,
    Literal,
    RdfGraph,
    Term,
    Triple,
    term_sort_key,
)


class TurtleError(ParseError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class TurtleSyntaxError(TurtleError):
    pass


class UndefinedPrefixError(TurtleError):
    def __init__(self, prefix: str, line: int, column: int):
        super().__init__(f"undefined prefix {prefix!r}", line, column)
        self.prefix = prefix


PN_PREFIX = r"[A-Za-z](?:[\w.-]*[\w-])?"
PN_LOCAL = r"(?:[\w:](?:[\w.:-]*[\w:-])?)?"
_PN_LOCAL_FULL = re.compile(PN_LOCAL + r"\Z")
_PREFIX_NAME_FULL = re.compile(rf"(?:{PN_PREFIX})?\Z")
_ABSOLUTE_IRI = re.compile(r"[A-Za-z][A-Za-z0-9+.-]*:")

_TOKEN_SPEC = [
    ("WS", r"\s+"),
    ("COMMENT", r"#[^\n]*"),
    ("IRIREF", r"<[^<>\"{}|^`\\\s]*>"),
    ("LONG_STRING", r'"""(?:[^"\\]|\\.|"(?!""))*"""' + r"|'''(?:[^'\\]|\\.|'(?!''))*'''"),
    ("STRING", r'"(?:[^"\\\n\r]|\\.)*"' + r"|'(?:[^'\\\n\r]|\\.)*'"),
    ("DIRECTIVE", r"@(?:prefix|base)\b"),
    ("LANGTAG", r"@[A-Za-z]+(?:-[A-Za-z0-9]+)*"),
    ("DTYPE", r"\^\^"),
    ("PNAME", rf"(?:{PN_PREFIX})?:{PN_LOCAL}"),
    ("DOUBLE", r"[+-]?(?:\d+\.\d*[eE][+-]?\d+|\.\d+[eE][+-]?\d+|\d+[eE][+-]?\d+)"),
    ("DECIMAL", r"[+-]?\d*\.\d+"),
    ("INTEGER", r"[+-]?\d+"),
    ("NAME", r"[A-Za-z_]\w*"),
    ("PUNCT", r"[.;,]"),
    ("UNSUPPORTED", r"[\[\]()]|_:"),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{name}>{pattern})" for name, pattern in _TOKEN_SPEC))

_ESCAPES = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}
_ESCAPE_RE = re.compile(r"\\(u[0-9A-Fa-f]{4}|U[0-9A-Fa-f]{8}|.)", re.DOTALL)

_TERM_KINDS = {"IRIREF", "PNAME", "STRING", "LONG_STRING", "DOUBLE", "DECIMAL", "INTEGER", "NAME"}


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


class _Positions:
    def __init__(self, text: str):
        self._starts = [0] + [m.end() for m in re.finditer("\n", text)]

    def at(self, pos: int) -> tuple[int, int]:
        line = bisect.bisect_right(self._starts, pos)
        return line, pos - self._starts[line - 1] + 1


def _tokenize(text: str, positions: _Positions) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            line, col = positions.at(pos)
            raise TurtleSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        if kind == "UNSUPPORTED":
            line, col = positions.at(pos)
            raise TurtleSyntaxError(
                f"blank nodes, property lists and collections are not supported ({m.group()!r})", line, col
            )
        if kind not in ("WS", "COMMENT"):
            tokens.append(_Token(kind, m.group(), pos))
        pos = m.end()
    return tokens


def _unescape(body: str, line: int, col: int) -> str:
    def repl(m: re.Match) -> str:
        code = m.group(1)
        if code[0] in "uU" and len(code) > 1:
            value = int(code[1:], 16)
            if value > 0x10FFFF or 0xD800 <= value <= 0xDFFF:
                raise TurtleSyntaxError(f"invalid code point escape \\{code}", line, col)
            return chr(value)
        if code in _ESCAPES:
            return _ESCAPES[code]
        raise TurtleSyntaxError(f"invalid escape \\{code}", line, col)

    return _ESCAPE_RE.sub(repl, body)


class _Parser:
    def __init__(self, text: str, base_prefixes: Mapping[str, str], lenient: bool):
        self.positions = _Positions(text)
        self.tokens = _tokenize(text, self.positions)
        self.i = 0
        self.prefixes = dict(base_prefixes)
        self.base: str | None = None
        self.lenient = lenient
        self.triples: set[Triple] = set()

    # token helpers

    def _peek(self, offset: int = 0) -> _Token | None:
        j = self.i + offset
        return self.tokens[j] if j < len(self.tokens) else None

    def _error(self, message: str, token: _Token | None) -> TurtleSyntaxError:
        pos = token.pos if token is not None else (self.tokens[-1].pos + len(self.tokens[-1].text) if self.tokens else 0)
        line, col = self.positions.at(pos)
        return TurtleSyntaxError(message, line, col)

    def _next(self, what: str) -> _Token:
        tok = self._peek()
        if tok is None:
            raise self._error(f"unexpected end of input, expected {what}", None)
        self.i += 1
        return tok

    def _expect_punct(self, char: str) -> None:
        tok = self._next(f"'{char}'")
        if tok.kind != "PUNCT" or tok.text != char:
            raise self._error(f"expected '{char}', found {tok.text!r}", tok)

    # grammar

    def parse(self) -> None:
        while self._peek() is not None:
            tok = self._peek()
            if tok.kind == "DIRECTIVE":
                self.i += 1
                self._directive(tok.text[1:], tok, sparql=False)
            elif tok.kind == "NAME" and tok.text.upper() in ("PREFIX", "BASE"):
                self.i += 1
                self._directive(tok.text.lower(), tok, sparql=True)
            else:
                self._triples()

    def _directive(self, name: str, tok: _Token, sparql: bool) -> None:
        if name == "prefix":
            ns_tok = self._next("prefix name")
            if ns_tok.kind != "PNAME" or not ns_tok.text.endswith(":") or ns_tok.text.count(":") != 1:
                raise self._error(f"expected 'prefix:' in prefix declaration, found {ns_tok.text!r}", ns_tok)
            iri = self._iriref(self._next("namespace IRI"))
            self.prefixes[ns_tok.text[:-1]] = iri
        else:
            self.base = self._iriref(self._next("base IRI"))
        if not sparql:
            self._expect_punct(".")

    def _iriref(self, tok: _Token) -> str:
        if tok.kind != "IRIREF":
            raise self._error(f"expected <IRI>, found {tok.text!r}", tok)
        value = tok.text[1:-1]
        if not _ABSOLUTE_IRI.match(value):
            if self.base is None:
                raise self._error(f"relative IRI <{value}> with no base", tok)
            value = urljoin(self.base, value)
        if not value:
            raise self._error("empty IRI", tok)
        return value

    def _iri(self, tok: _Token) -> Iri:
        if tok.kind == "IRIREF":
            return Iri(self._iriref(tok))
        if tok.kind == "PNAME":
            prefix, _, local = tok.text.partition(":")
            if prefix not in self.prefixes:
                line, col = self.positions.at(tok.pos)
                raise UndefinedPrefixError(prefix, line, col)
            return Iri(self.prefixes[prefix] + local)
        raise self._error(f"expected an IRI, found {tok.text!r}", tok)

    def _triples(self) -> None:
        subject = self._iri(self._next("subject"))
        self._predicate_object_list(subject)

    def _predicate_object_list(self, subject: Iri) -> None:
        while True:
            predicate = self._verb(self._next("predicate"))
            while True:
                self.triples.add(Triple(subject, predicate, self._object(self._next("object"))))
                sep = self._next("',', ';' or '.'")
                if sep.kind != "PUNCT":
                    raise self._error(f"expected ',', ';' or '.', found {sep.text!r}", sep)
                if sep.text == ",":
                    continue
                if sep.text == ".":
                    return
                break
            # after ';'
            while (tok := self._peek()) is not None and tok.kind == "PUNCT" and tok.text == ";":
                self.i += 1
            tok = self._peek()
            if tok is None:
                raise self._error("unexpected end of input after ';'", None)
            if tok.kind == "PUNCT" and tok.text == ".":
                self.i += 1
                return
            if self.lenient and self._starts_new_statement():
                return

    def _starts_new_statement(self) -> bool:
        third = self._peek(2)
        return (
            third is not None
            and third.kind in _TERM_KINDS
            and self._peek(0).kind in ("IRIREF", "PNAME")
            and self._peek(1).kind in ("IRIREF", "PNAME", "NAME")
        )

    def _verb(self, tok: _Token) -> Iri:
        if tok.kind == "NAME" and tok.text == "a":
            return RDF_TYPE
        return self._iri(tok)

    def _object(self, tok: _Token) -> Term:
        if tok.kind in ("IRIREF", "PNAME"):
            return self._iri(tok)
        line, col = self.positions.at(tok.pos)
        if tok.kind in ("STRING", "LONG_STRING"):
            q = 3 if tok.kind == "LONG_STRING" else 1
            lexical = _unescape(tok.text[q:-q], line, col)
            nxt = self._peek()
            if nxt is not None and nxt.kind == "LANGTAG":
                self.i += 1
                return Literal(lexical, lang=nxt.text[1:])
            if nxt is not None and nxt.kind == "DTYPE":
                self.i += 1
                return Literal(lexical, datatype=self._iri(self._next("datatype IRI")))
            return Literal(lexical)
        if tok.kind == "INTEGER":
            return Literal(tok.text, datatype=Iri(XSD + "integer"))
        if tok.kind == "DECIMAL":
            return Literal(tok.text, datatype=Iri(XSD + "decimal"))
        if tok.kind == "DOUBLE":
            return Literal(tok.text, datatype=Iri(XSD + "double"))
        if tok.kind == "NAME" and tok.text in ("true", "false"):
            return Literal(tok.text, datatype=Iri(XSD + "boolean"))
        raise self._error(f"expected an object term, found {tok.text!r}", tok)


def parse_turtle(text: str, base_prefixes: Mapping[str, str] | None = None, *, strict: bool = False) -> RdfGraph:
    """Parse Turtle text into a graph.

    The result's prefix map is ``base_prefixes`` updated with the document's
    own declarations. Prefixed names whose prefix is declared in neither raise
    :class:`UndefinedPrefixError`. ``strict=True`` disables the ``;``
    terminator tolerance described in the module docstring.
    """
    parser = _Parser(text, base_prefixes or {}, lenient=not strict)
    parser.parse()
    return RdfGraph(frozenset(parser.triples), parser.prefixes)


# serialization


def _escape_literal(value: str) -> str:
    out = []
    for ch in value:
        if ch == "\\":
            out.append("\\\\")
        elif ch == '"':
            out.append('\\"')
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\r":
            out.append("\\r")
        elif ch == "\t":
            out.append("\\t")
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)


class _Compactor:
    def __init__(self, prefixes: Mapping[str, str]):
        # longest namespace wins; ties go to the alphabetically first prefix
        self._ordered = sorted(prefixes.items(), key=lambda kv: (-len(kv[1]), kv[0]))

    def iri(self, iri: Iri) -> str:
        for prefix, ns in self._ordered:
            if ns and iri.value.startswith(ns):
                local = iri.value[len(ns) :]
                if _PN_LOCAL_FULL.match(local):
                    return f"{prefix}:{local}"
        return f"<{iri.value}>"

    def term(self, term: Term) -> str:
        if isinstance(term, Iri):
            return self.iri(term)
        text = f'"{_escape_literal(term.lexical)}"'
        if term.lang:
            return f"{text}@{term.lang}"
        if term.datatype is not None:
            return f"{text}^^{self.iri(term.datatype)}"
        return text


def serialize_turtle(graph: RdfGraph) -> str:
    """Deterministic Turtle: sorted prefixes, sorted subjects, ``a`` first."""
    for prefix in graph.prefixes:
        if not _PREFIX_NAME_FULL.match(prefix):
            raise ValueError(f"invalid prefix name {prefix!r}")
    compact = _Compactor(graph.prefixes)
    lines = [f"@prefix {prefix}: <{ns}> ." for prefix, ns in sorted(graph.prefixes.items())]

    by_subject: dict[Iri, dict[Iri, list[Term]]] = {}
    for t in graph.triples:
        by_subject.setdefault(t.subject, {}).setdefault(t.predicate, []).append(t.object)

    for subject in sorted(by_subject, key=lambda s: s.value):
        predicates = by_subject[subject]
        order = sorted(predicates, key=lambda p: (p != RDF_TYPE, p.value))
        parts = []
        for predicate in order:
            verb = "a" if predicate == RDF_TYPE else compact.iri(predicate)
            objects = ", ".join(compact.term(o) for o in sorted(predicates[predicate], key=term_sort_key))
            parts.append(f"{verb} {objects}")
        if lines:
            lines.append("")
        lines.append(f"{compact.iri(subject)} " + " ;\n    ".join(parts) + " .")
    return "\n".join(lines) + "\n" if lines else ""
