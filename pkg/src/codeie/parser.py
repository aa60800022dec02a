"""Parse model completions back into extraction instances without executing them.

Grammar (the only thing accepted after the ``results =`` marker)::

    completion := "results" "=" list
    list       := "[" (call ("," call)*)? "]"
    call       := IDENT "(" (arg ("," arg)*)? ")"
    arg        := STRING | call | list | IDENT "=" (STRING | call | list)

Strings may use ``"`` or ``'``; a backslash escapes the next character
(``\\n`` and ``\\t`` decode to newline and tab). A trailing comma is tolerated.
Bracket nesting deeper than :data:`MAX_DEPTH` is rejected before any parsing.

A bad top-level call is dropped with a reason and the rest of the list is
kept. Only lexical failures (no marker, unbalanced brackets, unterminated
string, excessive depth) are fatal; complete calls seen before the failure
are reported in ``dropped`` so nothing is silently lost.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

from .data import ExtractionInstance, Span, assign_offsets, resolve_offsets
from .ontology import Ontology

__all__ = ["MAX_DEPTH", "ParseReport", "Dropped", "parse_completion", "resolve_offsets"]

MAX_DEPTH = 8

_MARKER = re.compile(r"(?<![A-Za-z0-9_])results\s*=(?!=)")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_SPECIAL = set("[](),=\"'")
_ESCAPES = {"n": "\n", "t": "\t"}


@dataclass
class Token:
    kind: str  # one of [ ] ( ) , = STR ID OTHER
    value: str
    start: int
    end: int


@dataclass
class Dropped:
    raw: str
    reason: str
    instance: ExtractionInstance | None = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"raw": self.raw, "reason": self.reason}
        if self.instance is not None:
            d["instance"] = self.instance.to_dict()
        return d


@dataclass
class ParseReport:
    instances: list[ExtractionInstance] = field(default_factory=list)
    dropped: list[Dropped] = field(default_factory=list)
    fatal: str | None = None
    unresolved: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.fatal is None

    def to_dict(self) -> dict[str, Any]:
        return {
            "instances": [i.to_dict() for i in self.instances],
            "dropped": [d.to_dict() for d in self.dropped],
            "fatal": self.fatal,
            "unresolved": list(self.unresolved),
        }


class _Fatal(Exception):
    def __init__(self, reason: str, tokens: list[Token]):
        super().__init__(reason)
        self.reason = reason
        self.tokens = tokens


class _Drop(Exception):
    pass


def _tokenize_list(text: str, pos: int) -> list[Token]:
    """Tokens of the outer list starting at ``text[pos] == '['`` up to and
    including its closing bracket."""
    tokens: list[Token] = []
    stack: list[str] = []
    n = len(text)
    i = pos
    pairs = {"]": "[", ")": "("}
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "[(":
            stack.append(c)
            if len(stack) > MAX_DEPTH:
                raise _Fatal("depth-exceeded", tokens)
            tokens.append(Token(c, c, i, i + 1))
            i += 1
            continue
        if c in "])":
            if not stack or stack[-1] != pairs[c]:
                raise _Fatal("unbalanced-brackets", tokens)
            stack.pop()
            tokens.append(Token(c, c, i, i + 1))
            i += 1
            if not stack:
                return tokens
            continue
        if c in ",=":
            tokens.append(Token(c, c, i, i + 1))
            i += 1
            continue
        if c in "\"'":
            buf = []
            j = i + 1
            while j < n and text[j] != c:
                if text[j] == "\\" and j + 1 < n:
                    nxt = text[j + 1]
                    buf.append(_ESCAPES.get(nxt, nxt))
                    j += 2
                else:
                    buf.append(text[j])
                    j += 1
            if j >= n:
                raise _Fatal("unterminated-string", tokens)
            tokens.append(Token("STR", "".join(buf), i, j + 1))
            i = j + 1
            continue
        m = _IDENT.match(text, i)
        if m:
            tokens.append(Token("ID", m.group(), i, m.end()))
            i = m.end()
            continue
        j = i + 1
        while j < n and not text[j].isspace() and text[j] not in _SPECIAL:
            j += 1
        tokens.append(Token("OTHER", text[i:j], i, j))
        i = j
    raise _Fatal("unbalanced-brackets", tokens)


def _split_top(tokens: list[Token]) -> tuple[list[list[Token]], bool]:
    """Split the body of the outer list on depth-1 commas.

    ``tokens`` starts with the opening ``[``. Returns the chunks and whether the
    final chunk is bracket-balanced (it may be cut off by a fatal error).
    """
    chunks: list[list[Token]] = [[]]
    depth = 0
    for tok in tokens[1:]:
        if tok.kind in "[(":
            depth += 1
        elif tok.kind in "])":
            if depth == 0:
                break  # the outer closing bracket
            depth -= 1
        if tok.kind == "," and depth == 0:
            chunks.append([])
        else:
            chunks[-1].append(tok)
    return chunks, depth == 0


class _Cursor:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self, offset: int = 0) -> Token | None:
        j = self.i + offset
        return self.tokens[j] if j < len(self.tokens) else None

    def take(self, kind: str) -> Token:
        tok = self.peek()
        if tok is None or tok.kind != kind:
            got = "end of input" if tok is None else repr(tok.value)
            raise _Drop(f"syntax: expected {kind!r}, got {got}")
        self.i += 1
        return tok


# raw syntax tree: ("str", text) | ("call", name, positional, keywords) | ("list", items)


def _parse_value(cur: _Cursor):
    tok = cur.peek()
    if tok is None:
        raise _Drop("syntax: unexpected end of call")
    if tok.kind == "STR":
        cur.i += 1
        return ("str", tok.value)
    if tok.kind == "[":
        cur.i += 1
        items = []
        while cur.peek() is not None and cur.peek().kind != "]":
            items.append(_parse_call(cur))
            if cur.peek() is not None and cur.peek().kind == ",":
                cur.i += 1
            else:
                break
        cur.take("]")
        return ("list", items)
    if tok.kind == "ID":
        return _parse_call(cur)
    raise _Drop(f"syntax: unexpected {tok.value!r}")


def _parse_call(cur: _Cursor):
    name = cur.take("ID").value
    cur.take("(")
    positional, keywords = [], []
    while cur.peek() is not None and cur.peek().kind != ")":
        nxt = cur.peek(1)
        if cur.peek().kind == "ID" and nxt is not None and nxt.kind == "=":
            key = cur.take("ID").value
            cur.take("=")
            keywords.append((key, _parse_value(cur)))
        else:
            if keywords:
                raise _Drop("syntax: positional argument after keyword argument")
            positional.append(_parse_value(cur))
        if cur.peek() is not None and cur.peek().kind == ",":
            cur.i += 1
        else:
            break
    cur.take(")")
    return ("call", name, positional, keywords)


def _build(node, ontology: Ontology) -> ExtractionInstance:
    _, name, positional, keywords = node
    if name not in ontology:
        raise _Drop(f"unknown-class: {name}")
    attrs = ontology[name].attributes
    if len(positional) > len(attrs):
        raise _Drop(f"arity: {name} takes {len(attrs)} arguments, got {len(positional)}")
    given = {a.name: v for a, v in zip(attrs, positional)}
    known = {a.name for a in attrs}
    for key, value in keywords:
        if key not in known:
            raise _Drop(f"unknown-keyword: {name}.{key}")
        if key in given:
            raise _Drop(f"duplicate-argument: {name}.{key}")
        given[key] = value
    slots = []
    for attr in attrs:
        if attr.name not in given:
            if attr.kind == "refs":
                slots.append((attr.name, ()))
                continue
            raise _Drop(f"arity: {name} missing argument {attr.name!r}")
        value = given[attr.name]
        if attr.kind == "span" and value[0] == "str":
            slots.append((attr.name, Span(value[1])))
        elif attr.kind == "ref" and value[0] == "call":
            slots.append((attr.name, _build(value, ontology)))
        elif attr.kind == "refs" and value[0] == "list":
            slots.append((attr.name, tuple(_build(v, ontology) for v in value[1])))
        else:
            raise _Drop(f"slot-kind: {name}.{attr.name} expects {attr.kind}, got {value[0]}")
    return ExtractionInstance(name, tuple(slots))


def _parse_chunk(chunk: list[Token], ontology: Ontology, text: str) -> ExtractionInstance:
    cur = _Cursor(chunk)
    node = _parse_value(cur)
    if cur.peek() is not None:
        raise _Drop(f"syntax: trailing {cur.peek().value!r}")
    if node[0] != "call":
        raise _Drop(f"syntax: top-level element is a {node[0]}, not a call")
    return _build(node, ontology)


def parse_completion(text: str, ontology: Ontology, sentence: str = "") -> ParseReport:
    """Parse ``text`` into a :class:`ParseReport`; never raises on model output."""
    report = ParseReport()
    m = _MARKER.search(text)
    if m is None:
        report.fatal = "missing-marker"
        return report
    pos = m.end()
    while pos < len(text) and text[pos].isspace():
        pos += 1
    if pos >= len(text) or text[pos] != "[":
        report.fatal = "missing-list"
        return report

    try:
        tokens = _tokenize_list(text, pos)
        fatal = None
    except _Fatal as e:
        tokens, fatal = e.tokens, e.reason

    chunks, last_complete = _split_top(tokens)
    if chunks and not chunks[-1]:
        chunks.pop()  # trailing comma or empty list

    parsed: list[ExtractionInstance] = []
    for k, chunk in enumerate(chunks):
        raw = text[chunk[0].start : chunk[-1].end] if chunk else ""
        is_last = k == len(chunks) - 1
        if fatal is not None and is_last and not last_complete:
            report.dropped.append(Dropped(raw, f"incomplete: {fatal}"))
            continue
        try:
            inst = _parse_chunk(chunk, ontology, text)
        except _Drop as e:
            report.dropped.append(Dropped(raw, str(e)))
            continue
        if fatal is not None:
            report.dropped.append(Dropped(raw, f"fatal-prefix: {fatal}", inst))
        else:
            parsed.append(inst)

    report.fatal = fatal
    if parsed:
        report.instances, report.unresolved = assign_offsets(parsed, sentence, keep_existing=False)
    return report
