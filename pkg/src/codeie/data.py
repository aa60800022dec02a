"""Core records shared by every stage: spans, extraction instances and samples.

An :class:`ExtractionInstance` is one instantiated class from the code dialect,
e.g. ``WorkFor(PER("Steve"), ORG("Apple"))``. Its slots map attribute names to
one of three value kinds:

* :class:`Span` for text-span attributes,
* another :class:`ExtractionInstance` for concept references,
* a tuple of instances for list-of-reference attributes.

Character offsets are always character (code point) offsets into the owning
sentence, never byte or token offsets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Union


@dataclass(frozen=True)
class Span:
    text: str
    start: int | None = None

    @property
    def end(self) -> int | None:
        return None if self.start is None else self.start + len(self.text)

    @property
    def interval(self) -> tuple[int, int] | None:
        return None if self.start is None else (self.start, self.start + len(self.text))


SlotValue = Union[Span, "ExtractionInstance", tuple["ExtractionInstance", ...]]


@dataclass(frozen=True)
class ExtractionInstance:
    """One typed extraction. ``slots`` preserves the concept's attribute order."""

    concept: str
    slots: tuple[tuple[str, SlotValue], ...] = ()

    @classmethod
    def make(cls, concept: str, **slots: Any) -> "ExtractionInstance":
        """Convenience constructor: plain strings become offset-less spans,
        lists become tuples."""
        return cls(concept, tuple((k, _coerce(v)) for k, v in slots.items()))

    def slot(self, name: str) -> SlotValue:
        for key, value in self.slots:
            if key == name:
                return value
        raise KeyError(name)

    @property
    def slot_names(self) -> tuple[str, ...]:
        return tuple(k for k, _ in self.slots)

    @property
    def mention(self) -> Span | None:
        """The first text-span slot: entity name, event trigger."""
        for _, value in self.slots:
            if isinstance(value, Span):
                return value
        return None

    def spans(self) -> Iterator[Span]:
        """All spans in the instance tree, depth first, in slot order."""
        for _, value in self.slots:
            if isinstance(value, Span):
                yield value
            elif isinstance(value, ExtractionInstance):
                yield from value.spans()
            else:
                for item in value:
                    yield from item.spans()

    def walk(self) -> Iterator["ExtractionInstance"]:
        yield self
        for _, value in self.slots:
            if isinstance(value, ExtractionInstance):
                yield from value.walk()
            elif isinstance(value, tuple):
                for item in value:
                    yield from item.walk()

    def without_offsets(self) -> "ExtractionInstance":
        return ExtractionInstance(
            self.concept, tuple((k, _map_value(v, _strip)) for k, v in self.slots)
        )

    def is_flat(self) -> bool:
        return len(self.slots) == 1 and self.slots[0][0] == "name" and isinstance(self.slots[0][1], Span)

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.concept, "args": {k: _value_to_json(v) for k, v in self.slots}}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExtractionInstance":
        if "args" not in d and "text" in d:
            return cls(d["type"], (("name", Span(d["text"], d.get("start"))),))
        return cls(d["type"], tuple((k, _value_from_json(v)) for k, v in d.get("args", {}).items()))


def _coerce(value: Any) -> SlotValue:
    if isinstance(value, str):
        return Span(value)
    if isinstance(value, (list, tuple)):
        return tuple(value)
    return value


def _strip(span: Span) -> Span:
    return Span(span.text)


def _map_value(value: SlotValue, fn) -> SlotValue:
    if isinstance(value, Span):
        return fn(value)
    if isinstance(value, ExtractionInstance):
        return ExtractionInstance(value.concept, tuple((k, _map_value(v, fn)) for k, v in value.slots))
    return tuple(_map_value(item, fn) for item in value)


def _value_to_json(value: SlotValue) -> Any:
    if isinstance(value, Span):
        return {"text": value.text, "start": value.start}
    if isinstance(value, ExtractionInstance):
        return value.to_dict()
    return [item.to_dict() for item in value]


def _value_from_json(value: Any) -> SlotValue:
    if isinstance(value, str):
        return Span(value)
    if isinstance(value, list):
        return tuple(ExtractionInstance.from_dict(item) for item in value)
    if "type" in value:
        return ExtractionInstance.from_dict(value)
    return Span(value["text"], value.get("start"))


class OffsetError(ValueError):
    pass


def resolve_offsets(
    span_text: str, sentence: str, used: Iterable[tuple[int, int]] = ()
) -> tuple[int, int] | None:
    """Leftmost occurrence of ``span_text`` in ``sentence`` that overlaps no
    interval in ``used``. Returns a half-open ``(start, end)`` or None."""
    if not span_text:
        return None
    taken = list(used)
    n = len(span_text)
    pos = sentence.find(span_text)
    while pos != -1:
        end = pos + n
        if all(end <= a or pos >= b for a, b in taken):
            return (pos, end)
        pos = sentence.find(span_text, pos + 1)
    return None


def assign_offsets(
    instances: Iterable[ExtractionInstance], sentence: str, *, keep_existing: bool = True
) -> tuple[list[ExtractionInstance], list[str]]:
    """Fill in missing span offsets by leftmost-unused search.

    Direct spans of top-level instances share one pool of used intervals, so
    ``[PER("Li"), PER("Li")]`` lands on two different occurrences. Spans nested
    inside a top-level instance use a pool local to that instance: a relation
    argument that repeats a standalone entity resolves to the same occurrence.
    Returns the new instances and the texts that could not be placed.
    """
    top_pool: list[tuple[int, int]] = []
    unresolved: list[str] = []

    def place(span: Span, pool: list[tuple[int, int]]) -> Span:
        if keep_existing and span.start is not None:
            pool.append((span.start, span.start + len(span.text)))
            return span
        hit = resolve_offsets(span.text, sentence, pool)
        if hit is None:
            unresolved.append(span.text)
            return Span(span.text)
        pool.append(hit)
        return Span(span.text, hit[0])

    def nested(value: SlotValue, pool: list[tuple[int, int]]) -> SlotValue:
        if isinstance(value, Span):
            return place(value, pool)
        if isinstance(value, ExtractionInstance):
            return ExtractionInstance(value.concept, tuple((k, nested(v, pool)) for k, v in value.slots))
        return tuple(nested(item, pool) for item in value)

    out = []
    for inst in instances:
        local: list[tuple[int, int]] = []
        slots = []
        for key, value in inst.slots:
            slots.append((key, place(value, top_pool) if isinstance(value, Span) else nested(value, local)))
        out.append(ExtractionInstance(inst.concept, tuple(slots)))
    return out, unresolved


@dataclass
class Sample:
    """A sentence with its extraction instances."""

    id: str
    sentence: str
    instances: list[ExtractionInstance] = field(default_factory=list)
    language: str = "en"

    def span_texts(self) -> list[str]:
        """Mention texts of the top-level instances, in order."""
        return [m.text for m in (inst.mention for inst in self.instances) if m is not None]

    def check_offsets(self) -> None:
        """Raise OffsetError unless every span with an offset indexes its text."""
        for inst in self.instances:
            for span in inst.spans():
                if span.start is None:
                    continue
                if self.sentence[span.start : span.start + len(span.text)] != span.text:
                    raise OffsetError(
                        f"sample {self.id}: span {span.text!r} not at offset {span.start}"
                    )

    def resolved(self, *, strict: bool = False) -> "Sample":
        instances, missing = assign_offsets(self.instances, self.sentence)
        if strict and missing:
            raise OffsetError(f"sample {self.id}: spans not found in sentence: {missing}")
        return Sample(self.id, self.sentence, instances, self.language)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"id": self.id, "sentence": self.sentence, "language": self.language}
        if all(inst.is_flat() for inst in self.instances):
            d["spans"] = [
                {"text": inst.mention.text, "type": inst.concept, "start": inst.mention.start}
                for inst in self.instances
            ]
        else:
            d["instances"] = [inst.to_dict() for inst in self.instances]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any], *, language: str | None = None) -> "Sample":
        if "instances" in d:
            instances = [ExtractionInstance.from_dict(item) for item in d["instances"]]
        else:
            instances = [
                ExtractionInstance(s["type"], (("name", Span(s["text"], s.get("start"))),))
                for s in d.get("spans", [])
            ]
        lang = d.get("language") or language or "en"
        return cls(str(d["id"]), d["sentence"], instances, lang)


def read_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({e.msg})") from e


def dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=False)


def write_jsonl(path: str | Path, rows: Iterable[dict[str, Any]]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(dumps(row) + "\n")
            n += 1
    return n


def load_samples(path: str | Path, *, language: str | None = None) -> list[Sample]:
    return [Sample.from_dict(d, language=language) for d in read_jsonl(path)]
