"""Render schemas and extractions in the code-prompt dialect.

An instruction looks like this (with comments enabled)::

    class Entity:
        def __init__(self, name: str):
            pass
    ...

    class PER(Entity):
        # Description: PER refers to individual people.
        # Examples: "Steve", "李明"
        def __init__(self, name: str):
            pass


    \"\"\"
    <one task docstring>
    \"\"\"
    sentence = "Steve became CEO of Apple in 1998."

and the completion is a single line ``results = [PER("Steve"), ...]``.

Comment block layout is fixed: an optional ``# Description:`` line (only when
the concept has a description) followed by an ``# Examples:`` line holding up
to 10 examples as quoted strings separated by ``", "`` (empty when the concept
has none). Newlines inside comment text are collapsed to single spaces.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .data import ExtractionInstance, Sample, Span
from .ontology import Attribute, Concept, Ontology

INDENT = "    "
MAX_COMMENT_EXAMPLES = 10

TASK_PROMPTS = {
    "NER": (
        "This is an entity extraction task. The entity classes are defined above. "
        "Instantiate one object of the matching class for every entity mentioned in "
        "`sentence` and collect them, in order of appearance, in the list `results`."
    ),
    "RE": (
        "This is a relation extraction task. The entity and relation classes are defined "
        "above. Instantiate one relation object, with its subject and object entities, for "
        "every relation expressed in `sentence` and collect them in the list `results`."
    ),
    "ED": (
        "This is an event detection task. The event classes are defined above. "
        "Instantiate one event object with its trigger for every event mentioned in "
        "`sentence` and collect them in the list `results`."
    ),
    "EAE": (
        "This is an event argument extraction task. The event and entity classes are "
        "defined above. For each given event, instantiate the event object with its "
        "trigger and fill every role with the argument entities found in `sentence`, "
        "then collect the events in the list `results`."
    ),
}

_BASE_SIGNATURES = {
    "Entity": (Attribute("name", "span"),),
    "Relation": (Attribute("subject", "ref"), Attribute("object", "ref")),
    "Event": (Attribute("trigger", "span"),),
}


class ValidationError(ValueError):
    pass


def quote(text: str) -> str:
    """Double-quoted dialect string; only backslash and double quote are escaped."""
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _param(attr: Attribute) -> str:
    if attr.kind == "span":
        return f"{attr.name}: str"
    if attr.kind == "ref":
        return f"{attr.name}: {attr.type}"
    return f"{attr.name}: List[{attr.type}] = []"


def _class_block(name: str, base: str | None, attrs: Sequence[Attribute], comments: Sequence[str]) -> str:
    header = f"class {name}({base}):" if base else f"class {name}:"
    lines = [header]
    lines += [f"{INDENT}# {c}".rstrip() for c in comments]
    params = ", ".join(["self"] + [_param(a) for a in attrs])
    lines.append(f"{INDENT}def __init__({params}):")
    lines.append(f"{INDENT * 2}pass")
    return "\n".join(lines)


def _one_line(text: str) -> str:
    return " ".join(text.split()).replace('"""', "'''")


def comment_lines(concept: Concept, lang: str | None = None) -> list[str]:
    lines = []
    desc = concept.description(lang)
    if desc:
        lines.append(f"Description: {_one_line(desc)}")
    examples = ", ".join(quote(_one_line(e)) for e in concept.examples[:MAX_COMMENT_EXAMPLES])
    lines.append(f"Examples: {examples}")
    return lines


def render_schema(ontology: Ontology, with_comments: bool = True, lang: str | None = None) -> str:
    blocks = [_class_block(base, None, attrs, ()) for base, attrs in _BASE_SIGNATURES.items()]
    for concept in ontology.concepts:
        comments = comment_lines(concept, lang) if with_comments else ()
        blocks.append(_class_block(concept.canonical_id, concept.base, concept.attributes, comments))
    return "\n\n\n".join(blocks)


def task_docstring(task_kind: str, events: Sequence[ExtractionInstance] = ()) -> str:
    body = TASK_PROMPTS[task_kind]
    if events:
        given = ", ".join(f"{e.concept}({quote(e.mention.text)})" for e in events if e.mention)
        body += f" Given events: {given}."
    return f'"""\n{body}\n"""'


def render_instruction(
    ontology: Ontology,
    sentence: str,
    with_comments: bool = True,
    *,
    lang: str | None = None,
    events: Sequence[ExtractionInstance] = (),
) -> str:
    """Schema code, the task docstring and the ``sentence`` binding.

    ``events`` lists the gold events whose arguments are requested (EAE only).
    """
    return (
        render_schema(ontology, with_comments, lang)
        + "\n\n\n"
        + task_docstring(ontology.task_kind, events)
        + "\n"
        + f"sentence = {quote(sentence)}"
    )


def render_value(value: Span | ExtractionInstance | tuple) -> str:
    if isinstance(value, Span):
        return quote(value.text)
    if isinstance(value, ExtractionInstance):
        return render_call(value)
    return "[" + ", ".join(render_call(v) for v in value) + "]"


def render_call(inst: ExtractionInstance) -> str:
    return f"{inst.concept}(" + ", ".join(render_value(v) for _, v in inst.slots) + ")"


def render_completion(instances: Iterable[ExtractionInstance]) -> str:
    return "results = [" + ", ".join(render_call(i) for i in instances) + "]"


def validate_instance(ontology: Ontology, inst: ExtractionInstance, path: str = "") -> None:
    """Check that ``inst`` and everything nested in it fits the ontology."""
    where = f"{path}{inst.concept}"
    if inst.concept not in ontology:
        raise ValidationError(f"{where}: unknown concept")
    concept = ontology[inst.concept]
    expected = [a.name for a in concept.attributes]
    if list(inst.slot_names) != expected:
        raise ValidationError(f"{where}: slots {list(inst.slot_names)} != attributes {expected}")
    for attr, (_, value) in zip(concept.attributes, inst.slots):
        ok = (
            (attr.kind == "span" and isinstance(value, Span))
            or (attr.kind == "ref" and isinstance(value, ExtractionInstance))
            or (attr.kind == "refs" and isinstance(value, tuple))
        )
        if not ok:
            raise ValidationError(f"{where}.{attr.name}: expected a {attr.kind} value")
        if isinstance(value, ExtractionInstance):
            validate_instance(ontology, value, f"{where}.{attr.name}/")
        elif isinstance(value, tuple):
            for item in value:
                validate_instance(ontology, item, f"{where}.{attr.name}/")


def validate_sample(ontology: Ontology, sample: Sample) -> None:
    for inst in sample.instances:
        validate_instance(ontology, inst)
        for span in inst.spans():
            if span.start is None:
                if span.text not in sample.sentence:
                    raise ValidationError(f"sample {sample.id}: span {span.text!r} not in sentence")
            elif sample.sentence[span.start : span.start + len(span.text)] != span.text:
                raise ValidationError(f"sample {sample.id}: span {span.text!r} not at offset {span.start}")


@dataclass
class PromptPair:
    instruction: str
    completion: str
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"instruction": self.instruction, "completion": self.completion, "meta": self.meta}


def build_training_pair(ontology: Ontology, sample: Sample, with_comments: bool = True) -> PromptPair:
    validate_sample(ontology, sample)
    events = sample.instances if ontology.task_kind == "EAE" else ()
    return PromptPair(
        instruction=render_instruction(
            ontology, sample.sentence, with_comments, lang=sample.language, events=events
        ),
        completion=render_completion(sample.instances),
        meta={
            "dataset": ontology.dataset,
            "language": sample.language,
            "task": ontology.task_kind,
            "sample_id": sample.id,
        },
    )


_DOCSTRING_RE = re.compile(r'^"""$', re.M)


def count_docstrings(instruction: str) -> int:
    """Number of task docstrings (triple-quote delimiters on their own line / 2)."""
    return len(_DOCSTRING_RE.findall(instruction)) // 2
