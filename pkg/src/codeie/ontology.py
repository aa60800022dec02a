"""Multilingual IE schema: concepts, attributes and the surface-name mapping.

Every concept carries one canonical identifier (the class name used in the
code prompt). Dataset-specific labels in other languages are declared in the
config under ``names`` and resolve to that identifier, so Korean ``사람`` and
Chinese ``人物`` both become ``PER``.

Config format (YAML or JSON)::

    task: NER                  # NER | RE | ED | EAE
    dataset: cluener           # optional, copied into PromptPair meta
    concepts:
      - id: PER                # canonical identifier, [A-Za-z_][A-Za-z0-9_]*
        base: Entity           # Entity | Relation | Event
        names: {zh: 人物, ko: 사람}
        attributes:            # optional, defaults depend on base
          - {name: name, kind: span}
        description: "PER refers to ..."     # or {en: ..., zh: ...}
        examples: [Steve, 李明]

Attribute kinds are ``span`` (text span), ``ref`` (one nested instance) and
``refs`` (a list of nested instances). ``ref``/``refs`` attributes may carry an
optional ``type`` used only for the rendered constructor signature
(default ``Entity``).
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping

import yaml

from .data import ExtractionInstance, Sample

IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

BASE_KINDS = ("Entity", "Relation", "Event")
TASK_KINDS = ("NER", "RE", "ED", "EAE")
SLOT_KINDS = ("span", "ref", "refs")

ALLOWED_BASES = {
    "NER": {"Entity"},
    "RE": {"Relation", "Entity"},
    "ED": {"Event", "Entity"},
    "EAE": {"Event", "Entity"},
}

DEFAULT_EXAMPLE_CAP = 10


class OntologyError(ValueError):
    pass


class UnknownNameError(KeyError):
    pass


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str = "span"
    type: str = "Entity"


DEFAULT_ATTRIBUTES = {
    "Entity": (Attribute("name", "span"),),
    "Relation": (Attribute("subject", "ref"), Attribute("object", "ref")),
    "Event": (Attribute("trigger", "span"),),
}


@dataclass(frozen=True)
class Concept:
    canonical_id: str
    base: str
    surface_names: Mapping[str, str] = field(default_factory=dict)
    attributes: tuple[Attribute, ...] = ()
    descriptions: Mapping[str, str] = field(default_factory=dict)
    examples: tuple[str, ...] = ()

    def description(self, lang: str | None = None) -> str | None:
        """Description for ``lang``; falls back to the language-neutral entry,
        then English."""
        if lang and lang in self.descriptions:
            return self.descriptions[lang]
        return self.descriptions.get("default") or self.descriptions.get("en")

    def attribute(self, name: str) -> Attribute:
        for attr in self.attributes:
            if attr.name == name:
                return attr
        raise KeyError(name)


@dataclass(frozen=True)
class Ontology:
    task_kind: str
    concepts: tuple[Concept, ...] = ()
    dataset: str = ""

    base_kinds = BASE_KINDS

    def __post_init__(self):
        if self.task_kind not in TASK_KINDS:
            raise OntologyError(f"unknown task kind {self.task_kind!r}; expected one of {TASK_KINDS}")
        seen: set[str] = set()
        for c in self.concepts:
            if not IDENT_RE.match(c.canonical_id):
                raise OntologyError(f"invalid identifier {c.canonical_id!r}")
            if c.canonical_id in BASE_KINDS:
                raise OntologyError(f"concept id {c.canonical_id!r} shadows a base class")
            if c.canonical_id in seen:
                raise OntologyError(f"duplicate canonical id {c.canonical_id!r}")
            seen.add(c.canonical_id)
            if c.base not in BASE_KINDS:
                raise OntologyError(f"{c.canonical_id}: unknown base kind {c.base!r}")
            if c.base not in ALLOWED_BASES[self.task_kind]:
                raise OntologyError(f"{c.canonical_id}: base {c.base} not allowed for task {self.task_kind}")
            names = [a.name for a in c.attributes]
            if len(set(names)) != len(names):
                raise OntologyError(f"{c.canonical_id}: duplicate attribute names {names}")
            for a in c.attributes:
                if not IDENT_RE.match(a.name):
                    raise OntologyError(f"{c.canonical_id}: invalid attribute name {a.name!r}")
                if a.kind not in SLOT_KINDS:
                    raise OntologyError(f"{c.canonical_id}.{a.name}: unknown slot kind {a.kind!r}")
        self._surface_index  # builds and checks the surface-name mapping

    @cached_property
    def by_id(self) -> dict[str, Concept]:
        return {c.canonical_id: c for c in self.concepts}

    @cached_property
    def _surface_index(self) -> dict[tuple[str, str], Concept]:
        index: dict[tuple[str, str], Concept] = {}
        for c in self.concepts:
            index[("en", c.canonical_id)] = c
        for c in self.concepts:
            for lang, name in c.surface_names.items():
                key = (lang, name)
                other = index.get(key)
                if other is not None and other is not c:
                    raise OntologyError(
                        f"surface name {name!r} ({lang}) maps to both {other.canonical_id} and {c.canonical_id}"
                    )
                index[key] = c
        return index

    def __contains__(self, concept_id: str) -> bool:
        return concept_id in self.by_id

    def __getitem__(self, concept_id: str) -> Concept:
        return self.by_id[concept_id]

    def with_concepts(self, concepts: Iterable[Concept]) -> "Ontology":
        return Ontology(self.task_kind, tuple(concepts), self.dataset)


def resolve_surface(ontology: Ontology, lang: str, name: str) -> Concept:
    try:
        return ontology._surface_index[(lang, name)]
    except KeyError:
        raise UnknownNameError(f"no concept named {name!r} in language {lang!r}") from None


def _parse_attribute(raw: Any, owner: str) -> Attribute:
    if isinstance(raw, str):
        return Attribute(raw)
    if not isinstance(raw, dict) or "name" not in raw:
        raise OntologyError(f"{owner}: attribute entries need a 'name'")
    return Attribute(str(raw["name"]), str(raw.get("kind", "span")), str(raw.get("type", "Entity")))


def _parse_concept(raw: Any) -> Concept:
    if not isinstance(raw, dict) or "id" not in raw:
        raise OntologyError("each concept needs an 'id'")
    cid = str(raw["id"])
    base = str(raw.get("base", "Entity"))
    if base not in BASE_KINDS:
        raise OntologyError(f"{cid}: unknown base kind {base!r}")
    attrs = raw.get("attributes")
    attributes = (
        tuple(_parse_attribute(a, cid) for a in attrs) if attrs else DEFAULT_ATTRIBUTES[base]
    )
    desc = raw.get("description")
    if desc is None:
        descriptions: dict[str, str] = {}
    elif isinstance(desc, str):
        descriptions = {"default": desc}
    else:
        descriptions = {str(k): str(v) for k, v in desc.items()}
    return Concept(
        canonical_id=cid,
        base=base,
        surface_names={str(k): str(v) for k, v in (raw.get("names") or {}).items()},
        attributes=attributes,
        descriptions=descriptions,
        examples=tuple(str(e) for e in raw.get("examples") or ()),
    )


def ontology_from_dict(doc: Mapping[str, Any]) -> Ontology:
    if not isinstance(doc, Mapping):
        raise OntologyError("ontology config must be a mapping")
    if "task" not in doc:
        raise OntologyError("ontology config is missing 'task'")
    concepts = tuple(_parse_concept(c) for c in doc.get("concepts") or ())
    return Ontology(str(doc["task"]).upper(), concepts, str(doc.get("dataset", "")))


def load_ontology(source: str | Path | Mapping[str, Any]) -> Ontology:
    """Load and validate an ontology from a path, a YAML/JSON string or a mapping."""
    if isinstance(source, Mapping):
        return ontology_from_dict(source)
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).is_file()):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = str(source)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise OntologyError(f"unreadable ontology config: {e}") from e
    return ontology_from_dict(doc or {})


def ontology_to_dict(ontology: Ontology) -> dict[str, Any]:
    concepts = []
    for c in ontology.concepts:
        d: dict[str, Any] = {"id": c.canonical_id, "base": c.base}
        if c.surface_names:
            d["names"] = dict(c.surface_names)
        if c.attributes != DEFAULT_ATTRIBUTES[c.base]:
            d["attributes"] = [
                {"name": a.name, "kind": a.kind, **({"type": a.type} if a.kind != "span" else {})}
                for a in c.attributes
            ]
        if c.descriptions:
            d["description"] = (
                c.descriptions["default"] if set(c.descriptions) == {"default"} else dict(c.descriptions)
            )
        if c.examples:
            d["examples"] = list(c.examples)
        concepts.append(d)
    out: dict[str, Any] = {"task": ontology.task_kind}
    if ontology.dataset:
        out["dataset"] = ontology.dataset
    out["concepts"] = concepts
    return out


def dump_ontology(ontology: Ontology) -> str:
    return yaml.safe_dump(ontology_to_dict(ontology), allow_unicode=True, sort_keys=False)


def instance_string(inst: ExtractionInstance) -> str:
    mention = inst.mention
    if mention is not None:
        return mention.text
    from .codegen import render_call

    return render_call(inst)


def sample_examples(
    corpus: Iterable[Sample], concept: Concept | str, cap: int = DEFAULT_EXAMPLE_CAP
) -> list[str]:
    """Up to ``cap`` distinct instance strings of ``concept``, most frequent
    first; ties keep first-occurrence order."""
    if cap < 0:
        raise ValueError("cap must be >= 0")
    cid = concept if isinstance(concept, str) else concept.canonical_id
    counts: Counter[str] = Counter()
    for sample in corpus:
        for top in sample.instances:
            for inst in top.walk():
                if inst.concept == cid:
                    counts[instance_string(inst)] += 1
    # Counter preserves insertion order and sorted() is stable
    ranked = sorted(counts, key=lambda s: -counts[s])
    return ranked[:cap]
