"""Translated-instances-prediction samples built from projected NER pairs.

The instruction shows a complete source-language example (schema, sentence,
``results``) followed by the target-language schema and sentence; the
completion is the target-language ``results`` list.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

from .codegen import PromptPair, build_training_pair, validate_sample
from .data import Sample
from .metrics import is_faithful
from .ontology import Ontology
from .prompts import language_name

ALIGNMENT_TASK = (
    "The first program below is a solved extraction example in {src}; the second program "
    "is the same sentence translated into {tgt}. Complete the second program by predicting "
    "the translated instances, keeping the classes and order of the {src} results."
)


class AlignmentError(ValueError):
    pass


@dataclass
class AlignedPair:
    source: Sample
    target: Sample

    @property
    def direction(self) -> tuple[str, str]:
        return (self.source.language, self.target.language)

    def check(self) -> None:
        if len(self.source.instances) != len(self.target.instances):
            raise AlignmentError(
                f"{self.source.id}: {len(self.source.instances)} source vs {len(self.target.instances)} target instances"
            )
        for s, t in zip(self.source.instances, self.target.instances):
            if s.concept != t.concept:
                raise AlignmentError(f"{self.source.id}: concept mismatch {s.concept} vs {t.concept}")
        if not is_faithful(self.target.sentence, self.target.span_texts()):
            raise AlignmentError(f"{self.source.id}: target spans missing from target sentence")


def build_alignment_sample(
    pair: AlignedPair,
    ontology: Ontology,
    target_ontology: Ontology | None = None,
    *,
    with_comments: bool = True,
) -> PromptPair:
    pair.check()
    tgt_ontology = target_ontology or ontology
    src = build_training_pair(ontology, pair.source, with_comments)
    validate_sample(tgt_ontology, pair.target)
    tgt = build_training_pair(tgt_ontology, pair.target, with_comments)
    header = ALIGNMENT_TASK.format(
        src=language_name(pair.source.language), tgt=language_name(pair.target.language)
    )
    instruction = f"{header}\n\n{src.instruction}\n{src.completion}\n\n\n{tgt.instruction}"
    return PromptPair(
        instruction=instruction,
        completion=tgt.completion,
        meta={
            "dataset": ontology.dataset,
            "task": "alignment",
            "direction": f"{pair.source.language}->{pair.target.language}",
            "sample_id": pair.source.id,
        },
    )


def assemble_parallel_dataset(
    records: Iterable, directions: Literal["both", "one"] = "both"
) -> list[AlignedPair]:
    """Aligned pairs from finished projection records (status ok only).

    ``both`` yields the forward pair and its reverse for every record.
    """
    if directions not in ("both", "one"):
        raise ValueError("directions must be 'both' or 'one'")
    pairs = []
    for rec in records:
        if rec.status != "ok" or rec.target is None:
            continue
        pairs.append(AlignedPair(rec.source, rec.target))
        if directions == "both":
            pairs.append(AlignedPair(rec.target, rec.source))
    return pairs


def build_alignment_dataset(
    records: Sequence,
    ontologies: dict[str, Ontology],
    directions: Literal["both", "one"] = "both",
    *,
    with_comments: bool = True,
) -> list[PromptPair]:
    """``ontologies`` maps language code to the schema rendered for that language."""
    out = []
    for pair in assemble_parallel_dataset(records, directions):
        src_lang, tgt_lang = pair.direction
        try:
            src_onto, tgt_onto = ontologies[src_lang], ontologies[tgt_lang]
        except KeyError as e:
            raise AlignmentError(f"no ontology for language {e.args[0]!r}") from None
        out.append(build_alignment_sample(pair, src_onto, tgt_onto, with_comments=with_comments))
    return out
