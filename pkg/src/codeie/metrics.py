"""Span-offset micro-F1 for NER / RE / ED / EAE and projection faithfulness.

Each scorer reduces a sample to a multiset of hashable *units*; a prediction
unit is correct iff an equal, not-yet-matched gold unit exists. Predictions
are deduplicated before matching, gold duplicates are kept (each can be
matched once). A unit containing an unresolved offset never matches.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Hashable, Iterable, Sequence

from .data import ExtractionInstance, Sample, Span


class MisalignedError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreCard:
    true_positives: int = 0
    predicted_count: int = 0
    gold_count: int = 0

    def __post_init__(self):
        if min(self.true_positives, self.predicted_count, self.gold_count) < 0:
            raise ValueError("counts must be non-negative")
        if self.true_positives > min(self.predicted_count, self.gold_count):
            raise ValueError("true positives exceed predicted or gold count")

    def __add__(self, other: "ScoreCard") -> "ScoreCard":
        return ScoreCard(
            self.true_positives + other.true_positives,
            self.predicted_count + other.predicted_count,
            self.gold_count + other.gold_count,
        )

    @property
    def precision(self) -> Fraction:
        return Fraction(self.true_positives, self.predicted_count) if self.predicted_count else Fraction(0)

    @property
    def recall(self) -> Fraction:
        return Fraction(self.true_positives, self.gold_count) if self.gold_count else Fraction(0)

    @property
    def f1(self) -> Fraction:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else Fraction(0)

    def to_dict(self) -> dict:
        return {
            "true_positives": self.true_positives,
            "predicted_count": self.predicted_count,
            "gold_count": self.gold_count,
            "precision": float(self.precision),
            "recall": float(self.recall),
            "f1": float(self.f1),
        }

    def report(self, task: str = "") -> str:
        head = f"[{task}] " if task else ""
        return (
            f"{head}tp = {self.true_positives}, predicted = {self.predicted_count}, gold = {self.gold_count}\n"
            f"precision = {float(self.precision):.4f}\n"
            f"recall = {float(self.recall):.4f}\n"
            f"f1 = {float(self.f1):.4f}"
        )


_HOLE = "?"


def _interval(span: Span | None):
    # unresolved offsets keep their text so distinct misses stay distinct
    if span is None:
        return (_HOLE, "")
    return span.interval if span.start is not None else (_HOLE, span.text)


def _entity_key(inst: ExtractionInstance):
    return (inst.concept, _interval(inst.mention))


def _has_hole(unit) -> bool:
    if isinstance(unit, tuple):
        if len(unit) == 2 and unit[0] == _HOLE:
            return True
        return any(_has_hole(u) for u in unit)
    return False


def ner_units(sample: Sample) -> list[Hashable]:
    """(type, interval) per top-level mention."""
    return [_entity_key(inst) for inst in sample.instances]


ed_units = ner_units  # events are keyed by (type, trigger interval) exactly like entities


def re_units(sample: Sample) -> list[Hashable]:
    """(relation type, ((role, (arg type, arg interval)), ...)) per relation.

    Top-level instances without reference slots (bare entities) are not
    relations and are ignored.
    """
    units = []
    for inst in sample.instances:
        args = tuple(
            (name, _entity_key(value)) for name, value in inst.slots if isinstance(value, ExtractionInstance)
        )
        if args:
            units.append((inst.concept, args))
    return units


def eae_units(sample: Sample) -> list[Hashable]:
    """(event type, trigger interval, role, argument interval) per argument."""
    units = []
    for event in sample.instances:
        head = (event.concept, _interval(event.mention))
        for role, value in event.slots:
            if isinstance(value, Span):
                continue
            args = (value,) if isinstance(value, ExtractionInstance) else value
            for arg in args:
                units.append((head, role, _interval(arg.mention)))
    return units


def count_matches(pred_units: Iterable[Hashable], gold_units: Iterable[Hashable]) -> ScoreCard:
    pred = set(pred_units)
    gold = Counter(gold_units)
    tp = sum(1 for u in pred if not _has_hole(u) and gold[u] > 0)
    return ScoreCard(tp, len(pred), sum(gold.values()))


def align(pred: Sequence[Sample], gold: Sequence[Sample]) -> list[tuple[Sample, Sample]]:
    gold_by_id = {}
    for g in gold:
        if g.id in gold_by_id:
            raise MisalignedError(f"duplicate gold sample id {g.id!r}")
        gold_by_id[g.id] = g
    pred_by_id = {}
    for p in pred:
        if p.id in pred_by_id:
            raise MisalignedError(f"duplicate prediction id {p.id!r}")
        pred_by_id[p.id] = p
    if set(gold_by_id) != set(pred_by_id):
        missing = sorted(set(gold_by_id) - set(pred_by_id))[:5]
        extra = sorted(set(pred_by_id) - set(gold_by_id))[:5]
        raise MisalignedError(f"sample ids differ (missing predictions {missing}, unknown {extra})")
    return [(pred_by_id[i], gold_by_id[i]) for i in gold_by_id]


def _score(pred, gold, units: Callable[[Sample], list]) -> ScoreCard:
    total = ScoreCard()
    for p, g in align(pred, gold):
        total = total + count_matches(units(p), units(g))
    return total


def score_ner(pred: Sequence[Sample], gold: Sequence[Sample]) -> ScoreCard:
    return _score(pred, gold, ner_units)


def score_re(pred: Sequence[Sample], gold: Sequence[Sample]) -> ScoreCard:
    return _score(pred, gold, re_units)


def score_ed(pred: Sequence[Sample], gold: Sequence[Sample]) -> ScoreCard:
    return _score(pred, gold, ed_units)


def score_eae(pred: Sequence[Sample], gold: Sequence[Sample]) -> ScoreCard:
    """Arguments are scored per event; the event itself (type, trigger) is
    assumed given from gold, so a prediction under a wrong event never matches."""
    return _score(pred, gold, eae_units)


SCORERS = {"ner": score_ner, "re": score_re, "ed": score_ed, "eae": score_eae}


def is_faithful(sentence: str, spans: Iterable[str]) -> bool:
    return all(span in sentence for span in spans)


def record_is_faithful(record) -> bool:
    target = record.target
    return target is not None and is_faithful(target.sentence, target.span_texts())


def score_faithfulness(records: Sequence) -> float:
    """Fraction of projection records whose target spans all occur verbatim
    in the target sentence. Records without a target count as unfaithful."""
    if not records:
        raise ValueError("faithfulness of an empty record set is undefined")
    return sum(1 for r in records if record_is_faithful(r)) / len(records)
