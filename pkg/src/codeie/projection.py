"""Three-stage label projection: joint translation, span rephrase, sentence rephrase.

For one source sample the pipeline

1. asks the LLM to translate the sentence and its spans together;
2. for every translated span missing from the translated sentence, asks for
   the matching span inside that sentence, and raises a flag if the answer
   is still not a substring;
3. only when flagged, asks for a new translation that contains all spans.

If spans are still missing, the whole pipeline is re-run once with the
fallback model; records that fail again are marked ``needs_review`` and
exported for manual annotation.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .data import ExtractionInstance, Sample, Span, dumps, read_jsonl, resolve_offsets
from .llm import ChatClient, ChatRequest, LLMError
from .metrics import is_faithful, score_faithfulness
from .prompts import REFUSAL_MARKER, ProjectionPrompts

logger = logging.getLogger(__name__)

STAGES = ("joint", "span_rephrase", "sentence_rephrase", "failover", "manual")
STATUSES = ("ok", "needs_review", "failed")


class StageError(Exception):
    def __init__(self, stage: str, reason: str, partial: tuple[str, list[str]] | None = None):
        super().__init__(f"{stage}: {reason}")
        self.stage = stage
        self.reason = reason
        self.partial = partial


@dataclass
class StageEntry:
    stage: str
    model: str
    request: str | None
    response: str | None
    outcome: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "stage": self.stage,
            "model": self.model,
            "request": self.request,
            "response": self.response,
            "outcome": self.outcome,
        }


@dataclass
class ProjectionRecord:
    source: Sample
    target: Sample | None = None
    stage_log: list[StageEntry] = field(default_factory=list)
    status: str = "failed"

    @property
    def id(self) -> str:
        return self.source.id

    @property
    def stages(self) -> list[str]:
        return [e.stage for e in self.stage_log]

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "status": self.status,
            "source": self.source.to_dict(),
            "target": None if self.target is None else self.target.to_dict(),
            "stage_log": [e.to_dict() for e in self.stage_log],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ProjectionRecord":
        return cls(
            source=Sample.from_dict(d["source"]),
            target=None if d.get("target") is None else Sample.from_dict(d["target"]),
            stage_log=[StageEntry(**e) for e in d.get("stage_log", [])],
            status=d["status"],
        )


@dataclass
class ProjectionPolicy:
    primary_model: str = "gpt-4o-mini"
    fallback_model: str | None = "gpt-4o-2024-08-06"
    max_failovers: int = 1
    normalization: str | None = None  # opt-in: "NFC" / "NFKC"
    concurrency: int = 4

    def models(self) -> list[str]:
        extra = [self.fallback_model] * self.max_failovers if self.fallback_model else []
        return [self.primary_model, *extra]


# -- response parsing -------------------------------------------------------

_decoder = json.JSONDecoder()


def _after_label(text: str, label: str) -> str | None:
    m = re.search(r'"?' + label + r'"?\s*:\s*', text)
    return None if m is None else text[m.end():]


def _json_value(text: str):
    try:
        value, _ = _decoder.raw_decode(text)
        return value
    except ValueError:
        return None


def _loose_string(text: str) -> str:
    line = text.strip().splitlines()[0].strip() if text.strip() else ""
    if len(line) >= 2 and line[0] in "\"“" and line[-1] in "\"”":
        line = line[1:-1]
    return line


def _loose_list(text: str) -> list[str] | None:
    m = re.match(r"\s*\[(.*?)\]", text, re.S)
    if m is None:
        return None
    return re.findall(r'"((?:[^"\\]|\\.)*)"', m.group(1))


def _focus(text: str, header: str | None) -> str:
    if header and header in text:
        return text[text.rindex(header) + len(header):]
    return text


def parse_joint_response(text: str, header: str | None = None) -> tuple[str, list[str]]:
    """Pull ``"sentence": "..."`` and ``"spans": [...]`` out of a response.

    Surrounding prose is ignored; when the target-language header is present
    only the text after its last occurrence is considered.
    """
    body = _focus(text, header)
    rest = _after_label(body, "sentence")
    if rest is None:
        raise ValueError("no sentence block")
    sentence = _json_value(rest)
    if not isinstance(sentence, str):
        sentence = _loose_string(rest)
    if not sentence:
        raise ValueError("empty sentence")
    rest = _after_label(body, "spans")
    if rest is None:
        raise ValueError("no spans block")
    spans = _json_value(rest)
    if not (isinstance(spans, list) and all(isinstance(s, str) for s in spans)):
        spans = _loose_list(rest)
    if spans is None:
        raise ValueError("unreadable spans block")
    return sentence, spans


def parse_span_response(text: str) -> str | None:
    rest = _after_label(text, "spans")
    candidate = rest if rest is not None else text.strip()
    value = _json_value(candidate)
    if isinstance(value, list):
        return value[0] if value and isinstance(value[0], str) else None
    if isinstance(value, str):
        return value
    loose = _loose_list(candidate)
    if loose is not None:
        return loose[0] if loose else None
    return _loose_string(candidate) or None


def parse_sentence_response(text: str) -> str:
    rest = _after_label(text, "sentence")
    candidate = rest if rest is not None else text.strip()
    value = _json_value(candidate)
    return value if isinstance(value, str) else _loose_string(candidate)


def is_refusal(text: str) -> bool:
    return text.strip().strip("\"'“”.。 ").lower() == REFUSAL_MARKER


# -- stages -----------------------------------------------------------------


def _ask(llm: ChatClient, model: str, prompt: str, tag: str) -> str:
    return llm.complete(ChatRequest.user(model, prompt, temperature=0.0, tag=tag)).content


def _norm(text: str, form: str | None) -> str:
    return unicodedata.normalize(form, text) if form else text


def joint_translate(
    src_sentence: str,
    src_spans: Sequence[str],
    prompts: ProjectionPrompts,
    llm: ChatClient,
    *,
    model: str,
    log: list[StageEntry] | None = None,
    normalization: str | None = None,
) -> tuple[str, list[str]]:
    prompt = prompts.joint(src_sentence, src_spans)
    raw = _ask(llm, model, prompt, "joint")
    try:
        sentence, spans = parse_joint_response(raw, prompts.tgt_header)
    except ValueError as e:
        if log is not None:
            log.append(StageEntry("joint", model, prompt, raw, f"unparseable: {e}"))
        raise StageError("joint", f"unparseable response ({e})") from None
    sentence = _norm(sentence, normalization)
    spans = [_norm(s, normalization) for s in spans]
    if len(spans) != len(src_spans):
        if log is not None:
            log.append(StageEntry("joint", model, prompt, raw, "span-count-mismatch"))
        raise StageError("joint", f"span-count-mismatch: {len(spans)} != {len(src_spans)}")
    if log is not None:
        outcome = "ok" if is_faithful(sentence, spans) else "missing-spans"
        log.append(StageEntry("joint", model, prompt, raw, outcome))
    return sentence, spans


def span_rephrase(
    tgt_spans: Sequence[str],
    src_spans: Sequence[str],
    tgt_sentence: str,
    llm: ChatClient,
    *,
    src_sentence: str,
    prompts: ProjectionPrompts,
    model: str,
    log: list[StageEntry] | None = None,
    normalization: str | None = None,
) -> tuple[list[str], bool]:
    """Replace each missing target span by the LLM's in-sentence match.

    Returns the updated spans and a flag that is True when at least one span
    could not be found in ``tgt_sentence``. Spans already present cost no
    LLM call.
    """
    if len(tgt_spans) != len(src_spans):
        raise ValueError("target and source span lists differ in length")
    spans = list(tgt_spans)
    flag = False
    for m, (tgt, src) in enumerate(zip(tgt_spans, src_spans)):
        if tgt in tgt_sentence:
            continue
        prompt = prompts.span(src_sentence, src, tgt_sentence)
        raw = _ask(llm, model, prompt, "span_rephrase")
        corrected = parse_span_response(raw)
        if corrected is not None:
            corrected = _norm(corrected, normalization)
        if corrected and corrected in tgt_sentence:
            spans[m] = corrected
            outcome = "corrected"
        else:
            flag = True
            outcome = "still-missing"
        if log is not None:
            log.append(StageEntry("span_rephrase", model, prompt, raw, outcome))
    return spans, flag


def sentence_rephrase(
    tgt_spans: Sequence[str],
    src_sentence: str,
    llm: ChatClient,
    *,
    prompts: ProjectionPrompts,
    model: str,
    log: list[StageEntry] | None = None,
    normalization: str | None = None,
) -> str:
    prompt = prompts.sentence(tgt_spans, src_sentence)
    raw = _ask(llm, model, prompt, "sentence_rephrase")
    sentence = _norm(parse_sentence_response(raw), normalization)
    if is_refusal(sentence) or is_refusal(raw):
        if log is not None:
            log.append(StageEntry("sentence_rephrase", model, prompt, raw, "refused"))
        raise StageError("sentence_rephrase", "modification failure")
    if log is not None:
        outcome = "ok" if is_faithful(sentence, tgt_spans) else "missing-spans"
        log.append(StageEntry("sentence_rephrase", model, prompt, raw, outcome))
    return sentence


def run_stages(
    src: Sample, prompts: ProjectionPrompts, llm: ChatClient, model: str, log: list[StageEntry], normalization=None
) -> tuple[str, list[str]]:
    """One pass of the three stages with one model; raises StageError unless
    every target span ends up inside the target sentence."""
    src_spans = src.span_texts()
    sentence, spans = joint_translate(
        src.sentence, src_spans, prompts, llm, model=model, log=log, normalization=normalization
    )
    spans, flag = span_rephrase(
        spans, src_spans, sentence, llm,
        src_sentence=src.sentence, prompts=prompts, model=model, log=log, normalization=normalization,
    )
    if flag:
        try:
            sentence = sentence_rephrase(
                spans, src.sentence, llm, prompts=prompts, model=model, log=log, normalization=normalization
            )
        except StageError as e:
            e.partial = (sentence, spans)
            raise
    if not is_faithful(sentence, spans):
        raise StageError("verify", "missing-spans", (sentence, spans))
    return sentence, spans


def _retarget(inst: ExtractionInstance, text: str, start: int | None) -> ExtractionInstance:
    slots, done = [], False
    for key, value in inst.slots:
        if not done and isinstance(value, Span):
            slots.append((key, Span(text, start)))
            done = True
        else:
            slots.append((key, value))
    return ExtractionInstance(inst.concept, tuple(slots))


def build_target(src: Sample, sentence: str, spans: Sequence[str], lang: str, *, offsets: bool) -> Sample:
    used: list[tuple[int, int]] = []
    instances = []
    it = iter(spans)
    for inst in src.instances:
        if inst.mention is None:
            instances.append(inst)
            continue
        text = next(it)
        start = None
        if offsets:
            hit = resolve_offsets(text, sentence, used)
            if hit is None and text:
                pos = sentence.find(text)
                hit = (pos, pos + len(text)) if pos >= 0 else None
            if hit is not None:
                used.append(hit)
                start = hit[0]
        instances.append(_retarget(inst, text, start))
    return Sample(src.id, sentence, instances, lang)


def project_sample(
    src: Sample, prompts: ProjectionPrompts, llm: ChatClient, policy: ProjectionPolicy | None = None
) -> ProjectionRecord:
    """Run the pipeline on one sample, with failover and review queueing.

    Never raises for model misbehaviour; outcomes land in ``status`` and
    ``stage_log``. Transport failures after retries give status ``failed``.
    """
    policy = policy or ProjectionPolicy()
    record = ProjectionRecord(source=src)
    partial = None
    for k, model in enumerate(policy.models()):
        if k:
            record.stage_log.append(StageEntry("failover", model, None, None, "retry"))
        try:
            sentence, spans = run_stages(src, prompts, llm, model, record.stage_log, policy.normalization)
        except StageError as e:
            partial = e.partial or partial
            logger.debug("record %s failed with %s: %s", src.id, model, e)
            continue
        except LLMError as e:
            record.stage_log.append(StageEntry("joint" if k == 0 else "failover", model, None, None, f"error: {e}"))
            record.status = "failed"
            return record
        record.target = build_target(src, sentence, spans, prompts.tgt_lang, offsets=True)
        record.status = "ok"
        return record
    if partial is not None:
        record.target = build_target(src, partial[0], partial[1], prompts.tgt_lang, offsets=False)
    record.stage_log.append(StageEntry("manual", "", None, None, "queued"))
    record.status = "needs_review"
    return record


# -- corpus level -----------------------------------------------------------


class Checkpoint:
    """Append-only JSONL of finished records, safe to share between workers."""

    FINAL = ("ok", "needs_review")

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def load(self) -> dict[str, ProjectionRecord]:
        if not self.path.exists():
            return {}
        done = {}
        for d in read_jsonl(self.path):
            rec = ProjectionRecord.from_dict(d)
            done[rec.id] = rec
        return done

    def append(self, record: ProjectionRecord) -> None:
        line = dumps(record.to_dict()) + "\n"
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(line)
                f.flush()

    def rewrite(self, records: Iterable[ProjectionRecord]) -> None:
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        with self._lock:
            with open(tmp, "w", encoding="utf-8") as f:
                for rec in records:
                    f.write(dumps(rec.to_dict()) + "\n")
            tmp.replace(self.path)


@dataclass
class ProjectionResult:
    records: list[ProjectionRecord]
    faithfulness: float | None
    review_export: list[ProjectionRecord]

    def counts(self) -> dict[str, int]:
        out = {s: 0 for s in STATUSES}
        for r in self.records:
            out[r.status] += 1
        return out


def project_corpus(
    corpus: Sequence[Sample],
    prompts: ProjectionPrompts,
    llm: ChatClient,
    policy: ProjectionPolicy | None = None,
    *,
    checkpoint: Checkpoint | str | Path | None = None,
) -> ProjectionResult:
    """Project every sample with at most ``policy.concurrency`` workers.

    Output order follows ``corpus``. With a checkpoint, records already
    finished (ok or needs_review) are reused without any LLM call, and the
    checkpoint is rewritten in corpus order at the end.
    """
    policy = policy or ProjectionPolicy()
    if checkpoint is not None and not isinstance(checkpoint, Checkpoint):
        checkpoint = Checkpoint(checkpoint)
    done = checkpoint.load() if checkpoint is not None else {}

    def work(sample: Sample) -> ProjectionRecord:
        prev = done.get(sample.id)
        if prev is not None and prev.status in Checkpoint.FINAL:
            return prev
        rec = project_sample(sample, prompts, llm, policy)
        if checkpoint is not None:
            checkpoint.append(rec)
        return rec

    if policy.concurrency <= 1 or len(corpus) <= 1:
        records = [work(s) for s in corpus]
    else:
        with ThreadPoolExecutor(max_workers=policy.concurrency) as pool:
            records = list(pool.map(work, corpus))

    if checkpoint is not None and records:
        checkpoint.rewrite(records)
    review = [r for r in records if r.status == "needs_review"]
    faith = score_faithfulness(records) if records else None
    return ProjectionResult(records, faith, review)


def load_records(path: str | Path) -> list[ProjectionRecord]:
    return [ProjectionRecord.from_dict(d) for d in read_jsonl(path)]
