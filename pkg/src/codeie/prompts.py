"""Prompt templates for label projection.

Templates are stored as skeletons with ``<SRC>``/``<TGT>`` language markers and
the few-shot exemplars kept as data. :func:`projection_prompts` instantiates
them for a language pair; the resulting :class:`PromptTemplate` bodies only
contain the declared ``{placeholders}``.

The exemplars are English/Chinese. For zh->en they are shown in reverse
direction; for any other pair the en/zh exemplars stay as format
demonstrations under their own language labels.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

PLACEHOLDERS = frozenset({"src_sentence", "src_spans", "src_span", "tgt_sentence", "tgt_lang_spans"})
_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_]+)\}")

LANGUAGE_NAMES = {
    "en": "English",
    "zh": "Chinese",
    "de": "German",
    "es": "Spanish",
    "nl": "Dutch",
    "ru": "Russian",
    "bn": "Bengali",
    "fa": "Persian",
    "hi": "Hindi",
    "ko": "Korean",
    "tr": "Turkish",
    "fr": "French",
    "ja": "Japanese",
    "ar": "Arabic",
}

REFUSAL_MARKER = "modification failure"


def language_name(code: str) -> str:
    return LANGUAGE_NAMES.get(code, code)


# (language, sentence, spans) triples; each exemplar is an (en, zh) pair
JOINT_EXEMPLARS = [
    (
        ("en", "The EU rejected Germany's call for a boycott of British lamb.", ["EU"]),
        ("zh", "欧盟拒绝德国呼吁抵制英国羊肉。", ["欧盟"]),
    ),
    (
        ("en", "FM involves 2 - 4.7% of the general population.", []),
        ("zh", "FM 影响了2 - 4.7% 的普通人群。", []),
    ),
    (
        ("en", "4000 guests from home and abroad attended the opening ceremony.", ["home", "abroad"]),
        ("zh", "4000名来自国内和国外的嘉宾出席了开幕式。", ["国内", "国外"]),
    ),
]

SPAN_EXEMPLAR = (
    ("en", "Siemens invested 800 million US dollars to complete the electric power plant project.", ["US"]),
    ("zh", "西门子投资了8亿美元完成了电力厂项目。", ["美"]),
)

JOINT_SKELETON = """Translate the sentence and spans from <SRC> to <TGT>.

Please follow these guidelines:
1. Translate each span considering the context of the sentence.
2. Ensure the number of spans after translation matches the original number of spans.
3. When outputting spans, ensure only to output the translation of each span.

The following is a few examples:

<EXEMPLARS>
Please translate the following sentence and spans:
[<SRC>]
"sentence": "{src_sentence}"
"spans": [{src_spans}]
[<TGT>]
"""

SPAN_SKELETON = """Please find the <TGT> span corresponding to the <SRC> span in the <TGT> sentence.

Please follow these guidelines:
1. Only find the span in the <TGT> sentence that corresponds to the <SRC> span.
2. Ensure that the <TGT> span must be semantically consistent with the <SRC> span.

The following is an example:

<EXEMPLARS>
Please find the corresponding span in the <TGT> sentence:
[<SRC>]
"sentence": "{src_sentence}"
"spans": [{src_span}]
[<TGT>]
"sentence": "{tgt_sentence}"
"spans": """

SENTENCE_SKELETON = """Please translate the following sentence from <SRC> to <TGT>.

Please follow these guidelines:
1. Ensure that the translation includes the following spans: [{tgt_lang_spans}].
2. If the target sentence is semantically inconsistent with the source sentence, return "modification failure".

[<SRC>]
"sentence": "{src_sentence}"
[<TGT>]
"sentence": """


def json_inner(text: str) -> str:
    """``text`` JSON-escaped, without the surrounding quotes."""
    return json.dumps(text, ensure_ascii=False)[1:-1]


def format_span_list(spans) -> str:
    return ", ".join(json.dumps(s, ensure_ascii=False) for s in spans)


def _block(lang: str, sentence: str, spans) -> str:
    return f'[{language_name(lang)}]\n"sentence": "{json_inner(sentence)}"\n"spans": [{format_span_list(spans)}]\n'


def _exemplars(pairs, src: str, tgt: str) -> str:
    out = []
    for en, zh in pairs:
        first, second = (zh, en) if (src, tgt) == ("zh", "en") else (en, zh)
        out.append(_block(*first) + _block(*second))
    return "\n".join(out)


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    def __post_init__(self):
        unknown = set(_PLACEHOLDER_RE.findall(self.body)) - PLACEHOLDERS
        if unknown:
            raise TemplateError(f"{self.name}: undeclared placeholders {sorted(unknown)}")

    @property
    def placeholders(self) -> set[str]:
        return set(_PLACEHOLDER_RE.findall(self.body))

    def format(self, **values: str) -> str:
        missing = self.placeholders - set(values)
        if missing:
            raise TemplateError(f"{self.name}: missing values for {sorted(missing)}")
        return _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], self.body)


@dataclass(frozen=True)
class ProjectionPrompts:
    src_lang: str
    tgt_lang: str
    joint_translation: PromptTemplate
    span_rephrase: PromptTemplate
    sentence_rephrase: PromptTemplate

    @property
    def tgt_header(self) -> str:
        return f"[{language_name(self.tgt_lang)}]"

    def joint(self, sentence: str, spans) -> str:
        return self.joint_translation.format(src_sentence=json_inner(sentence), src_spans=format_span_list(spans))

    def span(self, src_sentence: str, src_span: str, tgt_sentence: str) -> str:
        return self.span_rephrase.format(
            src_sentence=json_inner(src_sentence),
            src_span=format_span_list([src_span]),
            tgt_sentence=json_inner(tgt_sentence),
        )

    def sentence(self, tgt_spans, src_sentence: str) -> str:
        return self.sentence_rephrase.format(
            tgt_lang_spans=format_span_list(tgt_spans), src_sentence=json_inner(src_sentence)
        )


def _fill(skeleton: str, src: str, tgt: str, exemplars: str = "") -> str:
    return (
        skeleton.replace("<EXEMPLARS>", exemplars)
        .replace("<SRC>", language_name(src))
        .replace("<TGT>", language_name(tgt))
    )


def projection_prompts(src_lang: str, tgt_lang: str) -> ProjectionPrompts:
    if src_lang == tgt_lang:
        raise TemplateError("source and target language must differ")
    return ProjectionPrompts(
        src_lang,
        tgt_lang,
        PromptTemplate("joint_translation", _fill(JOINT_SKELETON, src_lang, tgt_lang, _exemplars(JOINT_EXEMPLARS, src_lang, tgt_lang))),
        PromptTemplate("span_rephrase", _fill(SPAN_SKELETON, src_lang, tgt_lang, _exemplars([SPAN_EXEMPLAR], src_lang, tgt_lang))),
        PromptTemplate("sentence_rephrase", _fill(SENTENCE_SKELETON, src_lang, tgt_lang)),
    )
