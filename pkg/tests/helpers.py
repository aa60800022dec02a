"""Random corpora, brute-force scoring oracles and scripted LLMs for the tests.

The oracles below deliberately avoid ``codeie.metrics``: they walk instances
with their own code and match with nested loops.
"""

from __future__ import annotations

import random
import re
from fractions import Fraction

from codeie.data import ExtractionInstance, Sample, Span
from codeie.llm import ChatRequest
from codeie.ontology import Attribute, Concept, Ontology

ASCII = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJ0123456789 -.,"
CJK = "中国北京人物欧盟拒绝德国呼吁抵制英国羊肉西门子投资美元电力项目사람서울東京"
AWKWARD = "\"'\\，。「」()[]=#"


def random_text(rng: random.Random, lo: int = 1, hi: int = 8) -> str:
    n = rng.randint(lo, hi)
    pools = [ASCII, CJK, AWKWARD]
    weights = [5, 4, 1]
    text = "".join(rng.choice(rng.choices(pools, weights)[0]) for _ in range(n))
    return text if text.strip() else text + "x"


# -- round-trip generator ------------------------------------------------------


def random_ontology(rng: random.Random, max_concepts: int = 8) -> Ontology:
    task = rng.choice(["NER", "RE", "ED", "EAE"])
    n_ent = rng.randint(1, 3)
    concepts = []
    for i in range(n_ent):
        attrs = (Attribute("name"),) + ((Attribute("alias"),) if rng.random() < 0.3 else ())
        concepts.append(Concept(f"E{i}", "Entity", {"zh": f"实体{i}"}, attrs))
    room = max_concepts - n_ent
    if task == "RE":
        for i in range(rng.randint(1, room)):
            attrs = [Attribute("subject", "ref"), Attribute("object", "ref")]
            if rng.random() < 0.3:
                attrs.append(Attribute("context", "refs"))
            concepts.append(Concept(f"R{i}", "Relation", {}, tuple(attrs)))
    elif task in ("ED", "EAE"):
        for i in range(rng.randint(1, room)):
            attrs = [Attribute("trigger")]
            for j in range(rng.randint(0, 3)):
                attrs.append(Attribute(f"role{j}", rng.choice(["refs", "refs", "ref"])))
            concepts.append(Concept(f"Ev{i}", "Event", {}, tuple(attrs)))
    return Ontology(task, tuple(concepts))


def _can_build(concept: Concept, depth: int) -> bool:
    has_refs = any(a.kind != "span" for a in concept.attributes)
    return depth >= 1 and (not has_refs or depth >= 2)


def random_instance(rng: random.Random, onto: Ontology, concept: Concept, depth: int) -> ExtractionInstance:
    slots = []
    for attr in concept.attributes:
        if attr.kind == "span":
            slots.append((attr.name, Span(random_text(rng))))
            continue
        options = [c for c in onto.concepts if _can_build(c, depth - 1)]
        if attr.kind == "ref":
            slots.append((attr.name, random_instance(rng, onto, rng.choice(options), depth - 1)))
        else:
            items = tuple(random_instance(rng, onto, rng.choice(options), depth - 1) for _ in range(rng.randint(0, 3)))
            slots.append((attr.name, items))
    return ExtractionInstance(concept.canonical_id, tuple(slots))


def random_roundtrip_case(rng: random.Random, max_depth: int = 3):
    onto = random_ontology(rng)
    tops = [c for c in onto.concepts if _can_build(c, max_depth)]
    if onto.task_kind != "NER":
        tops = [c for c in tops if c.base != "Entity"] or tops
    instances = [
        random_instance(rng, onto, rng.choice(tops), max_depth) for _ in range(rng.randint(0, 10))
    ]
    texts = [s.text for inst in instances for s in inst.spans()]
    sentence = " ~ ".join(texts + [random_text(rng)])
    return onto, instances, sentence


def depth_of(inst: ExtractionInstance) -> int:
    inner = [depth_of(x) for x in inst.walk() if x is not inst]
    nested = 0
    for _, v in inst.slots:
        if isinstance(v, ExtractionInstance):
            nested = max(nested, depth_of(v))
        elif isinstance(v, tuple):
            nested = max([nested] + [depth_of(x) for x in v])
    return 1 + nested


# -- metric corpora ------------------------------------------------------------


def _ent(rng, sentence, types, span=None):
    if span is None:
        a = rng.randrange(len(sentence) - 1)
        b = rng.randint(a + 1, min(len(sentence), a + 4))
        span = (a, b)
    a, b = span
    return ExtractionInstance(rng.choice(types), (("name", Span(sentence[a:b], a)),))


def _shift(rng, sentence, inst: ExtractionInstance) -> ExtractionInstance:
    m = inst.mention
    a = max(0, min(len(sentence) - len(m.text), m.start + rng.choice([-1, 1])))
    return ExtractionInstance(inst.concept, (("name", Span(sentence[a : a + len(m.text)], a)),))


def _unresolve(inst: ExtractionInstance) -> ExtractionInstance:
    key, span = inst.slots[0]
    return ExtractionInstance(inst.concept, ((key, Span(span.text)),) + inst.slots[1:])


ENT_TYPES = ["PER", "ORG", "LOC"]
REL_TYPES = ["WorkFor", "LocatedIn"]
EV_TYPES = ["Attack", "Meet"]
ROLES = ["agent", "target", "place"]


def _gold_item(rng, task, sentence):
    if task in ("ner", "ed"):
        return _ent(rng, sentence, ENT_TYPES if task == "ner" else EV_TYPES)
    if task == "re":
        return ExtractionInstance(
            rng.choice(REL_TYPES),
            (("subject", _ent(rng, sentence, ENT_TYPES)), ("object", _ent(rng, sentence, ENT_TYPES))),
        )
    trig = _ent(rng, sentence, EV_TYPES)
    slots = [("trigger", trig.mention)]
    for role in ROLES:
        slots.append((role, tuple(_ent(rng, sentence, ENT_TYPES) for _ in range(rng.randint(0, 2)))))
    return ExtractionInstance(trig.concept, tuple(slots))


def _perturb(rng, task, sentence, inst: ExtractionInstance) -> ExtractionInstance:
    r = rng.random()
    if task in ("ner", "ed"):
        if r < 0.25:
            types = ENT_TYPES if task == "ner" else EV_TYPES
            return ExtractionInstance(rng.choice(types), inst.slots)
        if r < 0.5:
            return _shift(rng, sentence, inst)
        if r < 0.6:
            return _unresolve(inst)
        return inst
    if task == "re":
        subj, obj = inst.slot("subject"), inst.slot("object")
        if r < 0.2:
            return ExtractionInstance(rng.choice(REL_TYPES), inst.slots)
        if r < 0.4:
            return ExtractionInstance(inst.concept, (("subject", _shift(rng, sentence, subj)), ("object", obj)))
        if r < 0.5:
            return ExtractionInstance(inst.concept, (("subject", subj), ("object", _perturb(rng, "ner", sentence, obj))))
        if r < 0.6:
            return ExtractionInstance(inst.concept, (("subject", obj), ("object", subj)))
        return inst
    # eae: keep the given event, perturb arguments
    slots = [inst.slots[0]]
    for role, args in inst.slots[1:]:
        new = []
        for arg in args:
            q = rng.random()
            if q < 0.15:
                continue
            if q < 0.3:
                new.append(_shift(rng, sentence, arg))
            elif q < 0.4:
                new.append(_unresolve(arg))
            elif q < 0.5:
                new.append(arg)
                new.append(arg)  # duplicate prediction
            else:
                new.append(arg)
        if rng.random() < 0.2:
            new.append(_ent(rng, sentence, ENT_TYPES))
        slots.append((role, tuple(new)))
    if rng.random() < 0.1:
        slots[1], slots[2] = (slots[1][0], slots[2][1]), (slots[2][0], slots[1][1])  # role swap
    return ExtractionInstance(inst.concept, tuple(slots))


def random_scoring_corpus(rng: random.Random, task: str, max_samples: int = 20):
    gold, pred = [], []
    for i in range(rng.randint(0, max_samples)):
        sentence = "".join(rng.choice("abcde中国") for _ in range(rng.randint(6, 24)))
        g = [_gold_item(rng, task, sentence) for _ in range(rng.randint(0, 5))]
        if g and rng.random() < 0.2:
            g.append(g[0])  # duplicate gold item
        p = []
        for inst in g:
            if rng.random() < 0.2 and task != "eae":
                continue
            p.append(_perturb(rng, task, sentence, inst))
            if rng.random() < 0.15:
                p.append(p[-1])  # duplicate prediction
        for _ in range(rng.randint(0, 2) if task != "eae" else 0):
            p.append(_gold_item(rng, task, sentence))
        rng.shuffle(p)
        gold.append(Sample(f"s{i}", sentence, g))
        pred.append(Sample(f"s{i}", sentence, p))
    rng.shuffle(pred)
    return pred, gold


# -- brute-force oracle --------------------------------------------------------


def _first_span(inst):
    for _, v in inst.slots:
        if isinstance(v, Span):
            return v
    return None


def _pos(span):
    if span is None or span.start is None:
        return None
    return (span.start, span.start + len(span.text))


def _oracle_units(task, sample):
    units = []
    for inst in sample.instances:
        if task in ("ner", "ed"):
            units.append([inst.concept, _pos(_first_span(inst))])
        elif task == "re":
            args = []
            for name, v in inst.slots:
                if isinstance(v, ExtractionInstance):
                    args.append([name, v.concept, _pos(_first_span(v))])
            if args:
                units.append([inst.concept, args])
        else:
            trig = _pos(_first_span(inst))
            for role, v in inst.slots:
                if isinstance(v, Span):
                    continue
                for arg in ([v] if isinstance(v, ExtractionInstance) else list(v)):
                    units.append([inst.concept, trig, role, _pos(_first_span(arg))])
    return units


def _contains_none(x):
    if x is None:
        return True
    if isinstance(x, list):
        return any(_contains_none(y) for y in x)
    return False


def oracle_counts(task, pred_samples, gold_samples):
    """(tp, predicted, gold) by exhaustive pairing, one gold item per match."""
    gold_by_id = {g.id: g for g in gold_samples}
    tp = n_pred = n_gold = 0
    for p in pred_samples:
        g = gold_by_id[p.id]
        # unresolved units are distinct per text, so key them with the raw text
        raw_pred = _oracle_units(task, p)
        texts = _unit_texts(task, p)
        dedup = []
        for unit, text in zip(raw_pred, texts):
            probe = (unit, text if _contains_none(unit) else None)
            if all(probe != d for d in dedup):
                dedup.append(probe)
        gold_units = _oracle_units(task, g)
        used = [False] * len(gold_units)
        for unit, _ in dedup:
            if _contains_none(unit):
                continue
            for j, gu in enumerate(gold_units):
                if not used[j] and gu == unit:
                    used[j] = True
                    tp += 1
                    break
        n_pred += len(dedup)
        n_gold += len(gold_units)
    return tp, n_pred, n_gold


def _unit_texts(task, sample):
    """Texts aligned with _oracle_units, used to tell unresolved units apart."""
    out = []
    for inst in sample.instances:
        if task in ("ner", "ed"):
            out.append([_first_span(inst).text])
        elif task == "re":
            args = [[n, _first_span(v).text] for n, v in inst.slots if isinstance(v, ExtractionInstance)]
            if args:
                out.append(args)
        else:
            trig = _first_span(inst).text
            for role, v in inst.slots:
                if isinstance(v, Span):
                    continue
                for arg in ([v] if isinstance(v, ExtractionInstance) else list(v)):
                    out.append([trig, role, _first_span(arg).text])
    return out


def f1_of(tp, n_pred, n_gold) -> Fraction:
    p = Fraction(tp, n_pred) if n_pred else Fraction(0)
    r = Fraction(tp, n_gold) if n_gold else Fraction(0)
    return 2 * p * r / (p + r) if p + r else Fraction(0)


# -- scripted projection LLM ----------------------------------------------------


def joint_reply(sentence: str, spans) -> str:
    import json

    return f'"sentence": {json.dumps(sentence, ensure_ascii=False)}\n"spans": {json.dumps(list(spans), ensure_ascii=False)}'


def span_reply(span: str) -> str:
    import json

    return f'"spans": {json.dumps([span], ensure_ascii=False)}'


_REC_RE = re.compile(r"rec(\d{3})")


def record_key(request: ChatRequest) -> str:
    """The record tag embedded in the query part of a projection prompt."""
    hits = _REC_RE.findall(request.prompt)
    return f"rec{hits[-1]}"


_SPAN_LIST_RE = re.compile(r'"spans": \[(.*?)\]')


def query_span(prompt: str) -> str:
    """Source span of a span-rephrase prompt (the last filled spans list)."""
    import json

    return json.loads("[" + _SPAN_LIST_RE.findall(prompt)[-1] + "]")[0]


class ProjectionScript:
    """Per-record, per-model scripted replies for the three stages.

    ``behaviours[record_id][model]`` is a dict with ``joint`` (raw reply),
    optional ``span`` (source span -> raw reply) and optional ``sentence``.
    """

    def __init__(self, behaviours):
        self.behaviours = behaviours

    def __call__(self, request: ChatRequest) -> str:
        b = self.behaviours[record_key(request)][request.model]
        if request.tag == "joint":
            return b["joint"]
        if request.tag == "span_rephrase":
            return b["span"][query_span(request.prompt)]
        if request.tag == "sentence_rephrase":
            return b["sentence"]
        raise AssertionError(f"unexpected stage {request.tag}")


def expected_attempt(b, src_spans):
    """Calls one pipeline pass should make for behaviour ``b``, derived
    directly from the scripted replies: (calls, succeeded)."""
    import json

    calls = [("joint", None)]
    raw = b["joint"]
    try:
        lines = dict(l.split(": ", 1) for l in raw.splitlines())
        sentence = json.loads(lines['"sentence"'])
        spans = json.loads(lines['"spans"'])
    except (ValueError, KeyError):
        return calls, False
    if len(spans) != len(src_spans):
        return calls, False
    flag = False
    for m, (t, s) in enumerate(zip(list(spans), src_spans)):
        if t in sentence:
            continue
        calls.append(("span_rephrase", s))
        fixed = json.loads(b["span"][s].split(": ", 1)[1])[0]
        if fixed and fixed in sentence:
            spans[m] = fixed
        else:
            flag = True
    if not flag:
        return calls, all(t in sentence for t in spans)
    calls.append(("sentence_rephrase", None))
    reply = b["sentence"]
    if reply.strip().strip('"') == "modification failure":
        return calls, False
    sentence = json.loads(reply.split(": ", 1)[1]) if reply.startswith('"sentence"') else reply
    return calls, all(t in sentence for t in spans)


def scripted_corpus(n: int = 50, primary: str = "small", fallback: str = "large"):
    """``n`` records cycling through every control-flow branch.

    Returns (corpus, behaviours, expected_status).
    """
    corpus, behaviours, expected = [], {}, {}
    for i in range(n):
        kind = i % 10
        rid = f"rec{i:03d}"
        names = [f"Alpha{i}", f"Beta{i}", f"Gamma{i}"][: (0 if kind == 8 else 3 if kind == 7 else 2)]
        sentence = f"{rid} says " + " and ".join(names) + " met." if names else f"{rid} FM involves 2 - 4.7% of people."
        insts = [ExtractionInstance.make("PER", name=Span(nm, sentence.index(nm))) for nm in names]
        corpus.append(Sample(rid, sentence, insts))
        zh = [f"甲{i}", f"乙{i}", f"丙{i}"][: len(names)]
        good = "，".join(zh) + "见面了。" if zh else "FM 影响了2 - 4.7% 的人。"
        wrong = [z + "某" for z in zh]  # translations that do not occur in ``good``
        clean = {"joint": joint_reply(good, zh)}
        span_fix = {"joint": joint_reply(good, [wrong[0]] + zh[1:]) if zh else "", "span": {names[0]: span_reply(zh[0])} if zh else {}}
        span_fail = {"span": {names[0]: span_reply("不存在")} if zh else {}}
        if kind in (0, 8):
            b = {primary: clean}
            status = "ok"
        elif kind == 1:
            b = {primary: span_fix}
            status = "ok"
        elif kind == 2:
            b = {primary: {"joint": joint_reply(good, [wrong[0]] + zh[1:]), **span_fail, "sentence": f'"sentence": "{good}{wrong[0]}"'}}
            status = "ok"
        elif kind == 3:
            b = {primary: {"joint": joint_reply(good, [wrong[0]] + zh[1:]), **span_fail, "sentence": '"modification failure"'}, fallback: clean}
            status = "ok"
        elif kind == 4:
            failing = {"joint": joint_reply(good, [wrong[0]] + zh[1:]), **span_fail, "sentence": f'"sentence": "{good}"'}
            b = {primary: failing, fallback: failing}
            status = "needs_review"
        elif kind == 5:
            b = {primary: {"joint": joint_reply(good, zh[:1])}, fallback: span_fix}
            status = "ok"
        elif kind == 6:
            b = {primary: {"joint": "I cannot help with that."}, fallback: {"joint": "Sorry."}}
            status = "needs_review"
        elif kind == 7:
            b = {primary: {
                "joint": joint_reply(good, [wrong[0], zh[1], wrong[2]]),
                "span": {names[0]: span_reply(zh[0]), names[2]: span_reply("无")},
                "sentence": f'"sentence": "{good}{wrong[2]}"',
            }}
            status = "ok"
        else:  # kind 9: primary span-count mismatch, fallback needs a sentence rephrase
            b = {primary: {"joint": joint_reply(good, zh + ["多余"])},
                 fallback: {"joint": joint_reply(good, [wrong[0]] + zh[1:]), **span_fail, "sentence": f'"sentence": "{wrong[0]}{good}"'}}
            status = "ok"
        behaviours[rid] = b
        expected[rid] = status
    return corpus, behaviours, expected


def control_flow_deviations(corpus, behaviours, requests, models):
    """Compare the mock's request log with the calls derived from the script.

    Returns a list of human-readable deviations (empty when the pipeline
    followed the three-stage guards and made at most one failover).
    """
    by_record: dict[str, list] = {s.id: [] for s in corpus}
    for r in requests:
        span = query_span(r.prompt) if r.tag == "span_rephrase" else None
        by_record[record_key(r)].append((r.model, r.tag, span))
    problems = []
    for sample in corpus:
        b = behaviours[sample.id]
        expected = []
        for k, model in enumerate(models):
            calls, ok = expected_attempt(b[model], sample.span_texts())
            expected += [(model, stage, span) for stage, span in calls]
            if ok:
                break
        actual = by_record[sample.id]
        if actual != expected:
            problems.append(f"{sample.id}: expected {expected}, got {actual}")
        if len({m for m, _, _ in actual}) > 2 or sum(1 for m, t, _ in actual if t == "joint") > 2:
            problems.append(f"{sample.id}: more than one failover")
    return problems
