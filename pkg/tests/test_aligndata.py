import pytest
from hypothesis import given, settings, strategies as st

from codeie.aligndata import (
    AlignedPair,
    AlignmentError,
    assemble_parallel_dataset,
    build_alignment_dataset,
    build_alignment_sample,
)
from codeie.data import ExtractionInstance, Sample, Span
from codeie.ontology import load_ontology
from codeie.parser import parse_completion
from codeie.projection import ProjectionRecord

ONTO = load_ontology({"task": "NER", "concepts": [{"id": "PER", "names": {"zh": "人物"}}, {"id": "ORG", "names": {"zh": "组织"}}]})


def per(text, sentence, concept="PER"):
    return ExtractionInstance.make(concept, name=Span(text, sentence.index(text)))


def pair(src_text="Steve", tgt_text="史蒂夫"):
    s = f"{src_text} became CEO."
    t = f"{tgt_text}成为了CEO。"
    return AlignedPair(Sample("p", s, [per(src_text, s)], "en"), Sample("p", t, [per(tgt_text, t)], "zh"))


def record(i, status="ok"):
    p = pair(f"Steve{i}", f"史蒂夫{i}")
    return ProjectionRecord(source=p.source, target=p.target if status != "failed" else None, status=status)


def test_sample_structure():
    prompt = build_alignment_sample(pair(), ONTO)
    assert prompt.completion == 'results = [PER("史蒂夫")]'
    assert 'results = [PER("Steve")]' in prompt.instruction
    assert prompt.instruction.index('sentence = "Steve became CEO."') < prompt.instruction.index('results = [PER("Steve")]') < prompt.instruction.index('sentence = "史蒂夫成为了CEO。"')
    assert "English" in prompt.instruction.splitlines()[0] and "Chinese" in prompt.instruction.splitlines()[0]
    assert prompt.instruction.count("class PER(Entity):") == 2
    assert prompt.meta["direction"] == "en->zh" and prompt.meta["task"] == "alignment"
    assert not prompt.instruction.rstrip().endswith("]")


def test_empty_pair():
    p = AlignedPair(Sample("e", "Nothing here.", [], "en"), Sample("e", "这里没有。", [], "zh"))
    assert build_alignment_sample(p, ONTO).completion == "results = []"


def test_exemplar_record():
    en = "The EU rejected Germany's call for a boycott of British lamb."
    zh = "欧盟拒绝德国呼吁抵制英国羊肉。"
    rec = ProjectionRecord(source=Sample("eu", en, [per("EU", en, "ORG")], "en"), target=Sample("eu", zh, [per("欧盟", zh, "ORG")], "zh"), status="ok")
    samples = build_alignment_dataset([rec], {"en": ONTO, "zh": ONTO})
    assert len(samples) == 2
    assert all(en in s.instruction and zh in s.instruction for s in samples)
    assert samples[1].completion == 'results = [ORG("EU")]'


def test_invariant_violations():
    p = pair()
    with pytest.raises(AlignmentError, match="instances"):
        build_alignment_sample(AlignedPair(p.source, Sample("p", p.target.sentence, [], "zh")), ONTO)
    with pytest.raises(AlignmentError, match="concept"):
        bad = Sample("p", p.target.sentence, [per("史蒂夫", p.target.sentence, "ORG")], "zh")
        build_alignment_sample(AlignedPair(p.source, bad), ONTO)
    with pytest.raises(AlignmentError, match="missing"):
        bad = Sample("p", "别的句子。", [ExtractionInstance.make("PER", name=Span("史蒂夫"))], "zh")
        build_alignment_sample(AlignedPair(p.source, bad), ONTO)


def test_assemble_counts():
    recs = [record(0), record(1), record(2), record(3, "needs_review")]
    both = assemble_parallel_dataset(recs, "both")
    assert len(both) == 6
    assert [p.direction for p in both[:2]] == [("en", "zh"), ("zh", "en")]
    assert len(assemble_parallel_dataset(recs, "one")) == 3
    with pytest.raises(ValueError):
        assemble_parallel_dataset(recs, "sideways")


def test_missing_language_ontology():
    with pytest.raises(AlignmentError, match="no ontology"):
        build_alignment_dataset([record(0)], {"en": ONTO})


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from(["ok", "needs_review", "failed"]), max_size=12), st.sampled_from(["both", "one"]))
def test_assemble_is_filter_map(statuses, directions):
    recs = [record(i, s) for i, s in enumerate(statuses)]
    ok = statuses.count("ok")
    pairs = assemble_parallel_dataset(recs, directions)
    assert len(pairs) == (2 * ok if directions == "both" else ok)
    for prompt, p in zip(build_alignment_dataset(recs, {"en": ONTO, "zh": ONTO}, directions), pairs):
        report = parse_completion(prompt.completion, ONTO, p.target.sentence)
        assert [i.without_offsets() for i in report.instances] == [i.without_offsets() for i in p.target.instances]
        assert [i.mention.start for i in report.instances] == [i.mention.start for i in p.target.instances]
