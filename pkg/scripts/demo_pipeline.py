"""End-to-end walk through the toolkit with a scripted model.

Projects a tiny English corpus to Chinese, builds alignment samples from the
result, renders an extraction prompt and scores a parsed completion. No
network access is needed; pass ``--live`` to use the configured endpoint.
"""

import argparse
import json
import logging

from codeie.aligndata import build_alignment_dataset
from codeie.codegen import build_training_pair
from codeie.data import ExtractionInstance, Sample, Span
from codeie.llm import ClientPolicy, HTTPChatClient, MockClient
from codeie.metrics import score_ner
from codeie.ontology import load_ontology
from codeie.parser import parse_completion
from codeie.projection import ProjectionPolicy, project_corpus
from codeie.prompts import projection_prompts

logger = logging.getLogger("demo")

ONTOLOGY = {
    "task": "NER",
    "dataset": "demo",
    "concepts": [
        {"id": "PER", "names": {"zh": "人物"}, "description": "PER refers to named people.", "examples": ["Steve"]},
        {"id": "ORG", "names": {"zh": "组织"}},
    ],
}

# canned replies keyed by a word of the source sentence
CANNED = {
    "Steve": '"sentence": "史蒂夫于1998年成为苹果公司的CEO。"\n"spans": ["史蒂夫", "苹果"]',
    "EU": '"sentence": "欧盟拒绝德国呼吁抵制英国羊肉。"\n"spans": ["欧洲联盟"]',
}


def canned(request):
    if request.tag == "span_rephrase":
        return '"spans": ["欧盟"]'
    for key, reply in CANNED.items():
        if key in request.prompt.rsplit("[English]", 1)[-1]:
            return reply
    return '"sentence": ""\n"spans": []'


def corpus():
    s1 = "Steve became CEO of Apple in 1998."
    s2 = "The EU rejected Germany's call for a boycott of British lamb."
    return [
        Sample("s1", s1, [ExtractionInstance.make("PER", name=Span("Steve", 0)), ExtractionInstance.make("ORG", name=Span("Apple", 20))]),
        Sample("s2", s2, [ExtractionInstance.make("ORG", name=Span("EU", 4))]),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--live", action="store_true", help="call the endpoint from CODEIE_BASE_URL/CODEIE_API_KEY")
    ap.add_argument("--model", default="gpt-4o-mini")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    onto = load_ontology(ONTOLOGY)
    data = corpus()
    client = HTTPChatClient(ClientPolicy()) if args.live else MockClient(responder=canned)

    result = project_corpus(data, projection_prompts("en", "zh"), client, ProjectionPolicy(args.model, concurrency=2))
    for rec in result.records:
        logger.info("%s: %s via %s -> %s", rec.id, rec.status, rec.stages, rec.target and rec.target.sentence)
    logger.info("faithfulness %.2f", result.faithfulness)

    aligned = build_alignment_dataset(result.records, {"en": onto, "zh": onto})
    logger.info("%d alignment samples", len(aligned))
    print(aligned[0].instruction + "\n" + aligned[0].completion + "\n")

    pair = build_training_pair(onto, data[0])
    print(pair.instruction + "\n")
    report = parse_completion("Here you go:\n" + pair.completion, onto, data[0].sentence)
    card = score_ner([Sample("s1", data[0].sentence, report.instances)], [data[0]])
    print(json.dumps(card.to_dict()))


if __name__ == "__main__":
    main()
