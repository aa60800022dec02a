"""Estimate the manual-review load of a projection run.

Runs the projection pipeline over a synthetic corpus with a mock model that
fails a fixed fraction of records at every stage, and reports how many land
in the review export. With ``--failures 15 --size 10000`` the export holds
exactly the 15 scripted failures.
"""

import argparse
import logging
import random
import time

from codeie.data import ExtractionInstance, Sample, Span
from codeie.llm import MockClient
from codeie.projection import ProjectionPolicy, project_corpus
from codeie.prompts import projection_prompts

logger = logging.getLogger("simulate")


def build_corpus(size):
    out = []
    for i in range(size):
        sentence = f"#{i} Alpha met Beta."
        out.append(Sample(str(i), sentence, [
            ExtractionInstance.make("PER", name=Span("Alpha", sentence.index("Alpha"))),
            ExtractionInstance.make("PER", name=Span("Beta", sentence.index("Beta"))),
        ]))
    return out


def make_responder(failing):
    def respond(request):
        idx = int(request.prompt.rsplit("#", 1)[1].split(" ", 1)[0])
        if idx not in failing:
            return '"sentence": "甲见了乙。"\n"spans": ["甲", "乙"]'
        return {
            "joint": '"sentence": "某人见了某人。"\n"spans": ["甲", "乙"]',
            "span_rephrase": '"spans": ["丙"]',
            "sentence_rephrase": '"modification failure"',
        }[request.tag]

    return respond


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=10000)
    ap.add_argument("--failures", type=int, default=15)
    ap.add_argument("--workers", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    failing = set(random.Random(args.seed).sample(range(args.size), args.failures))
    client = MockClient(responder=make_responder(failing))
    t0 = time.perf_counter()
    result = project_corpus(build_corpus(args.size), projection_prompts("en", "zh"), client,
                            ProjectionPolicy("primary", "fallback", concurrency=args.workers))
    logger.info("%d records in %.1fs, %d model calls", args.size, time.perf_counter() - t0, client.calls)
    logger.info("status counts %s", result.counts())
    logger.info("review export %d (%.4f%%), faithfulness %.4f",
                len(result.review_export), 100 * len(result.review_export) / args.size, result.faithfulness)
    logger.info("usage by stage %s", client.usage_report())


if __name__ == "__main__":
    main()
