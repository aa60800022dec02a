"""``codeie`` command line.

Exit codes: 0 success, 1 invalid input (bad flags, missing files, schema or
data validation), 2 runtime failure (LLM errors and the like). Machine-readable
results go to stdout, logs to stderr. Every subcommand accepts ``--dry-run``,
which prints the first formatted prompt (or first work item) and exits without
writing files or calling a model.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import aligndata, codegen, descriptions, metrics, ontology, parser, projection
from .data import OffsetError, Sample, dumps, load_samples, read_jsonl, write_jsonl
from .llm import ClientPolicy, HTTPChatClient, LLMError
from .prompts import TemplateError, projection_prompts

logger = logging.getLogger("codeie")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

INVALID_INPUT = (
    ontology.OntologyError,
    codegen.ValidationError,
    OffsetError,
    metrics.MisalignedError,
    aligndata.AlignmentError,
    TemplateError,
    FileNotFoundError,
    ValueError,
    KeyError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, ensure_ascii=False) + "\n")


def _require_files(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(f"input file not found: {p}")


def _require_writable(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).resolve().parent.is_dir():
            raise FileNotFoundError(f"output directory does not exist: {Path(p).parent}")


def make_client(args) -> HTTPChatClient:
    policy = ClientPolicy(
        max_retries=args.max_retries,
        concurrency=args.concurrency,
        primary_model=args.model,
        fallback_model=getattr(args, "fallback_model", None),
    )
    return HTTPChatClient(policy, base_url=args.base_url, audit_path=args.audit_log)


# -- subcommands ------------------------------------------------------------


def cmd_render_schema(args) -> int:
    _require_files(args.ontology)
    onto = ontology.load_ontology(Path(args.ontology))
    print(codegen.render_instruction(onto, args.sentence, not args.no_comments, lang=args.lang))
    return EXIT_OK


def cmd_build_instructions(args) -> int:
    _require_files(args.ontology, args.input)
    _require_writable(args.output)
    onto = ontology.load_ontology(Path(args.ontology))
    samples = load_samples(args.input, language=args.lang)
    if args.dry_run:
        if samples:
            pair = codegen.build_training_pair(onto, samples[0], not args.no_comments)
            print(pair.instruction + "\n" + pair.completion)
        return EXIT_OK
    pairs = [codegen.build_training_pair(onto, s, not args.no_comments).to_dict() for s in samples]
    n = write_jsonl(args.output, pairs)
    _emit({"written": n, "output": args.output})
    return EXIT_OK


def cmd_parse_completions(args) -> int:
    _require_files(args.ontology, args.input)
    _require_writable(args.output)
    onto = ontology.load_ontology(Path(args.ontology))
    rows = list(read_jsonl(args.input))
    if args.dry_run:
        if rows:
            print(rows[0]["completion"])
        return EXIT_OK
    out, fatal, dropped = [], 0, 0
    for row in rows:
        report = parser.parse_completion(row["completion"], onto, row.get("sentence", ""))
        fatal += report.fatal is not None
        dropped += len(report.dropped)
        out.append({"id": row["id"], "sentence": row.get("sentence", ""), **report.to_dict()})
    write_jsonl(args.output, out)
    _emit({"parsed": len(out), "fatal": fatal, "dropped": dropped, "output": args.output})
    return EXIT_OK


def cmd_project_labels(args) -> int:
    _require_files(args.input)
    _require_writable(args.output, args.checkpoint, args.review_output)
    prompts = projection_prompts(args.src_lang, args.tgt_lang)
    corpus = [s.resolved(strict=True) for s in load_samples(args.input, language=args.src_lang)]
    if args.dry_run:
        if corpus:
            print(prompts.joint(corpus[0].sentence, corpus[0].span_texts()))
        return EXIT_OK
    policy = projection.ProjectionPolicy(
        primary_model=args.model,
        fallback_model=args.fallback_model or None,
        max_failovers=args.max_failovers,
        normalization=args.normalize,
        concurrency=args.concurrency,
    )
    client = make_client(args)
    result = projection.project_corpus(corpus, prompts, client, policy, checkpoint=args.checkpoint)
    write_jsonl(args.output, (r.to_dict() for r in result.records))
    review_path = args.review_output or str(Path(args.output).with_suffix(".review.jsonl"))
    write_jsonl(review_path, (r.to_dict() for r in result.review_export))
    _emit(
        {
            "records": len(result.records),
            "status": result.counts(),
            "faithfulness": result.faithfulness,
            "review_output": review_path,
            "usage": client.usage_report(),
        }
    )
    return EXIT_RUNTIME if result.counts()["failed"] and args.strict else EXIT_OK


def cmd_gen_descriptions(args) -> int:
    _require_files(args.ontology, args.corpus)
    if not args.in_place and not args.output and not args.dry_run:
        raise ValueError("pass --output PATH, or --in-place to overwrite the ontology config")
    target = Path(args.ontology) if args.in_place else (Path(args.output) if args.output else None)
    _require_writable(target)
    onto = ontology.load_ontology(Path(args.ontology))
    corpus = load_samples(args.corpus, language=args.lang)
    wanted = set(args.concepts.split(",")) if args.concepts else None
    todo = [c for c in onto.concepts if wanted is None or c.canonical_id in wanted]
    if args.dry_run:
        for c in todo:
            pool = descriptions.concept_instances(corpus, c.canonical_id)
            if pool:
                print(descriptions.INIT_PROMPT.replace("{entity_type}", c.canonical_id).replace(
                    "{entity_example_list}", json.dumps(pool[: descriptions.INIT_SAMPLE], ensure_ascii=False)))
                break
        return EXIT_OK
    client = make_client(args)
    updated, drafts = [], {}
    for c in onto.concepts:
        if c in todo and descriptions.concept_instances(corpus, c.canonical_id):
            draft = descriptions.generate_description(c, corpus, client, model=args.model, seed=args.seed)
            drafts[c.canonical_id] = draft.text
            descs = dict(c.descriptions)
            descs[args.lang] = draft.text
            c = ontology.Concept(c.canonical_id, c.base, c.surface_names, c.attributes, descs, c.examples)
        updated.append(c)
    target.write_text(ontology.dump_ontology(onto.with_concepts(updated)), encoding="utf-8")
    _emit({"descriptions": drafts, "output": str(target)})
    return EXIT_OK


def cmd_build_alignment_data(args) -> int:
    _require_files(args.input, args.src_ontology, args.tgt_ontology)
    _require_writable(args.output)
    records = projection.load_records(args.input)
    onto_src = ontology.load_ontology(Path(args.src_ontology))
    onto_tgt = ontology.load_ontology(Path(args.tgt_ontology))
    ok = [r for r in records if r.status == "ok"]
    langs = {args.src_lang or (ok[0].source.language if ok else "src"): onto_src,
             args.tgt_lang or (ok[0].target.language if ok else "tgt"): onto_tgt}
    if args.dry_run:
        pairs = aligndata.assemble_parallel_dataset(ok[:1], "one")
        if pairs:
            src_lang, tgt_lang = pairs[0].direction
            print(aligndata.build_alignment_sample(pairs[0], langs[src_lang], langs[tgt_lang]).instruction)
        return EXIT_OK
    data = aligndata.build_alignment_dataset(records, langs, args.directions, with_comments=not args.no_comments)
    write_jsonl(args.output, (p.to_dict() for p in data))
    _emit({"records": len(records), "ok": len(ok), "samples": len(data), "output": args.output})
    return EXIT_OK


def _load_scored(path: str, *, strict: bool) -> list[Sample]:
    out = []
    for d in read_jsonl(path):
        out.append(Sample.from_dict(d).resolved(strict=strict))
    return out


def cmd_evaluate(args) -> int:
    _require_files(args.gold, args.pred)
    gold = _load_scored(args.gold, strict=True)
    pred = _load_scored(args.pred, strict=False)
    if args.dry_run:
        print(f"{len(gold)} gold / {len(pred)} predicted samples, task {args.task}", file=sys.stderr)
        return EXIT_OK
    card = metrics.SCORERS[args.task](pred, gold)
    _emit({"task": args.task, **card.to_dict()})
    text = card.report(args.task.upper())
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    print(text, file=sys.stderr)
    return EXIT_OK


def cmd_faithfulness(args) -> int:
    _require_files(args.input)
    records = projection.load_records(args.input)
    if args.dry_run:
        print(f"{len(records)} records", file=sys.stderr)
        return EXIT_OK
    score = metrics.score_faithfulness(records)
    faithful = sum(metrics.record_is_faithful(r) for r in records)
    _emit({"faithfulness": score, "faithful": faithful, "records": len(records)})
    return EXIT_OK


# -- argument parsing -------------------------------------------------------


def _llm_flags(p: argparse.ArgumentParser, default_model: str) -> None:
    p.add_argument("--model", default=default_model)
    p.add_argument("--base-url", default=None, help="chat-completions base URL (env CODEIE_BASE_URL)")
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--concurrency", type=int, default=4)
    p.add_argument("--audit-log", default=None, help="append raw requests/responses as JSONL")


def build_parser() -> argparse.ArgumentParser:
    root = _Parser(prog="codeie", description="Code-style multilingual IE data tooling.")
    root.add_argument("-v", "--verbose", action="store_true")
    sub = root.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--dry-run", action="store_true")
        p.set_defaults(func=fn)
        return p

    p = add("render-schema", cmd_render_schema, "print the code instruction for one sentence")
    p.add_argument("--ontology", required=True)
    p.add_argument("--sentence", default="")
    p.add_argument("--lang", default=None)
    p.add_argument("--no-comments", action="store_true")

    p = add("build-instructions", cmd_build_instructions, "samples JSONL -> instruction/completion JSONL")
    p.add_argument("--ontology", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--lang", default=None)
    p.add_argument("--no-comments", action="store_true")

    p = add("parse-completions", cmd_parse_completions, "model completions JSONL -> parse reports JSONL")
    p.add_argument("--ontology", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    p = add("project-labels", cmd_project_labels, "three-stage label projection over a corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--src-lang", required=True)
    p.add_argument("--tgt-lang", required=True)
    _llm_flags(p, "gpt-4o-mini")
    p.add_argument("--fallback-model", default="gpt-4o-2024-08-06")
    p.add_argument("--max-failovers", type=int, default=1)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--review-output", default=None)
    p.add_argument("--normalize", choices=["NFC", "NFKC"], default=None)
    p.add_argument("--strict", action="store_true", help="exit 2 if any record failed")

    p = add("gen-descriptions", cmd_gen_descriptions, "write LLM concept descriptions into an ontology")
    p.add_argument("--ontology", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--lang", required=True)
    p.add_argument("--concepts", default=None, help="comma-separated concept ids (default: all)")
    p.add_argument("--seed", type=int, default=0)
    dest = p.add_mutually_exclusive_group()
    dest.add_argument("--output", default=None)
    dest.add_argument("--in-place", action="store_true")
    _llm_flags(p, "gpt-4o-2024-08-06")

    p = add("build-alignment-data", cmd_build_alignment_data, "projection records -> alignment tuning JSONL")
    p.add_argument("--input", required=True)
    p.add_argument("--src-ontology", required=True)
    p.add_argument("--tgt-ontology", required=True)
    p.add_argument("--src-lang", default=None)
    p.add_argument("--tgt-lang", default=None)
    p.add_argument("--directions", choices=["both", "one"], default="both")
    p.add_argument("--output", required=True)
    p.add_argument("--no-comments", action="store_true")

    p = add("evaluate", cmd_evaluate, "span-offset micro-F1")
    p.add_argument("--task", choices=sorted(metrics.SCORERS), required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--report", default=None, help="also write the text report here")

    p = add("faithfulness", cmd_faithfulness, "faithfulness of projection records")
    p.add_argument("--input", required=True)
    return root


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as e:  # --help
        return int(e.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except LLMError as e:
        logger.error("%s", e)
        return EXIT_RUNTIME
    except descriptions.DescriptionError as e:
        logger.error("%s", e)
        return EXIT_RUNTIME
    except INVALID_INPUT as e:
        logger.error("%s", e)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
