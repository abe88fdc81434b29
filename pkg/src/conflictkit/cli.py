"""Operator command line: synthesis, classification, evaluation, serving.

Every subcommand writes JSON or JSONL to files or stdout and logs to stderr.
Exit codes: 0 success, 2 usage, 3 input/data error, 4 gateway error, 5 judge
parse error. Runs with --replay touch no network, and --seed pins all
randomized behavior.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import dataset_store, evaluation, gateway, review_service, scene_graph, synthesis

logger = logging.getLogger("conflictkit.cli")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_GATEWAY = 4
EXIT_JUDGE = 5


class UsageError(Exception):
    pass


def _write_text(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(path).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def _dump_json(payload: object) -> str:
    return json.dumps(payload, indent=2, ensure_ascii=False)


def _provider_from_args(args: argparse.Namespace) -> gateway.ChatProvider:
    replay = getattr(args, "replay", None)
    provider_config = getattr(args, "provider_config", None)
    if replay and provider_config:
        raise UsageError("--replay and --provider-config are mutually exclusive")
    if replay:
        return gateway.replay_session(replay)
    if provider_config:
        return gateway.HttpProvider(gateway.ProviderConfig.from_file(provider_config))
    raise UsageError("one of --replay or --provider-config is required")


def _parse_type_ratio(raw: str) -> dict[str, float]:
    ratios: dict[str, float] = {}
    for part in raw.split(","):
        key, _, value = part.partition("=")
        key = key.strip()
        if key not in ("object", "attribute", "relationship") or not value:
            raise UsageError(f"bad --type-ratio entry {part!r}")
        ratios[key] = float(value)
    return ratios


def cmd_synthesize(args: argparse.Namespace) -> int:
    config_file: dict = {}
    if args.config:
        config_file = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if args.replay is None and args.provider_config is None and "provider" in config_file:
        provider_config = gateway.ProviderConfig(
            **{
                k: v
                for k, v in config_file["provider"].items()
                if k in gateway.ProviderConfig.__dataclass_fields__
            }
        )
        provider: gateway.ChatProvider = gateway.HttpProvider(provider_config)
    else:
        provider = _provider_from_args(args)

    recorder: gateway.Recorder | None = None
    if args.record:
        recorder = gateway.Recorder(provider)
        provider = recorder

    count = args.count if args.count is not None else config_file.get("count")
    seed = args.seed if args.seed is not None else config_file.get("seed", 0)
    model = args.model or config_file.get("model", synthesis.DEFAULT_MODEL)
    type_weights = (
        _parse_type_ratio(args.type_ratio)
        if args.type_ratio
        else config_file.get("type_ratios")
    )

    graphs = scene_graph.load_scene_graphs(args.scene_graphs)
    qa_pool = synthesis.load_qa_pool(args.qa_pool)
    pipeline_config = synthesis.PipelineConfig(
        count=count, seed=seed, model=model, type_weights=type_weights, jobs=args.jobs
    )
    skips: list[synthesis.SkipRecord] = []
    triples = list(
        synthesis.run_pipeline(
            graphs, qa_pool, provider, pipeline_config, on_skip=skips.append
        )
    )
    dataset_store.write(dataset_store.DatasetFile(records=triples), args.out)
    if recorder is not None:
        recorder.save(args.record)
    logger.info("wrote %d triples to %s (%d skipped)", len(triples), args.out, len(skips))
    return EXIT_OK


def _text_analysis_from_json(raw: dict) -> scene_graph.TextAnalysis:
    objects = []
    id_by_name: dict[str, str] = {}
    for index, entry in enumerate(raw.get("objects", [])):
        name = scene_graph.normalize_name(str(entry["name"]))
        entity = scene_graph.ObjectEntity(
            id=f"t{index}",
            name=name,
            attributes=frozenset(
                scene_graph.normalize_name(str(a)) for a in entry.get("attributes", [])
            ),
        )
        objects.append(entity)
        id_by_name.setdefault(name, entity.id)
    relationships = []
    for entry in raw.get("relationships", []):
        subject = scene_graph.normalize_name(str(entry["subject"]))
        target = scene_graph.normalize_name(str(entry["object"]))
        if subject not in id_by_name or target not in id_by_name:
            raise ValueError(
                f"relationship references unknown object {subject!r} or {target!r}"
            )
        relationships.append(
            scene_graph.Relationship(
                subject_id=id_by_name[subject],
                predicate=scene_graph.normalize_name(str(entry["predicate"])),
                object_id=id_by_name[target],
            )
        )
    return scene_graph.TextAnalysis(
        objects=tuple(objects), relationships=tuple(relationships)
    )


def cmd_classify(args: argparse.Namespace) -> int:
    graphs = scene_graph.load_scene_graphs(args.scene_graphs)
    lines_out = []
    with open(args.analyses, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            raw = json.loads(line)
            image_id = str(raw["image_id"])
            if image_id not in graphs:
                raise ValueError(f"line {line_number}: unknown image_id {image_id!r}")
            analysis = _text_analysis_from_json(raw)
            conflict = scene_graph.classify_conflict(analysis, graphs[image_id])
            payload = {
                "image_id": image_id,
                "conflict_type": conflict.value if conflict else None,
            }
            if "id" in raw:
                payload = {"id": raw["id"], **payload}
            lines_out.append(json.dumps(payload, ensure_ascii=False))
    _write_text("\n".join(lines_out), args.out)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    provider = _provider_from_args(args)
    dataset = dataset_store.load(args.dataset)
    responses = evaluation.load_responses(args.responses)
    report = evaluation.evaluate_batch(
        dataset.records,
        responses,
        provider,
        beta=args.beta,
        judge_model=args.judge_model,
    )
    evaluation.write_report_json(report, args.report)
    if args.csv:
        Path(args.csv).write_text(evaluation.report_to_csv(report), encoding="utf-8")
    logger.info("evaluated %d responses into %s", report.n, args.report)
    return EXIT_OK


def cmd_judge(args: argparse.Namespace) -> int:
    provider = _provider_from_args(args)
    if args.kind == "hallucination":
        request = evaluation.build_hallucination_prompt(
            args.question, args.answer, model=args.judge_model, tag=args.tag
        )
        verdict = evaluation.parse_hallucination_verdict(provider.complete(request).content)
        payload = {
            "kind": "hallucination",
            "hallucinated": verdict.hallucinated,
            "rationale": verdict.rationale,
            "fallback": verdict.fallback,
        }
    elif args.kind == "quality":
        if args.reference is None:
            raise UsageError("--reference is required for --kind quality")
        request = evaluation.build_quality_prompt(
            args.question, args.answer, args.reference, model=args.judge_model, tag=args.tag
        )
        rating = evaluation.parse_quality_rating(provider.complete(request).content)
        payload = {"kind": "quality", "score": rating.score, "rationale": rating.rationale}
    else:
        if args.reference is None:
            raise UsageError("--reference is required for --kind consistency")
        request = evaluation.build_consistency_prompt(
            args.question, args.reference, args.answer, model=args.judge_model, tag=args.tag
        )
        consistent = evaluation.parse_consistency(provider.complete(request).content)
        payload = {"kind": "consistency", "consistent": consistent}
    _write_text(_dump_json(payload), args.out)
    return EXIT_OK


def cmd_reward(args: argparse.Namespace) -> int:
    rows = [
        {
            "t": t,
            "final_step": args.final_step,
            "reward": evaluation.reward_at_step(t, args.final_step, args.consistent),
        }
        for t in range(1, args.final_step + 1)
    ]
    _write_text(_dump_json(rows), args.out)
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    dataset = dataset_store.load(args.dataset)
    result = dataset_store.stats(dataset)
    if args.format == "table":
        _write_text(result.to_table(), args.out)
    else:
        _write_text(_dump_json(result.to_dict()), args.out)
    return EXIT_OK


def cmd_split(args: argparse.Namespace) -> int:
    dataset = dataset_store.load(args.dataset)
    spec = dataset_store.SplitSpec(train_ratio=args.ratio, seed=args.seed)
    train, test = dataset_store.split(dataset, spec, stratified=args.stratified)
    dataset_store.write(train, args.train_out)
    dataset_store.write(test, args.test_out)
    logger.info(
        "split %d records into %d train / %d test", len(dataset), len(train), len(test)
    )
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    store = review_service.ReviewStore(
        args.dataset, audit_path=args.audit_log, image_root=args.image_root
    )
    app = review_service.create_app(store, ui_dist=args.ui_dist)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log INFO to stderr")
    parser = argparse.ArgumentParser(
        prog="conflictkit",
        description="Synthesize and evaluate modality-conflict VQA datasets.",
        parents=[common],
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def add_provider_flags(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--replay", help="replay fixture file (no network)")
        sub.add_argument("--provider-config", help="JSON provider config for live calls")

    sub = commands.add_parser("synthesize", help="run the construction pipeline", parents=[common])
    sub.add_argument("--scene-graphs", required=True)
    sub.add_argument("--qa-pool", required=True)
    sub.add_argument("--out", required=True, help="output triples JSONL")
    sub.add_argument("--count", type=int, default=None, help="max triples to emit")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--model", default=None)
    sub.add_argument("--jobs", type=int, default=1, help="concurrent images")
    sub.add_argument("--type-ratio", default=None, help="e.g. object=1,attribute=1,relationship=2")
    sub.add_argument("--config", default=None, help="JSON config file; flags override")
    sub.add_argument("--record", default=None, help="save live responses as a fixture")
    add_provider_flags(sub)
    sub.set_defaults(handler=cmd_synthesize)

    sub = commands.add_parser("classify", help="classify conflicts for analysis records", parents=[common])
    sub.add_argument("--scene-graphs", required=True)
    sub.add_argument("--analyses", required=True, help="JSONL of text analyses")
    sub.add_argument("--out", default=None)
    sub.set_defaults(handler=cmd_classify)

    sub = commands.add_parser("evaluate", help="score a responses file against a dataset", parents=[common])
    sub.add_argument("--dataset", required=True)
    sub.add_argument("--responses", required=True)
    sub.add_argument("--report", required=True, help="output report JSON")
    sub.add_argument("--csv", default=None, help="optional aggregate CSV")
    sub.add_argument("--beta", type=float, default=1.0)
    sub.add_argument("--judge-model", default=evaluation.DEFAULT_JUDGE_MODEL)
    add_provider_flags(sub)
    sub.set_defaults(handler=cmd_evaluate)

    sub = commands.add_parser("judge", help="judge a single question/answer pair", parents=[common])
    sub.add_argument("--kind", choices=("hallucination", "quality", "consistency"), required=True)
    sub.add_argument("--question", required=True)
    sub.add_argument("--answer", required=True, help="model answer (may be empty for consistency)")
    sub.add_argument("--reference", default=None)
    sub.add_argument("--tag", default="cli-judge")
    sub.add_argument("--judge-model", default=evaluation.DEFAULT_JUDGE_MODEL)
    sub.add_argument("--out", default=None)
    add_provider_flags(sub)
    sub.set_defaults(handler=cmd_judge)

    sub = commands.add_parser("reward", help="print the terminal-reward table", parents=[common])
    sub.add_argument("--final-step", type=int, required=True)
    sub.add_argument("--consistent", action=argparse.BooleanOptionalAction, required=True)
    sub.add_argument("--out", default=None)
    sub.set_defaults(handler=cmd_reward)

    sub = commands.add_parser("stats", help="dataset statistics", parents=[common])
    sub.add_argument("--dataset", required=True)
    sub.add_argument("--format", choices=("json", "table"), default="json")
    sub.add_argument("--out", default=None)
    sub.set_defaults(handler=cmd_stats)

    sub = commands.add_parser("split", help="seeded train/test split", parents=[common])
    sub.add_argument("--dataset", required=True)
    sub.add_argument("--ratio", type=float, required=True)
    sub.add_argument("--seed", type=int, required=True)
    sub.add_argument("--train-out", required=True)
    sub.add_argument("--test-out", required=True)
    sub.add_argument("--stratified", action="store_true")
    sub.set_defaults(handler=cmd_split)

    sub = commands.add_parser("serve", help="run the review service", parents=[common])
    sub.add_argument("--dataset", required=True)
    sub.add_argument("--host", default="127.0.0.1")
    sub.add_argument("--port", type=int, default=8400)
    sub.add_argument("--image-root", default=None)
    sub.add_argument("--ui-dist", default=None, help="built review UI directory")
    sub.add_argument("--audit-log", default=None)
    sub.set_defaults(handler=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except gateway.GatewayError as exc:
        print(f"gateway error: {exc}", file=sys.stderr)
        return EXIT_GATEWAY
    except evaluation.JudgeParseError as exc:
        print(f"judge parse error: {exc}", file=sys.stderr)
        return EXIT_JUDGE
    except (
        dataset_store.DatasetError,
        scene_graph.SceneGraphFormatError,
        synthesis.SynthesisError,
        evaluation.UnknownRecordError,
        FileNotFoundError,
        json.JSONDecodeError,
        ValueError,
        KeyError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
