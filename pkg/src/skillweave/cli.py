"""Command-line entry point.

One binary, one subcommand per phase of the workflow: generate candidates,
serve the review queue, evaluate a model on a question set, analyze
score tables, and report funnel or cost figures from run artifacts.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys
from decimal import Decimal, InvalidOperation
from importlib import resources
from pathlib import Path

from . import service
from .errors import SkillweaveError
from .evaluation import (
    EvalConfig,
    evaluate_model,
    fit_exponent,
    format_fit_table,
    load_items,
    load_scores,
    plot_rows,
    simulate_skill_composition,
    SkillSuccessProfile,
)
from .events import fold_log, read_event_log
from .gateway import (
    Gateway,
    ModelSpec,
    PriceTable,
    TokenUsage,
    TranscriptWriter,
    build_provider,
    replay_source,
)
from .pipeline import RunConfig, cost_report, funnel_stats, run_pipeline
from .review import ReviewStore, write_export
from .skills import PairPolicy, load_skill_bank, sample_skill_pair

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-4-turbo"
DEFAULT_PROVIDER = "openai"


def _input_path(value: str) -> Path:
    path = Path(value)
    if not path.is_file():
        raise argparse.ArgumentTypeError(f"no such file: {value}")
    return path


def _decimal(value: str) -> Decimal:
    try:
        return Decimal(value)
    except InvalidOperation as exc:
        raise argparse.ArgumentTypeError(f"not a number: {value}") from exc


def _fraction(value: str) -> Decimal:
    parsed = _decimal(value)
    if not 0 < parsed <= 1:
        raise argparse.ArgumentTypeError(f"must be in (0, 1]: {value}")
    return parsed


def _positive(value: str) -> int:
    parsed = int(value)
    if parsed < 1:
        raise argparse.ArgumentTypeError(f"must be positive: {value}")
    return parsed


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _load_config_file(path: Path | None) -> dict:
    if path is None:
        return {}
    raw = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise SkillweaveError(f"{path}: config must be a JSON object")
    known = {
        "model", "provider", "temperature", "top_p", "max_output_tokens",
        "run_id", "max_in_flight",
    }
    for key in raw:
        if key not in known:
            logger.warning("config key %r ignored", key)
    return raw


def _model_spec(args, config: dict) -> ModelSpec:
    return ModelSpec(
        provider=args.provider or config.get("provider", DEFAULT_PROVIDER),
        model_name=args.model or config.get("model", DEFAULT_MODEL),
    )


def _provider_for(args, spec: ModelSpec):
    """Replay mode never touches the network; otherwise build a live
    provider from environment credentials."""
    if args.replay is not None:
        return replay_source(args.replay)
    return build_provider(spec, os.environ)


def _default_prices() -> PriceTable:
    with resources.as_file(
        resources.files("skillweave").joinpath("data/prices.json")
    ) as path:
        return PriceTable.from_file(path)


def _seed_from(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = random.SystemRandom().randrange(2**32)
    logger.info("no --seed given; using %d", seed)
    return seed


# ------------------------------------------------------------------------------
# subcommands
# ------------------------------------------------------------------------------


def cmd_generate(args) -> int:
    config_file = _load_config_file(args.config)
    bank = load_skill_bank(args.bank)
    spec = _model_spec(args, config_file)
    seed = _seed_from(args)
    rng = random.Random(seed)
    policy = PairPolicy(seed=seed)
    pairs = [sample_skill_pair(bank, policy, rng) for _ in range(args.pairs)]
    run_config = RunConfig(
        model=spec,
        num_candidates=args.pairs,
        temperature=float(config_file.get("temperature", 0.7)),
        top_p=float(config_file.get("top_p", 1.0)),
        max_output_tokens=int(config_file.get("max_output_tokens", 4096)),
        max_in_flight=int(config_file.get("max_in_flight", 1)),
        run_id=str(config_file.get("run_id", "run")),
    )
    provider = _provider_for(args, spec)
    events = run_pipeline(
        pairs, run_config, provider, bank, args.out,
        transcript_path=args.record,
    )
    stats = funnel_stats(events)
    print(
        f"generated {stats.total_generated}, survivors {stats.survivors}, "
        f"rejected {stats.total_rejected}; log: {args.out}"
    )
    return 0


def cmd_review_serve(args) -> int:
    service.serve(
        str(args.events), host=args.host, port=args.port,
        lease_minutes=args.lease_minutes,
    )
    return 0


def cmd_eval(args) -> int:
    config_file = _load_config_file(args.config)
    items = load_items(args.items)
    spec = _model_spec(args, config_file)
    grader = ModelSpec(
        provider=args.provider or config_file.get("provider", DEFAULT_PROVIDER),
        model_name=args.grader_model,
    )
    mode = args.mode.replace("-", "_")
    exemplars = tuple(load_items(args.exemplars)) if args.exemplars else ()
    if mode == "four_shot" and not exemplars:
        print("error: --mode four-shot requires --exemplars", file=sys.stderr)
        return 2
    eval_config = EvalConfig(
        model=spec,
        grader=grader,
        mode=mode,
        exemplar_source=exemplars,
        max_output_tokens=int(config_file.get("max_output_tokens", 4096)),
        max_in_flight=int(config_file.get("max_in_flight", 1)),
    )
    provider = _provider_for(args, spec)
    transcript = (
        TranscriptWriter(args.record, run_id="eval") if args.record else None
    )
    gateway = Gateway(provider, transcript)
    try:
        report = evaluate_model(items, eval_config, gateway)
    finally:
        if transcript is not None:
            transcript.close()
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        with args.out.open("w", encoding="utf-8") as fh:
            for result in report.results:
                fh.write(result.to_json() + "\n")
    print(
        f"accuracy {report.accuracy:.4f} "
        f"({report.correct}/{report.graded} graded, {len(report.results)} items)"
    )
    return 0


def cmd_analyze_fit(args) -> int:
    scores = load_scores(args.scores)
    report = fit_exponent(scores)
    print(format_fit_table(scores, report))
    if args.out:
        _write_json(
            args.out,
            {
                "k": report.k,
                "per_model_residual": report.per_model_residual,
                "square_residual": report.square_residual,
            },
        )
    if args.plot_data:
        args.plot_data.parent.mkdir(parents=True, exist_ok=True)
        with args.plot_data.open("w", encoding="utf-8") as fh:
            for row in plot_rows(scores):
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    return 0


def cmd_analyze_simulate(args) -> int:
    seed = _seed_from(args)
    rng = random.Random(seed)
    profile = SkillSuccessProfile(
        {f"s{i:03d}": rng.random() for i in range(args.num_skills)}
    )
    x_hat, y_hat = simulate_skill_composition(profile, args.num_pairs, rng)
    relative = abs(y_hat - x_hat**2) / x_hat**2 if x_hat else float("nan")
    print(
        f"x_hat {x_hat:.6f}  x_hat^2 {x_hat**2:.6f}  y_hat {y_hat:.6f}  "
        f"relative deviation {relative:.4%}"
    )
    if args.out:
        _write_json(
            args.out,
            {
                "seed": seed,
                "num_skills": args.num_skills,
                "num_pairs": args.num_pairs,
                "x_hat": x_hat,
                "y_hat": y_hat,
                "relative_deviation": relative,
            },
        )
    return 0


def cmd_funnel(args) -> int:
    stats = funnel_stats(read_event_log(args.events))
    print(
        f"generated {stats.total_generated}\n"
        f"rejected in validation {stats.rejected_validation}\n"
        f"rejected by majority {stats.rejected_majority}\n"
        f"rejected by parsing {stats.rejected_parsing}\n"
        f"survivors {stats.survivors}\n"
        f"success rate {stats.success_rate_pct:.2f}%"
    )
    if args.out:
        _write_json(
            args.out,
            {
                "total_generated": stats.total_generated,
                "rejected_validation": stats.rejected_validation,
                "rejected_majority": stats.rejected_majority,
                "rejected_parsing": stats.rejected_parsing,
                "survivors": stats.survivors,
                "success_rate_pct": stats.success_rate_pct,
            },
        )
    return 0


def cmd_cost(args) -> int:
    prices = (
        PriceTable.from_file(args.prices) if args.prices else _default_prices()
    )
    entry = prices.entries.get(args.model)
    if entry is None:
        raise SkillweaveError(f"no prices for model {args.model!r}")
    usage = TokenUsage(
        input_tokens=float(args.avg_input_tokens),
        output_tokens=float(args.avg_output_tokens),
    )
    report = cost_report(
        usage,
        entry,
        num_questions=args.questions,
        ai_efficiency=args.ai_efficiency,
        human_efficiency=args.human_efficiency,
    )
    print(
        f"per accepted question ${report.per_question_cost}\n"
        f"projected total for {args.questions} questions ${report.total_cost}"
    )
    if args.out:
        _write_json(
            args.out,
            {
                "model": args.model,
                "per_question_usd": str(report.per_question_cost),
                "total_usd": str(report.total_cost),
                "num_questions": args.questions,
            },
        )
    return 0


def cmd_export(args) -> int:
    events = read_event_log(args.events)
    store = ReviewStore(fold_log(events), events)
    verdicts = frozenset(v.strip() for v in args.verdicts.split(",") if v.strip())
    items = store.export(verdicts)
    count = write_export(args.out, items)
    print(f"exported {count} items to {args.out}")
    return 0


# ------------------------------------------------------------------------------
# parser
# ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skillweave",
        description="Generate, review, evaluate, and analyze composed "
        "math questions.",
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="debug logging"
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_provider_flags(p):
        p.add_argument("--config", type=_input_path, help="JSON run settings")
        p.add_argument("--model", help=f"model name (default {DEFAULT_MODEL})")
        p.add_argument(
            "--provider", help=f"provider name (default {DEFAULT_PROVIDER})"
        )
        group = p.add_mutually_exclusive_group()
        group.add_argument(
            "--replay", type=_input_path, metavar="FILE",
            help="serve responses from a recorded transcript; no network",
        )
        group.add_argument(
            "--record", type=Path, metavar="FILE",
            help="record live traffic to a transcript",
        )

    p = sub.add_parser("generate", help="run the question pipeline")
    p.add_argument("--bank", type=_input_path, required=True)
    p.add_argument("--pairs", type=_positive, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, default=Path("events.jsonl"))
    add_provider_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("review-serve", help="serve the review queue over HTTP")
    p.add_argument("--events", type=_input_path, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--lease-minutes", type=float, default=60)
    p.set_defaults(func=cmd_review_serve)

    p = sub.add_parser("eval", help="evaluate a model on a question set")
    p.add_argument("--items", type=_input_path, required=True)
    p.add_argument(
        "--mode", choices=("zero-shot-cot", "four-shot"),
        default="zero-shot-cot",
    )
    p.add_argument("--exemplars", type=_input_path)
    p.add_argument("--grader-model", default="gpt-4")
    p.add_argument("--out", type=Path)
    add_provider_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="score-table analyses")
    analyze_sub = p.add_subparsers(dest="analysis", required=True)

    q = analyze_sub.add_parser("fit", help="fit y = x^k and report residuals")
    q.add_argument("--scores", type=_input_path, required=True)
    q.add_argument("--out", type=Path)
    q.add_argument("--plot-data", type=Path)
    q.set_defaults(func=cmd_analyze_fit)

    q = analyze_sub.add_parser(
        "simulate", help="independence-heuristic sampling check"
    )
    q.add_argument("--num-skills", type=_positive, default=114)
    q.add_argument("--num-pairs", type=_positive, default=100_000)
    q.add_argument("--seed", type=int)
    q.add_argument("--out", type=Path)
    q.set_defaults(func=cmd_analyze_simulate)

    p = sub.add_parser("funnel", help="stage survival report from an event log")
    p.add_argument("--events", type=_input_path, required=True)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_funnel)

    p = sub.add_parser("cost", help="cost report from usage and prices")
    p.add_argument("--model", default=DEFAULT_MODEL)
    p.add_argument("--prices", type=_input_path)
    p.add_argument("--questions", type=_positive, required=True)
    p.add_argument("--avg-input-tokens", type=_decimal, required=True)
    p.add_argument("--avg-output-tokens", type=_decimal, required=True)
    p.add_argument("--ai-efficiency", type=_fraction, required=True)
    p.add_argument("--human-efficiency", type=_fraction, required=True)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("export", help="write the reviewed dataset")
    p.add_argument("--events", type=_input_path, required=True)
    p.add_argument("--verdicts", default="good")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except SkillweaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
