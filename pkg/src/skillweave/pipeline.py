"""The five-stage question generation pipeline.

A candidate question starts as a sampled skill pair and must survive, in
order: a skill-similarity check (similar skills are rejected), question
generation, an adversarial solution attempt, a four-vote quality
validation, and a four-trace final solve whose answers must show a strict
majority. Survivors land in ReadyForReview for humans; everything else is
rejected with a machine-readable reason.

Two deliberately conservative choices: a 2-2 validation split and a 2-2
answer split both reject, since a split vote signals the same ambiguity the
pipeline exists to filter out; and an unparseable validation vote counts as
"no" so the vote count stays fixed at four.
"""

from __future__ import annotations

import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .errors import ParseError, PipelineError, TransportError
from .events import (
    CandidateView,
    EventLogWriter,
    LogicalClock,
    PipelineEvent,
    StageState,
    fold_log,
    read_event_log,
)
from .gateway import (
    ChatRequest,
    Gateway,
    Message,
    ModelSpec,
    PriceEntry,
    Provider,
    ReplayProvider,
    TokenUsage,
    TranscriptWriter,
    estimate_request_cost,
)
from .parsing import (
    CanonicalAnswer,
    SectionSchema,
    answers_equivalent,
    canonicalize_answer,
    parse_sections,
    parse_verdict,
)
from .prompts import PromptTemplate, bind_for_stage, load_builtin_templates, render
from .skills import PairPolicy, SkillBank, SkillPair

logger = logging.getLogger(__name__)

__all__ = [
    "RunConfig",
    "StageResult",
    "MajorityResult",
    "FunnelStats",
    "CostReport",
    "majority_vote",
    "stage1_validate_pair",
    "stage2_generate",
    "stage3_attempt",
    "stage4_validate",
    "stage5_finalize",
    "run_pipeline",
    "funnel_stats",
    "cost_report",
]

VOTES_PER_VALIDATION = 4
TRACES_PER_SOLVE = 4
MIN_PARSEABLE_TRACES = 2

GENERATION_SCHEMA = SectionSchema(("# QUESTION", "# SOLUTION", "# DETAILS"))
FINAL_SCHEMA = SectionSchema(("# SOLUTION", "# ANSWER"), allow_trailing=False)

CENTS = Decimal("0.01")


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    num_candidates: int = 1
    policy: PairPolicy = field(default_factory=PairPolicy)
    # Pipeline sampling; evaluation uses its own (temperature 0) settings.
    temperature: float = 0.7
    top_p: float = 1.0
    max_output_tokens: int = 4096
    max_in_flight: int = 1  # >1 trades byte-identical logs for speed
    run_id: str = "run"

    def __post_init__(self) -> None:
        if self.num_candidates < 1:
            raise ValueError("num_candidates must be >= 1")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


@dataclass(frozen=True)
class StageResult:
    """What one stage decided: an advancing event or a rejection."""

    event: str
    reason: str = ""
    payload: dict = field(default_factory=dict)

    @property
    def rejected(self) -> bool:
        return self.event == "rejected"


# ==============================================================================
# Majority voting
# ==============================================================================


@dataclass(frozen=True)
class MajorityResult:
    tallies: tuple[tuple[CanonicalAnswer, int], ...]
    winner: CanonicalAnswer | None
    k: int

    @property
    def discard(self) -> bool:
        return self.winner is None

    def __post_init__(self) -> None:
        if sum(count for _, count in self.tallies) != self.k:
            raise ValueError("tallies must sum to k")


def majority_vote(answers: Sequence[CanonicalAnswer], k: int | None = None) -> MajorityResult:
    """Tally answers by equivalence; the winner needs a strictly greater
    count than every other answer, otherwise the vote discards."""
    if k is None:
        k = len(answers)
    if k < 1 or len(answers) != k:
        raise ValueError(f"expected {k} answers, got {len(answers)}")
    groups: list[tuple[CanonicalAnswer, int]] = []
    for answer in answers:
        for i, (representative, count) in enumerate(groups):
            if answers_equivalent(answer, representative):
                groups[i] = (representative, count + 1)
                break
        else:
            groups.append((answer, 1))
    best = max(count for _, count in groups)
    leaders = [rep for rep, count in groups if count == best]
    winner = leaders[0] if len(leaders) == 1 else None
    return MajorityResult(tallies=tuple(groups), winner=winner, k=k)


# ==============================================================================
# Stages
# ==============================================================================


def _request(config: RunConfig, prompt_text: str) -> ChatRequest:
    return ChatRequest(
        model=config.model,
        prompt=(Message("user", prompt_text),),
        temperature=config.temperature,
        top_p=config.top_p,
        max_output_tokens=config.max_output_tokens,
    )


def stage1_validate_pair(
    pair: SkillPair,
    bank: SkillBank,
    gateway: Gateway,
    templates: Mapping[str, PromptTemplate],
    config: RunConfig,
) -> StageResult:
    """Ask whether the two skills are essentially the same. The prompt's
    'Yes' means similar, so 'Yes' rejects the pair."""
    prompt = render(
        templates["pair_validation"], bind_for_stage("pair_validation", pair, bank)
    )
    response = gateway.complete(_request(config, prompt), stage="pair_validation")
    try:
        similar = parse_verdict(response.text)
    except ParseError:
        return StageResult("rejected", reason="parsing_error")
    if similar:
        return StageResult("rejected", reason="similar_skills")
    return StageResult("accepted")


def stage2_generate(
    pair: SkillPair,
    bank: SkillBank,
    gateway: Gateway,
    templates: Mapping[str, PromptTemplate],
    config: RunConfig,
    context: Mapping[str, str] | None = None,
) -> StageResult:
    prompt = render(
        templates["generation"],
        bind_for_stage("generation", pair, bank, context=context),
    )
    response = gateway.complete(_request(config, prompt), stage="generation")
    try:
        sections = parse_sections(response.text, GENERATION_SCHEMA)
    except ParseError:
        return StageResult("rejected", reason="parsing_error")
    return StageResult(
        "generated",
        payload={
            "question": sections["# QUESTION"],
            "draft_solution": sections["# SOLUTION"],
            "details": sections["# DETAILS"],
        },
    )


def stage3_attempt(
    question: str,
    gateway: Gateway,
    templates: Mapping[str, PromptTemplate],
    config: RunConfig,
) -> StageResult:
    """Defeatist solve: the model sees only the question (no skill names)
    and is told to stop and explain if the question is flawed. The reply is
    forwarded verbatim to validation; an empty reply is the only rejection."""
    prompt = render(templates["attempt"], bind_for_stage("attempt", question=question))
    response = gateway.complete(_request(config, prompt), stage="attempt")
    if not response.text.strip():
        return StageResult("rejected", reason="parsing_error")
    return StageResult("attempted", payload={"attempted_solution": response.text})


def stage4_validate(
    question: str,
    attempted_solution: str,
    pair: SkillPair,
    bank: SkillBank,
    gateway: Gateway,
    templates: Mapping[str, PromptTemplate],
    config: RunConfig,
    context: Mapping[str, str] | None = None,
) -> StageResult:
    """Four quality votes against the rubric; valid needs at least three
    'Yes'. An unparseable vote counts as 'No'."""
    prompt = render(
        templates["validation"],
        bind_for_stage(
            "validation",
            pair,
            bank,
            question=question,
            solution=attempted_solution,
            context=context,
        ),
    )
    request = _request(config, prompt)
    votes: list[bool] = []
    for i in range(VOTES_PER_VALIDATION):
        response = gateway.complete(request, stage="validation")
        try:
            votes.append(parse_verdict(response.text))
        except ParseError as exc:
            logger.warning("unparseable validation vote %d counted as no: %s", i, exc)
            votes.append(False)
    if sum(votes) >= 3:
        return StageResult("validated", payload={"votes": votes})
    return StageResult("rejected", reason="invalid", payload={"votes": votes})


def stage5_finalize(
    question: str,
    pair: SkillPair,
    bank: SkillBank,
    gateway: Gateway,
    templates: Mapping[str, PromptTemplate],
    config: RunConfig,
) -> StageResult:
    """Four independent solves; the final answer must win a strict
    majority of the parseable traces. All-distinct answers mean the
    question is probably ambiguous, so it discards; fewer than two
    parseable traces discards as a parsing failure. The published solution
    is the earliest trace carrying the winning answer."""
    prompt = render(
        templates["final_solution"],
        bind_for_stage("final_solution", pair, bank, question=question),
    )
    request = _request(config, prompt)
    traces: list[dict] = []
    parsed: list[tuple[str, CanonicalAnswer]] = []
    for i in range(TRACES_PER_SOLVE):
        response = gateway.complete(request, stage="final_solution")
        try:
            sections = parse_sections(response.text, FINAL_SCHEMA)
            answer = canonicalize_answer(sections["# ANSWER"])
        except (ParseError, ValueError) as exc:
            logger.warning("unparseable solve trace %d dropped: %s", i, exc)
            traces.append({"solution": response.text, "answer": None})
            continue
        traces.append(
            {"solution": sections["# SOLUTION"], "answer": answer.normalized_text}
        )
        parsed.append((sections["# SOLUTION"], answer))
    if len(parsed) < MIN_PARSEABLE_TRACES:
        return StageResult(
            "rejected", reason="parsing_error", payload={"traces": traces}
        )
    result = majority_vote([answer for _, answer in parsed])
    if result.discard:
        return StageResult(
            "rejected", reason="majority_disagreement", payload={"traces": traces}
        )
    winner = result.winner
    assert winner is not None
    solution = next(
        text for text, answer in parsed if answers_equivalent(answer, winner)
    )
    return StageResult(
        "solved",
        payload={
            "final_solution": solution,
            "final_answer": winner.normalized_text,
            "traces": traces,
        },
    )


# ==============================================================================
# Orchestration
# ==============================================================================


def _run_candidate(
    candidate_id: str,
    pair: SkillPair,
    view: CandidateView | None,
    bank: SkillBank,
    gateway: Gateway,
    templates: Mapping[str, PromptTemplate],
    config: RunConfig,
    writer: EventLogWriter,
    context: Mapping[str, str] | None,
) -> None:
    seq = itertools.count(view.last_seq + 1 if view else 0)
    state = (view.resume_state or view.state) if view else None

    def emit(stage: str, result: StageResult) -> None:
        writer.append(
            PipelineEvent(
                candidate_id=candidate_id,
                seq=next(seq),
                stage=stage,
                event=result.event,
                reason=result.reason,
                payload=result.payload,
            )
        )

    question = view.question if view else ""
    attempted = view.attempted_solution if view else ""
    try:
        if state is None:
            emit(
                "pair_validation",
                StageResult(
                    "pair_sampled",
                    payload={
                        "first": pair.first,
                        "second": pair.second,
                        "generator_model": config.model.model_name,
                    },
                ),
            )
            state = StageState.PAIR_SAMPLED
        if state is StageState.PAIR_SAMPLED:
            result = stage1_validate_pair(pair, bank, gateway, templates, config)
            emit("pair_validation", result)
            if result.rejected:
                return
            state = StageState.PAIR_VALIDATED
        if state is StageState.PAIR_VALIDATED:
            result = stage2_generate(pair, bank, gateway, templates, config, context)
            emit("generation", result)
            if result.rejected:
                return
            question = result.payload["question"]
            state = StageState.GENERATED
        if state is StageState.GENERATED:
            result = stage3_attempt(question, gateway, templates, config)
            emit("attempt", result)
            if result.rejected:
                return
            attempted = result.payload["attempted_solution"]
            state = StageState.ATTEMPTED
        if state is StageState.ATTEMPTED:
            result = stage4_validate(
                question, attempted, pair, bank, gateway, templates, config, context
            )
            emit("validation", result)
            if result.rejected:
                return
            state = StageState.VALIDATED
        if state is StageState.VALIDATED:
            result = stage5_finalize(question, pair, bank, gateway, templates, config)
            emit("final_solution", result)
            if result.rejected:
                return
            state = StageState.SOLVED
        if state is StageState.SOLVED:
            emit("final_solution", StageResult("ready_for_review"))
    except TransportError as exc:
        # resumable: the candidate stays in the log with its progress
        emit(state_stage(state), StageResult("error", payload={"message": str(exc)}))


def state_stage(state: StageState | None) -> str:
    """The stage in which work for a given state happens next."""
    return {
        None: "pair_validation",
        StageState.PAIR_SAMPLED: "pair_validation",
        StageState.PAIR_VALIDATED: "generation",
        StageState.GENERATED: "attempt",
        StageState.ATTEMPTED: "validation",
        StageState.VALIDATED: "final_solution",
        StageState.SOLVED: "final_solution",
    }.get(state, "final_solution")


def run_pipeline(
    pairs: Iterable[SkillPair],
    config: RunConfig,
    provider: Provider,
    bank: SkillBank,
    log_path: str | Path,
    transcript_path: str | Path | None = None,
    *,
    templates: Mapping[str, PromptTemplate] | None = None,
    context: Mapping[str, str] | None = None,
    clock: Callable[[], float] | None = None,
    gateway: Gateway | None = None,
) -> list[PipelineEvent]:
    """Drive each sampled pair through the five stages, appending every
    transition to the event log at ``log_path``.

    If the log already holds events (an interrupted run), finished
    candidates are skipped and unfinished ones resume from their last good
    state. Replay runs default to a logical clock so two identical runs
    produce byte-identical logs (with max_in_flight = 1). Pass ``gateway``
    to control retry policy; it wraps ``provider`` by default.
    """
    log_path = Path(log_path)
    existing = read_event_log(log_path) if log_path.exists() else []
    views = fold_log(existing)
    if clock is None:
        if isinstance(provider, ReplayProvider):
            clock = LogicalClock(start=len(existing))
        else:
            clock = time.time

    templates = templates or load_builtin_templates()
    transcript = None
    if gateway is None:
        if transcript_path:
            transcript = TranscriptWriter(transcript_path, run_id=config.run_id)
        gateway = Gateway(provider, transcript)

    jobs = [
        (f"{config.run_id}-{i:04d}", pair)
        for i, pair in enumerate(itertools.islice(pairs, config.num_candidates))
    ]
    with EventLogWriter(log_path, clock=clock) as writer:

        def work(job: tuple[str, SkillPair]) -> None:
            candidate_id, pair = job
            view = views.get(candidate_id)
            if view is not None and view.terminal:
                return
            _run_candidate(
                candidate_id, pair, view, bank, gateway, templates, config,
                writer, context,
            )

        if config.max_in_flight == 1:
            for job in jobs:
                work(job)
        else:
            with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
                list(pool.map(work, jobs))
    if transcript is not None:
        transcript.close()
    return read_event_log(log_path)


# ==============================================================================
# Funnel and cost reports
# ==============================================================================


@dataclass(frozen=True)
class FunnelStats:
    total_generated: int
    rejected_validation: int
    rejected_majority: int
    rejected_parsing: int

    def __post_init__(self) -> None:
        if self.total_rejected > self.total_generated:
            raise ValueError("more rejections than generated candidates")

    @property
    def total_rejected(self) -> int:
        return (
            self.rejected_validation + self.rejected_majority + self.rejected_parsing
        )

    @property
    def survivors(self) -> int:
        return self.total_generated - self.total_rejected

    @property
    def success_rate(self) -> float:
        if self.total_generated == 0:
            return 0.0
        return self.survivors / self.total_generated

    @property
    def success_rate_pct(self) -> float:
        return 100.0 * self.success_rate


def funnel_stats(events: Iterable[PipelineEvent]) -> FunnelStats:
    """Per-stage rejection counts over candidates that entered generation.

    Pair-similarity rejections happen before a question exists, so they sit
    outside the funnel. Errored or still-running candidates are excluded
    from every count, which keeps generated = survivors + rejections exact.
    """
    views = fold_log(events)
    generated = validation = majority = parsing = 0
    for view in views.values():
        if not view.generation_entered:
            continue
        if view.state is StageState.REJECTED:
            if view.rejected_reason == "invalid":
                validation += 1
            elif view.rejected_reason == "majority_disagreement":
                majority += 1
            elif view.rejected_reason == "parsing_error":
                parsing += 1
            else:
                raise PipelineError(
                    f"{view.candidate_id}: unexpected post-generation rejection "
                    f"reason {view.rejected_reason!r}"
                )
            generated += 1
        elif view.state in (StageState.READY_FOR_REVIEW, StageState.REVIEWED):
            generated += 1
        # errored / mid-flight candidates fall through uncounted
    return FunnelStats(
        total_generated=generated,
        rejected_validation=validation,
        rejected_majority=majority,
        rejected_parsing=parsing,
    )


@dataclass(frozen=True)
class CostReport:
    per_question_cost: Decimal  # dollars, quantized to cents
    num_questions_in_dataset: int
    ai_pipeline_efficiency: Decimal  # fraction in (0, 1]
    human_verification_efficiency: Decimal
    total_cost: Decimal  # dollars, quantized to cents

    def __post_init__(self) -> None:
        for eff in (self.ai_pipeline_efficiency, self.human_verification_efficiency):
            if not 0 < eff <= 1:
                raise ValueError("efficiencies must be in (0, 1]")
        if self.num_questions_in_dataset < 0:
            raise ValueError("num_questions_in_dataset must be >= 0")


def cost_report(
    avg_usage: TokenUsage,
    prices: PriceEntry,
    num_questions: int,
    ai_efficiency: float | Decimal,
    human_efficiency: float | Decimal,
) -> CostReport:
    """Pessimistic upper bound on dataset cost.

    The per-question figure is quantized to cents first and the total
    formula applied to the quantized value; published cost tables quote
    cents, and their totals only reproduce when computed the same way.
    """
    ai = Decimal(str(ai_efficiency))
    human = Decimal(str(human_efficiency))
    if ai <= 0 or human <= 0:
        raise ValueError("efficiencies must be > 0")
    per_question = estimate_request_cost(avg_usage, prices).quantize(CENTS)
    total = (per_question * num_questions / (human * ai)).quantize(CENTS)
    return CostReport(
        per_question_cost=per_question,
        num_questions_in_dataset=num_questions,
        ai_pipeline_efficiency=ai,
        human_verification_efficiency=human,
        total_cost=total,
    )
