"""Model evaluation and accuracy analysis.

Two halves. The harness half runs a model over a question set at
temperature 0, grades each response with a grader model, and reports
accuracy. The analysis half is pure arithmetic on (base accuracy X,
composed accuracy Y) pairs: percentage drop, the y = x^k power-law fit in
log space, residuals against y = x^2, and a sampling simulator for the
independence heuristic where composed success is the product of the two
skill success rates.
"""

from __future__ import annotations

import json
import logging
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import EvaluationError, ParseError
from .gateway import ChatRequest, Gateway, Message, ModelSpec
from .parsing import (
    GRADER_VERDICT_HEADING,
    CanonicalAnswer,
    canonicalize_answer,
    parse_verdict,
)
from .prompts import PromptTemplate, bind_for_stage, load_builtin_templates, render

logger = logging.getLogger(__name__)

__all__ = [
    "EvalItem",
    "ModelScore",
    "FitReport",
    "SkillSuccessProfile",
    "ItemResult",
    "EvalReport",
    "EvalConfig",
    "percentage_drop",
    "square_residual",
    "fit_exponent",
    "simulate_skill_composition",
    "skill_proportional_subset",
    "retrieve_exemplars",
    "grade_solution",
    "evaluate_model",
    "load_items",
    "load_scores",
    "write_scores",
    "format_fit_table",
    "plot_rows",
]

DEFAULT_EXEMPLAR_COUNT = 4

ZERO_SHOT_INSTRUCTION = (
    "Solve the following problem. Show your reasoning step by step, then"
    " state your final answer."
)


# ------------------------------------------------------------------------------
# domain types
# ------------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalItem:
    """One gradeable question: base-set items carry one skill label,
    composed items two."""

    id: str
    question: str
    gt_solution: str
    gt_answer: CanonicalAnswer
    skills: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("id must be nonempty")
        if not self.question.strip():
            raise ValueError("question must be nonempty")
        if not self.gt_solution.strip():
            raise ValueError("gt_solution must be nonempty")
        if not self.skills:
            raise ValueError("skills must be nonempty")

    @classmethod
    def from_dict(cls, raw: Mapping) -> "EvalItem":
        return cls(
            id=str(raw["id"]),
            question=raw["question"],
            gt_solution=raw["solution"],
            gt_answer=canonicalize_answer(raw["answer"]),
            skills=tuple(raw["skills"]),
        )


@dataclass(frozen=True)
class ModelScore:
    """Accuracy pair for one model: x on the base set, y on the composed
    set. ``drop_pct`` defaults to the recomputed 100(x-y)/x; a loaded
    score may carry a published value instead."""

    model: str
    x: float
    y: float
    drop_pct: float | None = None

    def __post_init__(self) -> None:
        if not self.model:
            raise ValueError("model must be nonempty")
        if not 0.0 <= self.x <= 1.0 or not 0.0 <= self.y <= 1.0:
            raise ValueError("x and y must be fractions in [0, 1]")
        if self.drop_pct is None and self.x > 0:
            object.__setattr__(self, "drop_pct", percentage_drop(self.x, self.y))

    @property
    def computed_drop_pct(self) -> float:
        return percentage_drop(self.x, self.y)


@dataclass(frozen=True)
class FitReport:
    """Fitted exponent k for y = x^k plus residual maps; points excluded
    from the fit (y = 0 or x at the ends) still appear in the maps."""

    k: float
    per_model_residual: dict[str, float]
    square_residual: dict[str, float]

    def __post_init__(self) -> None:
        if not math.isfinite(self.k):
            raise ValueError("k must be finite")
        for name, value in self.per_model_residual.items():
            if not math.isfinite(value):
                raise ValueError(f"residual for {name!r} is not finite")


@dataclass(frozen=True)
class SkillSuccessProfile:
    """Per-skill success probabilities s_i for the independence
    simulator."""

    s: dict[str, float]

    def __post_init__(self) -> None:
        for skill, value in self.s.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"success rate for {skill!r} outside [0, 1]")

    @property
    def n(self) -> int:
        return len(self.s)


# ------------------------------------------------------------------------------
# analysis
# ------------------------------------------------------------------------------


def percentage_drop(x: float, y: float) -> float:
    """How much accuracy fell from the base set to the composed set, as a
    percentage of the base accuracy."""
    if x <= 0:
        raise ValueError("percentage drop is undefined at x = 0")
    return 100.0 * (x - y) / x


def square_residual(x: float, y: float) -> float:
    """Deviation of the observed composed accuracy from the y = x^2
    trend."""
    if not 0.0 <= x <= 1.0 or not 0.0 <= y <= 1.0:
        raise ValueError("x and y must be fractions in [0, 1]")
    return y - x * x


def fit_exponent(
    points: Iterable["ModelScore | tuple[float, float]"],
) -> FitReport:
    """Least-squares fit of k in y = x^k, through the origin in log space:
    k = sum(ln y * ln x) / sum((ln x)^2) over points with 0 < x < 1 and
    y > 0. Degenerate points are skipped for fitting but keep their
    residual entries."""
    named: list[tuple[str, float, float]] = []
    for i, point in enumerate(points):
        if isinstance(point, ModelScore):
            named.append((point.model, point.x, point.y))
        else:
            x, y = point
            named.append((f"point_{i}", x, y))
    usable = [(x, y) for _, x, y in named if 0.0 < x < 1.0 and y > 0.0]
    if not usable:
        raise EvaluationError("no points usable for log-space fitting")
    numerator = sum(math.log(y) * math.log(x) for x, y in usable)
    denominator = sum(math.log(x) ** 2 for x, y in usable)
    k = numerator / denominator
    return FitReport(
        k=k,
        per_model_residual={name: y - x**k for name, x, y in named},
        square_residual={name: y - x * x for name, x, y in named},
    )


def simulate_skill_composition(
    profile: SkillSuccessProfile, num_pairs: int, rng: random.Random
) -> tuple[float, float]:
    """Monte-Carlo check of the independence heuristic: x_hat is the mean
    skill success rate, y_hat the mean of s_i*s_j over uniformly drawn
    pairs i != j."""
    if profile.n < 2:
        raise EvaluationError("profile needs at least two skills")
    if num_pairs < 1:
        raise ValueError("num_pairs must be positive")
    values = [profile.s[skill] for skill in sorted(profile.s)]
    n = len(values)
    x_hat = sum(values) / n
    total = 0.0
    for _ in range(num_pairs):
        i = rng.randrange(n)
        j = rng.randrange(n - 1)
        if j >= i:  # uniform over ordered pairs with i != j
            j += 1
        total += values[i] * values[j]
    return x_hat, total / num_pairs


def skill_proportional_subset(
    source: Sequence[EvalItem],
    target_hist: Mapping[str, int],
    rng: random.Random,
) -> list[EvalItem]:
    """Sample target_hist[skill] items listing each skill, without
    replacement per skill; an item picked under two skills appears once.
    Result keeps source order."""
    chosen: set[str] = set()
    for skill in sorted(target_hist):
        want = target_hist[skill]
        if want < 0:
            raise ValueError(f"negative target for {skill!r}")
        pool = [item for item in source if skill in item.skills]
        if len(pool) < want:
            raise EvaluationError(
                f"skill {skill!r}: need {want} items, source has {len(pool)}"
            )
        chosen.update(item.id for item in rng.sample(pool, want))
    return [item for item in source if item.id in chosen]


def retrieve_exemplars(
    target_skill: str,
    composed_set: Sequence[EvalItem],
    k: int = DEFAULT_EXEMPLAR_COUNT,
) -> list[EvalItem]:
    """First min(k, available) items whose skills include target_skill,
    in stored order."""
    if k < 1:
        raise ValueError("k must be positive")
    matches = [item for item in composed_set if target_skill in item.skills]
    if not matches:
        raise EvaluationError(f"no exemplars available for skill {target_skill!r}")
    return matches[:k]


# ------------------------------------------------------------------------------
# harness
# ------------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalConfig:
    model: ModelSpec
    grader: ModelSpec
    mode: str = "zero_shot_cot"
    exemplar_source: tuple[EvalItem, ...] = ()
    exemplar_count: int = DEFAULT_EXEMPLAR_COUNT
    max_output_tokens: int = 4096
    max_in_flight: int = 1

    def __post_init__(self) -> None:
        if self.mode not in ("zero_shot_cot", "four_shot"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "four_shot" and not self.exemplar_source:
            raise ValueError("four_shot mode needs an exemplar source")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be positive")


@dataclass(frozen=True)
class ItemResult:
    item_id: str
    response: str
    correct: bool | None  # None = grader output unusable, item ungraded

    def to_json(self) -> str:
        return json.dumps(
            {
                "item_id": self.item_id,
                "response": self.response,
                "correct": self.correct,
            },
            ensure_ascii=False,
            sort_keys=True,
        )


@dataclass(frozen=True)
class EvalReport:
    results: tuple[ItemResult, ...]

    @property
    def graded(self) -> int:
        return sum(1 for r in self.results if r.correct is not None)

    @property
    def correct(self) -> int:
        return sum(1 for r in self.results if r.correct)

    @property
    def accuracy(self) -> float:
        if self.graded == 0:
            raise EvaluationError("no items were graded")
        return self.correct / self.graded


def grade_solution(
    item: EvalItem,
    student_solution: str,
    gateway: Gateway,
    grader: ModelSpec,
    templates: Mapping[str, PromptTemplate] | None = None,
) -> bool:
    """Ask the grader model whether the student's solution is correct.
    The grader judges the reasoning, not just the final answer; a
    right answer reached by wrong steps grades as incorrect."""
    templates = templates or load_builtin_templates()
    prompt = render(
        templates["grading"],
        bind_for_stage(
            "grading",
            question=item.question,
            correct_solution=item.gt_solution,
            student_solution=student_solution,
        ),
    )
    response = gateway.complete(
        ChatRequest(
            model=grader,
            prompt=(Message("user", prompt),),
            temperature=0.0,
            top_p=1.0,
        ),
        stage="grading",
    )
    return _grader_verdict(response.text)


def _grader_verdict(text: str) -> bool:
    """Graders usually answer under the correctness heading, but a bare
    yes/no reply is accepted too; anything else is unparseable."""
    try:
        return parse_verdict(text, heading=GRADER_VERDICT_HEADING)
    except ParseError:
        body = text.strip().rstrip(".!").strip().lower()
        if body == "yes":
            return True
        if body == "no":
            return False
        raise


def _solver_prompt(item: EvalItem, config: EvalConfig) -> str:
    parts = [ZERO_SHOT_INSTRUCTION, ""]
    if config.mode == "four_shot":
        exemplars = retrieve_exemplars(
            item.skills[0], config.exemplar_source, config.exemplar_count
        )
        for exemplar in exemplars:
            parts += [
                f"Question: {exemplar.question}",
                f"Solution: {exemplar.gt_solution}",
                "",
            ]
    parts.append(f"Question: {item.question}")
    return "\n".join(parts)


def evaluate_model(
    items: Sequence[EvalItem],
    config: EvalConfig,
    gateway: Gateway,
) -> EvalReport:
    """Solve every item at temperature 0 and grade each response.
    Ungraded items (grader output unusable) are excluded from accuracy
    with a warning; all items ungraded is an error."""
    if not items:
        raise EvaluationError("no items to evaluate")
    templates = load_builtin_templates()

    def run_one(item: EvalItem) -> ItemResult:
        request = ChatRequest(
            model=config.model,
            prompt=(Message("user", _solver_prompt(item, config)),),
            temperature=0.0,
            top_p=1.0,
            max_output_tokens=config.max_output_tokens,
        )
        response = gateway.complete(request, stage="eval")
        try:
            correct = grade_solution(
                item, response.text, gateway, config.grader, templates
            )
        except ParseError as exc:
            logger.warning("item %s ungraded: %s", item.id, exc)
            return ItemResult(item.id, response.text, None)
        return ItemResult(item.id, response.text, correct)

    if config.max_in_flight == 1:
        results = [run_one(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
            results = list(pool.map(run_one, items))
    report = EvalReport(tuple(results))
    if report.graded == 0:
        raise EvaluationError("no items were graded")
    return report


# ------------------------------------------------------------------------------
# files and reports
# ------------------------------------------------------------------------------


def load_items(path: str | Path) -> list[EvalItem]:
    """Read a JSONL question set: {"id", "question", "solution",
    "answer", "skills"} per line."""
    path = Path(path)
    items = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                items.append(EvalItem.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise EvaluationError(f"{path}:{lineno}: bad item: {exc}") from exc
    if not items:
        raise EvaluationError(f"{path}: no items")
    return items


def load_scores(path: str | Path) -> list[ModelScore]:
    """Read a JSONL scores file: {"model", "x", "y"} per line, with an
    optional published "drop_pct"."""
    path = Path(path)
    scores = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                scores.append(
                    ModelScore(
                        model=raw["model"],
                        x=float(raw["x"]),
                        y=float(raw["y"]),
                        drop_pct=raw.get("drop_pct"),
                    )
                )
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise EvaluationError(f"{path}:{lineno}: bad score: {exc}") from exc
    if not scores:
        raise EvaluationError(f"{path}: no scores")
    return scores


def write_scores(path: str | Path, scores: Iterable[ModelScore]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for score in scores:
            fh.write(
                json.dumps(
                    {
                        "model": score.model,
                        "x": score.x,
                        "y": score.y,
                        "drop_pct": score.drop_pct,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def plot_rows(scores: Iterable[ModelScore]) -> list[dict]:
    """(x, x^2, y) triple per model, for external plotting."""
    return [
        {"model": s.model, "x": s.x, "x_squared": s.x * s.x, "y": s.y}
        for s in scores
    ]


def format_fit_table(scores: Sequence[ModelScore], report: FitReport) -> str:
    """Plain-text summary: fitted k, then one row per model with drop and
    residuals."""
    width = max(len(s.model) for s in scores)
    lines = [
        f"fitted exponent k = {report.k:.4f}",
        "",
        f"{'model':<{width}}  {'x':>7}  {'y':>7}  {'drop%':>7}  "
        f"{'y-x^k':>8}  {'y-x^2':>8}",
    ]
    for s in scores:
        drop = s.drop_pct if s.drop_pct is not None else float("nan")
        lines.append(
            f"{s.model:<{width}}  {s.x:>7.4f}  {s.y:>7.4f}  {drop:>7.2f}  "
            f"{report.per_model_residual[s.model]:>+8.4f}  "
            f"{report.square_residual[s.model]:>+8.4f}"
        )
    return "\n".join(lines)
