#!/usr/bin/env python3
"""Regenerate the deterministic test fixtures under tests/fixtures/.

Produces:
  demo_bank.jsonl        small skill bank used by the replay fixture and CLI demos
  replay_transcript.jsonl  recorded model traffic driving 35 candidates through
                           the pipeline with a scripted mix of outcomes
  model_scores.jsonl     published base/composed accuracy pairs for 25 models
  review_events.jsonl    event log with 813 reviewed candidates matching the
                         published verification statistics

Run from the repository root: python3 scripts/build_fixtures.py
"""

from __future__ import annotations

import json
import sys
import tempfile
from collections import Counter
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from skillweave.events import LogicalClock, PipelineEvent, fold_log, read_event_log
from skillweave.gateway import ChatResponse, ModelSpec, TokenUsage, replay_source
from skillweave.pipeline import RunConfig, run_pipeline
from skillweave.skills import SkillPair, load_skill_bank

FIXTURES = ROOT / "tests" / "fixtures"

# ------------------------------------------------------------------------------
# demo skill bank
# ------------------------------------------------------------------------------

DEMO_SKILLS = [
    ("solving_linear_equations", "Algebra"),
    ("fraction_arithmetic", "Pre-Algebra"),
    ("ratio_reasoning", "Pre-Algebra"),
    ("quadratic_roots", "Algebra"),
    ("exponent_rules", "Algebra"),
    ("modular_arithmetic", "Number Theory"),
    ("perimeter_and_area", "Geometry"),
    ("counting_principles", "Probability"),
    ("trigonometric_identities", "Precalculus"),
    ("sequence_summation", "Inter-Algebra"),
]


def build_demo_bank(path: Path) -> None:
    records = []
    for skill_id, topic in DEMO_SKILLS:
        exemplars = [
            {
                "question": f"Demo {skill_id} question {i}?",
                "solution": f"Demo {skill_id} solution {i}.",
                "source": "demo",
            }
            for i in range(1, 4)
        ]
        records.append(
            {"id": skill_id, "topic": topic, "excluded": False,
             "exemplars": exemplars}
        )
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


# ------------------------------------------------------------------------------
# replay transcript
# ------------------------------------------------------------------------------

# Outcome script, interleaved so rejects land between survivors.
# 35 candidates: 20 pass, 4 similar, 4 minority, 4 unique, 3 malformed;
# 24 of them (pass + unique) reach the final-solution stage.
CASES = (
    ["pass", "pass", "similar", "pass", "minority", "pass", "unique",
     "pass", "malformed"] * 4
)[:35]


class ScriptedProvider:
    """FIFO provider: hands out a prepared reply per request, with
    deterministic token usage."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.served = 0

    def complete(self, request):
        if not self.replies:
            raise AssertionError("script exhausted")
        text = self.replies.pop(0)
        i = self.served
        self.served += 1
        return ChatResponse(
            text=text, usage=TokenUsage(1000 + 7 * i, 200 + 3 * i)
        )


def verdict_reply(answer: str) -> str:
    return f"# EXPLANATION\nScripted rationale.\n# FINAL ANSWER\n{answer}\n"


def generation_reply(index: int) -> str:
    return (
        f"# QUESTION\nFixture question {index}: what is {index} + {index}"
        f" modulo 7?\n"
        f"# SOLUTION\nDoubling gives {2 * index}; reduce modulo 7 to get"
        f" {(2 * index) % 7}.\n"
        f"# DETAILS\nUses both skills of pair {index}.\n"
    )


def solve_reply(answer: str, index: int) -> str:
    return (
        f"# SOLUTION\nIndependent derivation for candidate {index} gives"
        f" {answer}.\n# ANSWER\n{answer}\n"
    )


def replies_for(case: str, index: int) -> list[str]:
    if case == "similar":
        return [verdict_reply("Yes")]
    replies = [verdict_reply("No")]
    if case == "malformed":
        replies.append("# QUESTION\nOnly a question, no other sections.\n")
        return replies
    replies.append(generation_reply(index))
    replies.append(f"Attempted solution for candidate {index}.")
    if case == "minority":
        replies += [verdict_reply(v) for v in ("Yes", "No", "No", "No")]
        return replies
    replies += [verdict_reply(v) for v in ("Yes", "Yes", "Yes", "No")]
    winner = str((2 * index) % 7)
    if case == "unique":
        answers = ["1", "2", "3", "4"]
    else:
        answers = [winner, winner, str(index + 100), winner]
    replies += [solve_reply(a, index) for a in answers]
    return replies


def build_pairs() -> list[SkillPair]:
    firsts = [s for s, topic in DEMO_SKILLS if topic in ("Algebra", "Pre-Algebra")]
    others = [s for s, _ in DEMO_SKILLS]
    pairs = []
    for first in firsts:
        for second in others:
            if second != first:
                pairs.append(SkillPair(first, second))
    assert len(pairs) >= len(CASES)
    return pairs[: len(CASES)]


def build_replay_transcript(
    bank_path: Path, out_path: Path, manifest_path: Path
) -> None:
    bank = load_skill_bank(bank_path)
    pairs = build_pairs()
    manifest_path.write_text(
        json.dumps(
            {
                "run_id": "fixture",
                "provider": "openai",
                "model": "gpt-4-turbo",
                "temperature": 0.7,
                "top_p": 1.0,
                "pairs": [{"first": p.first, "second": p.second} for p in pairs],
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    script = []
    for index, case in enumerate(CASES):
        script.extend(replies_for(case, index))
    config = RunConfig(
        model=ModelSpec(provider="openai", model_name="gpt-4-turbo"),
        num_candidates=len(pairs),
        run_id="fixture",
    )
    with tempfile.TemporaryDirectory() as tmp:
        log = Path(tmp) / "record_events.jsonl"
        provider = ScriptedProvider(script)
        run_pipeline(pairs, config, provider, bank, log, transcript_path=out_path)
        assert not provider.replies, f"{len(provider.replies)} replies unused"
        recorded = fold_log(read_event_log(log))

    # sanity: replay twice, logs must be byte-identical and outcomes match
    texts = []
    for attempt in range(2):
        with tempfile.TemporaryDirectory() as tmp:
            log = Path(tmp) / "replay_events.jsonl"
            run_pipeline(pairs, config, replay_source(out_path), bank, log)
            texts.append(log.read_bytes())
            replayed = fold_log(read_event_log(log))
    assert texts[0] == texts[1], "replay is not deterministic"
    outcomes = Counter(
        (v.state.value, v.rejected_reason) for v in replayed.values()
    )
    expected = Counter()
    for case in CASES:
        expected[
            {
                "pass": ("ready_for_review", ""),
                "similar": ("rejected", "similar_skills"),
                "minority": ("rejected", "invalid"),
                "unique": ("rejected", "majority_disagreement"),
                "malformed": ("rejected", "parsing_error"),
            }[case]
        ] += 1
    assert outcomes == expected, (outcomes, expected)
    assert len(recorded) == len(CASES)
    print(f"  replay transcript: {len(CASES)} candidates, outcomes {dict(expected)}")


# ------------------------------------------------------------------------------
# published accuracy table
# ------------------------------------------------------------------------------

# (model, composed accuracy Y %, base accuracy X %, published drop %)
PUBLISHED_SCORES = [
    ("o1-preview", 76.19, 85.50, 10.89),
    ("GPT-4 Omni", 60.29, 77.54, 22.25),
    ("Claude 3.5 Sonnet", 42.38, 69.89, 39.36),
    ("GPT-4 Turbo", 49.52, 71.95, 31.17),
    ("Gemini-1.5-Pro", 64.76, 81.93, 20.96),
    ("Claude 3 Opus", 35.24, 61.20, 42.42),
    ("Llama-3.1-70B-Instruct", 39.52, 62.10, 36.36),
    ("Llama-3-70B-Instruct", 16.19, 41.62, 61.10),
    ("MetaMath-70B", 2.39, 22.86, 89.54),
    ("MAmmoTH-70B", 2.87, 15.89, 81.94),
    ("DeepSeek-R1-Distill-Qwen-32B", 71.08, 81.16, 12.42),
    ("Mixtral-8x7B-Instruct", 7.62, 27.18, 71.96),
    ("DeepSeek-R1-Distill-Qwen-14B", 69.23, 82.64, 16.23),
    ("MetaMath-13B", 0.48, 17.98, 97.33),
    ("MAmmoTH-13B", 0.48, 8.39, 94.28),
    ("DeepSeek-R1-Distill-Llama-8B", 63.41, 72.73, 12.81),
    ("Llama-3.1-8B-Instruct", 19.05, 45.79, 58.40),
    ("Llama-3-8B-Instruct", 5.24, 22.67, 76.88),
    ("DeepSeek-R1-Distill-Qwen-7B", 56.80, 75.56, 24.83),
    ("Deepseek-math-7b-instruct", 14.76, 40.95, 63.96),
    ("Gemma-1.1-7B-Instruct", 3.33, 19.29, 82.74),
    ("MetaMath-7B", 0.48, 15.85, 96.97),
    ("MAmmoTH-7B", 0.48, 5.89, 91.85),
    ("Phi-3-mini-128k-instruct", 17.22, 39.94, 56.88),
    ("Gemma-1.1-2B-Instruct", 0.96, 3.79, 74.67),
]


def build_model_scores(path: Path) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for model, y_pct, x_pct, drop_pct in PUBLISHED_SCORES:
            fh.write(
                json.dumps(
                    {
                        "model": model,
                        "x": round(x_pct / 100.0, 6),
                        "y": round(y_pct / 100.0, 6),
                        "drop_pct": drop_pct,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    print(f"  model scores: {len(PUBLISHED_SCORES)} rows")


# ------------------------------------------------------------------------------
# review statistics fixture
# ------------------------------------------------------------------------------

# (generator model, candidates annotated, candidates judged good)
REVIEW_MODELS = [
    ("gpt-4-turbo", 488, 116),
    ("gpt-4o", 28, 3),
    ("claude-3-opus", 236, 51),
    ("gemini-1.5-pro", 61, 40),
]

# Of the good questions: counts modified in question only, solution only,
# both, or neither.
GOOD_BOTH = 26
GOOD_QUESTION_ONLY = 33
GOOD_SOLUTION_ONLY = 71


def build_review_events(path: Path) -> None:
    clock = LogicalClock()
    events: list[PipelineEvent] = []

    def emit(cid, seq, stage, event, reason="", payload=None):
        events.append(
            PipelineEvent(
                candidate_id=cid, seq=seq, stage=stage, event=event,
                reason=reason, payload=payload or {}, ts=clock(),
            )
        )

    def survivor(cid, model):
        emit(cid, 0, "pair_validation", "pair_sampled",
             payload={"first": "a_skill", "second": "b_skill",
                      "generator_model": model})
        emit(cid, 1, "pair_validation", "accepted")
        emit(cid, 2, "generation", "generated",
             payload={"question": f"Original question {cid}?",
                      "draft_solution": "Draft.", "details": "Details."})
        emit(cid, 3, "attempt", "attempted",
             payload={"attempted_solution": "Attempt."})
        emit(cid, 4, "validation", "validated",
             payload={"votes": [True, True, True, True]})
        emit(cid, 5, "final_solution", "solved",
             payload={"final_solution": f"Original solution {cid}.",
                      "final_answer": "6",
                      "traces": [{"solution": f"Original solution {cid}.",
                                  "answer": "6"}]})
        emit(cid, 6, "final_solution", "ready_for_review")

    good_index = 0
    for model, annotated, good in REVIEW_MODELS:
        for i in range(annotated):
            cid = f"{model}-r{i:04d}"
            survivor(cid, model)
            if i < good:
                verdict = "good"
                if good_index < GOOD_BOTH:
                    q_mod, s_mod = True, True
                elif good_index < GOOD_BOTH + GOOD_QUESTION_ONLY:
                    q_mod, s_mod = True, False
                elif good_index < GOOD_BOTH + GOOD_QUESTION_ONLY + GOOD_SOLUTION_ONLY:
                    q_mod, s_mod = False, True
                else:
                    q_mod, s_mod = False, False
                good_index += 1
            else:
                verdict = "too_easy" if i % 2 == 0 else "wrong"
                q_mod = s_mod = False
            question = f"Edited question {cid}?" if q_mod else f"Original question {cid}?"
            solution = f"Edited solution {cid}." if s_mod else f"Original solution {cid}."
            emit(cid, 7, "review", "reviewed",
                 payload={"verdict": verdict, "annotator_id": "fixture",
                          "question": question, "solution": solution,
                          "question_modified": q_mod,
                          "solution_modified": s_mod})

    with path.open("w", encoding="utf-8") as fh:
        for event in events:
            fh.write(event.to_json() + "\n")
    total_annotated = sum(a for _, a, _ in REVIEW_MODELS)
    total_good = sum(g for _, _, g in REVIEW_MODELS)
    print(
        f"  review events: {total_annotated} candidates reviewed,"
        f" {total_good} good ({len(events)} events)"
    )


def main() -> int:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    print("building fixtures:")
    build_demo_bank(FIXTURES / "demo_bank.jsonl")
    build_replay_transcript(
        FIXTURES / "demo_bank.jsonl",
        FIXTURES / "replay_transcript.jsonl",
        FIXTURES / "replay_manifest.json",
    )
    build_model_scores(FIXTURES / "model_scores.jsonl")
    build_review_events(FIXTURES / "review_events.jsonl")
    print("done")
    return 0


if __name__ == "__main__":
    sys.exit(main())
