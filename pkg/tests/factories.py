"""Shared builders for pipeline tests: scripted providers, canned model
replies, banks, and synthetic event logs."""

from collections import deque

from skillweave.events import PipelineEvent
from skillweave.gateway import ChatResponse, TokenUsage
from skillweave.skills import Skill, SkillBank, SkillExemplar, SkillPair

PAIR = SkillPair("perimeter_and_area", "modular_arithmetic")


def two_skill_bank():
    def exemplars(tag):
        return tuple(
            SkillExemplar(question=f"{tag} q{i}", solution=f"{tag} s{i}")
            for i in range(1, 4)
        )

    return SkillBank(
        skills=(
            Skill("modular_arithmetic", "Number Theory"),
            Skill("perimeter_and_area", "Pre-Algebra"),
        ),
        exemplars={
            "modular_arithmetic": exemplars("mod"),
            "perimeter_and_area": exemplars("area"),
        },
    )


class QueueProvider:
    """Feeds scripted reply texts in order, whatever the request."""

    def __init__(self, texts):
        self.texts = deque(texts)

    def complete(self, request):
        if not self.texts:
            raise AssertionError("scripted provider ran out of replies")
        return ChatResponse(
            text=self.texts.popleft(), usage=TokenUsage(100, 50), latency_ms=1
        )


def verdict_reply(answer):
    return f"# EXPLANATION\nThought about it.\n\n# FINAL ANSWER\n{answer}\n"


def rubric_reply(answer):
    return f"# REASONING\nChecked the rubric.\n\n# FINAL ANSWER\n{answer}\n"


def generation_reply(question="What is 2+2 mod 3?", solution="The answer is 1.",
                     details="Composed both skills."):
    return (
        f"# QUESTION\n{question}\n\n# SOLUTION\n{solution}\n\n# DETAILS\n{details}\n"
    )


def attempt_reply(text="Worked through it; the single exact answer is 1."):
    return text


def solve_reply(solution, answer):
    return f"# SOLUTION\n{solution}\n\n# ANSWER\n{answer}\n"


def passing_candidate_replies(final_answers=("6", "6", "0", "12"),
                              votes=("Yes", "Yes", "Yes", "No")):
    """Replies for one candidate that survives all five stages (with the
    default votes/answers)."""
    return (
        [verdict_reply("No"), generation_reply(), attempt_reply()]
        + [rubric_reply(v) for v in votes]
        + [solve_reply(f"solution trace {i}", a) for i, a in enumerate(final_answers)]
    )


def make_funnel_events(survivors=0, invalid=0, majority=0, parsing=0,
                       pair_rejected=0, errored=0, model="", prefix="syn"):
    """Synthesize a well-formed event log with the given outcome counts."""
    events = []
    counter = 0

    def emit(cid, seq, stage, event, reason="", payload=None):
        events.append(
            PipelineEvent(
                candidate_id=cid, seq=seq, stage=stage, event=event,
                reason=reason, payload=payload or {}, ts=float(len(events)),
            )
        )

    def new_cid():
        nonlocal counter
        counter += 1
        return f"{prefix}-{counter:05d}"

    def sampled_payload():
        payload = {"first": "a_skill", "second": "b_skill"}
        if model:
            payload["generator_model"] = model
        return payload

    def prologue(cid):
        emit(cid, 0, "pair_validation", "pair_sampled",
             payload=sampled_payload())
        emit(cid, 1, "pair_validation", "accepted")

    for _ in range(pair_rejected):
        cid = new_cid()
        emit(cid, 0, "pair_validation", "pair_sampled",
             payload=sampled_payload())
        emit(cid, 1, "pair_validation", "rejected", reason="similar_skills")
    for _ in range(parsing):
        cid = new_cid()
        prologue(cid)
        emit(cid, 2, "generation", "rejected", reason="parsing_error")
    for _ in range(invalid):
        cid = new_cid()
        prologue(cid)
        emit(cid, 2, "generation", "generated",
             payload={"question": "q", "draft_solution": "s", "details": "d"})
        emit(cid, 3, "attempt", "attempted", payload={"attempted_solution": "a"})
        emit(cid, 4, "validation", "rejected", reason="invalid",
             payload={"votes": [False, False, True, False]})
    for _ in range(majority):
        cid = new_cid()
        prologue(cid)
        emit(cid, 2, "generation", "generated",
             payload={"question": "q", "draft_solution": "s", "details": "d"})
        emit(cid, 3, "attempt", "attempted", payload={"attempted_solution": "a"})
        emit(cid, 4, "validation", "validated",
             payload={"votes": [True, True, True, True]})
        emit(cid, 5, "final_solution", "rejected", reason="majority_disagreement")
    for _ in range(survivors):
        cid = new_cid()
        prologue(cid)
        emit(cid, 2, "generation", "generated",
             payload={"question": f"Original question {cid}?",
                      "draft_solution": "s", "details": "d"})
        emit(cid, 3, "attempt", "attempted", payload={"attempted_solution": "a"})
        emit(cid, 4, "validation", "validated",
             payload={"votes": [True, True, True, True]})
        emit(cid, 5, "final_solution", "solved",
             payload={"final_solution": f"Original solution {cid}.",
                      "final_answer": "6",
                      "traces": [{"solution": f"Original solution {cid}.",
                                  "answer": "6"}]})
        emit(cid, 6, "final_solution", "ready_for_review")
    for _ in range(errored):
        cid = new_cid()
        prologue(cid)
        emit(cid, 2, "generation", "error", payload={"message": "timeout"})
    return events
