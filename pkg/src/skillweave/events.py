"""Event-sourced candidate lifecycle.

Every candidate question is persisted as an append-only sequence of events
(JSONL, one event per line); the candidate's current state is a pure fold
over its events. This buys exact funnel audits, crash recovery (re-fold the
log, resume unfinished candidates) and deterministic replay comparisons,
at the price of never editing history.

Event order per candidate is enforced by a strict transition table; an
out-of-order event in a log is a hard error, not a warning, because a log
that cannot be folded cannot be trusted for statistics either.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable

from .errors import PipelineError

__all__ = [
    "PIPELINE_STAGES",
    "REVIEW_STAGE",
    "REASONS",
    "StageState",
    "PipelineEvent",
    "CandidateView",
    "EventLogWriter",
    "LogicalClock",
    "read_event_log",
    "fold_candidate",
    "fold_log",
]

PIPELINE_STAGES = (
    "pair_validation",
    "generation",
    "attempt",
    "validation",
    "final_solution",
)
REVIEW_STAGE = "review"

REASONS = ("similar_skills", "parsing_error", "invalid", "majority_disagreement")


class StageState(Enum):
    PAIR_SAMPLED = "pair_sampled"
    PAIR_VALIDATED = "pair_validated"
    GENERATED = "generated"
    ATTEMPTED = "attempted"
    VALIDATED = "validated"
    SOLVED = "solved"
    READY_FOR_REVIEW = "ready_for_review"
    REJECTED = "rejected"
    REVIEWED = "reviewed"
    ERRORED = "errored"


TERMINAL_STATES = frozenset(
    {StageState.REJECTED, StageState.READY_FOR_REVIEW, StageState.REVIEWED}
)

# event name -> stage it must carry (None = any pipeline stage)
_EVENT_STAGE = {
    "pair_sampled": "pair_validation",
    "accepted": "pair_validation",
    "generated": "generation",
    "attempted": "attempt",
    "validated": "validation",
    "solved": "final_solution",
    "ready_for_review": "final_solution",
    "reviewed": REVIEW_STAGE,
    "rejected": None,
    "error": None,
}

# state (None = fresh candidate) -> events allowed next
_TRANSITIONS: dict[StageState | None, frozenset[str]] = {
    None: frozenset({"pair_sampled"}),
    StageState.PAIR_SAMPLED: frozenset({"accepted", "rejected", "error"}),
    StageState.PAIR_VALIDATED: frozenset({"generated", "rejected", "error"}),
    StageState.GENERATED: frozenset({"attempted", "rejected", "error"}),
    StageState.ATTEMPTED: frozenset({"validated", "rejected", "error"}),
    StageState.VALIDATED: frozenset({"solved", "rejected", "error"}),
    StageState.SOLVED: frozenset({"ready_for_review"}),
    StageState.READY_FOR_REVIEW: frozenset({"reviewed"}),
    StageState.REVIEWED: frozenset(),
    StageState.REJECTED: frozenset(),
}

_EVENT_RESULT_STATE = {
    "pair_sampled": StageState.PAIR_SAMPLED,
    "accepted": StageState.PAIR_VALIDATED,
    "generated": StageState.GENERATED,
    "attempted": StageState.ATTEMPTED,
    "validated": StageState.VALIDATED,
    "solved": StageState.SOLVED,
    "ready_for_review": StageState.READY_FOR_REVIEW,
    "rejected": StageState.REJECTED,
    "reviewed": StageState.REVIEWED,
    "error": StageState.ERRORED,
}


@dataclass(frozen=True)
class PipelineEvent:
    candidate_id: str
    seq: int
    stage: str
    event: str
    reason: str = ""
    payload: dict = field(default_factory=dict)
    ts: float = 0.0

    def __post_init__(self) -> None:
        if self.event not in _EVENT_RESULT_STATE:
            raise ValueError(f"unknown event {self.event!r}")
        expected_stage = _EVENT_STAGE[self.event]
        if expected_stage is not None and self.stage != expected_stage:
            raise ValueError(
                f"event {self.event!r} belongs to stage {expected_stage!r}, "
                f"got {self.stage!r}"
            )
        if self.stage not in PIPELINE_STAGES and self.stage != REVIEW_STAGE:
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.reason and self.reason not in REASONS:
            raise ValueError(f"unknown reason {self.reason!r}")
        if self.event == "rejected" and not self.reason:
            raise ValueError("rejected events carry a reason")
        if self.seq < 0:
            raise ValueError("seq must be >= 0")

    def to_json(self) -> str:
        record = {
            "candidate_id": self.candidate_id,
            "seq": self.seq,
            "stage": self.stage,
            "event": self.event,
            "reason": self.reason,
            "payload": self.payload,
            "ts": self.ts,
        }
        return json.dumps(record, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "PipelineEvent":
        record = json.loads(line)
        return cls(
            candidate_id=record["candidate_id"],
            seq=record["seq"],
            stage=record["stage"],
            event=record["event"],
            reason=record.get("reason", ""),
            payload=record.get("payload", {}),
            ts=record.get("ts", 0.0),
        )


@dataclass
class CandidateView:
    """Folded state of one candidate. ``state`` is where the fold ended;
    ``resume_state`` is where work should restart (for an errored
    candidate, the state before the error)."""

    candidate_id: str
    state: StageState | None = None
    resume_state: StageState | None = None
    pair_first: str = ""
    pair_second: str = ""
    generator_model: str = ""
    question: str = ""
    draft_solution: str = ""
    details: str = ""
    attempted_solution: str = ""
    validation_votes: tuple[bool, ...] = ()
    final_traces: tuple[tuple[str, str | None], ...] = ()
    final_solution: str = ""
    final_answer: str = ""
    rejected_stage: str = ""
    rejected_reason: str = ""
    review_verdict: str = ""
    error_message: str = ""
    last_seq: int = -1
    generation_entered: bool = False  # stage-1 accepted; basis of the funnel

    @property
    def terminal(self) -> bool:
        return self.state in TERMINAL_STATES


def fold_candidate(
    events: Iterable[PipelineEvent], candidate_id: str | None = None
) -> CandidateView:
    """Fold one candidate's events into a view, enforcing seq order and
    legal transitions."""
    view: CandidateView | None = None
    for event in events:
        if view is None:
            view = CandidateView(candidate_id=event.candidate_id)
            if candidate_id is not None and event.candidate_id != candidate_id:
                raise PipelineError(
                    f"expected events for {candidate_id!r}, got {event.candidate_id!r}"
                )
        elif event.candidate_id != view.candidate_id:
            raise PipelineError(
                f"mixed candidates in fold: {view.candidate_id!r} vs "
                f"{event.candidate_id!r}"
            )
        if event.seq != view.last_seq + 1:
            raise PipelineError(
                f"{view.candidate_id}: expected seq {view.last_seq + 1}, "
                f"got {event.seq} ({event.event})"
            )
        effective = (
            view.resume_state if view.state is StageState.ERRORED else view.state
        )
        allowed = _TRANSITIONS.get(effective, frozenset())
        if event.event not in allowed:
            raise PipelineError(
                f"{view.candidate_id}: illegal event {event.event!r} in state "
                f"{effective.value if effective else 'initial'}"
            )
        _apply(view, event)
    if view is None:
        raise PipelineError(f"no events for candidate {candidate_id!r}")
    return view


def _apply(view: CandidateView, event: PipelineEvent) -> None:
    payload = event.payload
    if event.event == "pair_sampled":
        view.pair_first = payload.get("first", "")
        view.pair_second = payload.get("second", "")
        view.generator_model = payload.get("generator_model", "")
    elif event.event == "accepted":
        view.generation_entered = True
    elif event.event == "generated":
        view.question = payload.get("question", "")
        view.draft_solution = payload.get("draft_solution", "")
        view.details = payload.get("details", "")
    elif event.event == "attempted":
        view.attempted_solution = payload.get("attempted_solution", "")
    elif event.event == "validated":
        view.validation_votes = tuple(payload.get("votes", ()))
    elif event.event == "solved":
        view.final_traces = tuple(
            (t.get("solution", ""), t.get("answer"))
            for t in payload.get("traces", ())
        )
        view.final_solution = payload.get("final_solution", "")
        view.final_answer = payload.get("final_answer", "")
    elif event.event == "rejected":
        view.rejected_stage = event.stage
        view.rejected_reason = event.reason
        if "votes" in payload:
            view.validation_votes = tuple(payload["votes"])
    elif event.event == "reviewed":
        view.review_verdict = payload.get("verdict", "")
        # reviewers may rewrite the text; the reviewed payload is canonical
        if payload.get("question"):
            view.question = payload["question"]
        if payload.get("solution"):
            view.final_solution = payload["solution"]
    elif event.event == "error":
        view.error_message = payload.get("message", "")

    if event.event == "error":
        if view.state is not StageState.ERRORED:
            view.resume_state = view.state
    else:
        view.resume_state = None
    view.state = _EVENT_RESULT_STATE[event.event]
    view.last_seq = event.seq


def fold_log(events: Iterable[PipelineEvent]) -> dict[str, CandidateView]:
    """Fold a whole log, grouping by candidate. Interleaved candidates are
    fine; each candidate's own events must be in order."""
    grouped: dict[str, list[PipelineEvent]] = {}
    for event in events:
        grouped.setdefault(event.candidate_id, []).append(event)
    return {
        cid: fold_candidate(cand_events, cid)
        for cid, cand_events in grouped.items()
    }


class LogicalClock:
    """Deterministic event timestamps for replay runs: 0, 1, 2, ..."""

    def __init__(self, start: int = 0):
        self._next = start
        self._lock = threading.Lock()

    def __call__(self) -> float:
        with self._lock:
            value = self._next
            self._next += 1
        return float(value)


class EventLogWriter:
    """Append-only JSONL event log; one fsync-free flush per event."""

    def __init__(self, path: str | Path, clock: Callable[[], float] = time.time):
        self.path = Path(path)
        self.clock = clock
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("a", encoding="utf-8")

    def append(self, event: PipelineEvent) -> PipelineEvent:
        stamped = replace(event, ts=self.clock())
        with self._lock:
            self._fh.write(stamped.to_json() + "\n")
            self._fh.flush()
        return stamped

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "EventLogWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_event_log(path: str | Path) -> list[PipelineEvent]:
    path = Path(path)
    if not path.exists():
        raise PipelineError(f"event log not found: {path}")
    events: list[PipelineEvent] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                events.append(PipelineEvent.from_json(line))
            except (KeyError, ValueError) as exc:
                raise PipelineError(f"{path}:{lineno}: bad event: {exc}") from exc
    return events
