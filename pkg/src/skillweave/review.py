"""Human review of pipeline survivors: claim queue, verdicts, edits,
modification statistics, and dataset export.

Reviewers claim the oldest waiting candidate, optionally rewrite the
question or solution, and file exactly one verdict: good (ships in the
dataset), too_easy, or wrong. Claims carry a lease so an abandoned item
returns to the queue. All state changes append to the same event log the
pipeline writes; originals are never overwritten, so the pre-edit text of
any item can be recovered from its generation events.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .errors import ReviewError
from .events import (
    REVIEW_STAGE,
    CandidateView,
    EventLogWriter,
    PipelineEvent,
    StageState,
    _apply,
    fold_log,
    read_event_log,
)

__all__ = [
    "VERDICTS",
    "ReviewRecord",
    "ModificationStats",
    "PassRate",
    "QueueEntry",
    "ReviewStore",
    "modification_stats",
    "pass_rates",
    "export_dataset",
    "write_export",
]

VERDICTS = ("good", "too_easy", "wrong")

DEFAULT_LEASE_MINUTES = 60


@dataclass(frozen=True)
class ReviewRecord:
    candidate_id: str
    verdict: str
    annotator_id: str
    question_modified: bool = False
    solution_modified: bool = False
    edited_question: str | None = None
    edited_solution: str | None = None
    ts: float = 0.0

    def __post_init__(self) -> None:
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}")
        if self.question_modified != (self.edited_question is not None):
            raise ValueError("question_modified implies an edited question")
        if self.solution_modified != (self.edited_solution is not None):
            raise ValueError("solution_modified implies an edited solution")
        if not self.annotator_id:
            raise ValueError("annotator_id must be nonempty")


@dataclass(frozen=True)
class ModificationStats:
    modified_questions: int  # A
    modified_solutions: int  # B
    modified_either: int  # |A ∪ B|
    total: int

    def __post_init__(self) -> None:
        a, b, either = (
            self.modified_questions, self.modified_solutions, self.modified_either
        )
        if not (max(a, b) <= either <= min(a + b, self.total)):
            raise ValueError("inconsistent modification counts")


@dataclass(frozen=True)
class PassRate:
    annotated: int
    passed: int  # verdict good

    @property
    def rate(self) -> float:
        return self.passed / self.annotated if self.annotated else 0.0

    @property
    def rate_pct(self) -> float:
        return 100.0 * self.rate


@dataclass
class QueueEntry:
    candidate_id: str
    claimed_by: str | None = None
    claimed_at: float | None = None


def modification_stats(records: Iterable[ReviewRecord]) -> ModificationStats:
    a = b = either = total = 0
    for record in records:
        total += 1
        if record.question_modified:
            a += 1
        if record.solution_modified:
            b += 1
        if record.question_modified or record.solution_modified:
            either += 1
    return ModificationStats(a, b, either, total)


def pass_rates(
    records: Iterable[ReviewRecord], views: Mapping[str, CandidateView]
) -> dict[str, PassRate]:
    """Reviewed/passed counts grouped by the model that generated each
    candidate."""
    annotated: dict[str, int] = {}
    passed: dict[str, int] = {}
    for record in records:
        view = views.get(record.candidate_id)
        if view is None:
            raise ReviewError(f"record for unknown candidate {record.candidate_id!r}")
        model = view.generator_model or "unknown"
        annotated[model] = annotated.get(model, 0) + 1
        if record.verdict == "good":
            passed[model] = passed.get(model, 0) + 1
    return {
        model: PassRate(annotated=n, passed=passed.get(model, 0))
        for model, n in annotated.items()
    }


def export_dataset(
    records: Iterable[ReviewRecord],
    views: Mapping[str, CandidateView],
    verdicts: frozenset[str] = frozenset({"good"}),
) -> list[dict]:
    """One exportable item per record whose verdict is in ``verdicts``,
    using edited texts where present."""
    unknown = set(verdicts) - set(VERDICTS)
    if unknown:
        raise ValueError(f"unknown verdicts: {sorted(unknown)}")
    items = []
    for record in records:
        if record.verdict not in verdicts:
            continue
        view = views.get(record.candidate_id)
        if view is None:
            raise ReviewError(f"record for unknown candidate {record.candidate_id!r}")
        items.append(
            {
                "id": record.candidate_id,
                "question": record.edited_question
                if record.edited_question is not None
                else view.question,
                "solution": record.edited_solution
                if record.edited_solution is not None
                else view.final_solution,
                "answer": view.final_answer,
                "skills": [view.pair_first, view.pair_second],
                "generator_model": view.generator_model,
                "question_modified": record.question_modified,
                "solution_modified": record.solution_modified,
            }
        )
    return items


def write_export(path: str | Path, items: Iterable[dict]) -> int:
    """Write export items as JSONL; an empty item list still creates the
    file (empty, headerless by format)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item, ensure_ascii=False, sort_keys=True) + "\n")
            count += 1
    return count


class ReviewStore:
    """Single-writer review state over an event log.

    The store is rebuilt from the log on startup: candidates in
    ReadyForReview join the queue, candidates already Reviewed contribute
    their ReviewRecord. Claims live in memory only; a restart drops them,
    which is the same outcome as a lease expiry.
    """

    def __init__(
        self,
        views: Mapping[str, CandidateView],
        events: Iterable[PipelineEvent] = (),
        *,
        event_writer: EventLogWriter | None = None,
        lease_minutes: float = DEFAULT_LEASE_MINUTES,
        clock: Callable[[], float] = time.time,
    ):
        self._views = dict(views)
        self._writer = event_writer
        self._lease_s = lease_minutes * 60.0
        self._clock = clock
        self._lock = threading.Lock()
        self._queue: list[QueueEntry] = []
        self._records: dict[str, ReviewRecord] = {}
        self._originals: dict[str, tuple[str, str]] = {}
        self._ingest(events)
        self.enqueue_ready()

    @classmethod
    def from_log(
        cls,
        log_path: str | Path,
        *,
        lease_minutes: float = DEFAULT_LEASE_MINUTES,
        clock: Callable[[], float] = time.time,
    ) -> "ReviewStore":
        """Rebuild review state from an event log and append new events to
        the same file."""
        events = read_event_log(log_path)
        return cls(
            fold_log(events),
            events,
            event_writer=EventLogWriter(log_path, clock=clock),
            lease_minutes=lease_minutes,
            clock=clock,
        )

    def _ingest(self, events: Iterable[PipelineEvent]) -> None:
        for event in events:
            if event.event == "generated":
                question = event.payload.get("question", "")
                _, solution = self._originals.get(event.candidate_id, ("", ""))
                self._originals[event.candidate_id] = (question, solution)
            elif event.event == "solved":
                question, _ = self._originals.get(event.candidate_id, ("", ""))
                self._originals[event.candidate_id] = (
                    question, event.payload.get("final_solution", "")
                )
            elif event.event == "reviewed":
                self._records[event.candidate_id] = _record_from_event(event)

    # --------------------------------------------------------------------------
    # queue
    # --------------------------------------------------------------------------

    def enqueue_ready(self) -> int:
        """Queue every ReadyForReview candidate that has no review yet.
        Idempotent."""
        with self._lock:
            queued = {entry.candidate_id for entry in self._queue}
            added = 0
            for cid, view in self._views.items():
                if view.state is not StageState.READY_FOR_REVIEW:
                    continue
                if cid in self._records or cid in queued:
                    continue
                self._queue.append(QueueEntry(candidate_id=cid))
                added += 1
            return added

    def _expired(self, entry: QueueEntry, now: float) -> bool:
        return (
            entry.claimed_at is not None and now - entry.claimed_at > self._lease_s
        )

    def claim_next(self, annotator_id: str) -> QueueEntry | None:
        """Atomically claim the oldest unclaimed (or lease-expired) entry."""
        if not annotator_id:
            raise ReviewError("annotator_id must be nonempty")
        now = self._clock()
        with self._lock:
            for entry in self._queue:
                if entry.claimed_by is None or self._expired(entry, now):
                    entry.claimed_by = annotator_id
                    entry.claimed_at = now
                    return QueueEntry(entry.candidate_id, annotator_id, now)
            return None

    def queue_entries(self) -> list[QueueEntry]:
        with self._lock:
            return [
                QueueEntry(e.candidate_id, e.claimed_by, e.claimed_at)
                for e in self._queue
            ]

    # --------------------------------------------------------------------------
    # reviews
    # --------------------------------------------------------------------------

    def candidate(self, candidate_id: str) -> CandidateView:
        view = self._views.get(candidate_id)
        if view is None:
            raise ReviewError(f"unknown candidate {candidate_id!r}")
        return view

    def original_texts(self, candidate_id: str) -> tuple[str, str]:
        """Pre-review (question, final_solution), bit-exact."""
        if candidate_id in self._originals:
            return self._originals[candidate_id]
        view = self.candidate(candidate_id)
        return (view.question, view.final_solution)

    def submit_review(
        self,
        candidate_id: str,
        annotator_id: str,
        verdict: str,
        question: str | None = None,
        solution: str | None = None,
    ) -> ReviewRecord:
        """File the verdict for a claimed candidate.

        ``question``/``solution`` are the reviewer's full text buffers; a
        buffer equal to the original counts as unmodified. Exactly one
        review per candidate."""
        if verdict not in VERDICTS:
            raise ReviewError(f"verdict must be one of {VERDICTS}")
        now = self._clock()
        with self._lock:
            view = self._views.get(candidate_id)
            if view is None:
                raise ReviewError(f"unknown candidate {candidate_id!r}")
            if candidate_id in self._records:
                raise ReviewError(f"{candidate_id} already reviewed")
            if view.state is not StageState.READY_FOR_REVIEW:
                raise ReviewError(
                    f"{candidate_id} is not awaiting review "
                    f"(state {view.state.value if view.state else 'none'})"
                )
            entry = next(
                (e for e in self._queue if e.candidate_id == candidate_id), None
            )
            if entry is None:
                raise ReviewError(f"{candidate_id} is not queued")
            if entry.claimed_by != annotator_id or self._expired(entry, now):
                raise ReviewError(
                    f"{candidate_id} is not claimed by {annotator_id!r}"
                )

            orig_question, orig_solution = self._originals.get(
                candidate_id, (view.question, view.final_solution)
            )
            question_modified = question is not None and question != orig_question
            solution_modified = solution is not None and solution != orig_solution
            self._originals.setdefault(candidate_id, (orig_question, orig_solution))
            event = PipelineEvent(
                candidate_id=candidate_id,
                seq=view.last_seq + 1,
                stage=REVIEW_STAGE,
                event="reviewed",
                payload={
                    "verdict": verdict,
                    "annotator_id": annotator_id,
                    "question": question if question is not None else orig_question,
                    "solution": solution if solution is not None else orig_solution,
                    "question_modified": question_modified,
                    "solution_modified": solution_modified,
                },
                ts=now,
            )
            if self._writer is not None:
                event = self._writer.append(event)
            _apply(view, event)  # same fold rules the log reader uses
            record = ReviewRecord(
                candidate_id=candidate_id,
                verdict=verdict,
                annotator_id=annotator_id,
                question_modified=question_modified,
                solution_modified=solution_modified,
                edited_question=question if question_modified else None,
                edited_solution=solution if solution_modified else None,
                ts=event.ts,
            )
            self._records[candidate_id] = record
            self._queue.remove(entry)
            return record

    # --------------------------------------------------------------------------
    # statistics and export
    # --------------------------------------------------------------------------

    def records(self) -> list[ReviewRecord]:
        with self._lock:
            return list(self._records.values())

    def views(self) -> dict[str, CandidateView]:
        return dict(self._views)

    def stats(self) -> ModificationStats:
        return modification_stats(self.records())

    def model_pass_rates(self) -> dict[str, PassRate]:
        return pass_rates(self.records(), self._views)

    def export(self, verdicts: frozenset[str] = frozenset({"good"})) -> list[dict]:
        return export_dataset(self.records(), self._views, verdicts)


def _record_from_event(event: PipelineEvent) -> ReviewRecord:
    payload = event.payload
    question_modified = bool(payload.get("question_modified"))
    solution_modified = bool(payload.get("solution_modified"))
    return ReviewRecord(
        candidate_id=event.candidate_id,
        verdict=payload.get("verdict", "good"),
        annotator_id=payload.get("annotator_id", "unknown"),
        question_modified=question_modified,
        solution_modified=solution_modified,
        edited_question=payload.get("question") if question_modified else None,
        edited_solution=payload.get("solution") if solution_modified else None,
        ts=event.ts,
    )
