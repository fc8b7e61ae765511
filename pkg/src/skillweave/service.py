"""HTTP facade over the review store.

Thin by design: every route validates input, calls one store method, and
shapes the result as JSON. Review rules (claim ownership, leases, one
verdict per candidate) live in the store, not here.
"""

from __future__ import annotations

import json
import logging
from typing import Literal

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from .errors import ReviewError
from .review import QueueEntry, ReviewRecord, ReviewStore

logger = logging.getLogger(__name__)

__all__ = ["create_app", "serve"]


class ClaimBody(BaseModel):
    annotator_id: str


class ReviewBody(BaseModel):
    annotator_id: str
    verdict: Literal["good", "too_easy", "wrong"]
    question: str | None = None
    solution: str | None = None


def _entry_payload(entry: QueueEntry) -> dict:
    return {
        "candidate_id": entry.candidate_id,
        "claimed_by": entry.claimed_by,
        "claimed_at": entry.claimed_at,
    }


def _record_payload(record: ReviewRecord) -> dict:
    return {
        "candidate_id": record.candidate_id,
        "verdict": record.verdict,
        "annotator_id": record.annotator_id,
        "question_modified": record.question_modified,
        "solution_modified": record.solution_modified,
        "ts": record.ts,
    }


def _candidate_payload(store: ReviewStore, candidate_id: str) -> dict:
    view = store.candidate(candidate_id)
    return {
        "candidate_id": view.candidate_id,
        "state": view.state.value if view.state else None,
        "skills": [view.pair_first, view.pair_second],
        "generator_model": view.generator_model,
        "question": view.question,
        "draft_solution": view.draft_solution,
        "attempted_solution": view.attempted_solution,
        "final_solution": view.final_solution,
        "final_answer": view.final_answer,
        "validation_votes": list(view.validation_votes),
        "num_final_traces": len(view.final_traces),
        "review_verdict": view.review_verdict,
    }


def create_app(store: ReviewStore) -> FastAPI:
    app = FastAPI(title="skillweave review", docs_url=None, redoc_url=None)

    @app.get("/api/queue")
    def queue() -> dict:
        entries = store.queue_entries()
        return {
            "entries": [_entry_payload(e) for e in entries],
            "unclaimed": sum(1 for e in entries if e.claimed_by is None),
        }

    @app.post("/api/queue/claim")
    def claim(body: ClaimBody) -> dict:
        try:
            entry = store.claim_next(body.annotator_id)
        except ReviewError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        if entry is None:
            return {"entry": None, "candidate": None}
        return {
            "entry": _entry_payload(entry),
            "candidate": _candidate_payload(store, entry.candidate_id),
        }

    @app.get("/api/candidates/{candidate_id}")
    def candidate(candidate_id: str) -> dict:
        try:
            return _candidate_payload(store, candidate_id)
        except ReviewError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/api/candidates/{candidate_id}/review")
    def review(candidate_id: str, body: ReviewBody) -> dict:
        try:
            record = store.submit_review(
                candidate_id,
                body.annotator_id,
                body.verdict,
                question=body.question,
                solution=body.solution,
            )
        except ReviewError as exc:
            status = 404 if "unknown candidate" in str(exc) else 409
            raise HTTPException(status_code=status, detail=str(exc))
        view = store.candidate(candidate_id)
        return {
            "record": _record_payload(record),
            "state": view.state.value if view.state else None,
        }

    @app.get("/api/stats/modifications")
    def modifications() -> dict:
        stats = store.stats()
        return {
            "modified_questions": stats.modified_questions,
            "modified_solutions": stats.modified_solutions,
            "modified_either": stats.modified_either,
            "total": stats.total,
        }

    @app.get("/api/stats/models")
    def models() -> dict:
        return {
            model: {
                "annotated": rate.annotated,
                "passed": rate.passed,
                "rate_pct": round(rate.rate_pct, 2),
            }
            for model, rate in sorted(store.model_pass_rates().items())
        }

    @app.get("/api/export")
    def export(verdicts: str = "good") -> PlainTextResponse:
        wanted = frozenset(v.strip() for v in verdicts.split(",") if v.strip())
        try:
            items = store.export(wanted)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        body = "".join(
            json.dumps(item, ensure_ascii=False, sort_keys=True) + "\n"
            for item in items
        )
        return PlainTextResponse(body, media_type="application/x-ndjson")

    return app


def serve(
    log_path: str,
    host: str = "127.0.0.1",
    port: int = 8321,
    lease_minutes: float = 60,
) -> None:
    """Build the store from an event log and block serving HTTP."""
    import uvicorn

    store = ReviewStore.from_log(log_path, lease_minutes=lease_minutes)
    logger.info(
        "serving review queue from %s (%d waiting)",
        log_path,
        len(store.queue_entries()),
    )
    uvicorn.run(create_app(store), host=host, port=port, log_level="warning")
