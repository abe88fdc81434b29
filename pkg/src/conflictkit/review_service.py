"""HTTP backend for human review of synthesized triples.

Annotators fetch pending records, then accept, reject, or edit each one
exactly once; a compare-and-set on the record status turns races into 409s.
Every decision is appended to an audit log whose replay reconstructs the
current statuses, and the dataset file is rewritten atomically after each
transition.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Literal, Optional

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, model_validator

from . import dataset_store
from .synthesis import ConflictTriple, ReviewStatus

_IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png", ".gif", ".webp")


class ReviewError(Exception):
    pass


class UnknownRecordError(ReviewError):
    pass


class AlreadyReviewedError(ReviewError):
    pass


class InvalidDecisionError(ReviewError):
    pass


_DECISION_TO_STATUS = {
    "accept": ReviewStatus.ACCEPTED,
    "reject": ReviewStatus.REJECTED,
    "edit": ReviewStatus.EDITED,
}


@dataclass(frozen=True)
class ReviewDecision:
    record_id: str
    decision: str
    annotator_id: str
    timestamp: float
    edited_question: str | None = None
    edited_answer: str | None = None


def apply_decision(record: ConflictTriple, decision: ReviewDecision) -> ConflictTriple:
    """Pure state transition for one decision (reopen returns to pending)."""
    if decision.decision == "reopen":
        return replace(
            record,
            review_status=ReviewStatus.PENDING,
            edited_question=None,
            edited_answer=None,
        )
    status = _DECISION_TO_STATUS.get(decision.decision)
    if status is None:
        raise InvalidDecisionError(f"unknown decision {decision.decision!r}")
    if record.review_status is not ReviewStatus.PENDING:
        raise AlreadyReviewedError(record.record_id)
    if status is ReviewStatus.EDITED:
        if not (decision.edited_question or decision.edited_answer):
            raise InvalidDecisionError("edit requires at least one edited field")
        return replace(
            record,
            review_status=status,
            edited_question=decision.edited_question,
            edited_answer=decision.edited_answer,
        )
    return replace(record, review_status=status)


def replay_audit(
    records: Iterable[ConflictTriple], entries: Iterable[ReviewDecision]
) -> dict[str, ConflictTriple]:
    """Re-apply an audit log over base records; returns records by id."""
    by_id = {record.record_id: record for record in records}
    for entry in entries:
        if entry.record_id in by_id:
            by_id[entry.record_id] = apply_decision(by_id[entry.record_id], entry)
    return by_id


def load_audit_log(path: str | Path) -> list[ReviewDecision]:
    entries: list[ReviewDecision] = []
    path = Path(path)
    if not path.exists():
        return entries
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            raw = json.loads(line)
            entries.append(
                ReviewDecision(
                    record_id=raw["record_id"],
                    decision=raw["decision"],
                    annotator_id=raw.get("annotator_id", ""),
                    timestamp=raw.get("timestamp", 0.0),
                    edited_question=raw.get("edited_question"),
                    edited_answer=raw.get("edited_answer"),
                )
            )
    return entries


class ReviewStore:
    """Thread-safe review state over one dataset file."""

    def __init__(
        self,
        dataset_path: str | Path,
        *,
        audit_path: str | Path | None = None,
        image_root: str | Path | None = None,
    ):
        self.dataset_path = Path(dataset_path)
        self.audit_path = (
            Path(audit_path)
            if audit_path is not None
            else self.dataset_path.with_suffix(".audit.jsonl")
        )
        self.image_root = Path(image_root) if image_root is not None else None
        self._lock = threading.Lock()
        self._dataset = dataset_store.load(self.dataset_path)

    @property
    def records(self) -> list[ConflictTriple]:
        return self._dataset.records

    def pending(self, limit: int) -> list[ConflictTriple]:
        if limit <= 0:
            raise ValueError("limit must be positive")
        return [r for r in self.records if r.review_status is ReviewStatus.PENDING][:limit]

    def decide(self, decision: ReviewDecision) -> ConflictTriple:
        with self._lock:
            index = next(
                (
                    i
                    for i, record in enumerate(self.records)
                    if record.record_id == decision.record_id
                ),
                None,
            )
            if index is None:
                raise UnknownRecordError(decision.record_id)
            updated = apply_decision(self.records[index], decision)
            self.records[index] = updated
            self._persist(decision)
            return updated

    def _persist(self, decision: ReviewDecision) -> None:
        dataset_store.write(self._dataset, self.dataset_path)
        entry = {
            "timestamp": decision.timestamp,
            "record_id": decision.record_id,
            "decision": decision.decision,
            "annotator_id": decision.annotator_id,
            "edited_question": decision.edited_question,
            "edited_answer": decision.edited_answer,
        }
        with open(self.audit_path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(entry, ensure_ascii=False) + "\n")
            handle.flush()

    def final_records(self) -> list[ConflictTriple]:
        """The exportable view: accepted and edited records only."""
        return [
            r
            for r in self.records
            if r.review_status in (ReviewStatus.ACCEPTED, ReviewStatus.EDITED)
        ]

    def progress(self) -> dict[str, int | float]:
        counts = {status.value: 0 for status in ReviewStatus}
        for record in self.records:
            counts[record.review_status.value] += 1
        total = len(self.records)
        reviewed = total - counts[ReviewStatus.PENDING.value]
        counts["reviewed_fraction"] = reviewed / total if total else 0.0
        return counts

    def image_url(self, image_id: str) -> str | None:
        if self.image_root is None:
            return None
        for extension in _IMAGE_EXTENSIONS:
            if (self.image_root / f"{image_id}{extension}").exists():
                return f"/images/{image_id}{extension}"
        return None


class ReviewBody(BaseModel):
    decision: Literal["accept", "reject", "edit"]
    annotator_id: str
    edited_question: Optional[str] = None
    edited_answer: Optional[str] = None

    @model_validator(mode="after")
    def _edit_needs_fields(self) -> "ReviewBody":
        if self.decision == "edit" and not (self.edited_question or self.edited_answer):
            raise ValueError("edit requires edited_question and/or edited_answer")
        return self


def _record_payload(store: ReviewStore, record: ConflictTriple) -> dict:
    payload = dataset_store.triple_to_dict(record)
    payload["image_url"] = store.image_url(record.image_id)
    return payload


def create_app(store: ReviewStore, *, ui_dist: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="conflictkit review service")

    @app.get("/api/pending")
    def get_pending(limit: int = Query(default=10)) -> list[dict]:
        try:
            records = store.pending(limit)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return [_record_payload(store, record) for record in records]

    @app.post("/api/review/{record_id}")
    def post_review(record_id: str, body: ReviewBody) -> dict:
        decision = ReviewDecision(
            record_id=record_id,
            decision=body.decision,
            annotator_id=body.annotator_id,
            timestamp=time.time(),
            edited_question=body.edited_question,
            edited_answer=body.edited_answer,
        )
        try:
            updated = store.decide(decision)
        except UnknownRecordError as exc:
            raise HTTPException(status_code=404, detail=f"unknown record {exc}") from exc
        except AlreadyReviewedError as exc:
            raise HTTPException(status_code=409, detail=f"already reviewed: {exc}") from exc
        except InvalidDecisionError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return _record_payload(store, updated)

    @app.post("/api/admin/reopen/{record_id}")
    def post_reopen(record_id: str) -> dict:
        decision = ReviewDecision(
            record_id=record_id,
            decision="reopen",
            annotator_id="admin",
            timestamp=time.time(),
        )
        try:
            updated = store.decide(decision)
        except UnknownRecordError as exc:
            raise HTTPException(status_code=404, detail=f"unknown record {exc}") from exc
        return _record_payload(store, updated)

    @app.get("/api/stats")
    def get_stats() -> dict:
        dataset = dataset_store.DatasetFile(records=list(store.records))
        return {
            "dataset": dataset_store.stats(dataset).to_dict(),
            "review": store.progress(),
        }

    @app.get("/api/export/final")
    def get_final_export() -> PlainTextResponse:
        lines = [dataset_store.triple_to_line(r) for r in store.final_records()]
        body = "\n".join(lines) + ("\n" if lines else "")
        return PlainTextResponse(content=body, media_type="application/jsonl")

    if store.image_root is not None:

        @app.get("/images/{filename}")
        def get_image(filename: str) -> FileResponse:
            target = (store.image_root / filename).resolve()
            if store.image_root.resolve() not in target.parents or not target.exists():
                raise HTTPException(status_code=404, detail="image not found")
            return FileResponse(target)

    if ui_dist is not None and Path(ui_dist).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dist), html=True), name="ui")

    return app
