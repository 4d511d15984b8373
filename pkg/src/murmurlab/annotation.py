"""Blind-annotation backend: serves recordings for assessment and collects
per-rater, per-pass labels.

Raters never see each other's work — responses are scoped to the rater id in
the request header, which keeps the collected labels independent.  Writes go
to an append-only audit log; the effective value of a (recording, rater,
pass) cell is the last write, so a rater can correct a misclick without
losing history.
"""

from __future__ import annotations

import csv
import io
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Header, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .corpus import AssessmentClass, RecordingRegistry, Workspace, wav_bytes

VALID_LABELS = tuple(c.value for c in AssessmentClass)
VALID_PASSES = (1, 2)

AUDIT_COLUMNS = ("recording_id", "rater_id", "pass_index", "label", "submitted_at")


@dataclass(frozen=True)
class Assessment:
    recording_id: str
    rater_id: str
    pass_index: int
    label: AssessmentClass
    submitted_at: str

    def as_dict(self) -> dict:
        return {
            "recording_id": self.recording_id,
            "rater_id": self.rater_id,
            "pass_index": self.pass_index,
            "label": self.label.value,
            "submitted_at": self.submitted_at,
        }


class AnnotationStore:
    """Thread-safe assessment store with an append-only audit trail.

    ``audit_path`` (optional) persists every submission as a CSV line and is
    replayed on startup, so the effective state survives restarts.
    """

    def __init__(self, registry: RecordingRegistry, audit_path: Optional[Path] = None):
        self._lock = threading.Lock()
        self.registry = registry
        self.audit: list[Assessment] = []
        self._effective: dict[tuple[str, str, int], Assessment] = {}
        self.audit_path = Path(audit_path) if audit_path else None
        if self.audit_path and self.audit_path.exists():
            self._replay()

    def _replay(self) -> None:
        with open(self.audit_path, newline="") as fh:
            for row in csv.DictReader(fh):
                self._apply(Assessment(
                    recording_id=row["recording_id"],
                    rater_id=row["rater_id"],
                    pass_index=int(row["pass_index"]),
                    label=AssessmentClass(row["label"]),
                    submitted_at=row["submitted_at"],
                ), persist=False)

    def _apply(self, assessment: Assessment, persist: bool) -> None:
        self.audit.append(assessment)
        key = (assessment.recording_id, assessment.rater_id, assessment.pass_index)
        self._effective[key] = assessment
        if persist and self.audit_path:
            new_file = not self.audit_path.exists()
            self.audit_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.audit_path, "a", newline="") as fh:
                writer = csv.writer(fh)
                if new_file:
                    writer.writerow(AUDIT_COLUMNS)
                writer.writerow([assessment.recording_id, assessment.rater_id,
                                 assessment.pass_index, assessment.label.value,
                                 assessment.submitted_at])

    def submit(self, recording_id: str, rater_id: str, pass_index: int,
               label: AssessmentClass) -> Assessment:
        assessment = Assessment(
            recording_id=recording_id, rater_id=rater_id, pass_index=pass_index,
            label=label, submitted_at=datetime.now(timezone.utc).isoformat())
        with self._lock:
            self._apply(assessment, persist=True)
        return assessment

    def completed_passes(self, rater_id: str, recording_id: str) -> list[int]:
        with self._lock:
            return sorted(p for (rid, rat, p) in self._effective
                          if rid == recording_id and rat == rater_id)

    def effective_assessments(self) -> list[Assessment]:
        with self._lock:
            return sorted(self._effective.values(),
                          key=lambda a: (a.recording_id, a.rater_id, a.pass_index))

    def export_csv(self) -> str:
        """Long-form label matrix consumed by the selection tooling."""
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(("recording_id", "rater", "pass", "label", "timestamp"))
        for a in self.effective_assessments():
            writer.writerow((a.recording_id, a.rater_id, a.pass_index, a.label.value,
                             a.submitted_at))
        return buf.getvalue()


class AssessmentIn(BaseModel):
    recording_id: str
    rater_id: str
    pass_index: int
    label: str


def create_app(store: AnnotationStore) -> FastAPI:
    app = FastAPI(title="murmurlab annotation service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])

    @app.get("/recordings")
    def list_recordings(x_rater_id: Optional[str] = Header(default=None)):
        # Only the requesting rater's own completion status is disclosed;
        # unknown rater ids simply see an empty completion map.
        if not x_rater_id:
            raise HTTPException(status_code=401, detail="missing X-Rater-Id header")
        return [
            {
                "id": rec.id,
                "duration_s": rec.duration,
                "completed_passes": store.completed_passes(x_rater_id, rec.id),
            }
            for rec in store.registry
        ]

    @app.get("/recordings/{recording_id}/audio")
    def get_audio(recording_id: str):
        if recording_id not in store.registry:
            raise HTTPException(status_code=404, detail=f"unknown recording {recording_id!r}")
        return Response(content=wav_bytes(store.registry.get(recording_id)),
                        media_type="audio/wav")

    @app.post("/assessments")
    def post_assessment(body: AssessmentIn):
        if body.label not in VALID_LABELS:
            raise HTTPException(
                status_code=422,
                detail=f"invalid label {body.label!r}; valid labels: {list(VALID_LABELS)}")
        if body.pass_index not in VALID_PASSES:
            raise HTTPException(
                status_code=422,
                detail=f"invalid pass_index {body.pass_index}; must be 1 or 2")
        if body.recording_id not in store.registry:
            raise HTTPException(status_code=404,
                                detail=f"unknown recording {body.recording_id!r}")
        assessment = store.submit(body.recording_id, body.rater_id, body.pass_index,
                                  AssessmentClass(body.label))
        return assessment.as_dict()

    @app.get("/export/label-matrix")
    def export_label_matrix():
        return Response(content=store.export_csv(), media_type="text/csv")

    return app


def app_for_workspace(workspace_root) -> FastAPI:
    """App bound to a workspace: recordings from recordings/, audit under labels/."""
    ws = Workspace(Path(workspace_root)).ensure()
    registry = ws.load_recordings()
    store = AnnotationStore(registry, audit_path=ws.labels_dir / "assessments_audit.csv")
    return create_app(store)
