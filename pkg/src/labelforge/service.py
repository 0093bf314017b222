"""HTTP service under /api/v1: annotation queues, pair review, audits, workflow.

Every mutation delegates to exactly one library operation; the service adds
only routing, per-project write serialization, and queue leasing.  Domain
errors map onto 404 / 409 / 422 with the domain code in the body:

    {"error": {"code": "...", "message": "...", "detail": {...}}}

Annotation independence: while a session is OPEN, a pass view never includes
the other pass's values; the reconcile view requires RECONCILING or CLOSED.
Queue items are leased exactly-once per pass with a timeout, and an
annotator is bound to a single pass per session.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Query, Request
from fastapi.responses import FileResponse, JSONResponse, Response
from pydantic import BaseModel

from . import errors, reports as rpt
from .annotations import LabelValue
from .audit import SessionStatus, error_rates
from .consistency import disagreement_counts, inconsistency_level
from .duplicates import Verdict, attribute_conflicts
from .errors import LabelForgeError
from .probe import TrainConfig
from .project import Project
from .workflow import (
    Status,
    WorkflowConfig,
    audit_bin,
    audit_sample,
    check_convergence,
    init_workflow,
    mark_manual,
    run_round,
)

_NOT_FOUND = {
    errors.UNKNOWN_PROJECT, errors.UNKNOWN_IMAGE, errors.UNKNOWN_ATTRIBUTE,
    errors.UNKNOWN_PAIR, errors.UNKNOWN_SESSION, errors.UNKNOWN_WORKFLOW,
    errors.UNKNOWN_BIN,
}
_CONFLICT = {
    errors.VERDICT_CONFLICT, errors.BIN_ALREADY_DECIDED, errors.SESSION_CLOSED,
    errors.UNRESOLVED_DISAGREEMENTS, errors.SESSION_NOT_CLOSED,
    errors.IMAGE_UNUSABLE, errors.NOT_RUNNING, errors.POOL_OVERLAP,
    errors.ANNOTATOR_BOUND, errors.LEASE_EXPIRED, errors.DUPLICATE_ID,
}


def _status_for(code: str) -> int:
    if code in _NOT_FOUND:
        return 404
    if code in _CONFLICT:
        return 409
    return 422


@dataclass
class Lease:
    image_id: str
    annotator: str
    expires: float


@dataclass
class QueueState:
    """Lease bookkeeping for one (session, pass) annotation queue."""
    leases: dict[str, Lease] = field(default_factory=dict)  # image_id -> lease

    def prune(self, now: float) -> None:
        expired = [i for i, l in self.leases.items() if l.expires <= now]
        for i in expired:
            del self.leases[i]


class ProjectRegistry:
    def __init__(self, data_root: Path, lease_seconds: float = 600.0):
        self.data_root = Path(data_root)
        self.lease_seconds = lease_seconds
        self._projects: dict[str, Project] = {}
        self.queues: dict[tuple[str, str], QueueState] = {}
        # (project, session) -> {annotator: pass}; independence guard
        self.bindings: dict[tuple[str, str], dict[str, str]] = {}

    def get(self, project_id: str) -> Project:
        if project_id not in self._projects:
            self._projects[project_id] = Project.open(self.data_root, project_id)
        return self._projects[project_id]

    def queue(self, project_id: str, queue_name: str) -> QueueState:
        return self.queues.setdefault((project_id, queue_name), QueueState())

    def bind(self, project_id: str, session_id: str, annotator: str,
             which: str) -> None:
        bound = self.bindings.setdefault((project_id, session_id), {})
        if bound.get(annotator, which) != which:
            raise LabelForgeError(
                errors.ANNOTATOR_BOUND,
                f"annotator {annotator!r} is bound to pass "
                f"{bound[annotator]!r} for session {session_id!r}",
            )
        bound[annotator] = which


class LabelBody(BaseModel):
    image_id: str
    attribute: str
    value: int
    source: str


class UnusableBody(BaseModel):
    image_id: str
    source: str


class VerdictBody(BaseModel):
    pair_id: str
    verdict: str
    reviewer: str


class SessionCreateBody(BaseModel):
    attribute: str
    target_value: int
    min_per_value: int = 500
    seed: int = 0


class SessionLabelBody(BaseModel):
    annotation_pass: str
    image_id: str
    value: int
    annotator: str


class ReconcileBody(BaseModel):
    image_id: str
    value: int
    resolver: str


class WorkflowCreateBody(BaseModel):
    workflow_id: str
    attribute: str
    seed_labels: dict[str, bool]
    config: dict = {}


class BinLabelsBody(BaseModel):
    labels: dict[str, bool]


class ProjectCreateBody(BaseModel):
    project_id: str
    attributes_path: str
    file_format: str = "celeba_original"
    embeddings_path: Optional[str] = None
    partition_path: Optional[str] = None
    image_root: Optional[str] = None
    guidelines: dict[str, str] = {}


class ExportBody(BaseModel):
    filename: str = "cleaned.txt"


def _session_view(session, which: Optional[str]) -> dict:
    """Serialize a session for one viewer without leaking the other pass."""
    base = {
        "attribute": session.plan.attribute,
        "target_value": session.plan.target_value.value,
        "status": session.status.value,
        "sample_size": len(session.plan.sample_ids),
        "sample_ids": list(session.plan.sample_ids),
    }
    if which in ("a", "b"):
        own = session.pass_map(which)
        base["labels"] = {i: v.value for i, v in own.items()}
        return base
    if which == "reconcile":
        if session.status is SessionStatus.OPEN:
            raise LabelForgeError(
                errors.SESSION_NOT_CLOSED,
                "reconcile view requires both passes complete",
            )
        base["pass_a"] = {i: v.value for i, v in session.pass_a.items()}
        base["pass_b"] = {i: v.value for i, v in session.pass_b.items()}
        base["consensus"] = {i: v.value for i, v in session.consensus.items()}
        base["disagreements"] = session.disagreements()
        return base
    return base


def create_app(data_root: Path, lease_seconds: float = 600.0) -> FastAPI:
    app = FastAPI(title="labelforge", version="0.1.0")
    registry = ProjectRegistry(data_root, lease_seconds)
    app.state.registry = registry

    @app.exception_handler(LabelForgeError)
    async def domain_error(request: Request, exc: LabelForgeError):
        return JSONResponse(
            status_code=_status_for(exc.code),
            content={"error": {"code": exc.code, "message": exc.message,
                               "detail": {k: v for k, v in exc.detail.items()}}},
        )

    # -- projects ---------------------------------------------------------

    @app.get("/api/v1/projects")
    def list_projects():
        return {"projects": Project.list_ids(registry.data_root)}

    @app.post("/api/v1/projects", status_code=201)
    def create_project(body: ProjectCreateBody):
        project = Project.create(
            registry.data_root, body.project_id, body.attributes_path,
            format=body.file_format, embeddings_path=body.embeddings_path,
            partition_path=body.partition_path, image_root=body.image_root,
            guidelines=body.guidelines,
        )
        return {"project_id": project.project_id,
                "images": len(project.matrix.usable_ids()),
                "attributes": project.matrix.attributes}

    @app.get("/api/v1/projects/{project_id}")
    def project_summary(project_id: str):
        project = registry.get(project_id)
        matrix = project.matrix
        return {
            "project_id": project_id,
            "images": len(matrix.usable_ids()),
            "unusable": len(matrix.unusable_ids()),
            "attributes": matrix.attributes,
            "sessions": project.session_ids(),
            "workflows": project.workflow_ids(),
            "guidelines": project.config.get("guidelines", {}),
        }

    @app.get("/api/v1/projects/{project_id}/images/{image_id}")
    def image_file(project_id: str, image_id: str):
        project = registry.get(project_id)
        image_root = project.config.get("image_root")
        if not image_root:
            raise LabelForgeError(errors.IO_FAILURE,
                                  f"project {project_id!r} has no image root")
        path = Path(image_root) / image_id
        if not path.exists():
            raise LabelForgeError(errors.UNKNOWN_IMAGE, f"no file for {image_id!r}")
        return FileResponse(path)

    # -- annotation queue + matrix edits -----------------------------------

    @app.get("/api/v1/projects/{project_id}/annotations/next")
    def next_item(project_id: str, queue: str = Query(...),
                  annotator: str = Query(...)):
        project = registry.get(project_id)
        session_id, _, which = queue.rpartition(":")
        if which not in ("a", "b") or not session_id:
            raise LabelForgeError(errors.BAD_VALUE,
                                  f"queue must be <session_id>:a|b, got {queue!r}")
        with project.lock:
            session = project.load_session(session_id)
            registry.bind(project_id, session_id, annotator, which)
            qstate = registry.queue(project_id, queue)
            now = time.monotonic()
            qstate.prune(now)
            done = session.pass_map(which)
            for image_id in session.plan.sample_ids:
                if image_id in done:
                    continue
                lease = qstate.leases.get(image_id)
                if lease is not None and lease.annotator != annotator:
                    continue
                qstate.leases[image_id] = Lease(image_id, annotator,
                                                now + registry.lease_seconds)
                guideline = project.config.get("guidelines", {}).get(
                    session.plan.attribute, "")
                return {
                    "queue": queue,
                    "session_id": session_id,
                    "annotation_pass": which,
                    "image_id": image_id,
                    "attribute": session.plan.attribute,
                    "guideline": guideline,
                    "image_url": f"/api/v1/projects/{project_id}/images/{image_id}",
                    "lease_seconds": registry.lease_seconds,
                }
            return Response(status_code=204)

    @app.post("/api/v1/projects/{project_id}/annotations")
    def apply_label(project_id: str, body: LabelBody):
        project = registry.get(project_id)
        entry = project.apply_label(body.image_id, body.attribute,
                                    LabelValue(body.value), body.source)
        return {"applied": entry.to_line()}

    @app.post("/api/v1/projects/{project_id}/annotations/unusable")
    def mark_unusable(project_id: str, body: UnusableBody):
        project = registry.get(project_id)
        entry = project.mark_unusable(body.image_id, body.source)
        return {"applied": entry.to_line()}

    # -- pair review ---------------------------------------------------------

    @app.get("/api/v1/projects/{project_id}/pairs")
    def list_pairs(project_id: str, verdict: Optional[str] = None,
                   limit: int = 100):
        project = registry.get(project_id)
        queue = project.load_pairs()
        pairs = sorted(queue.pairs.values(), key=lambda p: p.pair_id)
        if verdict is not None:
            pairs = [p for p in pairs if p.verdict.value == verdict]
        return {"pairs": [
            {"pair_id": p.pair_id, "image_a": p.image_a, "image_b": p.image_b,
             "similarity": p.similarity, "verdict": p.verdict.value,
             "reviewer": p.reviewer, "arbitration": p.arbitration}
            for p in pairs[:limit]
        ], "total": len(pairs)}

    @app.post("/api/v1/projects/{project_id}/pairs")
    def record_verdict(project_id: str, body: VerdictBody):
        project = registry.get(project_id)
        with project.lock:
            queue = project.load_pairs()
            try:
                pair = queue.record_verdict(body.pair_id, Verdict(body.verdict),
                                            body.reviewer)
            except ValueError:
                raise LabelForgeError(errors.BAD_VALUE,
                                      f"bad verdict {body.verdict!r}")
            finally:
                project.save_pairs(queue)
        return {"pair_id": pair.pair_id, "verdict": pair.verdict.value,
                "reviewer": pair.reviewer}

    # -- audit sessions ---------------------------------------------------------

    @app.get("/api/v1/projects/{project_id}/audit/sessions")
    def list_sessions(project_id: str):
        project = registry.get(project_id)
        out = []
        for session_id in project.session_ids():
            session = project.load_session(session_id)
            out.append({"session_id": session_id,
                        "attribute": session.plan.attribute,
                        "target_value": session.plan.target_value.value,
                        "status": session.status.value,
                        "sample_size": len(session.plan.sample_ids)})
        return {"sessions": out}

    @app.post("/api/v1/projects/{project_id}/audit/sessions", status_code=201)
    def create_session(project_id: str, body: SessionCreateBody):
        project = registry.get(project_id)
        session_id, session = project.create_session(
            body.attribute, LabelValue(body.target_value),
            body.min_per_value, body.seed)
        return {"session_id": session_id,
                "sample_size": len(session.plan.sample_ids)}

    @app.get("/api/v1/projects/{project_id}/audit/sessions/{session_id}")
    def session_view(project_id: str, session_id: str,
                     view: Optional[str] = None,
                     annotator: Optional[str] = None):
        project = registry.get(project_id)
        with project.lock:
            session = project.load_session(session_id)
            if view in ("a", "b") and annotator is not None:
                registry.bind(project_id, session_id, annotator, view)
            if (view == "reconcile" and session.status is SessionStatus.OPEN
                    and session.passes_complete()):
                session.begin_reconciliation()
                project.save_session(session_id, session)
            return _session_view(session, view)

    @app.post("/api/v1/projects/{project_id}/audit/sessions/{session_id}/labels")
    def session_label(project_id: str, session_id: str, body: SessionLabelBody):
        project = registry.get(project_id)
        with project.lock:
            registry.bind(project_id, session_id, body.annotator,
                          body.annotation_pass)
            session = project.load_session(session_id)
            session.record_label(body.annotation_pass, body.image_id,
                                 LabelValue(body.value))
            project.save_session(session_id, session)
            queue = registry.queue(project_id,
                                   f"{session_id}:{body.annotation_pass}")
            queue.leases.pop(body.image_id, None)
        return {"recorded": body.image_id,
                "remaining": sum(1 for i in session.plan.sample_ids
                                 if i not in session.pass_map(body.annotation_pass))}

    @app.post("/api/v1/projects/{project_id}/audit/sessions/{session_id}/reconcile")
    def session_reconcile(project_id: str, session_id: str, body: ReconcileBody):
        project = registry.get(project_id)
        with project.lock:
            session = project.load_session(session_id)
            session.resolve(body.image_id, LabelValue(body.value))
            project.save_session(session_id, session)
        return {"resolved": body.image_id,
                "unresolved": [i for i in session.disagreements()
                               if i not in session.consensus]}

    @app.post("/api/v1/projects/{project_id}/audit/sessions/{session_id}/close")
    def session_close(project_id: str, session_id: str):
        project = registry.get(project_id)
        with project.lock:
            session = project.load_session(session_id)
            session.close()
            project.save_session(session_id, session)
        return {"session_id": session_id, "status": session.status.value}

    # -- workflow ------------------------------------------------------------------

    @app.post("/api/v1/projects/{project_id}/workflow", status_code=201)
    def create_workflow(project_id: str, body: WorkflowCreateBody):
        project = registry.get(project_id)
        with project.lock:
            if project.workflow_path(body.workflow_id).exists():
                raise LabelForgeError(errors.DUPLICATE_ID,
                                      f"workflow {body.workflow_id!r} exists")
            cfg_raw = dict(body.config)
            probe_raw = cfg_raw.pop("probe", {})
            config = WorkflowConfig(**cfg_raw, probe=TrainConfig(**probe_raw))
            uncleaned = set(project.matrix.usable_ids()) - set(body.seed_labels)
            state = init_workflow(body.seed_labels, uncleaned, body.attribute,
                                  config)
            project.save_workflow(body.workflow_id, state)
        return {"workflow_id": body.workflow_id, "status": state.status.value,
                "seed": len(body.seed_labels), "pool": len(uncleaned)}

    @app.get("/api/v1/projects/{project_id}/workflow/{workflow_id}/status")
    def workflow_status(project_id: str, workflow_id: str):
        project = registry.get(project_id)
        state = project.load_workflow(workflow_id)
        return {
            "workflow_id": workflow_id,
            "attribute": state.attribute,
            "status": state.status.value,
            "round": state.round,
            "target_error": state.config.target_error,
            "k": state.config.k,
            "cleaned": len(state.cleaned_labels),
            "uncleaned": len(state.uncleaned_pool),
            "estimated_error": state.overall_estimated_error(),
            "bins": [
                {"votes": b.votes, "size": len(b.members),
                 "decision": b.decision.value,
                 "audited_error": b.audited_error,
                 "audited_ci": list(b.audited_ci) if b.audited_ci else None}
                for b in sorted(state.bins, key=lambda b: b.votes)
            ],
            "history": state.history,
        }

    @app.post("/api/v1/projects/{project_id}/workflow/{workflow_id}/round")
    def workflow_round(project_id: str, workflow_id: str):
        project = registry.get(project_id)
        with project.lock:
            state = project.load_workflow(workflow_id)
            run_round(state, project.embeddings)
            project.save_workflow(workflow_id, state)
        return {"round": state.round,
                "bins": {b.votes: len(b.members) for b in state.bins}}

    @app.get("/api/v1/projects/{project_id}/workflow/{workflow_id}/bins/{votes}/sample")
    def workflow_bin_sample(project_id: str, workflow_id: str, votes: int):
        project = registry.get(project_id)
        with project.lock:
            state = project.load_workflow(workflow_id)
            sample = audit_sample(state, votes)
            project.save_workflow(workflow_id, state)
        return {"votes": votes, "sample": sample}

    @app.post("/api/v1/projects/{project_id}/workflow/{workflow_id}/bins/{votes}/audit")
    def workflow_bin_audit(project_id: str, workflow_id: str, votes: int,
                           body: BinLabelsBody):
        project = registry.get(project_id)
        with project.lock:
            state = project.load_workflow(workflow_id)
            b = audit_bin(state, votes, body.labels)
            check_convergence(state)
            project.save_workflow(workflow_id, state)
        return {"votes": votes, "decision": b.decision.value,
                "audited_error": b.audited_error,
                "status": state.status.value}

    @app.post("/api/v1/projects/{project_id}/workflow/{workflow_id}/bins/{votes}/manual")
    def workflow_bin_manual(project_id: str, workflow_id: str, votes: int,
                            body: BinLabelsBody):
        project = registry.get(project_id)
        with project.lock:
            state = project.load_workflow(workflow_id)
            b = mark_manual(state, votes, body.labels)
            check_convergence(state)
            project.save_workflow(workflow_id, state)
        return {"votes": votes, "decision": b.decision.value,
                "status": state.status.value}

    # -- reports -----------------------------------------------------------------------

    @app.get("/api/v1/projects/{project_id}/reports/consistency")
    def report_consistency(project_id: str, pass_a: str = "pass_a",
                           pass_b: str = "pass_b"):
        project = registry.get(project_id)
        results = disagreement_counts(project.extra_pass(pass_a),
                                      project.extra_pass(pass_b))
        return {"columns": list(rpt.CONSISTENCY_COLUMNS),
                "rows": rpt.consistency_rows(results)}

    @app.get("/api/v1/projects/{project_id}/reports/pin")
    def report_pin(project_id: str, exclude: list[str] = Query(default=[])):
        project = registry.get(project_id)
        queue = project.load_pairs()
        conflicts = attribute_conflicts(list(queue.pairs.values()), project.matrix)
        stats = [inconsistency_level(a, *counts)
                 for a, counts in conflicts.items()
                 if counts[3] > 0 and counts[1] > 0 and counts[2] > 0]
        return {"columns": list(rpt.PIN_COLUMNS),
                "rows": rpt.pin_rows(stats, exclude)}

    @app.get("/api/v1/projects/{project_id}/reports/errors")
    def report_errors(project_id: str, attribute: Optional[str] = None):
        project = registry.get(project_id)
        by_attribute: dict[str, list] = {}
        for session_id in project.session_ids():
            session = project.load_session(session_id)
            if session.status is not SessionStatus.CLOSED:
                continue
            if attribute and session.plan.attribute != attribute:
                continue
            by_attribute.setdefault(session.plan.attribute, []).append(session)
        results = [error_rates(project.matrix, *sessions)
                   for _, sessions in sorted(by_attribute.items())]
        return {"columns": list(rpt.ERROR_COLUMNS),
                "rows": rpt.error_rows(results)}

    # -- export -------------------------------------------------------------------------

    @app.post("/api/v1/projects/{project_id}/export")
    def export_project(project_id: str, body: ExportBody):
        from .annotations import export_cleaned

        project = registry.get(project_id)
        with project.lock:
            out = project.dir / "reports" / body.filename
            export_cleaned(project.matrix, out)
        sidecar = out.with_name(out.stem + ".unusable.txt")
        return {"path": str(out),
                "sidecar": str(sidecar) if sidecar.exists() else None}

    return app
