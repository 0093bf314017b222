"""Project directory: one dataset's labels, embeddings, queues, and sessions.

Layout under <data_root>/<project_id>/:
    project.json         config (image root, guidelines, format)
    attributes.txt       current label matrix, extended format (+ sidecar)
    provenance.log       append-only edit log
    passes/              optional extra annotation passes (consistency runs)
    embeddings.txt       embedding store
    pairs.tsv            duplicate-candidate review queue
    sessions/*.tsv       audit sessions
    workflows/*.json     workflow states
    reports/             rendered tables and figures

Mutations go through a single writer per project; the service layer wraps
each mutating request in the project lock.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path
from typing import Optional

from . import errors
from .annotations import (
    AnnotationMatrix,
    ProvenanceEntry,
    export_cleaned,
    ingest_attribute_file,
    read_partition_file,
    write_provenance,
)
from .audit import AuditSession, SamplingPlan, sampling_plan
from .annotations import LabelValue
from .duplicates import EmbeddingStore, PairQueue
from .errors import LabelForgeError
from .workflow import WorkflowState

DATA_ROOT_ENV = "LABELFORGE_DATA_ROOT"


def default_data_root() -> Path:
    return Path(os.environ.get(DATA_ROOT_ENV, "."))


class Project:
    def __init__(self, root: Path, project_id: str):
        self.project_id = project_id
        self.dir = Path(root) / project_id
        self.lock = threading.RLock()
        self._matrix: Optional[AnnotationMatrix] = None
        self._embeddings: Optional[EmbeddingStore] = None
        self.config: dict = {}

    # -- lifecycle ---------------------------------------------------------

    @classmethod
    def create(cls, root: Path, project_id: str, attributes_path: str | Path,
               format: str = "celeba_original",
               embeddings_path: Optional[str | Path] = None,
               partition_path: Optional[str | Path] = None,
               image_root: Optional[str] = None,
               guidelines: Optional[dict[str, str]] = None) -> "Project":
        project = cls(root, project_id)
        if project.dir.exists():
            raise LabelForgeError(errors.DUPLICATE_ID,
                                  f"project {project_id!r} already exists")
        split = read_partition_file(partition_path) if partition_path else None
        matrix = ingest_attribute_file(attributes_path, format=format, split=split)
        project.dir.mkdir(parents=True)
        for sub in ("sessions", "workflows", "reports", "passes"):
            (project.dir / sub).mkdir()
        project.config = {
            "project_id": project_id,
            "image_root": image_root,
            "guidelines": guidelines or {},
        }
        project._write_config()
        project._matrix = matrix
        project.save_matrix()
        if split:
            (project.dir / "partition.json").write_text(json.dumps(split))
        if embeddings_path:
            store = EmbeddingStore.from_file(embeddings_path)
            store.to_file(project.dir / "embeddings.txt")
            project._embeddings = store
        return project

    @classmethod
    def open(cls, root: Path, project_id: str) -> "Project":
        project = cls(root, project_id)
        if not (project.dir / "project.json").exists():
            raise LabelForgeError(errors.UNKNOWN_PROJECT,
                                  f"no project {project_id!r} under {root}")
        project.config = json.loads((project.dir / "project.json").read_text())
        return project

    @staticmethod
    def list_ids(root: Path) -> list[str]:
        root = Path(root)
        if not root.exists():
            return []
        return sorted(p.parent.name for p in root.glob("*/project.json"))

    def _write_config(self) -> None:
        (self.dir / "project.json").write_text(json.dumps(self.config, indent=1))

    # -- matrix ------------------------------------------------------------

    @property
    def matrix(self) -> AnnotationMatrix:
        if self._matrix is None:
            split = None
            part = self.dir / "partition.json"
            if part.exists():
                split = json.loads(part.read_text())
            self._matrix = ingest_attribute_file(self.dir / "attributes.txt",
                                                 format="extended", split=split)
            log = self.dir / "provenance.log"
            if log.exists():
                self._matrix.provenance = [
                    ProvenanceEntry.from_line(ln)
                    for ln in log.read_text().splitlines() if ln.strip()
                ]
        return self._matrix

    def save_matrix(self) -> None:
        export_cleaned(self.matrix, self.dir / "attributes.txt")

    def append_provenance(self, entries: list[ProvenanceEntry]) -> None:
        write_provenance(entries, self.dir / "provenance.log", append=True)

    def apply_label(self, image_id: str, attribute: str, value: LabelValue,
                    source: str) -> ProvenanceEntry:
        with self.lock:
            entry = self.matrix.apply_label(image_id, attribute, value, source)
            self.save_matrix()
            self.append_provenance([entry])
            return entry

    def mark_unusable(self, image_id: str, source: str) -> ProvenanceEntry:
        with self.lock:
            entry = self.matrix.mark_unusable(image_id, source)
            self.save_matrix()
            self.append_provenance([entry])
            # open sessions must not keep sampling a dropped image
            for session_id in self.session_ids():
                session = self.load_session(session_id)
                if image_id in session.plan.sample_ids and \
                        session.status.value != "CLOSED":
                    session.drop_image(image_id)
                    self.save_session(session_id, session)
            return entry

    def extra_pass(self, name: str) -> AnnotationMatrix:
        path = self.dir / "passes" / f"{name}.txt"
        if not path.exists():
            raise LabelForgeError(errors.IO_FAILURE, f"no annotation pass {name!r}")
        return ingest_attribute_file(path, format="extended")

    def add_pass(self, name: str, path: str | Path, format: str) -> None:
        matrix = ingest_attribute_file(path, format=format)
        export_cleaned(matrix, self.dir / "passes" / f"{name}.txt")

    # -- embeddings / pairs --------------------------------------------------

    @property
    def embeddings(self) -> EmbeddingStore:
        if self._embeddings is None:
            path = self.dir / "embeddings.txt"
            if not path.exists():
                raise LabelForgeError(errors.MISSING_EMBEDDING,
                                      f"project {self.project_id!r} has no embeddings")
            self._embeddings = EmbeddingStore.from_file(path)
        return self._embeddings

    def load_pairs(self) -> PairQueue:
        path = self.dir / "pairs.tsv"
        if not path.exists():
            raise LabelForgeError(errors.UNKNOWN_PAIR,
                                  f"project {self.project_id!r} has no pair queue")
        return PairQueue.from_file(path)

    def save_pairs(self, queue: PairQueue) -> None:
        queue.to_file(self.dir / "pairs.tsv")

    # -- sessions ------------------------------------------------------------

    def session_path(self, session_id: str) -> Path:
        return self.dir / "sessions" / f"{session_id}.tsv"

    def session_ids(self) -> list[str]:
        return sorted(p.stem for p in (self.dir / "sessions").glob("*.tsv"))

    def create_session(self, attribute: str, target_value: LabelValue,
                       min_per_value: int, seed: int) -> tuple[str, AuditSession]:
        with self.lock:
            plan = sampling_plan(self.matrix, attribute, target_value,
                                 min_per_value, seed)
            session = AuditSession(plan)
            session_id = f"{attribute}_{target_value.name.lower()}_{seed}"
            if self.session_path(session_id).exists():
                raise LabelForgeError(errors.DUPLICATE_ID,
                                      f"session {session_id!r} already exists")
            self.save_session(session_id, session)
            return session_id, session

    def load_session(self, session_id: str) -> AuditSession:
        path = self.session_path(session_id)
        if not path.exists():
            raise LabelForgeError(errors.UNKNOWN_SESSION,
                                  f"no session {session_id!r}")
        return AuditSession.from_file(path)

    def save_session(self, session_id: str, session: AuditSession) -> None:
        session.to_file(self.session_path(session_id))

    # -- workflows -------------------------------------------------------------

    def workflow_path(self, workflow_id: str) -> Path:
        return self.dir / "workflows" / f"{workflow_id}.json"

    def workflow_ids(self) -> list[str]:
        return sorted(p.stem for p in (self.dir / "workflows").glob("*.json"))

    def load_workflow(self, workflow_id: str) -> WorkflowState:
        path = self.workflow_path(workflow_id)
        if not path.exists():
            raise LabelForgeError(errors.UNKNOWN_WORKFLOW,
                                  f"no workflow {workflow_id!r}")
        return WorkflowState.load(path)

    def save_workflow(self, workflow_id: str, state: WorkflowState) -> None:
        state.save(self.workflow_path(workflow_id))
