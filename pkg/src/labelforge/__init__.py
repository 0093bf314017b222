"""labelforge: annotation quality auditing and ensemble-agreement cleaning."""

from .annotations import (
    AnnotationMatrix,
    ImageRecord,
    LabelValue,
    ProvenanceEntry,
    export_cleaned,
    ingest_attribute_file,
)
from .audit import (
    AuditSession,
    ErrorRateReport,
    SamplingPlan,
    SessionStatus,
    error_rates,
    sampling_plan,
    wilson_interval,
)
from .consistency import (
    DisagreementReport,
    DuplicateConflictStats,
    Tier,
    consistency_tier,
    disagreement_counts,
    expected_random_agreement,
    inconsistency_level,
)
from .duplicates import (
    CandidatePair,
    EmbeddingStore,
    PairQueue,
    Verdict,
    attribute_conflicts,
    find_candidate_pairs,
)
from .errors import LabelForgeError
from .probe import ProbeModel, TrainConfig, evaluate, predict, train
from .workflow import (
    AgreementBin,
    Decision,
    Status,
    WorkflowConfig,
    WorkflowState,
    audit_bin,
    check_convergence,
    init_workflow,
    mark_manual,
    run_round,
    run_to_convergence,
)

__version__ = "0.1.0"
