"""Ensemble-agreement cleaning workflow for one attribute.

Round structure: draw k training subsets from the cleaned pool, train k
probes, classify every uncleaned image, and partition the uncleaned pool
into k+1 bins keyed by the number of TRUE votes.  Unanimous bins are
audited against human consensus and accepted wholesale when the audited
error is at or below the target; small mixed bins are labelled by hand;
everything else returns to the pool for the next round.  The workflow
converges when the pool is empty and the size-weighted estimated error of
everything accepted or hand-labelled is at or below the target.

All randomness (subset draws, audit samples) derives from the workflow
seed via named PCG64 streams, so a run replays identically.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import errors
from .audit import wilson_interval
from .duplicates import EmbeddingStore
from .errors import LabelForgeError
from .probe import ProbeModel, TrainConfig, predict, train

STATE_FILE_VERSION = 1

# stream tags for seed derivation: PCG64(SeedSequence([seed, tag, round, index]))
_STREAM_SUBSET = 0
_STREAM_AUDIT = 1


class Status(Enum):
    RUNNING = "RUNNING"
    CONVERGED = "CONVERGED"
    EXHAUSTED = "EXHAUSTED"


class Decision(Enum):
    UNDECIDED = "UNDECIDED"
    ACCEPTED = "ACCEPTED"
    MANUAL_LABEL = "MANUAL_LABEL"
    NEXT_ROUND = "NEXT_ROUND"


@dataclass(frozen=True)
class WorkflowConfig:
    k: int = 3
    subset_fraction: float = 0.8
    target_error: float = 0.05
    audit_sample_size: int = 100
    small_bin_threshold: int = 2000
    max_rounds: int = 10
    seed: int = 0
    # votes v is "high agreement" when v <= slack or v >= k - slack;
    # 0 restricts audit-acceptance to unanimous bins
    high_agreement_slack: int = 0
    probe: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if not 0.0 < self.subset_fraction <= 1.0:
            raise ValueError("subset_fraction must be in (0, 1]")
        if not 0.0 < self.target_error < 1.0:
            raise ValueError("target_error must be in (0, 1)")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")
        if not 0 <= self.high_agreement_slack < self.k:
            raise ValueError("high_agreement_slack must be in [0, k)")


@dataclass
class AgreementBin:
    votes: int
    members: list[str]
    decision: Decision = Decision.UNDECIDED
    audited_error: Optional[float] = None
    audited_ci: Optional[tuple[float, float]] = None
    audit_sample: Optional[list[str]] = None

    def majority_label(self, k: int) -> bool:
        """Ensemble-majority label; ties (even k, v = k/2) resolve to TRUE."""
        return 2 * self.votes >= k


@dataclass
class DecidedBatch:
    """One accepted bin or manual batch, kept for the overall error estimate."""
    round: int
    votes: int
    size: int
    decision: Decision
    estimated_error: float


class WorkflowState:
    def __init__(self, attribute: str, config: WorkflowConfig,
                 cleaned: dict[str, bool], uncleaned: set[str]):
        self.attribute = attribute
        self.config = config
        self.cleaned_labels = dict(cleaned)     # id -> trusted label
        self.seed_size = len(cleaned)
        self.uncleaned_pool = set(uncleaned)
        self.round = 0
        self.bins: list[AgreementBin] = []
        self.models: list[ProbeModel] = []
        self.history: list[dict] = []
        self.decided: list[DecidedBatch] = []
        self.status = Status.RUNNING if uncleaned else Status.CONVERGED

    @property
    def cleaned_pool(self) -> set[str]:
        return set(self.cleaned_labels)

    def bin_for_votes(self, votes: int) -> AgreementBin:
        for b in self.bins:
            if b.votes == votes:
                return b
        raise LabelForgeError(errors.UNKNOWN_BIN, f"no bin with votes={votes}")

    def is_high_agreement(self, votes: int) -> bool:
        slack = self.config.high_agreement_slack
        return votes <= slack or votes >= self.config.k - slack

    def overall_estimated_error(self) -> float:
        """Size-weighted error over accepted bins and manual batches."""
        total = sum(d.size for d in self.decided)
        if total == 0:
            return 0.0
        return sum(d.size * d.estimated_error for d in self.decided) / total

    def _check_conservation(self) -> None:
        overlap = self.cleaned_pool & self.uncleaned_pool
        if overlap:
            raise LabelForgeError(
                errors.POOL_OVERLAP,
                f"{len(overlap)} ids in both pools (first: {sorted(overlap)[0]!r})",
            )

    # -- persistence -------------------------------------------------------

    def to_json(self) -> dict:
        cfg = asdict(self.config)
        cfg["probe"] = asdict(self.config.probe)
        return {
            "version": STATE_FILE_VERSION,
            "attribute": self.attribute,
            "config": cfg,
            "round": self.round,
            "status": self.status.value,
            "seed_size": self.seed_size,
            "cleaned_labels": {i: bool(v) for i, v in sorted(self.cleaned_labels.items())},
            "uncleaned_pool": sorted(self.uncleaned_pool),
            "bins": [
                {
                    "votes": b.votes,
                    "members": sorted(b.members),
                    "decision": b.decision.value,
                    "audited_error": b.audited_error,
                    "audited_ci": list(b.audited_ci) if b.audited_ci else None,
                    "audit_sample": b.audit_sample,
                }
                for b in self.bins
            ],
            "decided": [asdict(d) | {"decision": d.decision.value} for d in self.decided],
            "history": self.history,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "WorkflowState":
        raw = json.loads(Path(path).read_text())
        if raw.get("version") != STATE_FILE_VERSION:
            raise LabelForgeError(errors.BAD_VALUE,
                                  f"unsupported state file version {raw.get('version')}")
        cfg_raw = dict(raw["config"])
        cfg_raw["probe"] = TrainConfig(**cfg_raw["probe"])
        config = WorkflowConfig(**cfg_raw)
        state = cls.__new__(cls)
        state.attribute = raw["attribute"]
        state.config = config
        state.cleaned_labels = {i: bool(v) for i, v in raw["cleaned_labels"].items()}
        state.seed_size = raw["seed_size"]
        state.uncleaned_pool = set(raw["uncleaned_pool"])
        state.round = raw["round"]
        state.status = Status(raw["status"])
        state.models = []
        state.bins = [
            AgreementBin(
                b["votes"], list(b["members"]), Decision(b["decision"]),
                b["audited_error"],
                tuple(b["audited_ci"]) if b["audited_ci"] else None,
                b["audit_sample"],
            )
            for b in raw["bins"]
        ]
        state.decided = [
            DecidedBatch(d["round"], d["votes"], d["size"],
                         Decision(d["decision"]), d["estimated_error"])
            for d in raw["decided"]
        ]
        state.history = raw["history"]
        return state


def init_workflow(seed_clean: dict[str, bool], uncleaned: set[str], attribute: str,
                  config: WorkflowConfig = WorkflowConfig()) -> WorkflowState:
    """Bootstrap a workflow from a manually-cleaned seed and an untouched pool."""
    if not seed_clean:
        raise LabelForgeError(errors.EMPTY_SEED, "seed pool is empty")
    overlap = set(seed_clean) & set(uncleaned)
    if overlap:
        raise LabelForgeError(
            errors.POOL_OVERLAP,
            f"{len(overlap)} ids in both pools (first: {sorted(overlap)[0]!r})",
        )
    return WorkflowState(attribute, config, seed_clean, set(uncleaned))


def _rng(config: WorkflowConfig, stream: int, round_idx: int, index: int) -> np.random.Generator:
    seq = np.random.SeedSequence([config.seed, stream, round_idx, index])
    return np.random.Generator(np.random.PCG64(seq))


def run_round(state: WorkflowState, store: EmbeddingStore) -> WorkflowState:
    """Train the k-probe ensemble and re-partition the uncleaned pool into bins."""
    if state.status is not Status.RUNNING:
        raise LabelForgeError(errors.NOT_RUNNING, f"workflow is {state.status.value}")
    missing = [i for i in (*state.cleaned_labels, *state.uncleaned_pool) if i not in store]
    if missing:
        raise LabelForgeError(
            errors.MISSING_EMBEDDING,
            f"{len(missing)} pool ids lack embeddings (first: {missing[0]!r})",
        )
    state._check_conservation()

    cfg = state.config
    cleaned_ids = sorted(state.cleaned_labels)
    subset_size = max(1, int(cfg.subset_fraction * len(cleaned_ids)))
    models = []
    for member in range(cfg.k):
        rng = _rng(cfg, _STREAM_SUBSET, state.round, member)
        subset = rng.choice(cleaned_ids, size=subset_size, replace=False)
        labels = {i: state.cleaned_labels[i] for i in subset}
        member_cfg = TrainConfig(
            epochs=cfg.probe.epochs, learning_rate=cfg.probe.learning_rate,
            batch_size=cfg.probe.batch_size, l2=cfg.probe.l2,
            seed=int(rng.integers(0, 2**31 - 1)),
        )
        models.append(train(store, labels, member_cfg))

    uncleaned_ids = sorted(state.uncleaned_pool)
    votes = np.zeros(len(uncleaned_ids), dtype=int)
    for model in models:
        preds = predict(model, store, uncleaned_ids)
        votes += np.array([preds[i][1] for i in uncleaned_ids], dtype=int)

    bins = [AgreementBin(v, []) for v in range(cfg.k + 1)]
    for image_id, v in zip(uncleaned_ids, votes):
        bins[int(v)].members.append(image_id)

    state.models = models
    state.bins = bins
    state.round += 1
    state.history.append({
        "round": state.round,
        "cleaned": len(state.cleaned_labels),
        "uncleaned": len(state.uncleaned_pool),
        "bin_sizes": {b.votes: len(b.members) for b in bins},
    })
    return state


def audit_sample(state: WorkflowState, votes: int) -> list[str]:
    """Deterministic audit sample for a bin: sample_size ids, or the whole bin."""
    b = state.bin_for_votes(votes)
    size = min(state.config.audit_sample_size, len(b.members))
    members = sorted(b.members)
    if size == len(members):
        sample = members
    else:
        rng = _rng(state.config, _STREAM_AUDIT, state.round, votes)
        sample = sorted(rng.choice(members, size=size, replace=False))
    b.audit_sample = list(sample)
    return list(sample)


def audit_bin(state: WorkflowState, votes: int,
              consensus_labels: dict[str, bool]) -> AgreementBin:
    """Judge a bin by auditing a sample of it against human consensus labels.

    The audited error is the fraction of the sample whose consensus label
    differs from the bin's ensemble-majority label.  At or below the target
    the whole bin is accepted into the cleaned pool under the majority
    label; above it the bin is deferred to the next round.
    """
    b = state.bin_for_votes(votes)
    if b.decision is not Decision.UNDECIDED:
        raise LabelForgeError(errors.BIN_ALREADY_DECIDED,
                              f"bin votes={votes} already {b.decision.value}")
    member_set = set(b.members)
    outside = [i for i in consensus_labels if i not in member_set]
    if outside:
        raise LabelForgeError(
            errors.SAMPLE_NOT_FROM_BIN,
            f"{len(outside)} audited ids are not members of bin votes={votes} "
            f"(first: {outside[0]!r})",
        )
    expected = b.audit_sample or audit_sample(state, votes)
    missing = [i for i in expected if i not in consensus_labels]
    if missing:
        raise LabelForgeError(
            errors.INCOMPLETE_LABELS,
            f"audit sample for bin votes={votes} lacks {len(missing)} consensus labels",
            image_ids=missing[:20],
        )

    majority = b.majority_label(state.config.k)
    sample = expected
    mismatches = sum(1 for i in sample if consensus_labels[i] != majority)
    b.audited_error = mismatches / len(sample)
    b.audited_ci = wilson_interval(mismatches, len(sample))

    if b.audited_error <= state.config.target_error:
        b.decision = Decision.ACCEPTED
        for image_id in b.members:
            state.cleaned_labels[image_id] = majority
        state.uncleaned_pool.difference_update(b.members)
        state.decided.append(DecidedBatch(state.round, votes, len(b.members),
                                          Decision.ACCEPTED, b.audited_error))
    else:
        b.decision = Decision.NEXT_ROUND
    state._check_conservation()
    return b


def mark_manual(state: WorkflowState, votes: int,
                labels: dict[str, bool]) -> AgreementBin:
    """Hand-label a small bin outright; members join the cleaned pool.

    A NEXT_ROUND verdict from a failed audit is provisional within the
    round: recycling applies only to bins too large to hand-label, so a
    small bin may still be labelled manually after failing its audit.
    """
    b = state.bin_for_votes(votes)
    if b.decision not in (Decision.UNDECIDED, Decision.NEXT_ROUND):
        raise LabelForgeError(errors.BIN_ALREADY_DECIDED,
                              f"bin votes={votes} already {b.decision.value}")
    if len(b.members) > state.config.small_bin_threshold:
        raise LabelForgeError(
            errors.BIN_TOO_LARGE,
            f"bin votes={votes} has {len(b.members)} members "
            f"(> {state.config.small_bin_threshold}); it must go to the next round",
        )
    missing = [i for i in b.members if i not in labels]
    if missing:
        raise LabelForgeError(
            errors.INCOMPLETE_LABELS,
            f"{len(missing)} bin members lack labels (first: {missing[0]!r})",
            image_ids=missing[:20],
        )
    b.decision = Decision.MANUAL_LABEL
    for image_id in b.members:
        state.cleaned_labels[image_id] = labels[image_id]
    state.uncleaned_pool.difference_update(b.members)
    # hand labels are the trust anchor of the whole procedure: error 0
    state.decided.append(DecidedBatch(state.round, votes, len(b.members),
                                      Decision.MANUAL_LABEL, 0.0))
    state._check_conservation()
    return b


def check_convergence(state: WorkflowState) -> Status:
    """Update and return the workflow status."""
    if state.status is not Status.RUNNING:
        return state.status
    if not state.uncleaned_pool and state.overall_estimated_error() <= state.config.target_error:
        state.status = Status.CONVERGED
    elif state.round >= state.config.max_rounds:
        state.status = Status.EXHAUSTED
    return state.status


def step(state: WorkflowState, store: EmbeddingStore,
         auditor: Callable[[list[str]], dict[str, bool]],
         manual_labeler: Optional[Callable[[list[str]], dict[str, bool]]] = None,
         ) -> WorkflowState:
    """One full round: partition, audit high-agreement bins, hand-label small bins.

    ``auditor`` maps a list of image ids to consensus labels (in production
    this is a closed audit session; in simulation, ground truth).
    ``manual_labeler`` defaults to the auditor.
    """
    manual_labeler = manual_labeler or auditor
    run_round(state, store)
    for b in sorted(state.bins, key=lambda b: b.votes):
        if not b.members:
            b.decision = Decision.NEXT_ROUND
            continue
        small = len(b.members) <= state.config.small_bin_threshold
        if state.is_high_agreement(b.votes):
            audit_bin(state, b.votes, auditor(audit_sample(state, b.votes)))
            if b.decision is Decision.NEXT_ROUND and small:
                mark_manual(state, b.votes, manual_labeler(sorted(b.members)))
        elif small:
            mark_manual(state, b.votes, manual_labeler(sorted(b.members)))
        else:
            b.decision = Decision.NEXT_ROUND
    check_convergence(state)
    return state


def run_to_convergence(state: WorkflowState, store: EmbeddingStore,
                       auditor: Callable[[list[str]], dict[str, bool]],
                       manual_labeler: Optional[Callable[[list[str]], dict[str, bool]]] = None,
                       ) -> WorkflowState:
    """Iterate rounds until the workflow leaves the RUNNING state."""
    while state.status is Status.RUNNING:
        step(state, store, auditor, manual_labeler)
    return state
