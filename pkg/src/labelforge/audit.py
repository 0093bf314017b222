"""Stratified label audits: sampling plans, dual-pass sessions, error rates.

An audit targets one (attribute, original value) stratum.  A sampling plan
draws images uniformly without replacement from that stratum; two annotators
label the sample independently; disagreements are reconciled to a consensus;
the closed session yields the fraction of originals the consensus overturned,
with a Wilson score interval.

Sampling uses numpy's PCG64 generator, seeded explicitly, and the generator
name is recorded in the plan so a plan can be reproduced elsewhere.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from statistics import NormalDist
from typing import Optional

import numpy as np

from . import errors
from .annotations import AnnotationMatrix, LabelValue
from .errors import LabelForgeError

GENERATOR_NAME = "pcg64"


class SessionStatus(Enum):
    OPEN = "OPEN"
    RECONCILING = "RECONCILING"
    CLOSED = "CLOSED"


class ShortPopulationWarning(UserWarning):
    """Population smaller than the requested sample; the whole stratum is taken."""


def wilson_interval(successes: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion, clipped to [0, 1]."""
    if n <= 0 or not 0 <= successes <= n:
        raise LabelForgeError(errors.BAD_COUNTS,
                              f"bad counts: successes={successes}, n={n}")
    if not 0.0 < confidence < 1.0:
        raise LabelForgeError(errors.BAD_COUNTS, f"bad confidence {confidence}")
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    p = successes / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2.0 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom
    # at p=0 (p=1) centre and half cancel exactly; avoid float residue
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == n else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class SamplingPlan:
    attribute: str
    target_value: LabelValue
    sample_ids: tuple[str, ...]
    min_per_value: int
    rng_seed: int
    generator: str = GENERATOR_NAME


def sampling_plan(matrix: AnnotationMatrix, attribute: str, target_value: LabelValue,
                  min_per_value: int, seed: int) -> SamplingPlan:
    """Uniform sample without replacement from one (attribute, value) stratum.

    Deterministic for a given (matrix, attribute, value, seed): the
    population is sorted by image id before drawing.  A short population is
    a warning, not an error; the whole stratum is taken.
    """
    if target_value not in (LabelValue.TRUE, LabelValue.FALSE):
        raise LabelForgeError(errors.BAD_VALUE, "audits target binary original values")
    population = sorted(matrix.ids_with_value(attribute, target_value))
    if not population:
        raise LabelForgeError(
            errors.EMPTY_POPULATION,
            f"no usable image has {attribute}={target_value.name}",
        )
    if len(population) < min_per_value:
        warnings.warn(
            f"population for {attribute}={target_value.name} has only "
            f"{len(population)} images (< {min_per_value}); taking all",
            ShortPopulationWarning,
        )
        sample = list(population)
    else:
        rng = np.random.Generator(np.random.PCG64(seed))
        sample = list(rng.choice(population, size=min_per_value, replace=False))
    return SamplingPlan(attribute, target_value, tuple(sample), min_per_value, seed)


@dataclass
class AuditSession:
    """Two independent passes over a sampled stratum, then a consensus."""

    plan: SamplingPlan
    pass_a: dict[str, LabelValue] = field(default_factory=dict)
    pass_b: dict[str, LabelValue] = field(default_factory=dict)
    consensus: dict[str, LabelValue] = field(default_factory=dict)
    status: SessionStatus = SessionStatus.OPEN

    _PASSES = ("a", "b")

    def pass_map(self, which: str) -> dict[str, LabelValue]:
        if which not in self._PASSES:
            raise LabelForgeError(errors.BAD_VALUE, f"pass must be one of {self._PASSES}")
        return self.pass_a if which == "a" else self.pass_b

    def record_label(self, which: str, image_id: str, value: LabelValue) -> None:
        if self.status is SessionStatus.CLOSED:
            raise LabelForgeError(errors.SESSION_CLOSED, "session is closed")
        if image_id not in self.plan.sample_ids:
            raise LabelForgeError(errors.UNKNOWN_IMAGE,
                                  f"{image_id!r} is not in the sampled set")
        self.pass_map(which)[image_id] = value

    def drop_image(self, image_id: str) -> None:
        """Remove an image (marked unusable mid-audit) from the session."""
        if self.status is SessionStatus.CLOSED:
            raise LabelForgeError(errors.SESSION_CLOSED, "session is closed")
        self.plan = replace(self.plan,
                            sample_ids=tuple(i for i in self.plan.sample_ids
                                             if i != image_id))
        for mapping in (self.pass_a, self.pass_b, self.consensus):
            mapping.pop(image_id, None)

    def passes_complete(self) -> bool:
        return all(i in self.pass_a and i in self.pass_b for i in self.plan.sample_ids)

    def disagreements(self) -> list[str]:
        """Sampled ids where the two passes differ (both passes required first)."""
        return [i for i in self.plan.sample_ids
                if i in self.pass_a and i in self.pass_b
                and self.pass_a[i] is not self.pass_b[i]]

    def begin_reconciliation(self) -> None:
        if self.status is SessionStatus.CLOSED:
            raise LabelForgeError(errors.SESSION_CLOSED, "session is closed")
        if not self.passes_complete():
            missing = [i for i in self.plan.sample_ids
                       if i not in self.pass_a or i not in self.pass_b]
            raise LabelForgeError(
                errors.INCOMPLETE_LABELS,
                f"{len(missing)} sampled images lack labels in one pass",
                image_ids=missing[:20],
            )
        self.status = SessionStatus.RECONCILING

    def resolve(self, image_id: str, value: LabelValue) -> None:
        """Record the consensus for one disagreement."""
        if self.status is SessionStatus.OPEN:
            self.begin_reconciliation()
        if self.status is SessionStatus.CLOSED:
            raise LabelForgeError(errors.SESSION_CLOSED, "session is closed")
        if image_id not in self.disagreements():
            raise LabelForgeError(
                errors.UNKNOWN_IMAGE,
                f"{image_id!r} is not an unresolved disagreement",
            )
        self.consensus[image_id] = value

    def close(self) -> None:
        """Freeze the consensus.  Agreed cells take the agreed value."""
        if self.status is SessionStatus.CLOSED:
            return
        if self.status is SessionStatus.OPEN:
            self.begin_reconciliation()
        unresolved = [i for i in self.disagreements() if i not in self.consensus]
        if unresolved:
            raise LabelForgeError(
                errors.UNRESOLVED_DISAGREEMENTS,
                f"{len(unresolved)} disagreements lack a consensus",
                image_ids=unresolved,
            )
        for image_id in self.plan.sample_ids:
            if image_id not in self.consensus:
                self.consensus[image_id] = self.pass_a[image_id]
        self.status = SessionStatus.CLOSED

    # -- persistence: header lines then one row per sampled image ---------

    def to_file(self, path: str | Path) -> None:
        plan = self.plan
        with Path(path).open("w") as fh:
            fh.write(f"#attribute={plan.attribute}\n")
            fh.write(f"#target_value={plan.target_value.token}\n")
            fh.write(f"#min_per_value={plan.min_per_value}\n")
            fh.write(f"#seed={plan.rng_seed}\n")
            fh.write(f"#generator={plan.generator}\n")
            fh.write(f"#status={self.status.value}\n")
            fh.write("image_id\tpass_a\tpass_b\tconsensus\n")
            for image_id in plan.sample_ids:
                row = [image_id]
                for mapping in (self.pass_a, self.pass_b, self.consensus):
                    v = mapping.get(image_id)
                    row.append(v.token if v is not None else ".")
                fh.write("\t".join(row) + "\n")

    @classmethod
    def from_file(cls, path: str | Path) -> "AuditSession":
        header: dict[str, str] = {}
        rows: list[list[str]] = []
        for ln in Path(path).read_text().splitlines():
            if ln.startswith("#"):
                key, _, val = ln[1:].partition("=")
                header[key] = val
            elif ln.strip() and not ln.startswith("image_id"):
                rows.append(ln.split("\t"))
        plan = SamplingPlan(
            header["attribute"], LabelValue.from_token(header["target_value"]),
            tuple(r[0] for r in rows), int(header["min_per_value"]),
            int(header["seed"]), header.get("generator", GENERATOR_NAME),
        )
        session = cls(plan, status=SessionStatus(header.get("status", "OPEN")))
        for image_id, a, b, c in rows:
            if a != ".":
                session.pass_a[image_id] = LabelValue.from_token(a)
            if b != ".":
                session.pass_b[image_id] = LabelValue.from_token(b)
            if c != ".":
                session.consensus[image_id] = LabelValue.from_token(c)
        return session


@dataclass(frozen=True)
class StratumErrorRate:
    attribute: str
    target_value: LabelValue
    n: int
    mismatches: int
    info_not_visible: int
    ci: tuple[float, float]

    @property
    def err(self) -> float:
        return self.mismatches / self.n


@dataclass(frozen=True)
class ErrorRateReport:
    attribute: str
    negative: Optional[StratumErrorRate]
    positive: Optional[StratumErrorRate]

    @property
    def err_n(self) -> Optional[float]:
        return self.negative.err if self.negative else None

    @property
    def err_p(self) -> Optional[float]:
        return self.positive.err if self.positive else None


def stratum_error(session: AuditSession, matrix: AnnotationMatrix,
                  confidence: float = 0.95) -> StratumErrorRate:
    """Error rate of one closed session's stratum against the original labels.

    A sampled image counts as a mismatch when its consensus differs from
    the original value; consensus info-not-visible always mismatches a
    binary original and is also tallied separately.
    """
    if session.status is not SessionStatus.CLOSED:
        raise LabelForgeError(errors.SESSION_NOT_CLOSED,
                              "error rates require a closed session")
    plan = session.plan
    mismatches = 0
    inv = 0
    for image_id in plan.sample_ids:
        original = matrix.value(image_id, plan.attribute)
        consensus = session.consensus[image_id]
        if consensus is LabelValue.INFO_NOT_VISIBLE:
            inv += 1
        if consensus is not original:
            mismatches += 1
    n = len(plan.sample_ids)
    return StratumErrorRate(plan.attribute, plan.target_value, n, mismatches, inv,
                            wilson_interval(mismatches, n, confidence))


def error_rates(matrix: AnnotationMatrix, *sessions: AuditSession,
                confidence: float = 0.95) -> ErrorRateReport:
    """Combine one or two closed sessions (one per stratum) into a report."""
    if not sessions:
        raise LabelForgeError(errors.BAD_COUNTS, "at least one session required")
    attribute = sessions[0].plan.attribute
    negative = positive = None
    for session in sessions:
        if session.plan.attribute != attribute:
            raise LabelForgeError(
                errors.MATRIX_SHAPE_MISMATCH,
                "all sessions in a report must audit the same attribute",
            )
        stratum = stratum_error(session, matrix, confidence)
        if stratum.target_value is LabelValue.FALSE:
            negative = stratum
        else:
            positive = stratum
    return ErrorRateReport(attribute, negative, positive)
