"""Annotation consistency metrics.

Two views of consistency:

* two independent annotation passes over the same images -> per-attribute
  disagreement counts, graded into HIGH / MEDIUM / LOW tiers;
* confirmed duplicate image pairs -> an inconsistency level ``p_in`` that
  normalizes the observed number of conflicting pairs by the disagreement
  expected if values were assigned at random with the observed positive
  frequency:

      p_in = n_differ / (2 * f * (1 - f) * n_total),   f = n_p / (n_p + n_n)

  0 means perfectly consistent, 1 means indistinguishable from random
  assignment; values above 1 (worse than random) are reported as-is.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from . import errors
from .annotations import AnnotationMatrix, LabelValue
from .errors import LabelForgeError


class Tier(Enum):
    HIGH = "HIGH"
    MEDIUM = "MEDIUM"
    LOW = "LOW"


@dataclass(frozen=True)
class DisagreementReport:
    attribute: str
    n_d: int
    n_images: int

    @property
    def consistency(self) -> float:
        return 1.0 - self.n_d / self.n_images

    @property
    def tier(self) -> Tier:
        return consistency_tier(self.n_d, self.n_images)


@dataclass(frozen=True)
class DuplicateConflictStats:
    attribute: str
    n_differ: int
    n_p: int
    n_n: int
    n_total: int

    @property
    def positive_frequency(self) -> float:
        return self.n_p / (self.n_p + self.n_n)

    @property
    def p_in(self) -> float:
        f = self.positive_frequency
        return self.n_differ / (2.0 * f * (1.0 - f) * self.n_total)


def consistency_tier(n_d: int, n_images: int) -> Tier:
    """Grade agreement 1 - n_d/n_images: HIGH >= 0.95, LOW <= 0.85, else MEDIUM.

    Comparisons are done in integer arithmetic so the published boundary
    cases land exactly (50/1000 is HIGH, 150/1000 is LOW).
    """
    if n_images <= 0:
        raise ValueError("n_images must be positive")
    if not 0 <= n_d <= n_images:
        raise ValueError(f"n_d={n_d} outside [0, {n_images}]")
    # 1 - n_d/n >= 19/20  <=>  n >= 20*n_d ;  1 - n_d/n <= 17/20  <=>  20*n_d >= 3*n
    if n_images >= 20 * n_d:
        return Tier.HIGH
    if 20 * n_d >= 3 * n_images:
        return Tier.LOW
    return Tier.MEDIUM


def expected_random_agreement(f: float) -> float:
    """Fraction of pairs expected to agree under independent labels at frequency f."""
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"f={f} outside [0, 1]")
    return 1.0 - 2.0 * f * (1.0 - f)


def disagreement_counts(pass_a: AnnotationMatrix,
                        pass_b: AnnotationMatrix) -> list[DisagreementReport]:
    """Per-attribute disagreement between two independent annotation passes.

    A cell pair counts only when both passes gave a binary value; a cell
    that is info-not-visible in either pass is excluded from both n_d and
    n_images for that attribute.  Images unusable in either pass are
    excluded entirely.
    """
    ids_a = set(pass_a.usable_ids()) | set(pass_a.unusable_ids())
    ids_b = set(pass_b.usable_ids()) | set(pass_b.unusable_ids())
    if ids_a != ids_b or pass_a.attributes != pass_b.attributes:
        raise LabelForgeError(
            errors.MATRIX_SHAPE_MISMATCH,
            "annotation passes must cover the same images and attributes",
        )
    shared = sorted(set(pass_a.usable_ids()) & set(pass_b.usable_ids()))
    binary = (LabelValue.TRUE, LabelValue.FALSE)
    reports = []
    for attribute in pass_a.attributes:
        n_d = 0
        n_images = 0
        for image_id in shared:
            va = pass_a.value(image_id, attribute)
            vb = pass_b.value(image_id, attribute)
            if va not in binary or vb not in binary:
                continue
            n_images += 1
            if va is not vb:
                n_d += 1
        reports.append(DisagreementReport(attribute, n_d, n_images))
    return reports


def inconsistency_level(attribute: str, n_differ: int, n_p: int, n_n: int,
                        n_total: int) -> DuplicateConflictStats:
    """Build DuplicateConflictStats, validating the pair-count identities."""
    if n_p + n_n != 2 * n_total:
        raise LabelForgeError(
            errors.PAIR_COUNT_MISMATCH,
            f"n_p + n_n = {n_p + n_n} but 2*n_total = {2 * n_total}",
        )
    if not 0 <= n_differ <= n_total:
        raise LabelForgeError(
            errors.PAIR_COUNT_MISMATCH, f"n_differ={n_differ} outside [0, {n_total}]"
        )
    if n_p == 0 or n_n == 0:
        raise LabelForgeError(
            errors.DEGENERATE_FREQUENCY,
            f"positive frequency is degenerate for {attribute!r} (n_p={n_p}, n_n={n_n})",
        )
    return DuplicateConflictStats(attribute, n_differ, n_p, n_n, n_total)
