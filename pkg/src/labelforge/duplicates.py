"""Duplicate face-appearance discovery and the pair review queue.

Candidate pairs are same-identity image pairs whose embedding cosine
similarity clears a threshold (0.9 by default).  A human then confirms each
pair as a true duplicate or rejects it as a near-duplicate; only confirmed
duplicates feed the per-attribute conflict statistics.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from . import errors
from .annotations import AnnotationMatrix, LabelValue
from .errors import LabelForgeError

DEFAULT_THRESHOLD = 0.9


class Verdict(Enum):
    PENDING = "PENDING"
    DUPLICATE = "DUPLICATE"
    NEAR_DUPLICATE_REJECTED = "NEAR_DUPLICATE_REJECTED"


class EmbeddingStore:
    """Fixed-dimension embedding vectors keyed by image id."""

    def __init__(self, dim: int):
        self.dim = dim
        self.vectors: dict[str, np.ndarray] = {}
        self.identity: dict[str, str] = {}

    def add(self, image_id: str, vector: np.ndarray, identity_id: Optional[str] = None) -> None:
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.dim,):
            raise LabelForgeError(
                errors.DIM_MISMATCH,
                f"vector for {image_id!r} has shape {vector.shape}, expected ({self.dim},)",
            )
        if not np.all(np.isfinite(vector)):
            raise LabelForgeError(errors.BAD_VALUE, f"non-finite entry in vector {image_id!r}")
        if np.linalg.norm(vector) == 0.0:
            raise LabelForgeError(errors.ZERO_NORM_VECTOR, f"zero-norm vector {image_id!r}")
        self.vectors[image_id] = vector
        if identity_id is not None:
            self.identity[image_id] = identity_id

    def __contains__(self, image_id: str) -> bool:
        return image_id in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def matrix(self, ids: list[str]) -> np.ndarray:
        """Stack vectors for ``ids`` into an (n, dim) array."""
        missing = [i for i in ids if i not in self.vectors]
        if missing:
            raise LabelForgeError(
                errors.MISSING_EMBEDDING,
                f"{len(missing)} ids lack embeddings (first: {missing[0]!r})",
            )
        return np.stack([self.vectors[i] for i in ids])

    @classmethod
    def from_arrays(cls, ids: list[str], vectors: np.ndarray,
                    identity: Optional[dict[str, str]] = None) -> "EmbeddingStore":
        store = cls(int(vectors.shape[1]))
        identity = identity or {}
        for image_id, row in zip(ids, vectors):
            store.add(image_id, row, identity.get(image_id))
        return store

    @classmethod
    def from_file(cls, path: str | Path) -> "EmbeddingStore":
        """Read the text format: line 1 "dim=<D>", rows "id identity f1 ... fD"."""
        lines = Path(path).read_text().splitlines()
        if not lines or not lines[0].startswith("dim="):
            raise LabelForgeError(errors.BAD_VALUE, "embedding file must start with dim=<D>")
        store = cls(int(lines[0][4:]))
        for ln in lines[1:]:
            if not ln.strip():
                continue
            tokens = ln.split()
            if len(tokens) != 2 + store.dim:
                raise LabelForgeError(
                    errors.DIM_MISMATCH,
                    f"row for {tokens[0]!r} has {len(tokens) - 2} values, expected {store.dim}",
                )
            store.add(tokens[0], np.array(tokens[2:], dtype=np.float64), tokens[1])
        return store

    def to_file(self, path: str | Path) -> None:
        with Path(path).open("w") as fh:
            fh.write(f"dim={self.dim}\n")
            for image_id in sorted(self.vectors):
                vec = " ".join(repr(float(v)) for v in self.vectors[image_id])
                fh.write(f"{image_id} {self.identity.get(image_id, '?')} {vec}\n")


@dataclass
class CandidatePair:
    image_a: str
    image_b: str
    similarity: float
    verdict: Verdict = Verdict.PENDING
    reviewer: Optional[str] = None
    decided_at: Optional[str] = None
    arbitration: bool = False

    def __post_init__(self):
        if self.image_a >= self.image_b:
            raise ValueError("pair ids must satisfy image_a < image_b")

    @property
    def pair_id(self) -> str:
        return f"{self.image_a}:{self.image_b}"


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def find_candidate_pairs(store: EmbeddingStore,
                         threshold: float = DEFAULT_THRESHOLD) -> list[CandidatePair]:
    """All same-identity pairs with cosine similarity >= threshold, PENDING.

    Brute force within each identity group (groups are small at the target
    scale).  Output order is deterministic: by identity id, then pair ids.
    """
    if not -1.0 < threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside (-1, 1]")
    missing = [i for i in store.vectors if i not in store.identity]
    if missing:
        raise ValueError(f"{len(missing)} vectors lack an identity id (first: {missing[0]!r})")

    by_identity: dict[str, list[str]] = {}
    for image_id, ident in store.identity.items():
        by_identity.setdefault(ident, []).append(image_id)

    pairs: list[CandidatePair] = []
    for ident in sorted(by_identity):
        members = sorted(by_identity[ident])
        if len(members) < 2:
            continue
        vecs = store.matrix(members)
        normed = vecs / np.linalg.norm(vecs, axis=1, keepdims=True)
        sims = normed @ normed.T
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                if sims[i, j] >= threshold:
                    pairs.append(CandidatePair(members[i], members[j], float(sims[i, j])))
    return pairs


class PairQueue:
    """Review queue over candidate pairs with verdict bookkeeping."""

    def __init__(self, pairs: list[CandidatePair]):
        self.pairs = {p.pair_id: p for p in pairs}
        if len(self.pairs) != len(pairs):
            raise LabelForgeError(errors.DUPLICATE_ID, "duplicate pair in queue")

    def __len__(self) -> int:
        return len(self.pairs)

    def get(self, pair_id: str) -> CandidatePair:
        try:
            return self.pairs[pair_id]
        except KeyError:
            raise LabelForgeError(errors.UNKNOWN_PAIR, f"unknown pair {pair_id!r}")

    def pending(self) -> list[CandidatePair]:
        return [p for p in self.pairs.values() if p.verdict is Verdict.PENDING]

    def confirmed(self) -> list[CandidatePair]:
        return [p for p in self.pairs.values() if p.verdict is Verdict.DUPLICATE]

    def record_verdict(self, pair_id: str, verdict: Verdict, reviewer: str) -> CandidatePair:
        """Store a reviewer's verdict.

        Re-submitting the same verdict is idempotent (any reviewer).  A
        conflicting verdict from a second reviewer does not overwrite; the
        pair is flagged for arbitration and VERDICT_CONFLICT is raised.
        """
        if verdict is Verdict.PENDING:
            raise LabelForgeError(errors.BAD_VALUE, "cannot record a PENDING verdict")
        pair = self.get(pair_id)
        if pair.verdict is Verdict.PENDING:
            pair.verdict = verdict
            pair.reviewer = reviewer
            pair.decided_at = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
            return pair
        if pair.verdict is verdict:
            return pair
        pair.arbitration = True
        raise LabelForgeError(
            errors.VERDICT_CONFLICT,
            f"pair {pair_id} already {pair.verdict.value} by {pair.reviewer}; "
            f"{reviewer} submitted {verdict.value}",
            pair_id=pair_id,
        )

    # tab-separated persistence; the first six columns are the interchange
    # format (pair_id, image_a, image_b, similarity, verdict, reviewer) and
    # import tolerates files carrying only those
    def to_file(self, path: str | Path) -> None:
        with Path(path).open("w") as fh:
            fh.write("pair_id\timage_a\timage_b\tsimilarity\tverdict\treviewer"
                     "\tdecided_at\tarbitration\n")
            for pair_id in sorted(self.pairs):
                p = self.pairs[pair_id]
                fh.write("\t".join([
                    p.pair_id, p.image_a, p.image_b, f"{p.similarity:.6f}",
                    p.verdict.value, p.reviewer or "", p.decided_at or "",
                    "1" if p.arbitration else "",
                ]) + "\n")

    @classmethod
    def from_file(cls, path: str | Path) -> "PairQueue":
        lines = Path(path).read_text().splitlines()
        pairs = []
        for ln in lines[1:]:
            if not ln.strip():
                continue
            fields = ln.split("\t")
            _, image_a, image_b, sim, verdict, reviewer = fields[:6]
            pair = CandidatePair(image_a, image_b, float(sim),
                                 Verdict(verdict), reviewer or None)
            if len(fields) >= 8:
                pair.decided_at = fields[6] or None
                pair.arbitration = fields[7] == "1"
            pairs.append(pair)
        return cls(pairs)


def attribute_conflicts(pairs: list[CandidatePair],
                        matrix: AnnotationMatrix) -> dict[str, tuple[int, int, int, int]]:
    """Tally confirmed-duplicate label conflicts per attribute.

    Returns attribute -> (n_differ, n_p, n_n, n_total).  For each attribute
    a pair is included only when both members carry a binary value; pairs
    with info-not-visible on either side drop out of that attribute's
    universe entirely (they contribute to neither counts nor totals).
    """
    confirmed = []
    for p in pairs:
        if p.verdict is not Verdict.DUPLICATE:
            continue
        for image_id in (p.image_a, p.image_b):
            if image_id not in matrix:
                raise LabelForgeError(errors.UNKNOWN_IMAGE,
                                      f"pair member {image_id!r} not in matrix")
        if matrix.record(p.image_a).unusable or matrix.record(p.image_b).unusable:
            continue
        confirmed.append(p)
    out: dict[str, tuple[int, int, int, int]] = {}
    binary = (LabelValue.TRUE, LabelValue.FALSE)
    for attribute in matrix.attributes:
        n_differ = n_p = n_n = n_total = 0
        for p in confirmed:
            va = matrix.value(p.image_a, attribute)
            vb = matrix.value(p.image_b, attribute)
            if va not in binary or vb not in binary:
                continue
            n_total += 1
            for v in (va, vb):
                if v is LabelValue.TRUE:
                    n_p += 1
                else:
                    n_n += 1
            if va is not vb:
                n_differ += 1
        out[attribute] = (n_differ, n_p, n_n, n_total)
    return out
