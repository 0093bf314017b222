"""Attribute label store: three-valued labels, file ingest/export, provenance.

File formats
------------
Original attribute list:
    line 1:  image count
    line 2:  whitespace-separated attribute names
    rows:    "<image_id> v1 ... vN" with v in {1, -1}

Extended list is identical but also allows 0 (info not visible) and pairs
with an optional sidecar "<stem>.unusable.txt" holding one image id per
line.  Unusable images never appear in the main body.

Provenance log: one edit per line,
    ISO8601<TAB>image<TAB>attribute<TAB>old<TAB>new<TAB>source
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from . import errors
from .errors import LabelForgeError


class LabelValue(Enum):
    """Three-valued attribute label; tokens are fixed to {1, -1, 0}."""

    TRUE = 1
    FALSE = -1
    INFO_NOT_VISIBLE = 0

    @property
    def token(self) -> str:
        return str(self.value)

    @classmethod
    def from_token(cls, token: str) -> "LabelValue":
        try:
            return cls(int(token))
        except ValueError:
            raise LabelForgeError(errors.BAD_VALUE, f"not a label token: {token!r}")

    @classmethod
    def from_bool(cls, flag: bool) -> "LabelValue":
        return cls.TRUE if flag else cls.FALSE


_ALLOWED = {
    "celeba_original": {"1", "-1"},
    "extended": {"1", "-1", "0"},
}


@dataclass
class ImageRecord:
    image_id: str
    identity_id: Optional[str] = None
    unusable: bool = False


@dataclass(frozen=True)
class ProvenanceEntry:
    timestamp: str
    image_id: str
    attribute: str
    old: str
    new: str
    source: str

    def to_line(self) -> str:
        return "\t".join(
            (self.timestamp, self.image_id, self.attribute, self.old, self.new, self.source)
        )

    @classmethod
    def from_line(cls, line: str) -> "ProvenanceEntry":
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 6:
            raise LabelForgeError(errors.BAD_VALUE, f"malformed provenance line: {line!r}")
        return cls(*parts)


def _now_iso() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# Sentinel stored in the attribute column of provenance entries that record
# an image being marked unusable (a per-image, not per-cell, event).
UNUSABLE_MARK = "-"


class AnnotationMatrix:
    """Dense (image x attribute) label store.

    Values are kept as an int8 grid in {1, -1, 0}.  Rows of unusable images
    are dead storage: every accessor used by metric code filters them, and
    direct cell reads on them raise IMAGE_UNUSABLE.
    """

    def __init__(self, images: list[ImageRecord], attributes: list[str],
                 values: np.ndarray, split: Optional[dict[str, str]] = None):
        if values.shape != (len(images), len(attributes)):
            raise LabelForgeError(
                errors.COUNT_MISMATCH,
                f"value grid {values.shape} does not match "
                f"{len(images)} images x {len(attributes)} attributes",
            )
        self.images = images
        self.attributes = list(attributes)
        self.values = values.astype(np.int8)
        self.split = dict(split) if split else {}
        self.provenance: list[ProvenanceEntry] = []
        self._row = {rec.image_id: i for i, rec in enumerate(images)}
        self._col = {name: j for j, name in enumerate(attributes)}
        if len(self._row) != len(images):
            raise LabelForgeError(errors.DUPLICATE_ID, "duplicate image id in matrix")
        if len(self._col) != len(attributes):
            raise LabelForgeError(errors.DUPLICATE_ATTRIBUTE, "duplicate attribute name")

    # -- lookups ---------------------------------------------------------

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._row

    def has_attribute(self, attribute: str) -> bool:
        return attribute in self._col

    def record(self, image_id: str) -> ImageRecord:
        try:
            return self.images[self._row[image_id]]
        except KeyError:
            raise LabelForgeError(errors.UNKNOWN_IMAGE, f"unknown image {image_id!r}")

    def value(self, image_id: str, attribute: str) -> LabelValue:
        rec = self.record(image_id)
        if rec.unusable:
            raise LabelForgeError(
                errors.IMAGE_UNUSABLE, f"image {image_id!r} is marked unusable"
            )
        if attribute not in self._col:
            raise LabelForgeError(errors.UNKNOWN_ATTRIBUTE, f"unknown attribute {attribute!r}")
        return LabelValue(int(self.values[self._row[image_id], self._col[attribute]]))

    def usable_ids(self) -> list[str]:
        return [rec.image_id for rec in self.images if not rec.unusable]

    def unusable_ids(self) -> list[str]:
        return [rec.image_id for rec in self.images if rec.unusable]

    def column(self, attribute: str) -> Iterator[tuple[str, LabelValue]]:
        """Yield (image_id, value) over usable images only."""
        if attribute not in self._col:
            raise LabelForgeError(errors.UNKNOWN_ATTRIBUTE, f"unknown attribute {attribute!r}")
        j = self._col[attribute]
        for i, rec in enumerate(self.images):
            if not rec.unusable:
                yield rec.image_id, LabelValue(int(self.values[i, j]))

    def ids_with_value(self, attribute: str, value: LabelValue) -> list[str]:
        return [img for img, v in self.column(attribute) if v is value]

    # -- mutation --------------------------------------------------------

    def apply_label(self, image_id: str, attribute: str, value: LabelValue,
                    source: str, timestamp: Optional[str] = None) -> ProvenanceEntry:
        """Set one cell and append the edit to the provenance log."""
        rec = self.record(image_id)
        if rec.unusable:
            raise LabelForgeError(
                errors.IMAGE_UNUSABLE, f"image {image_id!r} is marked unusable"
            )
        if attribute not in self._col:
            raise LabelForgeError(errors.UNKNOWN_ATTRIBUTE, f"unknown attribute {attribute!r}")
        i, j = self._row[image_id], self._col[attribute]
        old = LabelValue(int(self.values[i, j]))
        self.values[i, j] = value.value
        entry = ProvenanceEntry(timestamp or _now_iso(), image_id, attribute,
                                old.token, value.token, source)
        self.provenance.append(entry)
        return entry

    def mark_unusable(self, image_id: str, source: str,
                      timestamp: Optional[str] = None) -> ProvenanceEntry:
        """Drop an image from all downstream computation (idempotent)."""
        rec = self.record(image_id)
        entry = ProvenanceEntry(timestamp or _now_iso(), image_id, UNUSABLE_MARK,
                                "usable" if not rec.unusable else "unusable",
                                "unusable", source)
        if not rec.unusable:
            rec.unusable = True
            self.provenance.append(entry)
        return entry

    def replay(self, entries: Iterable[ProvenanceEntry]) -> None:
        """Re-apply a provenance log on top of this matrix (an ingested snapshot)."""
        for e in entries:
            if e.attribute == UNUSABLE_MARK:
                self.mark_unusable(e.image_id, e.source, timestamp=e.timestamp)
            else:
                self.apply_label(e.image_id, e.attribute,
                                 LabelValue.from_token(e.new), e.source,
                                 timestamp=e.timestamp)

    # -- equality --------------------------------------------------------

    def __eq__(self, other: object) -> bool:
        """Equality on (usable values by id, unusable id set, attribute order)."""
        if not isinstance(other, AnnotationMatrix):
            return NotImplemented
        if self.attributes != other.attributes:
            return False
        if set(self.unusable_ids()) != set(other.unusable_ids()):
            return False
        mine = {rec.image_id for rec in self.images if not rec.unusable}
        theirs = {rec.image_id for rec in other.images if not rec.unusable}
        if mine != theirs:
            return False
        for image_id in mine:
            a = self.values[self._row[image_id]]
            b = other.values[other._row[image_id]]
            if not np.array_equal(a, b):
                return False
        return True

    def __len__(self) -> int:
        return len(self.images)


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.stem + ".unusable.txt")


def ingest_attribute_file(path: str | Path, format: str = "celeba_original",
                          split: Optional[dict[str, str]] = None) -> AnnotationMatrix:
    """Parse an attribute list file into an AnnotationMatrix.

    ``format`` is "celeba_original" ({1,-1} only) or "extended" ({1,-1,0}
    plus sidecar unusable list).
    """
    if format not in _ALLOWED:
        raise LabelForgeError(errors.BAD_VALUE, f"unknown format {format!r}")
    allowed = _ALLOWED[format]
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise LabelForgeError(errors.IO_FAILURE, f"cannot read {path}: {exc}")
    if len(lines) < 2:
        raise LabelForgeError(errors.COUNT_MISMATCH, f"{path} lacks header lines")
    try:
        declared = int(lines[0].strip())
    except ValueError:
        raise LabelForgeError(errors.BAD_VALUE, f"line 1 must be an image count, got {lines[0]!r}")
    attributes = lines[1].split()
    if len(set(attributes)) != len(attributes):
        raise LabelForgeError(errors.DUPLICATE_ATTRIBUTE, "duplicate attribute name in header")

    rows = [ln for ln in lines[2:] if ln.strip()]
    if len(rows) != declared:
        raise LabelForgeError(
            errors.COUNT_MISMATCH,
            f"declared {declared} rows, found {len(rows)}",
            declared=declared, actual=len(rows),
        )

    images: list[ImageRecord] = []
    seen: set[str] = set()
    values = np.empty((declared, len(attributes)), dtype=np.int8)
    for r, line in enumerate(rows):
        tokens = line.split()
        image_id = tokens[0]
        if image_id in seen:
            raise LabelForgeError(errors.DUPLICATE_ID, f"duplicate image id {image_id!r}",
                                  row=r + 3)
        seen.add(image_id)
        if len(tokens) - 1 != len(attributes):
            raise LabelForgeError(
                errors.BAD_VALUE,
                f"row {r + 3}: expected {len(attributes)} values, got {len(tokens) - 1}",
                row=r + 3,
            )
        for c, tok in enumerate(tokens[1:]):
            if tok not in allowed:
                raise LabelForgeError(
                    errors.BAD_VALUE,
                    f"row {r + 3}, column {attributes[c]}: bad token {tok!r}",
                    row=r + 3, column=attributes[c],
                )
            values[r, c] = int(tok)
        images.append(ImageRecord(image_id))

    if format == "extended":
        sidecar = _sidecar_path(path)
        if sidecar.exists():
            dropped = sidecar.read_text().split()
            for image_id in dropped:
                if image_id in seen:
                    raise LabelForgeError(
                        errors.DUPLICATE_ID,
                        f"unusable image {image_id!r} also present in body",
                    )
                seen.add(image_id)
                images.append(ImageRecord(image_id, unusable=True))
            if dropped:
                values = np.vstack(
                    [values, np.zeros((len(dropped), len(attributes)), dtype=np.int8)]
                )

    return AnnotationMatrix(images, attributes, values, split=split)


def export_cleaned(matrix: AnnotationMatrix, path: str | Path) -> Path:
    """Write the extended-format file (+ sidecar when any image is unusable).

    Round-trips: ingest_attribute_file(path, "extended") == matrix.
    """
    path = Path(path)
    usable = [rec for rec in matrix.images if not rec.unusable]
    unusable = matrix.unusable_ids()
    try:
        with path.open("w") as fh:
            fh.write(f"{len(usable)}\n")
            fh.write(" ".join(matrix.attributes) + "\n")
            for rec in usable:
                row = matrix.values[matrix._row[rec.image_id]]
                fh.write(rec.image_id + " " + " ".join(str(int(v)) for v in row) + "\n")
        sidecar = _sidecar_path(path)
        if unusable:
            sidecar.write_text("\n".join(unusable) + "\n")
        elif sidecar.exists():
            sidecar.unlink()
    except OSError as exc:
        raise LabelForgeError(errors.IO_FAILURE, f"cannot write {path}: {exc}")
    return path


def write_provenance(entries: Iterable[ProvenanceEntry], path: str | Path,
                     append: bool = True) -> None:
    mode = "a" if append else "w"
    with Path(path).open(mode) as fh:
        for e in entries:
            fh.write(e.to_line() + "\n")


def read_provenance(path: str | Path) -> list[ProvenanceEntry]:
    return [ProvenanceEntry.from_line(ln)
            for ln in Path(path).read_text().splitlines() if ln.strip()]


def read_partition_file(path: str | Path) -> dict[str, str]:
    """Parse the usual split list ("<image_id> 0|1|2") into id -> split tag."""
    tags = {"0": "train", "1": "val", "2": "test"}
    out: dict[str, str] = {}
    for ln in Path(path).read_text().splitlines():
        if not ln.strip():
            continue
        image_id, code = ln.split()
        if code not in tags:
            raise LabelForgeError(errors.BAD_VALUE, f"bad split code {code!r} for {image_id}")
        out[image_id] = tags[code]
    return out
