"""Domain errors carry a stable machine-readable code.

The code travels unchanged from library to CLI output and HTTP error bodies,
so callers can match on it instead of parsing messages.
"""

from __future__ import annotations

from typing import Any


class LabelForgeError(Exception):
    """Base for all domain failures; ``code`` is one of the constants below."""

    def __init__(self, code: str, message: str, **detail: Any):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.detail = detail


# annotation model
COUNT_MISMATCH = "COUNT_MISMATCH"
BAD_VALUE = "BAD_VALUE"
DUPLICATE_ID = "DUPLICATE_ID"
DUPLICATE_ATTRIBUTE = "DUPLICATE_ATTRIBUTE"
IO_FAILURE = "IO_FAILURE"
UNKNOWN_IMAGE = "UNKNOWN_IMAGE"
UNKNOWN_ATTRIBUTE = "UNKNOWN_ATTRIBUTE"
IMAGE_UNUSABLE = "IMAGE_UNUSABLE"

# consistency metrics
MATRIX_SHAPE_MISMATCH = "MATRIX_SHAPE_MISMATCH"
DEGENERATE_FREQUENCY = "DEGENERATE_FREQUENCY"
PAIR_COUNT_MISMATCH = "PAIR_COUNT_MISMATCH"

# duplicate detector
DIM_MISMATCH = "DIM_MISMATCH"
ZERO_NORM_VECTOR = "ZERO_NORM_VECTOR"
UNKNOWN_PAIR = "UNKNOWN_PAIR"
VERDICT_CONFLICT = "VERDICT_CONFLICT"

# audit sampler
EMPTY_POPULATION = "EMPTY_POPULATION"
UNRESOLVED_DISAGREEMENTS = "UNRESOLVED_DISAGREEMENTS"
SESSION_NOT_CLOSED = "SESSION_NOT_CLOSED"
SESSION_CLOSED = "SESSION_CLOSED"
BAD_COUNTS = "BAD_COUNTS"

# linear probe
EMPTY_TRAINING_SET = "EMPTY_TRAINING_SET"
EMPTY_EVAL_SET = "EMPTY_EVAL_SET"

# workflow engine
POOL_OVERLAP = "POOL_OVERLAP"
EMPTY_SEED = "EMPTY_SEED"
NOT_RUNNING = "NOT_RUNNING"
MISSING_EMBEDDING = "MISSING_EMBEDDING"
SAMPLE_NOT_FROM_BIN = "SAMPLE_NOT_FROM_BIN"
BIN_ALREADY_DECIDED = "BIN_ALREADY_DECIDED"
BIN_TOO_LARGE = "BIN_TOO_LARGE"
INCOMPLETE_LABELS = "INCOMPLETE_LABELS"
UNKNOWN_BIN = "UNKNOWN_BIN"

# service layer
UNKNOWN_PROJECT = "UNKNOWN_PROJECT"
UNKNOWN_SESSION = "UNKNOWN_SESSION"
UNKNOWN_WORKFLOW = "UNKNOWN_WORKFLOW"
ANNOTATOR_BOUND = "ANNOTATOR_BOUND"
LEASE_EXPIRED = "LEASE_EXPIRED"
